use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StepWedgeDesign;
use crate::error::{Error, Result};

/// On-disk JSON form of a design: `{"I": 4, "J": 2, "cumulative_treated": [1, 3]}`,
/// or `{"J": 10, "one_at_a_time": true}` for `I_j = j`, `I = J + 1`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DesignFile {
    #[serde(rename = "I", default, skip_serializing_if = "Option::is_none")]
    pub num_clusters: Option<usize>,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub rollout_periods: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cumulative_treated: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_at_a_time: Option<bool>,
}

impl TryFrom<DesignFile> for StepWedgeDesign {
    type Error = Error;

    fn try_from(f: DesignFile) -> Result<Self> {
        if f.one_at_a_time == Some(true) {
            let j = match (f.rollout_periods, f.num_clusters) {
                (Some(j), _) => j,
                (None, Some(i)) if i >= 2 => i - 1,
                _ => return Err(Error::InvalidDesign("one_at_a_time needs J or I".into())),
            };
            if let Some(i) = f.num_clusters {
                if i != j + 1 {
                    return Err(Error::InvalidDesign(format!(
                        "one_at_a_time requires I = J + 1, found I = {i}, J = {j}"
                    )));
                }
            }
            if f.cumulative_treated.is_some() {
                return Err(Error::InvalidDesign(
                    "give either cumulative_treated or one_at_a_time, not both".into(),
                ));
            }
            return StepWedgeDesign::one_at_a_time(j);
        }
        let i = f.num_clusters.ok_or_else(|| Error::InvalidDesign("missing field I".into()))?;
        let cum = f
            .cumulative_treated
            .ok_or_else(|| Error::InvalidDesign("missing field cumulative_treated".into()))?;
        if let Some(j) = f.rollout_periods {
            if j != cum.len() {
                return Err(Error::InvalidDesign(format!(
                    "J = {j} but cumulative_treated has {} entries",
                    cum.len()
                )));
            }
        }
        StepWedgeDesign::new(i, cum)
    }
}

impl From<StepWedgeDesign> for DesignFile {
    fn from(d: StepWedgeDesign) -> Self {
        DesignFile {
            num_clusters: Some(d.num_clusters),
            rollout_periods: Some(d.cumulative.len()),
            cumulative_treated: Some(d.cumulative),
            one_at_a_time: None,
        }
    }
}

impl StepWedgeDesign {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: DesignFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&DesignFile::from(self.clone())).expect("design serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        let d = StepWedgeDesign::from_json_str(r#"{"I": 4, "J": 2, "cumulative_treated": [1, 3]}"#).unwrap();
        assert_eq!(d.cumulative_treated(), &[1, 3]);
        let o = StepWedgeDesign::from_json_str(r#"{"J": 10, "one_at_a_time": true}"#).unwrap();
        assert_eq!(o.num_clusters(), 11);
        assert!(o.is_one_at_a_time());
        assert!(StepWedgeDesign::from_json_str(r#"{"I": 5, "J": 10, "one_at_a_time": true}"#).is_err());
        assert!(StepWedgeDesign::from_json_str(r#"{"I": 4, "J": 3, "cumulative_treated": [1, 3]}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let d = StepWedgeDesign::new(6, vec![2, 4]).unwrap();
        assert_eq!(StepWedgeDesign::from_json_str(&d.to_json_string()).unwrap(), d);
        let via_serde: StepWedgeDesign = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(via_serde, d);
    }
}
