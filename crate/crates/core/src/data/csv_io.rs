use std::io::{Read, Write};
use std::path::Path;

use super::{Record, TrialDataset};
use crate::design::StepWedgeDesign;
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 5] = ["cluster", "period", "z", "d", "y"];

impl TrialDataset {
    /// Reads `cluster,period,z,d,y,x1,...,xp`. Rows in errors count data rows from 1.
    pub fn ingest_csv(path: impl AsRef<Path>, design: StepWedgeDesign) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, design)
    }

    pub fn read_csv<R: Read>(reader: R, design: StepWedgeDesign) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(h, want)| h != want) {
            return Err(Error::Schema {
                row: 0,
                message: format!(
                    "header must start with cluster,period,z,d,y; found `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let names: Vec<String> = header.iter().skip(FIXED_COLUMNS.len()).map(str::to_owned).collect();
        let mut records = Vec::new();
        for (k, line) in rdr.records().enumerate() {
            let row = k + 1;
            let line = line?;
            if line.len() < FIXED_COLUMNS.len() {
                return Err(Error::Schema { row, message: format!("expected at least 5 fields, found {}", line.len()) });
            }
            if line.len() != header.len() {
                return Err(Error::RaggedCovariates {
                    row,
                    expected: names.len(),
                    found: line.len() - FIXED_COLUMNS.len(),
                });
            }
            let field = |c: usize| -> Result<&str> {
                let v = &line[c];
                if v.is_empty() {
                    Err(Error::MissingValue { row, column: header[c].to_string() })
                } else {
                    Ok(v)
                }
            };
            let parse_err = |c: usize, v: &str| Error::Schema { row, message: format!("column `{}`: cannot parse `{v}`", &header[c]) };

            let cluster: i64 = field(0)?.parse().map_err(|_| parse_err(0, &line[0]))?;
            let period: usize = field(1)?.parse().map_err(|_| parse_err(1, &line[1]))?;
            let z = match field(2)? {
                "0" => false,
                "1" => true,
                v => return Err(Error::Schema { row, message: format!("column `z` must be 0 or 1, found `{v}`") }),
            };
            let d = match field(3)? {
                "0" => 0.0,
                "1" => 1.0,
                v => return Err(Error::NonBinaryTreatment { row, value: v.to_string() }),
            };
            let y: f64 = field(4)?.parse().map_err(|_| parse_err(4, &line[4]))?;
            let x = (FIXED_COLUMNS.len()..line.len())
                .map(|c| field(c)?.parse::<f64>().map_err(|_| parse_err(c, &line[c])))
                .collect::<Result<Vec<_>>>()?;
            records.push(Record { cluster, period, z, d, y, x });
        }
        TrialDataset::new(design, names, records)
    }

    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Floats use Rust's shortest round-trip formatting, so re-reading is bit-exact.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = FIXED_COLUMNS.iter().copied().chain(self.covariate_names.iter().map(String::as_str)).collect();
        w.write_record(&header)?;
        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        for k in 0..self.len() {
            fields.clear();
            fields.push(self.cluster_labels[self.cluster[k]].to_string());
            fields.push(self.period[k].to_string());
            fields.push(u8::from(self.z[k]).to_string());
            fields.push((self.d[k] as u8).to_string());
            fields.push(format!("{:?}", self.y[k]));
            fields.extend(self.x(k).iter().map(|v| format!("{v:?}")));
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }
}
