//! Design-based estimation of the effect ratio in stepped-wedge cluster-randomized
//! trials with individual noncompliance.

pub mod ancova;
pub mod data;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod ht;
pub mod inference;
pub mod method;
pub mod sim;
pub mod stats;

pub use design::{
    Arm, AssignmentRealization, CellQuery, JointProbabilitySpec, Probability, StepWedgeDesign,
};
pub use error::{Error, Result};
