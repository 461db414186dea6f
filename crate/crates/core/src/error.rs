use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("period {period} is outside the rollout periods 1..={rollout}")]
    PeriodOutOfRange { period: usize, rollout: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("design is too large to enumerate: {count} assignments exceed the cap of {cap}")]
    TooLargeToEnumerate { count: String, cap: u128 },

    #[error("no closed form is tabulated for {0}, and the design is too large to enumerate")]
    Untabulated(String),

    #[error("row {row}: schema violation: {message}")]
    Schema { row: usize, message: String },

    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("row {row}: treatment received d must be 0 or 1, found `{value}`")]
    NonBinaryTreatment { row: usize, value: String },

    #[error("row {row}: expected {expected} covariates, found {found}")]
    RaggedCovariates { row: usize, expected: usize, found: usize },

    #[error("row {row}: z must be {expected} in period {period}")]
    FixedPeriodViolation { row: usize, period: usize, expected: u8 },

    #[error("rows {rows:?}: z is not constant within cluster {cluster}, period {period}")]
    NonConstantCell { cluster: i64, period: usize, rows: Vec<usize> },

    #[error("non-staggered assignment in cluster {cluster}: z=1 at row {treated_row} (period {treated_period}) but z=0 at row {control_row} (period {control_period})")]
    NonStaggered {
        cluster: i64,
        treated_row: usize,
        treated_period: usize,
        control_row: usize,
        control_period: usize,
    },

    #[error("z is inconsistent with any single assignment of the design: {0}")]
    InconsistentAssignment(String),

    #[error("relevance violated: the compliance denominator is zero")]
    RelevanceViolated,

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("θ_j unidentified in period {period}: {reason}")]
    ThetaUnidentified { period: usize, reason: String },

    #[error("CR3 adjustment singular for cluster {cluster}")]
    Cr3Singular { cluster: usize },

    #[error("weak/null first stage: τ̂_D = 0")]
    WeakFirstStage,

    #[error("variance estimate is negative ({value:e}); test declined")]
    NegativeVariance { value: f64 },

    #[error("{what}: need at least {need} rows, found {found}")]
    InsufficientRows { what: String, need: usize, found: usize },

    #[error("separation in the logistic fit for the {arm} arm")]
    Separation { arm: String },

    #[error("IRLS did not converge in {iterations} iterations; deviance trace: {trace:?}")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
