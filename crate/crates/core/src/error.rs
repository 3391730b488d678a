use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mechanism for `{column}` is not invertible in its noise at the observed point")]
    NonInvertible { column: String },

    #[error("no exogenous value reproduces the observed value {value} of `{column}`")]
    Inconsistent { column: String, value: f64 },

    #[error("intervention plan stage {stage} targets `{column}`, an ancestor of an earlier stage target")]
    PlanOrderViolation { stage: usize, column: String },

    #[error("no rows with `{column}` = {value}")]
    EmptyGroup { column: String, value: String },

    #[error("value {value} of `{column}` is not in the data support")]
    UnknownValue { column: String, value: f64 },

    #[error("design matrix for `{column}` is rank deficient")]
    Underdetermined { column: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("treatment policy has no reference rows")]
    EmptyPolicy,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("interest rate must be non-negative, got {0}")]
    NegativeRate(f64),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("schema config has no {0} column")]
    RoleMissing(&'static str),

    #[error("non-numeric cell {value:?} in column `{column}` (line {line})")]
    NonNumericCell { line: usize, column: String, value: String },

    #[error("outcome column `{column}` is not binary (found {value})")]
    OutcomeNotBinary { column: String, value: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("no threshold pair satisfies the {criterion} constraint; best gap {gap:.4}")]
    Infeasible {
        criterion: &'static str,
        gap: f64,
        best: Box<crate::predictors::PredictorModel>,
    },

    #[error("non-harm violated: repayment rate {fair:.4} in the fair dataset is below the factual rate {factual:.4}")]
    NonHarmViolated { factual: f64, fair: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSchema(_) => "invalid_schema",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidInstance(_) => "invalid_instance",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NonInvertible { .. } => "non_invertible",
            Error::Inconsistent { .. } => "inconsistent",
            Error::PlanOrderViolation { .. } => "plan_order_violation",
            Error::EmptyGroup { .. } => "empty_group",
            Error::UnknownValue { .. } => "unknown_value",
            Error::Underdetermined { .. } => "underdetermined",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::EmptyPolicy => "empty_policy",
            Error::MissingColumn(_) => "missing_column",
            Error::NegativeRate(_) => "negative_rate",
            Error::UnknownColumn(_) => "unknown_column",
            Error::RoleMissing(_) => "role_missing",
            Error::NonNumericCell { .. } => "non_numeric_cell",
            Error::OutcomeNotBinary { .. } => "outcome_not_binary",
            Error::Degenerate(_) => "degenerate",
            Error::Infeasible { .. } => "infeasible",
            Error::NonHarmViolated { .. } => "non_harm_violated",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
