use std::path::PathBuf;

use thiserror::Error;

use crate::data::StratumKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid incomplete: no cell for {0}")]
    GridIncomplete(StratumKey),
    #[error("duplicate cell for {0}")]
    DuplicateCell(StratumKey),
    #[error("non-positive exposure {exposure} at {key}")]
    BadExposure { key: StratumKey, exposure: f64 },
    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("singular least-squares fit: {0}")]
    SingularFit(String),
    #[error("lagged smoking value unavailable for year {year}")]
    LagUnavailable { year: i32 },

    #[error("average age-at-diagnosis undefined: {0}")]
    UndefinedAad(String),
    #[error("covariate has zero variance over the modelling frame: {0}")]
    DegenerateCovariate(String),

    #[error("no built-in model structure for {cause} / {gender}")]
    NoBuiltinSpec { cause: String, gender: String },
    #[error("design matrix is rank deficient: {0}")]
    SpecSingular(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite log-posterior at initialisation: {0}")]
    InitFailure(String),
    #[error("bad sampler configuration: {0}")]
    BadConfig(String),
    #[error("R-hat needs at least two chains")]
    DiagnosticsUnavailable,

    #[error("DIC failure: {0}")]
    DicFailure(String),
    #[error("marginal likelihood ladder unstable: {0}")]
    MarginalUnstable(String),

    #[error("projection horizon must be positive, got {0}")]
    BadHorizon(i64),
    #[error("covariate missing in projection horizon: {0}")]
    CovariateGap(String),
    #[error("deprivation shares for {0} do not sum to one")]
    ShareViolation(String),

    #[error("age coverage gap against the standard population: {0}")]
    StdMismatch(String),
    #[error("relative deprivation gap undefined: most-deprived rate is zero")]
    UndefinedRd,
    #[error("aggregation error: {0}")]
    AggregationError(String),
    #[error("scenario unsupported: {0}")]
    ScenarioUnsupported(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::GridIncomplete(_) => "GridIncomplete",
            Error::DuplicateCell(_) => "DuplicateCell",
            Error::BadExposure { .. } => "BadExposure",
            Error::SchemaViolation(_) => "SchemaViolation",
            Error::SingularFit(_) => "SingularFit",
            Error::LagUnavailable { .. } => "LagUnavailable",
            Error::UndefinedAad(_) => "UndefinedAAD",
            Error::DegenerateCovariate(_) => "DegenerateCovariate",
            Error::NoBuiltinSpec { .. } => "NoBuiltinSpec",
            Error::SpecSingular(_) => "SpecSingular",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InitFailure(_) => "InitFailure",
            Error::BadConfig(_) => "BadConfig",
            Error::DiagnosticsUnavailable => "DiagnosticsUnavailable",
            Error::DicFailure(_) => "DICFailure",
            Error::MarginalUnstable(_) => "MarginalUnstable",
            Error::BadHorizon(_) => "BadHorizon",
            Error::CovariateGap(_) => "CovariateGap",
            Error::ShareViolation(_) => "ShareViolation",
            Error::StdMismatch(_) => "StdMismatch",
            Error::UndefinedRd => "UndefinedRD",
            Error::AggregationError(_) => "AggregationError",
            Error::ScenarioUnsupported(_) => "ScenarioUnsupported",
            Error::OracleFailure(_) => "OracleFailure",
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Parse(_) => "Parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
