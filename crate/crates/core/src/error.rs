use thiserror::Error;

/// Errors raised anywhere in the engine.
///
/// Variants map one-to-one onto the failure classes the service reports,
/// so [`Error::code`] can be surfaced directly in HTTP responses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("model bundle error: {0}")]
    ModelBundle(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("feature error: {0}")]
    Feature(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Train(String),
    #[error("masking error: {0}")]
    Masking(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("target error: {0}")]
    Target(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse_error",
            Error::Validation(_) => "validation_error",
            Error::Schema(_) => "schema_error",
            Error::ModelBundle(_) => "model_bundle_error",
            Error::Fit(_) => "fit_error",
            Error::Feature(_) => "feature_error",
            Error::Config(_) => "config_error",
            Error::Train(_) => "train_error",
            Error::Masking(_) => "masking_error",
            Error::Pipeline(_) => "pipeline_error",
            Error::Target(_) => "target_error",
            Error::Aggregation(_) => "aggregation_error",
            Error::Metric(_) => "metric_error",
            Error::Io(_) => "io_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
