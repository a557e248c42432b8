use std::io;

/// Errors raised anywhere in the toolkit.
///
/// Each variant maps onto a short machine-readable category via
/// [`Error::category`], which the CLI prints as its one-line diagnostic.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::Parameter(_) => "parameter",
            Error::Layout(_) => "layout",
            Error::Bounds(_) => "bounds",
            Error::Format(_) => "format",
            Error::Evaluation(_) => "evaluation",
            Error::Data(_) => "data",
            Error::NonFinite(_) => "nonfinite",
            Error::Io(_) => "io",
            Error::Json(_) => "format",
            Error::Csv(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
