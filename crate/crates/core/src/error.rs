use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("unbounded optimum: {0}")]
    Unbounded(String),

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("precision error: {msg} (estimate {estimate:.4e} +/- {ci95:.4e})")]
    Precision { msg: String, estimate: f64, ci95: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
