use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("divergent weighted integral: {0}")]
    Divergence(String),
    #[error("CFL violation: dt = {dt:e} exceeds stable limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value at x = {x}, t = {t}")]
    NonFinite { x: f64, t: f64 },
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
