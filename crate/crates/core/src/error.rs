use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("volatility matrix is numerically singular (inverse condition {inv_condition:.3e})")]
    SingularSigma { inv_condition: f64 },
    #[error("drift vector mu is zero")]
    ZeroMu,
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("ell = {0} is not in (0, 1)")]
    DegenerateEll(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid Monte Carlo configuration: {0}")]
    Config(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("dual inversion cannot bracket x = {x} up to r = {r_limit}")]
    Bracket { x: f64, r_limit: f64 },
    #[error("dual convexity violated at r = {r}, h = {h}: v_rr + v_r = {value:.3e}")]
    Convexity { r: f64, h: f64, value: f64 },
    #[error("state outside field coverage: {0}")]
    FieldCoverage(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
