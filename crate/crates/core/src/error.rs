use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain parameters: {0}")]
    InvalidParams(String),
    #[error("matrix is not positive definite (min eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("ellipticity violated: eigenvalue {eig:.6} outside [{lo:.6}, {hi:.6}] at t = {t}")]
    EllipticityViolated { t: f64, eig: f64, lo: f64, hi: f64 },
    #[error("time interval is empty or reversed: s = {s}, t = {t}")]
    EmptyInterval { s: f64, t: f64 },
    #[error("singular covariance (min eigenvalue {0:.3e})")]
    SingularCovariance(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("time horizon too short: achieved tail bound {achieved:.3e} > requested {requested:.3e}")]
    HorizonTooShort { achieved: f64, requested: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown suite: {0}")]
    UnknownSuite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
