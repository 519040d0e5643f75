use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("coincident points: kernel is singular at x = y")]
    Singular,
    #[error("volume point {index} lies within {distance:e} of the boundary; enlarge the exclusion tube")]
    VolumeTooClose { index: usize, distance: f64 },
    #[error("I - B M(lambda) is nearly singular at lambda = {lambda} (condition number {condition:e}); nearest eigenvalue {nearest:?}")]
    NearEigenvalue { lambda: f64, condition: f64, nearest: Option<f64> },
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("branch tracking ambiguous on lambda interval [{lo}, {hi}]")]
    BranchAmbiguity { lo: f64, hi: f64 },
    #[error("resolvent undefined: {0}")]
    Resolvent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
