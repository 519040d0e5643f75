//! Brute-force reference computations that share no code with the solver:
//! radial shooting, quadrature of the circle single layer, integral and
//! recurrence forms of modified Bessel functions, bisection and adaptive
//! Gauss quadrature.

pub mod bessel;
pub mod quadrature;
pub mod reference;
pub mod roots;
pub mod shooting;

pub use roots::{bessel_root_bisect, RootReport};
pub use shooting::{shoot_matching, shooting_bound_states, Interaction, ShootingProblem, ShootingState};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("degenerate bracket [{lo}, {hi}]")]
    DegenerateBracket { lo: f64, hi: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;
