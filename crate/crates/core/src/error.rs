use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitianInput { deviation: f64 },

    #[error("boson cutoff {cutoff} too small: top Fock layers hold population {tail:.3e}")]
    CutoffInsufficient { cutoff: usize, tail: f64 },

    #[error("not converged: {0}")]
    NonConverged(String),

    #[error("time step not converged: halving dt changed the first-peak gain by {rel_change:.3e}")]
    StepNonConverged { rel_change: f64 },

    #[error("initial boson population {n0:.3e} is too small to normalize the gain")]
    DegenerateDenominator { n0: f64 },

    #[error("no gain peak above threshold within the simulated window")]
    NoPeak,

    #[error("phase-space grid too small: estimated mass outside grid {outside:.3e}")]
    GridTooSmall { outside: f64 },

    #[error("underdetermined fit: {points} points for {params} parameters")]
    Underdetermined { points: usize, params: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),
}

impl Error {
    /// True for the numerical non-convergence family (as opposed to bad input).
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConverged(_)
                | Error::StepNonConverged { .. }
                | Error::CutoffInsufficient { .. }
                | Error::NoPeak
                | Error::GridTooSmall { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
