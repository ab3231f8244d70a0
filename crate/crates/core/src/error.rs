use num_complex::Complex64;
use thiserror::Error;

/// Failure modes of the simulation library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input matrix deviates from its adjoint by more than the tolerance.
    #[error("matrix is not Hermitian: max |A - A†| = {deviation:e} exceeds {tol:e}")]
    NotHermitian { deviation: f64, tol: f64 },

    /// Jacobi sweeps exhausted before the off-diagonal mass fell below threshold.
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires dimension {required}, got {found}")]
    DimensionUnsupported { required: usize, found: usize },

    #[error("state is not normalized: norm {norm}")]
    NotNormalized { norm: f64 },

    #[error("transformation strategy returned a non-finite vector")]
    NonFiniteStrategyOutput,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical guard tripped: event probability or integrator drift too large.
    #[error("step too large at t = {time}: {what} = {value:e} exceeds {bound:e}")]
    StepTooLarge {
        time: f64,
        what: &'static str,
        value: f64,
        bound: f64,
    },

    /// Engine A met a negative jump rate; the reverse-jump engine is required.
    #[error("negative rate at t = {time}: eigenvalue {index} of the rate operator is {rate:e}")]
    NegativeRate { time: f64, index: usize, rate: f64 },

    /// The reverse-jump process has no populated class to jump from.
    #[error("{0}")]
    Breakdown(Box<BreakdownEvent>),

    #[error("time grids do not match")]
    GridMismatch,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A negative rate pointing at a state that no populated trajectory occupies.
///
/// Reported in `f64` regardless of the simulation scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownEvent {
    pub time: f64,
    pub step: usize,
    pub source_class: usize,
    pub eigenindex: usize,
    pub rate: f64,
    pub missing_target: Vec<Complex64>,
}

impl std::fmt::Display for BreakdownEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "unraveling breakdown at t = {} (step {}): class {} has rate {:e} toward an unpopulated state",
            self.time, self.step, self.source_class, self.rate
        )
    }
}
