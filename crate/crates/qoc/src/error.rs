use thiserror::Error;

/// Errors produced by construction validators and solver operations.
#[derive(Debug, Error)]
pub enum QocError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator dimension must be >= 2, got {dim}")]
    DimensionTooSmall { dim: usize },

    #[error("matrix is not Hermitian: max |a_ij - conj(a_ji)| = {defect:.3e} exceeds {tol:.0e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("observable is not positive semi-definite: smallest eigenvalue {min_eigenvalue:.3e}")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("state vector is not unit-norm: ||psi|| = {norm:.12}")]
    NotNormalized { norm: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{name} = {value} violates {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("control field has {got} samples, grid has {expected} intervals")]
    FieldLengthMismatch { expected: usize, got: usize },

    #[error("control field value at index {index} is not finite")]
    NonFiniteField { index: usize },

    #[error("field and problem are on different time grids")]
    GridMismatch,

    #[error("sweep produced a non-finite field value at interval {index} (alpha too small for this discretization)")]
    SweepBlowUp { index: usize },

    #[error("cost became non-finite at iteration {iteration}")]
    NonFiniteCost { iteration: usize },

    #[error("uniform bound is undefined at the parameter endpoint (delta = 2 or eta = 2)")]
    BoundUndefinedAtEndpoint,

    #[error("convergence threshold exceeds representable range for these inputs")]
    ThresholdOverflow,

    #[error("limit-set window too small: need at least {needed} retained iterates, have {got}")]
    WindowTooSmall { needed: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, QocError>;
