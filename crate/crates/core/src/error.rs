use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lattice dimension {0} is not supported (expected 1..=3)")]
    UnsupportedDimension(usize),

    #[error("coin index {value} is not in I_± for d = {dim}")]
    InvalidCoinIndex { value: i32, dim: usize },

    #[error("site has {got} coordinates, lattice dimension is {expected}")]
    SiteDimension { expected: usize, got: usize },

    #[error("site {0} lies outside the region")]
    OutsideRegion(String),

    #[error("flat index {index} out of range for basis of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("permutation is not a single full cycle on I_± (cycle lengths {0:?})")]
    NotFullCycle(Vec<usize>),

    #[error("phase field does not cover coin {coin} at site {site}")]
    Coverage { coin: i32, site: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("spectral parameter {0} is on the unit circle")]
    OnUnitCircle(String),

    #[error("linear solve failed ({detail}), achieved residual {residual:.3e}")]
    SolverBreakdown { residual: f64, detail: String },

    #[error("diagonalization failed: {0}")]
    Diagonalization(String),

    #[error("decay fit needs at least 4 usable points, got {0}")]
    TooFewFitPoints(usize),

    #[error("{failed} of {total} Monte Carlo samples failed (limit 1%), first failure: {first}")]
    SampleFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotUnitary { .. }
                | Error::SolverBreakdown { .. }
                | Error::Diagonalization(_)
                | Error::TooFewFitPoints(_)
                | Error::SampleFailures { .. }
                | Error::Internal(_)
        )
    }
}
