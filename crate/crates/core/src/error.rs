use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is not symmetric")]
    NonSymmetric,
    #[error("matrix has no nonzeros")]
    EmptyMatrix,
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("degenerate filter bounds: lower={lower}, cut={cut}, upper={upper}")]
    DegenerateBounds { lower: f64, cut: f64, upper: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("eigendecomposition of the projected matrix failed: {0}")]
    EigenFailure(String),
    #[error("orthonormalization could not repair a rank-deficient block after {0} retries")]
    RetryLimit(usize),
    #[error("replicated state diverged across ranks at iteration {0}")]
    ReplicationDiverged(usize),
    #[error("invalid clustering input: {0}")]
    InvalidClustering(String),
    #[error(transparent)]
    Comm(#[from] CommError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommError {
    #[error("payload size mismatch in {collective}: expected {expected}, got {got}")]
    SizeMismatch {
        collective: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("message from rank {src} carries tag {got:#x}, expected {expected:#x}")]
    TagMismatch { src: usize, expected: u64, got: u64 },
    #[error("rank {rank} is not a member of the communicator")]
    NotMember { rank: usize },
    #[error("root index {root} out of range for communicator of size {size}")]
    RootOutOfRange { root: usize, size: usize },
    #[error("peer rank {0} disconnected")]
    Disconnected(usize),
    #[error("all ranks are blocked: deadlock")]
    Deadlock,
    #[error("grid of {0} processes is not a perfect square")]
    NonSquareGrid(usize),
    #[error("grid index {index} out of range for q={q}")]
    GridIndexOutOfRange { index: usize, q: usize },
    #[error("transport failure: {0}")]
    Transport(String),
}
