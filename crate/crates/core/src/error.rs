use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero distance on link {0}")]
    ZeroDistance(String),
    #[error("correlation coefficient {0} outside [0, 1)")]
    InvalidCoefficient(f64),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid LoS matrix: {0}")]
    InvalidLos(String),
    #[error(
        "effective training matrix is rank deficient (rank {rank} of {dim}, S = {s}); \
         with DFT training every column is identifiable only for S >= NL + 1 = {full_rank_s}"
    )]
    RankDeficient {
        rank: usize,
        dim: usize,
        s: usize,
        full_rank_s: usize,
    },
    #[error("effective Gram matrix deviates from S*M*Sigma (relative residual {0:e})")]
    NonOrthogonalDesign(f64),
    #[error("MMSE filter matrix is singular")]
    SingularFilter,
    #[error("benchmark protocol needs S >= {required} sub-phases, got {s}")]
    InsufficientSubphases { s: usize, required: usize },
    #[error("BS-IRS column (irs {irs}, element {element}) is zero")]
    ZeroColumn { irs: usize, element: usize },
    #[error("no closed-form NMSE for this channel kind")]
    UnsupportedKind,
    #[error("empty input")]
    EmptyInput,
    #[error("figure of merit undefined for zero NMSE")]
    ZeroNmse,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for I/O failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 2,
            _ => 1,
        }
    }
}
