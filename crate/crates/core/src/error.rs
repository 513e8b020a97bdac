use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid permutation {0:?} for rank {1}")]
    InvalidPermutation(Vec<usize>, usize),

    #[error("split {split} out of range for rank {rank}")]
    SplitOutOfRange { split: usize, rank: usize },

    #[error("svd did not converge after {0} sweeps")]
    SvdNoConvergence(usize),

    #[error("invalid shape plan: {0}")]
    InvalidPlan(String),

    #[error("target bond profile not dominated by current bonds: {0}")]
    NotDominated(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("entropy undefined for an all-zero spectrum")]
    ZeroSpectrum,

    #[error("nothing left to truncate")]
    NothingToTruncate,

    #[error("training diverged: {0}")]
    NonFiniteLoss(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported bundle version {0}")]
    UnsupportedVersion(u16),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
