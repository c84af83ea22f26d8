use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("image is empty ({width}x{height})")]
    EmptyImage { width: usize, height: usize },
    #[error("invalid image buffer: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image {width}x{height} is smaller than the required {min}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("singular matrix")]
    Singular,
    #[error("point maps to the line at infinity")]
    PointAtInfinity,
    #[error("invalid camera index {0} (expected 1..=6)")]
    InvalidCameraIndex(usize),
    #[error("keypoint support lies outside the image")]
    SupportOutsideImage,
    #[error("descriptor is degenerate (zero norm)")]
    DegenerateDescriptor,
    #[error("descriptor set too small: {0}")]
    TooFewDescriptors(usize),
    #[error("pca corpus too small: {got} vectors, need at least {need}")]
    CorpusTooSmall { got: usize, need: usize },
    #[error("pca corpus has rank below {0}")]
    RankDeficient(usize),
    #[error("pca basis format: {0}")]
    BasisFormat(String),
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("no model with at least 4 inliers")]
    NoModel,
    #[error("feature initialization failed: {0}")]
    FeatureInitFailed(String),
    #[error("insufficient overlap: {0} samples")]
    InsufficientOverlap(usize),
    #[error("degenerate joint entropy")]
    DegenerateEntropy,
    #[error("seam masks are disjoint")]
    DisjointMasks,
    #[error("map would grow to {0}x{1}, above the configured maximum")]
    MapTooLarge(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("attitude sidecar: {0}")]
    Attitude(String),
    #[error("crops are infeasible for the drawn transform")]
    InfeasibleCrop,
}

pub type Result<T> = std::result::Result<T, Error>;
