use crate::lie::Frame;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frame mismatch: cannot compose {left:?} -> {right:?}")]
    FrameMismatch { left: Frame, right: Frame },
    #[error("logarithm undefined: rotation angle {angle} is at or near pi")]
    NearPi { angle: f64 },
    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    Asymmetric { deviation: f64 },
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("rotation is not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid factor parameter: {0}")]
    InvalidFactor(String),
    #[error("information matrix is rank deficient; add a prior")]
    RankDeficient,
    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("trajectory state: {0}")]
    State(String),
    #[error("no communication link available")]
    NoLink,
    #[error("singular covariance in gate")]
    SingularGate,
    #[error("trajectory association: {0}")]
    Association(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// The innermost error beneath any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
