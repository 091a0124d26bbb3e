use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no cameras")]
    NoCameras,

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid camera pose: {0}")]
    InvalidPose(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite parameter in gaussian {index}")]
    NonFiniteParameter { index: usize },

    #[error("non-finite loss at iteration {iteration}: {breakdown}")]
    NonFiniteLoss { iteration: usize, breakdown: String },

    #[error("mono depth required for view '{0}'")]
    MonoDepthRequired(String),

    #[error("sparse depth required for view '{0}'")]
    SparseDepthRequired(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown camera model '{model}'")]
    UnknownCameraModel {
        path: String,
        line: usize,
        model: String,
    },

    #[error("invalid sfm model: {0}")]
    InvalidModel(String),

    #[error("loop {loop_index} failed: {source}")]
    LoopFailed {
        loop_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
