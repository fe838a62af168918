use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] flowcycle::Error),
}

impl BenchError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        BenchError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Core(flowcycle::Error::Io {
            path: path.into(),
            source,
        })
    }

    /// Process exit status: 2 configuration, 3 numeric failure, 4 io.
    pub fn exit_code(&self) -> i32 {
        use flowcycle::Error as E;
        match self {
            BenchError::Config(_) => 2,
            BenchError::Core(E::InvalidArgument(_) | E::Format(_)) => 2,
            BenchError::Core(E::NumericFailure(_)) => 3,
            BenchError::Core(E::Io { .. }) => 4,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
