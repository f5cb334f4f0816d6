use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("singular least-squares design: {0}")]
    SingularFit(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("{path}: row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (files, flags, configs), as
    /// opposed to a model or solver that could not produce an answer.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Input(_) | Error::Parse { .. } | Error::Config(_) | Error::Io(_) => true,
            Error::Infeasible(_) | Error::SingularFit(_) | Error::Solver(_) => false,
            Error::Stage { source, .. } => source.is_input_error(),
        }
    }
}
