use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] volsamp::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numeric breakdown.
    pub fn exit_code(&self) -> i32 {
        use volsamp::Error as E;
        match self {
            CliError::Core(E::NumericBreakdown { .. })
            | CliError::Core(E::SingularMatrix { .. })
            | CliError::Core(E::DenominatorVanishes { .. }) => 3,
            _ => 2,
        }
    }
}
