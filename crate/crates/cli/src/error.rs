use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Numeric(psvf::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<psvf::Error> for CliError {
    fn from(e: psvf::Error) -> Self {
        use psvf::Error::*;
        match e {
            InvalidParams(_) | InvalidInput(_) | NotOnSigma(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl CliError {
    /// 1 for configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 2,
            CliError::Config(_) | CliError::Io(_) => 1,
        }
    }
}
