use std::fmt;

/// Exit status of a command: 1 for bad inputs, 2 when processing failed.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Processing(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Processing(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Processing(m) => write!(f, "processing failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<subseg::Error> for CliError {
    fn from(e: subseg::Error) -> Self {
        use subseg::Error as E;
        match e {
            E::Config(_) | E::Schema(_) | E::Version { .. } | E::Corrupt { .. } | E::InvalidArgument(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Processing(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
