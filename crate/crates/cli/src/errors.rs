//! Exit-code policy: 0 success, 2 usage/config, 3 data, 4 numerical.

use fgam_core::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::Parameter(_) | CoreError::Capacity(_) => CliError::Usage(e.to_string()),
            CoreError::OutOfDomain { .. } | CoreError::Shape(_) | CoreError::Data(_) => {
                CliError::Data(e.to_string())
            }
            CoreError::DegenerateDesign(_)
            | CoreError::Numerical(_)
            | CoreError::Convergence { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
