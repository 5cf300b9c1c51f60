use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("acceptance gate failed: {0}")]
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Gate(_) => 4,
        }
    }
}

impl From<landau_core::Error> for CliError {
    fn from(e: landau_core::Error) -> Self {
        use landau_core::Error as E;
        match e {
            E::Dimension(_) | E::Index(_) | E::Config(_) | E::Degenerate(_) | E::Cfl { .. } | E::Io(_) | E::Format(_) => {
                CliError::Config(e.to_string())
            }
            E::Asymmetric { .. }
            | E::NegativeEigenvalue { .. }
            | E::BlowUp { .. }
            | E::Negativity { .. }
            | E::LowAcceptance(_)
            | E::Insufficient(_)
            | E::NonPositive(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
