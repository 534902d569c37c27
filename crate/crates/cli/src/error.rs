use thiserror::Error;

pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERSION: i32 = 3;
pub const EXIT_MODE: i32 = 4;

/// A failed command: the message for stderr and the process exit code.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn version(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERSION, message: message.into() }
    }

    pub fn mode(message: impl Into<String>) -> Self {
        Self { code: EXIT_MODE, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, message: message.into() }
    }

    /// Prefixes the message with where it happened.
    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<hybridseq::Error> for CliError {
    fn from(e: hybridseq::Error) -> Self {
        use hybridseq::Error as E;
        let code = match &e {
            E::Numeric(_) | E::DegenerateLikelihood { .. } => EXIT_NUMERIC,
            E::UnsupportedVersion { .. } => EXIT_VERSION,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
