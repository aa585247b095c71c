use std::fmt;
use std::process::ExitCode;

use tlime_core::models::PredictError;
use tlime_core::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

/// Error carrying the process exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }

    /// Prefixes the message with what was being done, keeping the code.
    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn predict_code(e: &PredictError) -> u8 {
    match e {
        PredictError::Protocol(_) => EXIT_PROTOCOL,
        // the built-in forest never breaks the probability contract
        PredictError::Contract { .. } | PredictError::BatchSize { .. } => EXIT_INTERNAL,
        PredictError::Shape(_) | PredictError::Other(_) => EXIT_DATA,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_) => EXIT_USAGE,
            Error::Predictor(p) | Error::PredictorFailed { source: p, .. } => predict_code(p),
            Error::Surrogate(_) => EXIT_INTERNAL,
            Error::Ingest(_)
            | Error::Dimension(_)
            | Error::Segmentation(_)
            | Error::Sampling(_)
            | Error::Model(_)
            | Error::Io(_)
            | Error::Json(_) => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<tlime_core::ingest::IngestError> for CliError {
    fn from(e: tlime_core::ingest::IngestError) -> Self {
        Error::from(e).into()
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        CliError {
            code: predict_code(&e),
            message: format!("model: {e}"),
        }
    }
}

impl From<tlime_core::models::ProtocolError> for CliError {
    fn from(e: tlime_core::models::ProtocolError) -> Self {
        CliError {
            code: EXIT_PROTOCOL,
            message: format!("external predictor: {e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(format!("csv: {e}"))
    }
}
