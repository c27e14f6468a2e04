use layerlens::analysis::AnalysisError;
use layerlens::data::DataError;
use layerlens::encoder::EncoderError;
use layerlens::linalg::LinalgError;
use thiserror::Error;

/// Every failure maps onto one of the documented exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("manifest: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) | DataError::Format(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::NumericalFailure { .. } | LinalgError::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::TrainingDiverged { .. } | EncoderError::NumericalFailure { .. } => {
                CliError::Numerical(e.to_string())
            }
            EncoderError::Io(_) | EncoderError::Checkpoint(_) => CliError::Io(e.to_string()),
            EncoderError::Linalg(inner) => inner.into(),
            EncoderError::Data(inner) => inner.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Linalg(inner) => inner.into(),
            AnalysisError::Encoder(inner) => inner.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
