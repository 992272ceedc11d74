//! Exit codes.
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | unexpected internal error |
//! | 2 | bad usage or configuration (unknown endpoint, invalid config) |
//! | 3 | one or more model requests failed after retries |
//! | 4 | missing, empty or corrupt input data |
//! | 5 | a protocol or pipeline step failed (e.g. consolidation repair budget exhausted) |

use std::fmt;

pub const OK: u8 = 0;
pub const INTERNAL: u8 = 1;
pub const CONFIG: u8 = 2;
pub const TRANSPORT: u8 = 3;
pub const INPUT: u8 = 4;
pub const PIPELINE: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_error(message: impl Into<String>) -> CliError {
    CliError {
        code: CONFIG,
        message: message.into(),
    }
}

pub fn input_error(message: impl Into<String>) -> CliError {
    CliError {
        code: INPUT,
        message: message.into(),
    }
}

pub fn pipeline_error(message: impl fmt::Display) -> CliError {
    CliError {
        code: PIPELINE,
        message: message.to_string(),
    }
}

impl From<promoguard::corpus::CorpusError> for CliError {
    fn from(e: promoguard::corpus::CorpusError) -> Self {
        input_error(e.to_string())
    }
}

impl From<promoguard::evaluation::EvalError> for CliError {
    fn from(e: promoguard::evaluation::EvalError) -> Self {
        use promoguard::evaluation::EvalError;
        let code = match &e {
            EvalError::Corpus(_) | EvalError::Io { .. } | EvalError::MissingGold(_) => INPUT,
            EvalError::Prompt(_) | EvalError::MissingEmbedder | EvalError::Gateway(_) => CONFIG,
            _ => PIPELINE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<promoguard::discovery::DiscoveryError> for CliError {
    fn from(e: promoguard::discovery::DiscoveryError) -> Self {
        use promoguard::discovery::DiscoveryError;
        let code = match &e {
            DiscoveryError::Transport(_) => TRANSPORT,
            DiscoveryError::Overrides { .. } | DiscoveryError::Empty(_) => INPUT,
            DiscoveryError::Partition { .. } => PIPELINE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<promoguard::prompting::PromptError> for CliError {
    fn from(e: promoguard::prompting::PromptError) -> Self {
        config_error(e.to_string())
    }
}

impl From<promoguard::retrieval::RetrievalError> for CliError {
    fn from(e: promoguard::retrieval::RetrievalError) -> Self {
        pipeline_error(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: INTERNAL,
            message: e.to_string(),
        }
    }
}
