use thiserror::Error;

use crate::corpus::CorpusError;
use crate::discovery::DiscoveryError;
use crate::evaluation::EvalError;
use crate::gateway::GatewayError;
use crate::prompting::PromptError;
use crate::retrieval::RetrievalError;

/// Crate-wide error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
