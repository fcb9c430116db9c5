use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("sequence of {len} tokens exceeds max length {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("empty input sequence")]
    EmptySequence,

    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),

    #[error("training diverged at epoch {epoch}, step {step}; last finite loss {last_finite:?}")]
    Divergence {
        epoch: usize,
        step: usize,
        last_finite: Option<f64>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Objective(String),
}

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;
