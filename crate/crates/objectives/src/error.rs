use ktl_core::KtlError;
use ktl_neural::NeuralError;
use thiserror::Error;

use crate::method::Field;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Core(#[from] KtlError),

    #[error(transparent)]
    Neural(#[from] NeuralError),

    #[error("{field} has {len} tokens with markers, over the encoder limit of {max}")]
    FieldTooLong { field: Field, len: usize, max: usize },

    #[error("masked field {0} is empty")]
    EmptyMaskedField(Field),

    #[error("no trainable triples: all {skipped} exceed the encoder length limit")]
    NothingToTrain { skipped: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ObjectiveError> = std::result::Result<T, E>;
