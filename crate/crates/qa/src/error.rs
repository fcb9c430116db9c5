use ktl_core::KtlError;
use ktl_neural::NeuralError;
use ktl_objectives::ObjectiveError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QaError {
    #[error(transparent)]
    Core(#[from] KtlError),

    #[error(transparent)]
    Objective(#[from] ObjectiveError),

    #[error(transparent)]
    Neural(#[from] NeuralError),

    #[error("item {item}, option {option}: {source}")]
    Scoring {
        item: usize,
        option: usize,
        #[source]
        source: Box<QaError>,
    },

    #[error("no labeled items to evaluate")]
    NoLabeledItems,

    #[error("empty component set")]
    EmptyComponents,

    #[error("unknown component {0:?}; use A, Q, C joined by '*'")]
    UnknownComponent(String),

    #[error("fraction {0} must be in (0, 1]")]
    Fraction(f64),

    #[error("{0}")]
    Fixture(String),
}

pub type Result<T, E = QaError> = std::result::Result<T, E>;
