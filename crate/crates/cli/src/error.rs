use std::path::PathBuf;

use ktl_core::KtlError;
use ktl_neural::NeuralError;
use ktl_objectives::ObjectiveError;
use ktl_qa::QaError;
use thiserror::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MALFORMED: i32 = 3;
pub const EXIT_EMPTY_TARGET: i32 = 4;
pub const EXIT_DIVERGED: i32 = 5;
pub const EXIT_GRADCHECK: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: no such file", .0.display())]
    Missing(PathBuf),

    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("gradient check failed for {}", .0.join(", "))]
    Gradcheck(Vec<String>),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] KtlError),

    #[error(transparent)]
    Objective(#[from] ObjectiveError),

    #[error(transparent)]
    Qa(#[from] QaError),

    #[error(transparent)]
    Neural(#[from] NeuralError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Missing(_) => EXIT_USAGE,
            CliError::Config { .. } | CliError::Json(_) => EXIT_MALFORMED,
            CliError::Gradcheck(_) => EXIT_GRADCHECK,
            CliError::Io { source, .. } => io_code(source),
            CliError::Core(e) => core_code(e),
            CliError::Objective(e) => objective_code(e),
            CliError::Qa(e) => qa_code(e),
            CliError::Neural(e) => neural_code(e),
        }
    }

    /// Last finite loss when training diverged.
    pub fn last_finite_loss(&self) -> Option<Option<f64>> {
        let neural = match self {
            CliError::Neural(n) => n,
            CliError::Objective(ObjectiveError::Neural(n)) => n,
            _ => return None,
        };
        match neural {
            NeuralError::Divergence { last_finite, .. } => Some(*last_finite),
            _ => None,
        }
    }
}

fn io_code(e: &std::io::Error) -> i32 {
    if e.kind() == std::io::ErrorKind::NotFound {
        EXIT_USAGE
    } else {
        EXIT_OTHER
    }
}

fn core_code(e: &KtlError) -> i32 {
    match e {
        KtlError::Io { source, .. } => io_code(source),
        KtlError::EmptyTargetChunks => EXIT_EMPTY_TARGET,
        KtlError::MalformedLine { .. }
        | KtlError::Json(_)
        | KtlError::Validation(_)
        | KtlError::InsufficientNegatives { .. } => EXIT_MALFORMED,
    }
}

fn neural_code(e: &NeuralError) -> i32 {
    match e {
        NeuralError::Divergence { .. } | NeuralError::NonFiniteLoss(_) => EXIT_DIVERGED,
        NeuralError::Config(_) => EXIT_USAGE,
        _ => EXIT_MALFORMED,
    }
}

fn objective_code(e: &ObjectiveError) -> i32 {
    match e {
        ObjectiveError::Core(c) => core_code(c),
        ObjectiveError::Neural(n) => neural_code(n),
        _ => EXIT_MALFORMED,
    }
}

fn qa_code(e: &QaError) -> i32 {
    match e {
        QaError::Core(c) => core_code(c),
        QaError::Objective(o) => objective_code(o),
        QaError::Neural(n) => neural_code(n),
        QaError::Scoring { source, .. } => qa_code(source),
        QaError::NoLabeledItems => EXIT_MALFORMED,
        QaError::EmptyComponents | QaError::UnknownComponent(_) | QaError::Fraction(_) | QaError::Fixture(_) => {
            EXIT_USAGE
        }
    }
}
