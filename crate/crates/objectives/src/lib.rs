//! Knowledge-triplet objectives: projection-based representation learning
//! with L2 or noise-contrastive losses, and span-masked language modelling.

pub mod check;
pub mod error;
pub mod krl;
pub mod method;
pub mod model;
pub mod smlm;
pub mod train;

pub use error::{ObjectiveError, Result};
pub use method::{DistanceSemantics, Field, LossKind, Method, SimKind};
pub use model::{Checkpoint, Heads, KtlModel};
pub use train::{train_krl, train_model, train_smlm, TrainOutcome, TrainSpec};
