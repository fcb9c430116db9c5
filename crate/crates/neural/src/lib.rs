//! Small f64 transformer encoder with a reverse-mode tape, Adam and a
//! deterministic parallel training loop.

pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;

pub use encoder::{EncodedSequence, EncodedVars, Encoder, EncoderConfig, ForwardOptions};
pub use error::{NeuralError, Result};
pub use layers::{FeedForward, LayerNorm, Linear};
pub use optim::{Adam, OptimizerConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use train::{derive_seed, train, Draws, Objective, TrainConfig, TrainReport};
