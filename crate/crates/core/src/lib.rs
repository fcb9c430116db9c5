//! Knowledge-triple data structures, text processing, synthetic graph
//! construction and lexical retrieval.

pub mod error;
pub mod graph;
pub mod kg;
pub mod qa_item;
pub mod retrieval;
pub mod text;

pub use error::{KtlError, Result};
pub use kg::{Direction, FactSet, Phrase, Triple};
pub use qa_item::QaItem;
