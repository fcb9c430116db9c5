//! Tokenization, vocabularies, concept chunking and question rewriting.

mod chunk;
mod hypothesis;
mod lexicon;
mod tokenize;
pub mod vocab;

pub use chunk::{extract_chunks, ChunkSet, HEAD_BACKOFF_MIN, MAX_SPAN};
pub use hypothesis::question_to_hypothesis;
pub use lexicon::{inflections, Lexicon, WhRule};
pub use tokenize::{detokenize, normalize, tokenize};
pub use vocab::Vocabulary;
