use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{KtlError, Result};

pub const CLS: &str = "[cls]";
pub const SEP: &str = "[sep]";
pub const MASK: &str = "[mask]";
pub const UNK: &str = "[unk]";
pub const PAD: &str = "[pad]";

pub const CLS_ID: usize = 0;
pub const SEP_ID: usize = 1;
pub const MASK_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const PAD_ID: usize = 4;

pub const RESERVED: [&str; 5] = [CLS, SEP, MASK, UNK, PAD];

pub const DEFAULT_MIN_COUNT: usize = 2;

/// Token-to-id mapping. Ids 0..5 are the reserved markers; the remaining
/// tokens are ordered by descending corpus count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    min_count: usize,
    tokens: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = KtlError;

    fn try_from(repr: VocabularyRepr) -> Result<Self> {
        if repr.tokens.len() < RESERVED.len()
            || repr.tokens[..RESERVED.len()]
                .iter()
                .zip(RESERVED)
                .any(|(a, b)| a != b)
        {
            return Err(KtlError::Validation(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        Ok(Vocabulary::from_tokens(repr.tokens, repr.min_count))
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            min_count: v.min_count,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_count,
        }
    }

    /// Counts tokens over a corpus of token sequences and keeps those seen at
    /// least `min_count` times.
    pub fn build<I, S>(sequences: I, min_count: usize) -> Self
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for seq in sequences {
            for tok in seq {
                let tok = tok.as_ref();
                if RESERVED.contains(&tok) {
                    continue;
                }
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Vocabulary::from_tokens(tokens, min_count)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
