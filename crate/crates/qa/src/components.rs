use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::QaError;

/// Subset of the distances entering a score: answer (`d_t`), question
/// (`d_r`) and context (`d_h`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Components {
    pub answer: bool,
    pub question: bool,
    pub context: bool,
}

impl Components {
    pub const ANSWER: Components = Components {
        answer: true,
        question: false,
        context: false,
    };
    pub const QUESTION: Components = Components {
        answer: false,
        question: true,
        context: false,
    };
    pub const CONTEXT: Components = Components {
        answer: false,
        question: false,
        context: true,
    };
    pub const ALL: Components = Components {
        answer: true,
        question: true,
        context: true,
    };

    /// The standard ablation set: each single component and the full product.
    pub const STANDARD: [Components; 4] = [Self::ANSWER, Self::QUESTION, Self::CONTEXT, Self::ALL];

    pub fn is_empty(&self) -> bool {
        !(self.answer || self.question || self.context)
    }

    /// Report key such as `A`, `Q*C` or `A*Q*C`.
    pub fn key(&self) -> String {
        let mut parts = Vec::new();
        if self.answer {
            parts.push("A");
        }
        if self.question {
            parts.push("Q");
        }
        if self.context {
            parts.push("C");
        }
        parts.join("*")
    }
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Components {
    type Err = QaError;

    fn from_str(s: &str) -> Result<Self, QaError> {
        let mut c = Components {
            answer: false,
            question: false,
            context: false,
        };
        for part in s.split(['*', ',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_uppercase().as_str() {
                "A" => c.answer = true,
                "Q" => c.question = true,
                "C" => c.context = true,
                _ => return Err(QaError::UnknownComponent(part.to_string())),
            }
        }
        if c.is_empty() {
            return Err(QaError::EmptyComponents);
        }
        Ok(c)
    }
}

impl Serialize for Components {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for Components {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_round_trip() {
        let keys: Vec<String> = Components::STANDARD.iter().map(Components::key).collect();
        assert_eq!(keys, ["A", "Q", "C", "A*Q*C"]);
        for k in &keys {
            assert_eq!(&k.parse::<Components>().unwrap().key(), k);
        }
        assert_eq!("c*a".parse::<Components>().unwrap().key(), "A*C");
        assert!(matches!("".parse::<Components>(), Err(QaError::EmptyComponents)));
        assert!(matches!("A*X".parse::<Components>(), Err(QaError::UnknownComponent(_))));
    }
}
