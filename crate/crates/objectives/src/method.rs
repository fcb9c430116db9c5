use std::fmt;
use std::str::FromStr;

use ktl_core::Direction;
use serde::{Deserialize, Serialize};

/// Training objective of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "smlm")]
    Smlm,
    #[serde(rename = "krl-l2")]
    KrlL2,
    #[serde(rename = "krl-nce-l2")]
    KrlNceL2,
    #[serde(rename = "krl-nce-cos")]
    KrlNceCos,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smlm, Method::KrlL2, Method::KrlNceL2, Method::KrlNceCos];

    pub fn name(self) -> &'static str {
        match self {
            Method::Smlm => "smlm",
            Method::KrlL2 => "krl-l2",
            Method::KrlNceL2 => "krl-nce-l2",
            Method::KrlNceCos => "krl-nce-cos",
        }
    }

    pub fn semantics(self) -> DistanceSemantics {
        match self {
            Method::Smlm => DistanceSemantics::Smlm,
            Method::KrlL2 => DistanceSemantics::L2,
            Method::KrlNceL2 => DistanceSemantics::NceL2,
            Method::KrlNceCos => DistanceSemantics::NceCos,
        }
    }

    pub fn loss(self) -> Option<LossKind> {
        match self {
            Method::Smlm => None,
            Method::KrlL2 => Some(LossKind::L2),
            Method::KrlNceL2 => Some(LossKind::Nce(SimKind::NegL2Sim)),
            Method::KrlNceCos => Some(LossKind::Nce(SimKind::CosineSim)),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimKind {
    CosineSim,
    /// `-‖a - b‖`
    NegL2Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    L2,
    Nce(SimKind),
}

/// How a model turns a generated element into a distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSemantics {
    L2,
    NceL2,
    NceCos,
    Smlm,
}

/// Slot of a triple, named for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    Head,
    Relation,
    Tail,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Head, Field::Relation, Field::Tail];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn generated_by(direction: Direction) -> Field {
        Field::ALL[direction.index()]
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Head => "h (context)",
            Field::Relation => "r (question)",
            Field::Tail => "t (answer)",
        })
    }
}
