//! Fact triples, deduplicated fact storage and corruption-based negative sampling.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KtlError, Result};
use crate::text::{normalize, tokenize};

/// A normalized free-text phrase together with its tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phrase {
    text: String,
    tokens: Vec<String>,
}

impl Phrase {
    pub fn new(text: &str) -> Result<Self> {
        let text = normalize(text);
        if text.is_empty() {
            return Err(KtlError::Validation("phrase is empty after normalization".into()));
        }
        let tokens = tokenize(&text);
        Ok(Phrase { text, tokens })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Phrase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Phrase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Phrase::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Which element of a triple is generated from the other two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    GenerateHead,
    GenerateRelation,
    GenerateTail,
}

impl Direction {
    pub const ALL: [Direction; 3] = [
        Direction::GenerateHead,
        Direction::GenerateRelation,
        Direction::GenerateTail,
    ];

    pub fn index(self) -> usize {
        match self {
            Direction::GenerateHead => 0,
            Direction::GenerateRelation => 1,
            Direction::GenerateTail => 2,
        }
    }
}

/// A fact `(h, r, t)`. Equality is componentwise on normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub h: Phrase,
    pub r: Phrase,
    pub t: Phrase,
}

impl Triple {
    pub fn new(h: &str, r: &str, t: &str) -> Result<Self> {
        Ok(Triple {
            h: Phrase::new(h)?,
            r: Phrase::new(r)?,
            t: Phrase::new(t)?,
        })
    }

    pub fn field(&self, direction: Direction) -> &Phrase {
        match direction {
            Direction::GenerateHead => &self.h,
            Direction::GenerateRelation => &self.r,
            Direction::GenerateTail => &self.t,
        }
    }

    /// Copy of this triple with the generated field replaced.
    pub fn with_field(&self, direction: Direction, value: Phrase) -> Triple {
        let mut out = self.clone();
        match direction {
            Direction::GenerateHead => out.h = value,
            Direction::GenerateRelation => out.r = value,
            Direction::GenerateTail => out.t = value,
        }
        out
    }
}

/// Insertion-ordered set of triples with per-field pools of distinct values.
#[derive(Debug, Clone, Default)]
pub struct FactSet {
    triples: Vec<Triple>,
    members: HashSet<Triple>,
    pools: [Vec<Phrase>; 3],
    pool_members: [HashSet<Phrase>; 3],
}

impl PartialEq for FactSet {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
    }
}

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a triple; returns whether it was new.
    pub fn insert(&mut self, triple: Triple) -> bool {
        if self.members.contains(&triple) {
            return false;
        }
        for d in Direction::ALL {
            let v = triple.field(d);
            if self.pool_members[d.index()].insert(v.clone()) {
                self.pools[d.index()].push(v.clone());
            }
        }
        self.members.insert(triple.clone());
        self.triples.push(triple);
        true
    }

    /// Validates raw strings and inserts.
    pub fn insert_raw(&mut self, h: &str, r: &str, t: &str) -> Result<bool> {
        Ok(self.insert(Triple::new(h, r, t)?))
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.members.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Distinct values observed in the field generated by `direction`, in first-seen order.
    pub fn pool(&self, direction: Direction) -> &[Phrase] {
        &self.pools[direction.index()]
    }

    fn is_valid_negative(&self, triple: &Triple, direction: Direction, cand: &Phrase) -> bool {
        cand != triple.field(direction) && !self.contains(&triple.with_field(direction, cand.clone()))
    }

    /// All pool values whose substitution into `triple` is not a known fact.
    pub fn valid_negatives(&self, triple: &Triple, direction: Direction) -> Vec<&Phrase> {
        self.pool(direction)
            .iter()
            .filter(|c| self.is_valid_negative(triple, direction, c))
            .collect()
    }

    /// Draws `k` distinct corruptions of the generated field, uniformly from
    /// that field's pool, rejecting any value that would form a known fact.
    ///
    /// Rejection sampling runs for at most `100 * k` draws. If that bound is
    /// hit, the remaining picks come from the exhaustive candidate list, or an
    /// [`KtlError::InsufficientNegatives`] error is returned when fewer than
    /// `k` candidates exist.
    pub fn sample_negatives(
        &self,
        triple: &Triple,
        direction: Direction,
        k: usize,
        seed: u64,
    ) -> Result<Vec<Phrase>> {
        if k == 0 {
            return Err(KtlError::Validation("k must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_negatives_with(triple, direction, k, &mut rng)
    }

    pub fn sample_negatives_with<R: Rng>(
        &self,
        triple: &Triple,
        direction: Direction,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<Phrase>> {
        let pool = self.pool(direction);
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        let mut seen: HashSet<usize> = HashSet::new();
        let max_tries = 100 * k;

        if !pool.is_empty() {
            for _ in 0..max_tries {
                if chosen.len() == k {
                    break;
                }
                let i = rng.gen_range(0..pool.len());
                if seen.insert(i) && self.is_valid_negative(triple, direction, &pool[i]) {
                    chosen.push(i);
                }
            }
        }

        if chosen.len() < k {
            let picked: HashSet<usize> = chosen.iter().copied().collect();
            let mut rest: Vec<usize> = (0..pool.len())
                .filter(|i| !picked.contains(i) && self.is_valid_negative(triple, direction, &pool[*i]))
                .collect();
            let available = picked.len() + rest.len();
            if available < k {
                return Err(KtlError::InsufficientNegatives { wanted: k, available });
            }
            while chosen.len() < k {
                let j = rng.gen_range(0..rest.len());
                chosen.push(rest.swap_remove(j));
            }
        }

        Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        write_triples_jsonl(out, self.triples.iter())
    }

    pub fn read_jsonl<R: BufRead>(input: R, source: &Path) -> Result<Self> {
        let mut set = FactSet::new();
        for triple in read_triples_jsonl(input, source) {
            set.insert(triple?);
        }
        Ok(set)
    }
}

impl FromIterator<Triple> for FactSet {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut set = FactSet::new();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

/// Writes one `{"h","r","t"}` object per line.
pub fn write_triples_jsonl<'a, W: Write>(
    mut out: W,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> Result<()> {
    for t in triples {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n").map_err(|e| KtlError::io("<output>", e))?;
    }
    out.flush().map_err(|e| KtlError::io("<output>", e))?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTriple {
    h: String,
    r: String,
    t: String,
}

/// Streams triples from JSONL, reporting the 1-based line number of any bad line.
pub fn read_triples_jsonl<'a, R: BufRead + 'a>(
    input: R,
    source: &'a Path,
) -> impl Iterator<Item = Result<Triple>> + 'a {
    input
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| {
            let line_no = i + 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(KtlError::io(source, e))),
            };
            if line.trim().is_empty() {
                return None;
            }
            let malformed = |message: String| KtlError::MalformedLine {
                path: source.to_path_buf(),
                line: line_no,
                message,
            };
            Some(
                serde_json::from_str::<RawTriple>(&line)
                    .map_err(|e| malformed(e.to_string()))
                    .and_then(|raw| {
                        Triple::new(&raw.h, &raw.r, &raw.t).map_err(|e| malformed(e.to_string()))
                    }),
            )
        })
}
