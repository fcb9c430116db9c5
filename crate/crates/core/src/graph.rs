//! Synthetic graph construction: Common Concept Graphs over a sentence
//! corpus, Directed Story Graphs over short stories, reservoir sampling of the
//! generated triples and curriculum filtering against a QA dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KtlError, Result};
use crate::kg::{Phrase, Triple};
use crate::qa_item::QaItem;
use crate::text::{extract_chunks, ChunkSet, Lexicon};

pub const DEFAULT_CAP: usize = 1_000_000;

/// Chunks are vertices, sentences are edges; `incidence` maps each chunk to
/// the ascending ids of the sentences containing it.
#[derive(Debug, Clone)]
pub struct ConceptGraph {
    sentences: Vec<Phrase>,
    chunks: Vec<ChunkSet>,
    incidence: BTreeMap<String, Vec<usize>>,
}

impl ConceptGraph {
    pub fn build<S: AsRef<str>>(corpus: &[S], lexicon: &Lexicon) -> Result<Self> {
        if corpus.is_empty() {
            return Err(KtlError::Validation("corpus is empty".into()));
        }
        let mut sentences = Vec::with_capacity(corpus.len());
        let mut chunks = Vec::with_capacity(corpus.len());
        let mut incidence: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (id, raw) in corpus.iter().enumerate() {
            let sentence = Phrase::new(raw.as_ref())
                .map_err(|_| KtlError::Validation(format!("sentence {id} is empty")))?;
            let cs = extract_chunks(sentence.text(), lexicon);
            if cs.is_empty() {
                log::warn!("sentence {id} has no chunks; it cannot contribute triples");
            }
            for c in &cs {
                incidence.entry(c.clone()).or_default().push(id);
            }
            sentences.push(sentence);
            chunks.push(cs);
        }
        Ok(ConceptGraph {
            sentences,
            chunks,
            incidence,
        })
    }

    pub fn sentences(&self) -> &[Phrase] {
        &self.sentences
    }

    pub fn chunks(&self, sentence: usize) -> &ChunkSet {
        &self.chunks[sentence]
    }

    pub fn vertices(&self) -> impl Iterator<Item = &str> {
        self.incidence.keys().map(String::as_str)
    }

    pub fn vertex_count(&self) -> usize {
        self.incidence.len()
    }

    pub fn edge_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn incidence(&self, chunk: &str) -> &[usize] {
        self.incidence.get(chunk).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Lazily enumerates `(e1, e2, v)` for every sentence pair `e1 < e2`
    /// (corpus order) and every concept `v` shared by both. Order: by `e1`,
    /// then `e2`, then concept.
    pub fn triples(&self) -> CcgTriples<'_> {
        CcgTriples {
            graph: self,
            first: 0,
            current: 0,
            pending: Vec::new(),
        }
    }
}

pub struct CcgTriples<'a> {
    graph: &'a ConceptGraph,
    first: usize,
    current: usize,
    /// Reversed queue of `(second, concept)` for the current `first`.
    pending: Vec<(usize, &'a str)>,
}

impl<'a> CcgTriples<'a> {
    fn fill(&mut self) {
        while self.pending.is_empty() && self.first < self.graph.sentences.len() {
            let i = self.first;
            self.first += 1;
            let mut shared: BTreeMap<usize, BTreeSet<&'a str>> = BTreeMap::new();
            for concept in &self.graph.chunks[i] {
                let ids = &self.graph.incidence[concept];
                let after = ids.partition_point(|&j| j <= i);
                for &j in &ids[after..] {
                    shared.entry(j).or_default().insert(concept.as_str());
                }
            }
            self.pending = shared
                .into_iter()
                .flat_map(|(j, cs)| cs.into_iter().map(move |c| (j, c)))
                .collect();
            self.pending.reverse();
            self.current = i;
        }
    }
}

impl Iterator for CcgTriples<'_> {
    type Item = Triple;

    fn next(&mut self) -> Option<Triple> {
        self.fill();
        let (j, concept) = self.pending.pop()?;
        let g = self.graph;
        let v = Phrase::new(concept).expect("chunks are non-empty");
        Some(Triple {
            h: g.sentences[self.current].clone(),
            r: g.sentences[j].clone(),
            t: v,
        })
    }
}

/// Collection of stories; within a story sentence `i` has an edge to every
/// later sentence `j > i`. Stories never connect to each other.
#[derive(Debug, Clone, Default)]
pub struct StoryGraph {
    stories: Vec<Vec<Phrase>>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct StoryLine {
    sentences: Vec<String>,
}

impl StoryGraph {
    pub fn new<S: AsRef<str>>(stories: &[Vec<S>]) -> Result<Self> {
        let stories = stories
            .iter()
            .map(|s| s.iter().map(|x| Phrase::new(x.as_ref())).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(StoryGraph { stories })
    }

    /// Reads `{"sentences": [...]}` lines.
    pub fn read_jsonl<R: BufRead>(input: R, source: &Path) -> Result<Self> {
        let mut stories = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| KtlError::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| KtlError::MalformedLine {
                path: source.to_path_buf(),
                line: i + 1,
                message,
            };
            let parsed: StoryLine =
                serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let story = parsed
                .sentences
                .iter()
                .map(|s| Phrase::new(s))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| malformed(e.to_string()))?;
            stories.push(story);
        }
        Ok(StoryGraph { stories })
    }

    pub fn stories(&self) -> &[Vec<Phrase>] {
        &self.stories
    }

    pub fn sentence_count(&self) -> usize {
        self.stories.iter().map(Vec::len).sum()
    }

    /// Edge test within one story: `i -> j` iff `i < j`.
    pub fn has_edge(&self, story: usize, i: usize, j: usize) -> bool {
        i < j && j < self.stories[story].len()
    }

    /// Every `(s_i, s_j, s_k)` with `i < j < k` inside a story, in story order
    /// then lexicographic index order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.stories.iter().flat_map(|story| {
            let n = story.len();
            (0..n).flat_map(move |i| {
                (i + 1..n).flat_map(move |j| {
                    (j + 1..n).map(move |k| Triple {
                        h: story[i].clone(),
                        r: story[j].clone(),
                        t: story[k].clone(),
                    })
                })
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub cap: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            cap: DEFAULT_CAP,
            seed: 0,
        }
    }
}

/// Result of a reservoir pass.
#[derive(Debug, Clone)]
pub struct Sampled<T> {
    /// Kept items in their original stream order.
    pub items: Vec<T>,
    pub seen: usize,
}

/// Single-pass uniform sample of `min(cap, n)` items without replacement
/// (Algorithm R). Memory is `O(cap)`.
pub fn random_sample<T, I: IntoIterator<Item = T>>(stream: I, config: SampleConfig) -> Result<Sampled<T>> {
    if config.cap == 0 {
        return Err(KtlError::Validation("sample cap must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reservoir: Vec<(usize, T)> = Vec::with_capacity(config.cap.min(1 << 16));
    let mut seen = 0usize;
    for item in stream {
        if reservoir.len() < config.cap {
            reservoir.push((seen, item));
        } else {
            let j = rng.gen_range(0..=seen);
            if j < config.cap {
                reservoir[j] = (seen, item);
            }
        }
        seen += 1;
    }
    reservoir.sort_by_key(|(i, _)| *i);
    Ok(Sampled {
        items: reservoir.into_iter().map(|(_, t)| t).collect(),
        seen,
    })
}

/// Union of chunks over every context, question and option of the QA items.
pub fn target_chunks(items: &[QaItem], lexicon: &Lexicon) -> ChunkSet {
    let mut out = ChunkSet::new();
    for item in items {
        if let Some(c) = &item.context {
            out.extend(extract_chunks(c, lexicon));
        }
        out.extend(extract_chunks(&item.question, lexicon));
        for o in &item.options {
            out.extend(extract_chunks(o, lexicon));
        }
    }
    out
}

/// Outcome of curriculum filtering.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<Triple>,
    pub dropped: usize,
    pub target_size: usize,
}

/// Keeps the triples whose field chunks intersect the QA items' chunk set,
/// preserving input order.
pub fn curriculum_filter<I: IntoIterator<Item = Triple>>(
    triples: I,
    items: &[QaItem],
    lexicon: &Lexicon,
) -> Result<FilterOutcome> {
    if items.is_empty() {
        return Err(KtlError::Validation("no QA items supplied".into()));
    }
    let target = target_chunks(items, lexicon);
    if target.is_empty() {
        return Err(KtlError::EmptyTargetChunks);
    }
    let mut kept = Vec::new();
    let mut dropped = 0;
    for triple in triples {
        let hit = [&triple.h, &triple.r, &triple.t]
            .iter()
            .any(|p| extract_chunks(p.text(), lexicon).iter().any(|c| target.contains(c)));
        if hit {
            kept.push(triple);
        } else {
            dropped += 1;
        }
    }
    Ok(FilterOutcome {
        kept,
        dropped,
        target_size: target.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    const PACIFIC: &str =
        "Warm moist air from the Pacific Ocean brings fog and low stratus clouds to the maritime zone.";
    const CLOUDS: &str = "Clouds regulate the global engine of atmosphere and ocean.";

    fn lex() -> Lexicon {
        Lexicon::default()
    }

    #[test]
    fn single_sentence_graph() {
        let g = ConceptGraph::build(&["warm air brings fog"], &lex()).unwrap();
        // warm air | brings | fog
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.triples().count(), 0);
    }

    #[test]
    fn shared_clouds_incidence_and_triple() {
        let g = ConceptGraph::build(&[PACIFIC, CLOUDS], &lex()).unwrap();
        assert_eq!(g.incidence("clouds"), &[0, 1]);
        let triples: Vec<Triple> = g.triples().collect();
        assert_eq!(triples, vec![Triple::new(PACIFIC, CLOUDS, "clouds").unwrap()]);
    }

    #[test]
    fn disjoint_sentences_emit_nothing() {
        let g = ConceptGraph::build(&["red apples", "blue rivers"], &lex()).unwrap();
        assert_eq!(g.triples().count(), 0);
    }

    #[test]
    fn empty_chunk_sentence_is_kept_as_edge() {
        let g = ConceptGraph::build(&["the of and", "red apples"], &lex()).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.chunks(0).is_empty());
    }

    const TOY: [&str; 5] = [
        "rain falls on green hills",
        "green hills hold water",
        "water flows to the sea",
        "the sea holds salt water",
        "salt melts ice on roads",
    ];

    #[test]
    fn incidence_matches_rescan() {
        let g = ConceptGraph::build(&TOY, &lex()).unwrap();
        let per: Vec<ChunkSet> = TOY.iter().map(|s| extract_chunks(s, &lex())).collect();
        let all: BTreeSet<&String> = per.iter().flatten().collect();
        assert_eq!(g.vertex_count(), all.len());
        for v in all {
            let scan: Vec<usize> = (0..TOY.len()).filter(|&i| per[i].contains(v)).collect();
            assert_eq!(g.incidence(v), scan.as_slice());
        }
    }

    #[test]
    fn ccg_matches_pairwise_bruteforce() {
        let corpus = &TOY[..4];
        let g = ConceptGraph::build(corpus, &lex()).unwrap();
        let per: Vec<ChunkSet> = corpus.iter().map(|s| extract_chunks(s, &lex())).collect();
        let mut expect = Vec::new();
        for i in 0..corpus.len() {
            for j in i + 1..corpus.len() {
                for v in per[i].intersection(&per[j]) {
                    expect.push(Triple::new(corpus[i], corpus[j], v).unwrap());
                }
            }
        }
        let got: Vec<Triple> = g.triples().collect();
        assert!(!expect.is_empty());
        assert_eq!(got, expect);
    }

    #[test]
    fn dsg_counts() {
        let g = StoryGraph::new(&[vec!["s1", "s2", "s3"]]).unwrap();
        let got: Vec<Triple> = g.triples().collect();
        assert_eq!(got, vec![Triple::new("s1", "s2", "s3").unwrap()]);

        let g = StoryGraph::new(&[vec!["1", "2", "3", "4"]]).unwrap();
        let got: Vec<(String, String, String)> = g
            .triples()
            .map(|t| (t.h.to_string(), t.r.to_string(), t.t.to_string()))
            .collect();
        let expect: Vec<(String, String, String)> = [(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)]
            .iter()
            .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
            .collect();
        assert_eq!(got, expect);

        let g = StoryGraph::new(&[vec!["a1", "a2", "a3"], vec!["b1", "b2", "b3"], vec!["c1", "c2"]])
            .unwrap();
        let got: Vec<Triple> = g.triples().collect();
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|t| t.h.text().chars().next() == t.t.text().chars().next()));
    }

    #[test]
    fn reservoir_small_stream_returns_everything() {
        let s = random_sample(0..10, SampleConfig { cap: 100, seed: 1 }).unwrap();
        assert_eq!(s.items, (0..10).collect::<Vec<_>>());
        assert_eq!(s.seen, 10);
    }

    #[test]
    fn reservoir_is_deterministic() {
        let a = random_sample(0..1000, SampleConfig { cap: 10, seed: 7 }).unwrap();
        let b = random_sample(0..1000, SampleConfig { cap: 10, seed: 7 }).unwrap();
        assert_eq!(a.items, b.items);
        assert_eq!(a.items.len(), 10);
        assert!(random_sample(0..3, SampleConfig { cap: 0, seed: 0 }).is_err());
    }

    #[test]
    fn reservoir_inclusion_is_uniform() {
        // 1000 items, cap 100, 10,000 seeds: inclusion ~ Binomial(10000, 0.1),
        // sigma = sqrt(10000 * 0.1 * 0.9) = 30.
        let runs = 10_000;
        let mut counts = vec![0u32; 1000];
        for seed in 0..runs {
            for i in random_sample(0..1000usize, SampleConfig { cap: 100, seed }).unwrap().items {
                counts[i] += 1;
            }
        }
        let mean = runs as f64 * 0.1;
        let sigma = (runs as f64 * 0.1 * 0.9).sqrt();
        let outside = counts
            .iter()
            .filter(|&&c| (c as f64 - mean).abs() > 3.0 * sigma)
            .count();
        // P(|z| > 3) ~ 0.27%, about 2.7 of 1000 expected
        assert!(outside <= 10, "{outside} items outside 3 sigma");
        let total: u32 = counts.iter().sum();
        assert_eq!(total, 100 * runs as u32);
    }

    fn qa(question: &str, options: &[&str]) -> QaItem {
        QaItem {
            context: None,
            question: question.into(),
            options: options.iter().map(|s| s.to_string()).collect(),
            label: None,
        }
    }

    #[test]
    fn filter_keeps_clouds_and_drops_unrelated() {
        let items = vec![qa("What regulates the atmosphere?", &["clouds", "rocks"])];
        let triples = vec![
            Triple::new(PACIFIC, CLOUDS, "clouds").unwrap(),
            Triple::new("green hills", "blue rivers", "salt").unwrap(),
        ];
        let out = curriculum_filter(triples.clone(), &items, &lex()).unwrap();
        assert_eq!(out.kept, vec![triples[0].clone()]);
        assert_eq!(out.dropped, 1);
    }

    #[test]
    fn filter_errors_on_empty_target() {
        let items = vec![qa("the of and", &["the", "of"])];
        assert!(matches!(
            curriculum_filter(Vec::new(), &items, &lex()),
            Err(KtlError::EmptyTargetChunks)
        ));
    }

    #[test]
    fn filter_matches_set_intersection_oracle_and_is_idempotent() {
        let words = ["rain", "hills", "water", "sea", "salt", "ice", "roads", "fog", "air", "clouds"];
        let triples: Vec<Triple> = (0..50)
            .map(|i| {
                Triple::new(
                    &format!("{} near the {}", words[i % 10], words[(i * 3) % 10]),
                    &format!("{} of", words[(i * 7 + 1) % 10]),
                    &format!("the {}", words[(i * 11 + 2) % 10]),
                )
                .unwrap()
            })
            .collect();
        let items = vec![qa("Where is the ice?", &["roads", "fog"])];
        let out = curriculum_filter(triples.clone(), &items, &lex()).unwrap();

        // independent oracle: word-level membership against a hand-built target
        let target: HashSet<&str> = ["ice", "roads", "fog"].into_iter().collect();
        let expect: Vec<Triple> = triples
            .iter()
            .filter(|t| {
                [&t.h, &t.r, &t.t].iter().any(|p| {
                    p.text()
                        .split(' ')
                        .filter(|w| !["near", "the", "of"].contains(w))
                        .any(|w| target.contains(w))
                })
            })
            .cloned()
            .collect();
        assert_eq!(out.kept, expect);
        assert!(!expect.is_empty() && expect.len() < 50);

        let again = curriculum_filter(out.kept.clone(), &items, &lex()).unwrap();
        assert_eq!(again.kept, out.kept);
    }
}
