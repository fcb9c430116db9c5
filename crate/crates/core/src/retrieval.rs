//! BM25 inverted index used for context creation and the IR-solver baseline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{KtlError, Result};
use crate::text::{tokenize, Lexicon};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 5;

const INDEX_FORMAT: &str = "ktl-bm25-index";
const INDEX_VERSION: u32 = 1;

fn index_terms(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    format: String,
    version: u32,
    docs: Vec<String>,
    doc_lens: Vec<usize>,
    avg_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub doc: usize,
    pub text: &'a str,
    pub score: f64,
}

/// `max(0, ln((N - df + 0.5) / (df + 0.5)))`
pub fn bm25_idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

/// Saturated term-frequency factor with the fixed `K1`, `B`.
pub fn bm25_tf(tf: f64, doc_len: f64, avg_len: f64) -> f64 {
    if tf == 0.0 {
        return 0.0;
    }
    let norm = if avg_len > 0.0 { doc_len / avg_len } else { 0.0 };
    tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * norm))
}

impl InvertedIndex {
    /// Doc ids are positions in `sentences`.
    pub fn build<S: AsRef<str>>(sentences: &[S]) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(sentences.len());
        let mut docs = Vec::with_capacity(sentences.len());
        for (doc, s) in sentences.iter().enumerate() {
            let terms = index_terms(s.as_ref());
            doc_lens.push(terms.len());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf: count });
            }
            docs.push(s.as_ref().to_string());
        }
        let avg_len = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().sum::<usize>() as f64 / doc_lens.len() as f64
        };
        InvertedIndex {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            docs,
            doc_lens,
            avg_len,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, id: usize) -> &str {
        &self.docs[id]
    }

    pub fn doc_len(&self, id: usize) -> usize {
        self.doc_lens[id]
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// BM25 ranking over the distinct query terms. Only positive scores are
    /// returned; ties go to the lower doc id.
    pub fn retrieve(&self, query: &str, top_k: usize) -> Vec<Hit<'_>> {
        let terms: BTreeSet<String> = index_terms(query).into_iter().collect();
        let n = self.docs.len();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in &terms {
            let plist = self.postings(term);
            if plist.is_empty() {
                continue;
            }
            let idf = bm25_idf(n, plist.len());
            for p in plist {
                let s = idf * bm25_tf(p.tf as f64, self.doc_lens[p.doc] as f64, self.avg_len);
                *scores.entry(p.doc).or_default() += s;
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top_k);
        ranked
            .into_iter()
            .map(|(doc, score)| Hit {
                doc,
                text: &self.docs[doc],
                score,
            })
            .collect()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let idx: InvertedIndex = serde_json::from_reader(input)?;
        if idx.format != INDEX_FORMAT || idx.version != INDEX_VERSION {
            return Err(KtlError::Validation(format!(
                "unsupported index {} v{}",
                idx.format, idx.version
            )));
        }
        Ok(idx)
    }
}

fn content_words(text: &str, lexicon: &Lexicon) -> BTreeSet<String> {
    index_terms(text)
        .into_iter()
        .filter(|t| !lexicon.is_stopword(t))
        .collect()
}

/// Confidence per option and the chosen option of the IR baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrAnswer {
    pub chosen: usize,
    pub confidences: Vec<f64>,
}

/// IR-solver baseline: for each option, query with context, question and
/// option; the best-ranked retrieved sentence sharing a non-stopword with the
/// question and another with the option supplies the option's confidence
/// (its BM25 score, 0 if none qualifies). Highest confidence wins, ties go to
/// the lowest index.
pub fn ir_solver_answer(
    index: &InvertedIndex,
    context: Option<&str>,
    question: &str,
    options: &[String],
    lexicon: &Lexicon,
    top_k: usize,
) -> IrAnswer {
    let q_words = content_words(question, lexicon);
    let confidences: Vec<f64> = options
        .iter()
        .map(|opt| {
            let query = match context {
                Some(c) => format!("{c} {question} {opt}"),
                None => format!("{question} {opt}"),
            };
            let o_words = content_words(opt, lexicon);
            index
                .retrieve(&query, top_k)
                .into_iter()
                .find(|hit| {
                    let doc_words = content_words(hit.text, lexicon);
                    doc_words.iter().any(|w| q_words.contains(w))
                        && doc_words.iter().any(|w| o_words.contains(w))
                })
                .map(|hit| hit.score)
                .unwrap_or(0.0)
        })
        .collect();
    let mut chosen = 0;
    for (i, c) in confidences.iter().enumerate() {
        if *c > confidences[chosen] {
            chosen = i;
        }
    }
    IrAnswer {
        chosen,
        confidences,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DOCS: [&str; 3] = [
        "the cat sat on the mat",
        "the dog chased the cat",
        "birds fly south",
    ];

    #[test]
    fn postings_match_hand_tally() {
        let idx = InvertedIndex::build(&DOCS);
        assert_eq!(idx.postings("the"), &[Posting { doc: 0, tf: 2 }, Posting { doc: 1, tf: 2 }]);
        assert_eq!(idx.postings("cat"), &[Posting { doc: 0, tf: 1 }, Posting { doc: 1, tf: 1 }]);
        assert_eq!(idx.postings("birds"), &[Posting { doc: 2, tf: 1 }]);
        assert_eq!((idx.doc_len(0), idx.doc_len(1), idx.doc_len(2)), (6, 5, 3));
        assert!((idx.avg_len() - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_term_scores_match_hand_computation() {
        let idx = InvertedIndex::build(&DOCS);
        // "dog": N=3, df=1 -> idf = ln(2.5 / 1.5); doc 1 has tf=1, len=5, avgdl=14/3
        let idf = (2.5f64 / 1.5).ln();
        let denom = 1.0 + 1.2 * (1.0 - 0.75 + 0.75 * 5.0 / (14.0 / 3.0));
        let expect = idf * 2.2 / denom;
        let hits = idx.retrieve("dog", 5);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc, 1);
        assert!((hits[0].score - expect).abs() < 1e-9);

        // "cat": df=2 -> ln(1.5/2.5) < 0, floored to 0, so nothing positive
        assert!(idx.retrieve("cat", 5).is_empty());
    }

    #[test]
    fn absent_terms_and_empty_corpus() {
        let idx = InvertedIndex::build(&DOCS);
        assert!(idx.retrieve("zebra", 5).is_empty());
        let empty = InvertedIndex::build::<&str>(&[]);
        assert!(empty.is_empty());
        assert!(empty.retrieve("anything", 5).is_empty());
    }

    #[test]
    fn identical_docs_tie_on_lower_id() {
        let idx = InvertedIndex::build(&["red fox", "blue jay", "red fox", "green frog", "tan owl"]);
        let hits = idx.retrieve("fox", 5);
        assert_eq!(hits.iter().map(|h| h.doc).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn index_round_trips_with_version_header() {
        let idx = InvertedIndex::build(&DOCS);
        let mut buf = Vec::new();
        idx.write_json(&mut buf).unwrap();
        assert_eq!(InvertedIndex::read_json(buf.as_slice()).unwrap(), idx);
        let bad = String::from_utf8(buf).unwrap().replace("\"version\":1", "\"version\":9");
        assert!(InvertedIndex::read_json(bad.as_bytes()).is_err());
    }

    fn opts(o: &[&str]) -> Vec<String> {
        o.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ir_solver_toy_example() {
        let idx = InvertedIndex::build(&[
            "clouds regulate the atmosphere",
            "rocks are hard and heavy",
            "rivers flow to the sea",
            "plants need sunlight",
        ]);
        let lex = Lexicon::default();
        let ans = ir_solver_answer(&idx, None, "what regulates the atmosphere?", &opts(&["clouds", "rocks"]), &lex, 5);
        assert_eq!(ans.chosen, 0);
        assert!(ans.confidences[0] > 0.0);
        assert_eq!(ans.confidences[1], 0.0);
    }

    #[test]
    fn ir_solver_ties_go_low() {
        let lex = Lexicon::default();
        let empty = InvertedIndex::build::<&str>(&[]);
        let ans = ir_solver_answer(&empty, None, "why?", &opts(&["a", "b", "c"]), &lex, 5);
        assert_eq!(ans.chosen, 0);
        assert_eq!(ans.confidences, vec![0.0; 3]);

        let idx = InvertedIndex::build(&["fish swim in water", "birds fly in air", "x y z", "p q r", "m n o"]);
        let ans = ir_solver_answer(&idx, None, "what moves?", &opts(&["fish", "birds"]), &lex, 5);
        assert_eq!(ans.confidences, vec![0.0, 0.0]);
        assert_eq!(ans.chosen, 0);
    }

    proptest! {
        #[test]
        fn bm25_monotone_in_tf(tf in 0u32..50, len in 1u32..100, avg in 1u32..100) {
            let a = bm25_tf(tf as f64, len as f64, avg as f64);
            let b = bm25_tf(tf as f64 + 1.0, len as f64, avg as f64);
            prop_assert!(b >= a);
        }

        #[test]
        fn retrieval_ignores_query_order(words in proptest::collection::vec("(cat|dog|mat|birds|south|fly|sat)", 1..6)) {
            let idx = InvertedIndex::build(&DOCS);
            let mut rev = words.clone();
            rev.reverse();
            prop_assert_eq!(idx.retrieve(&words.join(" "), 5), idx.retrieve(&rev.join(" "), 5));
        }

        #[test]
        fn ir_confidence_finite_non_negative(q in "[a-z ]{1,20}", o1 in "[a-z]{1,6}", o2 in "[a-z]{1,6}") {
            let idx = InvertedIndex::build(&DOCS);
            let ans = ir_solver_answer(&idx, None, &q, &[o1, o2], &Lexicon::default(), 5);
            prop_assert!(ans.confidences.iter().all(|c| c.is_finite() && *c >= 0.0));
        }
    }
}
