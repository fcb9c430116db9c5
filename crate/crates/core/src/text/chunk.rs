use std::collections::BTreeSet;

use super::lexicon::Lexicon;
use super::tokenize::tokenize;

/// Longest span kept as a single chunk; longer spans are cut into pieces of this size.
pub const MAX_SPAN: usize = 4;

/// Noun spans at least this long also contribute their final (head) token.
pub const HEAD_BACKOFF_MIN: usize = 3;

/// Deduplicated, ordered set of normalized concept chunks.
pub type ChunkSet = BTreeSet<String>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum SpanKind {
    Noun,
    Verb,
}

/// Lexicon-driven noun/verb chunker.
///
/// Stopwords and punctuation delimit spans. A token listed as a verb form
/// closes the running noun span and starts (or extends) a verb span. Spans
/// longer than [`MAX_SPAN`] tokens are cut left to right. Noun spans of
/// [`HEAD_BACKOFF_MIN`] or more tokens also yield their last token, so
/// "low stratus clouds" contributes "clouds" as well.
pub fn extract_chunks(sentence: &str, lexicon: &Lexicon) -> ChunkSet {
    let tokens = tokenize(sentence);
    let mut chunks = ChunkSet::new();
    let mut span: Vec<&str> = Vec::new();
    let mut kind = SpanKind::Noun;

    for tok in &tokens {
        let tok = tok.as_str();
        if lexicon.is_stopword(tok) || !tok.chars().any(char::is_alphanumeric) {
            flush(&mut span, kind, &mut chunks);
            continue;
        }
        let this = if lexicon.is_verb(tok) {
            SpanKind::Verb
        } else {
            SpanKind::Noun
        };
        if this != kind {
            flush(&mut span, kind, &mut chunks);
            kind = this;
        }
        span.push(tok);
    }
    flush(&mut span, kind, &mut chunks);
    chunks
}

fn flush(span: &mut Vec<&str>, kind: SpanKind, chunks: &mut ChunkSet) {
    for piece in span.chunks(MAX_SPAN) {
        chunks.insert(piece.join(" "));
        if kind == SpanKind::Noun && piece.len() >= HEAD_BACKOFF_MIN {
            chunks.insert(piece[piece.len() - 1].to_string());
        }
    }
    span.clear();
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> ChunkSet {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn clouds_sentence_matches_worked_example_exactly() {
        let lex = Lexicon::default();
        let got = extract_chunks("Clouds regulate the global engine of atmosphere and ocean.", &lex);
        assert_eq!(
            got,
            set(&["clouds", "global engine", "atmosphere", "ocean", "regulate"])
        );
    }

    #[test]
    fn all_stopwords_gives_empty_set() {
        assert!(extract_chunks("the of and", &Lexicon::default()).is_empty());
    }

    #[test]
    fn warm_moist_air_by_hand() {
        // warm moist air | brings (verb) | fog ; the 3-token noun span adds its head.
        let got = extract_chunks("warm moist air brings fog", &Lexicon::default());
        assert_eq!(got, set(&["warm moist air", "air", "brings", "fog"]));
    }

    #[test]
    fn pacific_sentence_shares_clouds() {
        let got = extract_chunks(
            "Warm moist air from the Pacific Ocean brings fog and low stratus clouds to the maritime zone.",
            &Lexicon::default(),
        );
        assert_eq!(
            got,
            set(&[
                "warm moist air",
                "air",
                "pacific ocean",
                "brings",
                "fog",
                "low stratus clouds",
                "clouds",
                "maritime zone",
            ])
        );
    }

    #[test]
    fn long_spans_are_cut_at_four() {
        let got = extract_chunks("alpha beta gamma delta epsilon zeta", &Lexicon::default());
        assert_eq!(
            got,
            set(&["alpha beta gamma delta", "delta", "epsilon zeta"])
        );
    }

    proptest! {
        #[test]
        fn invariant_to_case_and_outer_whitespace(
            words in proptest::collection::vec("(the|of|clouds|ocean|regulate|global|engine|and|warm|air|brings|\\.)", 1..12),
            pad in "[ \t]{0,3}",
            upper in any::<bool>(),
        ) {
            let lex = Lexicon::default();
            let s = words.join(" ");
            let variant = if upper { s.to_uppercase() } else { s.clone() };
            let variant = format!("{pad}{variant}{pad}");
            prop_assert_eq!(extract_chunks(&s, &lex), extract_chunks(&variant, &lex));
        }

        #[test]
        fn chunks_are_token_subsequences_without_stopword_edges(
            words in proptest::collection::vec("(the|of|clouds|ocean|regulate|global|engine|and|warm|air|brings|fog|,|\\.)", 1..14),
        ) {
            let lex = Lexicon::default();
            let s = words.join(" ");
            let toks = tokenize(&s);
            for chunk in extract_chunks(&s, &lex) {
                let ct: Vec<&str> = chunk.split(' ').collect();
                prop_assert!(!ct.is_empty());
                prop_assert!(!lex.is_stopword(ct[0]) && !lex.is_stopword(ct[ct.len() - 1]));
                prop_assert!(toks.windows(ct.len()).any(|w| w.iter().map(String::as_str).eq(ct.iter().copied())));
            }
        }
    }
}
