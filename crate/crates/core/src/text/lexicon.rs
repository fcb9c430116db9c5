use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{KtlError, Result};

const STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
const VERBS: &str = include_str!("../../resources/verbs.txt");
const AUXILIARIES: &str = include_str!("../../resources/auxiliaries.txt");
const WH_RULES: &str = include_str!("../../resources/wh_rules.txt");

/// One row of the wh-question rule table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WhRule {
    pub word: String,
    /// Inserted before the answer option when the option fills a non-subject slot.
    pub connector: Option<String>,
}

/// Word lists driving the chunker and the hypothesis converter.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub stopwords: HashSet<String>,
    /// Verb forms, already inflected.
    pub verbs: HashSet<String>,
    pub auxiliaries: HashSet<String>,
    pub wh_rules: Vec<WhRule>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            stopwords: entries(STOPWORDS).collect(),
            verbs: inflect_all(entries(VERBS)),
            auxiliaries: entries(AUXILIARIES).collect(),
            wh_rules: parse_wh_rules(WH_RULES),
        }
    }
}

impl Lexicon {
    /// Bundled lists, with any provided file replacing the matching list.
    pub fn with_overrides(
        stopwords: Option<&Path>,
        verbs: Option<&Path>,
        wh_rules: Option<&Path>,
    ) -> Result<Self> {
        let mut lex = Lexicon::default();
        if let Some(p) = stopwords {
            lex.stopwords = entries(&read(p)?).collect();
        }
        if let Some(p) = verbs {
            lex.verbs = inflect_all(entries(&read(p)?));
        }
        if let Some(p) = wh_rules {
            lex.wh_rules = parse_wh_rules(&read(p)?);
        }
        Ok(lex)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn is_verb(&self, token: &str) -> bool {
        self.verbs.contains(token)
    }

    pub fn wh_rule(&self, word: &str) -> Option<&WhRule> {
        self.wh_rules.iter().find(|r| r.word == word)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| KtlError::io(path, e))
}

fn entries(src: &str) -> impl Iterator<Item = String> + '_ {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
}

fn parse_wh_rules(src: &str) -> Vec<WhRule> {
    entries(src)
        .filter_map(|line| {
            let mut parts = line.split_whitespace();
            let word = parts.next()?.to_string();
            let rest: Vec<&str> = parts.collect();
            let connector = (!rest.is_empty()).then(|| rest.join(" "));
            Some(WhRule { word, connector })
        })
        .collect()
}

fn inflect_all(lemmas: impl Iterator<Item = String>) -> HashSet<String> {
    let mut out = HashSet::new();
    for lemma in lemmas {
        out.extend(inflections(&lemma));
    }
    out
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Regular English inflections of a verb lemma (no consonant doubling).
pub fn inflections(lemma: &str) -> Vec<String> {
    let chars: Vec<char> = lemma.chars().collect();
    if chars.len() < 2 {
        return vec![lemma.to_string()];
    }
    let last = chars[chars.len() - 1];
    let prev = chars[chars.len() - 2];
    let stem_y = &lemma[..lemma.len() - 1];
    let consonant_y = last == 'y' && !is_vowel(prev);

    let third = if consonant_y {
        format!("{stem_y}ies")
    } else if ["s", "x", "z", "ch", "sh", "o"]
        .iter()
        .any(|s| lemma.ends_with(s))
    {
        format!("{lemma}es")
    } else {
        format!("{lemma}s")
    };
    let past = if consonant_y {
        format!("{stem_y}ied")
    } else if last == 'e' {
        format!("{lemma}d")
    } else {
        format!("{lemma}ed")
    };
    let gerund = if lemma.ends_with("ie") {
        format!("{}ying", &lemma[..lemma.len() - 2])
    } else if last == 'e' && prev != 'e' {
        format!("{stem_y}ing")
    } else {
        format!("{lemma}ing")
    };
    vec![lemma.to_string(), third, past, gerund]
}
