//! Planted-knowledge benchmark: entity-attribute-value facts whose value is
//! fixed by the entity's category, plus multiple-choice questions about
//! held-out facts.

use std::collections::BTreeSet;

use ktl_core::{FactSet, QaItem, Triple};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};

const SYLLABLES: [&str; 12] = ["ba", "ko", "mi", "ru", "te", "lo", "sa", "vi", "du", "ne", "po", "ga"];

pub const CATEGORIES: [&str; 10] = ["fox", "owl", "crab", "moth", "newt", "wren", "toad", "seal", "lynx", "carp"];

/// `(question template, values)` per attribute; `{}` is the category.
pub const ATTRIBUTES: [(&str, [&str; 8]); 5] = [
    (
        "what color is the {} ?",
        ["red", "blue", "green", "yellow", "black", "white", "brown", "gray"],
    ),
    (
        "where does the {} live ?",
        ["forest", "desert", "river", "marsh", "meadow", "cave", "shore", "tundra"],
    ),
    (
        "what does the {} eat ?",
        ["seeds", "worms", "berries", "fish", "insects", "grass", "roots", "moss"],
    ),
    (
        "when is the {} active ?",
        ["dawn", "dusk", "noon", "midnight", "spring", "summer", "autumn", "winter"],
    ),
    (
        "how big is the {} ?",
        ["tiny", "small", "medium", "large", "huge", "slender", "stout", "long"],
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureConfig {
    pub seed: u64,
    pub facts: usize,
    pub qa_items: usize,
    pub options: usize,
    pub entities: usize,
    /// Leading entries of [`CATEGORIES`] in use.
    pub categories: usize,
    /// Leading values per attribute in use.
    pub values: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 0,
            facts: 300,
            qa_items: 100,
            options: 4,
            entities: 161,
            categories: 6,
            values: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    /// Training facts.
    pub facts: FactSet,
    /// Questions about facts absent from `facts`.
    pub dev: Vec<QaItem>,
    /// Questions about facts in `facts`, for fine-tuning.
    pub train_qa: Vec<QaItem>,
    /// One sentence per training fact.
    pub corpus: Vec<String>,
    /// Value index per `(category, attribute)`.
    pub table: Vec<[usize; 5]>,
    /// Distinct words the fixture can emit.
    pub word_pool: usize,
}

fn entity_names(n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut width = 2;
    while out.len() < n {
        let total = SYLLABLES.len().pow(width as u32);
        for mut k in 0..total {
            let mut name = String::new();
            for _ in 0..width {
                name.push_str(SYLLABLES[k % SYLLABLES.len()]);
                k /= SYLLABLES.len();
            }
            out.push(name);
            if out.len() == n {
                break;
            }
        }
        width += 1;
    }
    out
}

fn head(name: &str, category: usize) -> String {
    format!("the {name} {}", CATEGORIES[category])
}

fn question(attribute: usize, category: usize) -> String {
    ATTRIBUTES[attribute].0.replace("{}", CATEGORIES[category])
}

fn item_for<R: Rng>(
    facts: &FactSet,
    (h, question): (&str, &str),
    attribute: usize,
    gold: usize,
    (n_values, n_options): (usize, usize),
    rng: &mut R,
) -> Result<QaItem> {
    let values = &ATTRIBUTES[attribute].1[..n_values];
    let mut distractors: Vec<usize> = (0..values.len())
        .filter(|&v| v != gold)
        .filter(|&v| {
            Triple::new(h, question, values[v])
                .map(|t| !facts.contains(&t))
                .unwrap_or(false)
        })
        .collect();
    if distractors.len() < n_options - 1 {
        return Err(QaError::Fixture(format!("too few distractors for {h:?}")));
    }
    distractors.shuffle(rng);
    let mut options: Vec<usize> = distractors[..n_options - 1].to_vec();
    let label = rng.gen_range(0..n_options);
    options.insert(label, gold);
    Ok(QaItem {
        context: Some(h.to_string()),
        question: question.to_string(),
        options: options.iter().map(|&v| values[v].to_string()).collect(),
        label: Some(label),
    })
}

/// Deterministic fixture for `config`.
pub fn generate(config: &FixtureConfig) -> Result<Fixture> {
    let n_attr = ATTRIBUTES.len();
    if !(2..=8).contains(&config.values) {
        return Err(QaError::Fixture(format!("values must be in 2..=8, got {}", config.values)));
    }
    if !(2..=config.values).contains(&config.options) {
        return Err(QaError::Fixture(format!(
            "options must be in 2..={}, got {}",
            config.values, config.options
        )));
    }
    if !(1..=CATEGORIES.len()).contains(&config.categories) {
        return Err(QaError::Fixture(format!(
            "categories must be in 1..={}, got {}",
            CATEGORIES.len(),
            config.categories
        )));
    }
    if config.facts == 0 || config.entities == 0 {
        return Err(QaError::Fixture("facts and entities must be positive".into()));
    }
    let slots = config.entities * n_attr;
    if config.facts + config.qa_items > slots {
        return Err(QaError::Fixture(format!(
            "{} facts plus {} questions exceed the {slots} entity-attribute slots; raise entities",
            config.facts, config.qa_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Each attribute cycles through its values over a shuffled category
    // order, so every value is used once the categories outnumber them.
    let mut table = vec![[0usize; 5]; config.categories];
    for a in 0..n_attr {
        let mut order: Vec<usize> = (0..config.categories).collect();
        order.shuffle(&mut rng);
        let offset = rng.gen_range(0..config.values);
        for (i, &c) in order.iter().enumerate() {
            table[c][a] = (i + offset) % config.values;
        }
    }
    let names = entity_names(config.entities);
    let categories: Vec<usize> = (0..config.entities).map(|_| rng.gen_range(0..config.categories)).collect();

    let mut cells: Vec<(usize, usize)> = (0..config.entities)
        .flat_map(|e| (0..n_attr).map(move |a| (e, a)))
        .collect();
    cells.shuffle(&mut rng);
    let (train_cells, rest) = cells.split_at(config.facts);
    let dev_cells = &rest[..config.qa_items];

    let mut facts = FactSet::new();
    let mut corpus = Vec::with_capacity(config.facts);
    for &(e, a) in train_cells {
        let c = categories[e];
        let h = head(&names[e], c);
        let question = question(a, c);
        let value = ATTRIBUTES[a].1[table[c][a]];
        facts.insert(Triple::new(&h, &question, value)?);
        corpus.push(format!("{h} {question} {value}"));
    }
    let mut dev = Vec::with_capacity(config.qa_items);
    for &(e, a) in dev_cells {
        let c = categories[e];
        let fields = (head(&names[e], c), question(a, c));
        dev.push(item_for(&facts, (&fields.0, &fields.1), a, table[c][a], (config.values, config.options), &mut rng)?);
    }
    let mut train_qa = Vec::with_capacity(config.facts);
    for &(e, a) in train_cells {
        let c = categories[e];
        let fields = (head(&names[e], c), question(a, c));
        train_qa.push(item_for(&facts, (&fields.0, &fields.1), a, table[c][a], (config.values, config.options), &mut rng)?);
    }

    let mut words: BTreeSet<String> = BTreeSet::new();
    words.insert("the".into());
    words.extend(names.iter().cloned());
    words.extend(CATEGORIES[..config.categories].iter().map(|s| s.to_string()));
    for (q, values) in ATTRIBUTES {
        words.extend(q.split_whitespace().filter(|w| *w != "{}").map(str::to_string));
        words.extend(values[..config.values].iter().map(|s| s.to_string()));
    }

    Ok(Fixture {
        config: config.clone(),
        facts,
        dev,
        train_qa,
        corpus,
        table,
        word_pool: words.len(),
    })
}
