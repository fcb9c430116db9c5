use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ktl_core::graph::{curriculum_filter, random_sample, ConceptGraph, StoryGraph};
use ktl_core::kg::{read_triples_jsonl, write_triples_jsonl};
use ktl_core::qa_item::{read_qa_jsonl, write_qa_jsonl};
use ktl_core::retrieval::InvertedIndex;
use ktl_core::{FactSet, QaItem, Triple};
use ktl_neural::gradcheck::{DEFAULT_STEP, DEFAULT_TOLERANCE};
use ktl_objectives::check::check_objective;
use ktl_objectives::{train_model, KtlModel, Method};
use ktl_qa::eval::{predictions, score_items};
use ktl_qa::fixture::{self, FixtureConfig};
use ktl_qa::scoring::IrScorer;
use ktl_qa::{ablate, evaluate, AnswerEnv, Components, ItemScores, ModelScorer, RandomScorer, Scorer};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cli::{AblateArgs, BuildGraphArgs, FilterArgs, GradcheckArgs, GraphType, MakeFixtureArgs, ScoreArgs, ScorerKind, TrainArgs};
use crate::config::{read_to_string, require, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{file_digest, kv, write_atomic, write_json, write_jsonl, write_sidecar, Manifest};

fn open(path: &Path) -> Result<BufReader<File>> {
    require(path)?;
    Ok(BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

fn read_triples(path: &Path) -> Result<Vec<Triple>> {
    let reader = open(path)?;
    Ok(read_triples_jsonl(reader, path).collect::<ktl_core::Result<Vec<_>>>()?)
}

fn read_qa(path: &Path) -> Result<Vec<QaItem>> {
    Ok(read_qa_jsonl(open(path)?, path)?)
}

fn write_triples(path: &Path, triples: &[Triple]) -> Result<()> {
    write_atomic(path, |w| Ok(write_triples_jsonl(w, triples)?))
}

pub fn build_graph(args: &BuildGraphArgs) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(cap) = args.cap {
        config.sampling.cap = cap;
    }
    if let Some(seed) = args.seed {
        config.sampling.seed = seed;
    }
    let lexicon = config.lexicon()?;
    let (input, sentences, vertices, sampled) = match args.graph_type {
        GraphType::Ccg => {
            let path = args.corpus.as_deref().ok_or_else(|| CliError::Usage("--corpus is required for ccg".into()))?;
            let lines = read_lines(path)?;
            let graph = ConceptGraph::build(&lines, &lexicon)?;
            let sampled = random_sample(graph.triples(), config.sample_config())?;
            (path, graph.sentences().len(), graph.vertex_count(), sampled)
        }
        GraphType::Dsg => {
            let path = args.stories.as_deref().ok_or_else(|| CliError::Usage("--stories is required for dsg".into()))?;
            let graph = StoryGraph::read_jsonl(open(path)?, path)?;
            let sampled = random_sample(graph.triples(), config.sample_config())?;
            (path, graph.sentence_count(), graph.sentence_count(), sampled)
        }
    };
    write_triples(&args.out, &sampled.items)?;
    let manifest = Manifest::new("build-graph", &[input], &config, config.sampling.seed)?;
    let summary = json!({
        "sentences": sentences,
        "vertices": vertices,
        "emitted": sampled.seen,
        "sampled": sampled.items.len(),
    });
    write_sidecar(&args.out, &manifest, summary)?;
    kv("sentences", sentences);
    kv("vertices", vertices);
    kv("emitted", sampled.seen);
    kv("sampled", sampled.items.len());
    Ok(())
}

pub fn filter(args: &FilterArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let lexicon = config.lexicon()?;
    let triples = read_triples(&args.triples)?;
    let items = read_qa(&args.qa)?;
    let outcome = curriculum_filter(triples, &items, &lexicon)?;
    write_triples(&args.out, &outcome.kept)?;
    let manifest = Manifest::new("filter", &[&args.triples, &args.qa], &config, config.sampling.seed)?;
    let summary = json!({
        "kept": outcome.kept.len(),
        "dropped": outcome.dropped,
        "target_chunks": outcome.target_size,
    });
    write_sidecar(&args.out, &manifest, summary)?;
    kv("kept", outcome.kept.len());
    kv("dropped", outcome.dropped);
    kv("target_chunks", outcome.target_size);
    Ok(())
}

fn history_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".history.json");
    PathBuf::from(name)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(m) = args.method {
        config.objective.method = m;
    }
    let facts: FactSet = read_triples(&args.triples)?.into_iter().collect();
    if facts.is_empty() {
        return Err(ktl_core::KtlError::Validation(format!("{}: no triples", args.triples.display())).into());
    }
    let spec = config.train_spec(args.seed);
    eprintln!(
        "training {} on {} triples for {} epochs",
        spec.method,
        facts.len(),
        spec.train.epochs
    );
    let start = Instant::now();
    let outcome = train_model(&facts, &spec)?;
    let elapsed = start.elapsed().as_secs_f64();
    let manifest = Manifest::new("train", &[&args.triples], &config, args.seed)?;
    let training = json!({
        "epoch_losses": outcome.report.epoch_losses,
        "steps": outcome.report.steps,
        "examples": outcome.report.examples,
        "skipped": outcome.skipped,
    });
    let checkpoint = outcome.model.to_checkpoint(Some(training.clone()), Some(manifest.to_value()));
    write_atomic(&args.out, |w| Ok(serde_json::to_writer(w, &checkpoint)?))?;
    let history = args.history.clone().unwrap_or_else(|| history_path(&args.out));
    let mut doc = training;
    doc["manifest"] = manifest.to_value();
    write_json(&history, &doc)?;
    if outcome.skipped > 0 {
        eprintln!("warning: {} triples exceed the encoder length limit and were skipped", outcome.skipped);
    }
    kv("method", spec.method);
    kv("examples", outcome.report.examples);
    kv("steps", outcome.report.steps);
    if let Some(l) = outcome.report.epoch_losses.last() {
        kv("final_loss", l);
    }
    kv("seconds", format!("{elapsed:.3}"));
    kv("digest", file_digest(&args.out)?);
    Ok(())
}

fn load_model(path: &Path) -> Result<KtlModel> {
    let text = read_to_string(path)?;
    Ok(KtlModel::from_json(&text)?)
}

fn load_index(path: &Path) -> Result<InvertedIndex> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(InvertedIndex::read_json(open(path)?)?)
    } else {
        Ok(InvertedIndex::build(&read_lines(path)?))
    }
}

/// Loaded inputs shared by answer, eval and ablate.
struct Scoring {
    config: RunConfig,
    model: Option<KtlModel>,
    index: Option<InvertedIndex>,
    lexicon: ktl_core::text::Lexicon,
    items: Vec<QaItem>,
    inputs: Vec<PathBuf>,
}

impl Scoring {
    fn load(args: &ScoreArgs) -> Result<Self> {
        let mut config = RunConfig::load(args.config.as_deref())?;
        if args.hypothesis {
            config.evaluation.hypothesis = true;
        }
        if let Some(k) = args.top_k {
            config.evaluation.top_k = k;
        }
        let lexicon = config.lexicon()?;
        let mut inputs = Vec::new();
        let model = match args.scorer {
            ScorerKind::Model => {
                let path = args.model.as_deref().ok_or_else(|| CliError::Usage("--model is required".into()))?;
                inputs.push(path.to_path_buf());
                Some(load_model(path)?)
            }
            _ => None,
        };
        let items = read_qa(&args.qa)?;
        inputs.push(args.qa.clone());
        let index = match &args.retrieval_corpus {
            Some(p) => {
                inputs.push(p.clone());
                Some(load_index(p)?)
            }
            None => None,
        };
        if args.scorer == ScorerKind::Ir && index.is_none() {
            return Err(CliError::Usage("--scorer ir needs --retrieval-corpus".into()));
        }
        Ok(Scoring {
            config,
            model,
            index,
            lexicon,
            items,
            inputs,
        })
    }

    fn scorer(&self, args: &ScoreArgs) -> Box<dyn Scorer + '_> {
        match (args.scorer, &self.model, &self.index) {
            (ScorerKind::Model, Some(m), _) => Box::new(ModelScorer { model: m }),
            (ScorerKind::Ir, _, Some(index)) => Box::new(IrScorer {
                index,
                lexicon: &self.lexicon,
                top_k: self.config.evaluation.top_k,
            }),
            _ => Box::new(RandomScorer { seed: args.seed }),
        }
    }

    /// The IR scorer retrieves on its own, so it scores each item's own context only.
    fn env(&self, args: &ScoreArgs) -> AnswerEnv<'_> {
        let index = match args.scorer {
            ScorerKind::Model => self.index.as_ref(),
            _ => None,
        };
        AnswerEnv {
            index,
            lexicon: &self.lexicon,
            config: &self.config.evaluation,
        }
    }

    fn manifest(&self, command: &str, seed: u64) -> Result<Manifest> {
        let inputs: Vec<&Path> = self.inputs.iter().map(PathBuf::as_path).collect();
        Manifest::new(command, &inputs, &self.config, seed)
    }
}

fn report_warnings(scored: &[ItemScores]) {
    let total: usize = scored.iter().map(|s| s.warnings.len()).sum();
    if total == 0 {
        return;
    }
    if let Some(first) = scored.iter().flat_map(|s| &s.warnings).next() {
        eprintln!("warning: {first}");
    }
    if total > 1 {
        eprintln!("warning: {} more scoring warnings", total - 1);
    }
}

fn write_predictions(path: &Path, scored: &[ItemScores], manifest: &Manifest) -> Result<()> {
    write_jsonl(path, &predictions(scored))?;
    write_sidecar(path, manifest, Value::Null)
}

pub fn answer(args: &ScoreArgs) -> Result<()> {
    let s = Scoring::load(args)?;
    let scorer = s.scorer(args);
    let scored = score_items(scorer.as_ref(), &s.items, &s.env(args))?;
    report_warnings(&scored);
    let manifest = s.manifest("answer", args.seed)?;
    write_predictions(&args.out, &scored, &manifest)?;
    kv("items", scored.len());
    Ok(())
}

pub fn eval(args: &ScoreArgs) -> Result<()> {
    let s = Scoring::load(args)?;
    let scorer = s.scorer(args);
    let (report, scored) = evaluate(scorer.as_ref(), &s.items, &s.env(args), args.seed)?;
    report_warnings(&scored);
    let manifest = s.manifest("eval", args.seed)?;
    let mut doc = serde_json::to_value(&report)?;
    doc["manifest"] = manifest.to_value();
    write_json(&args.out, &doc)?;
    if let Some(p) = &args.predictions {
        write_predictions(p, &scored, &manifest)?;
    }
    kv("correct", report.correct);
    kv("labeled", report.labeled);
    kv("accuracy", report.accuracy);
    Ok(())
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let configurations: Vec<Components> = if args.components.is_empty() {
        Components::STANDARD.to_vec()
    } else {
        args.components
            .iter()
            .map(|c| c.parse::<Components>())
            .collect::<ktl_qa::Result<_>>()
            .map_err(|e| CliError::Usage(e.to_string()))?
    };
    let a = &args.score;
    let s = Scoring::load(a)?;
    let scorer = s.scorer(a);
    let env = s.env(a);
    let reports = ablate(scorer.as_ref(), &s.items, &env, &configurations, a.seed)?;
    let manifest = s.manifest("ablate", a.seed)?;
    write_json(&a.out, &json!({ "reports": reports, "manifest": manifest.to_value() }))?;
    if let Some(p) = &a.predictions {
        let scored = score_items(scorer.as_ref(), &s.items, &env)?;
        write_predictions(p, &scored, &manifest)?;
    }
    for (key, report) in &reports {
        kv(&format!("accuracy[{key}]"), report.accuracy);
    }
    Ok(())
}

/// Settings of the gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub seeds: u64,
    pub step: f64,
    pub tolerance: f64,
    pub methods: Vec<Method>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seeds: 10,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            methods: Method::ALL.to_vec(),
        }
    }
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let config: GradcheckConfig = match &args.config {
        Some(p) => serde_json::from_str(&read_to_string(p)?).map_err(|e| CliError::Config {
            path: p.clone(),
            message: e.to_string(),
        })?,
        None => GradcheckConfig::default(),
    };
    let mut failed = Vec::new();
    for &method in &config.methods {
        let mut worst = 0.0f64;
        for seed in 0..config.seeds {
            let report = check_objective(method, seed, config.step, config.tolerance, args.corrupt_gradient)?;
            worst = worst.max(report.max_relative_error());
            if !report.passed() {
                let tensor = report.worst().map(|t| t.name.as_str()).unwrap_or("?");
                eprintln!("{method}: seed {seed} fails at {tensor}");
            }
        }
        let ok = worst < config.tolerance;
        kv(&format!("max_rel_error[{method}]"), format!("{worst:.3e}"));
        if !ok {
            failed.push(method.name().to_string());
        }
    }
    if failed.is_empty() {
        kv("gradcheck", "pass");
        Ok(())
    } else {
        kv("gradcheck", "fail");
        Err(CliError::Gradcheck(failed))
    }
}

pub fn make_fixture(args: &MakeFixtureArgs) -> Result<()> {
    let fixture_config = FixtureConfig {
        seed: args.seed,
        ..FixtureConfig::default()
    };
    let fx = fixture::generate(&fixture_config)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let dir = &args.out;
    write_triples(&dir.join("triples.jsonl"), fx.facts.triples())?;
    write_atomic(&dir.join("qa_dev.jsonl"), |w| Ok(write_qa_jsonl(w, &fx.dev)?))?;
    write_atomic(&dir.join("qa_train.jsonl"), |w| Ok(write_qa_jsonl(w, &fx.train_qa)?))?;
    write_atomic(&dir.join("corpus.txt"), |w| {
        for line in &fx.corpus {
            writeln!(w, "{line}").map_err(|e| CliError::io(dir.join("corpus.txt"), e))?;
        }
        Ok(())
    })?;
    let recipe = RunConfig::fixture_recipe();
    write_json(&dir.join("config.json"), &recipe)?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "tool": "ktl",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "make-fixture",
            "fixture": fixture_config,
            "facts": fx.facts.len(),
            "dev_items": fx.dev.len(),
            "train_items": fx.train_qa.len(),
            "word_pool": fx.word_pool,
        }),
    )?;
    kv("facts", fx.facts.len());
    kv("dev_items", fx.dev.len());
    kv("train_items", fx.train_qa.len());
    kv("word_pool", fx.word_pool);
    Ok(())
}
