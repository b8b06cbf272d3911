//! `subjscan` command line: `classify`, `evaluate`, `calibrate`, `stats`
//! and `curriculum`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 upstream
//! or transport failure.

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::calibration::{self, CalibrationModel, DecisionPolicy, LogitRecord, Temperature};
use crate::corpus::{self, Corpus, CurriculumEntry, CurriculumSpec, RuleTokenizer, Split};
use crate::gateway::{ChatBackend, Gateway, HttpBackend, MockBackend, MockScript, ResponseCache, RetryPolicy};
use crate::metrics::{self, Prediction, RunMetadata, ZeroDivision};
use crate::strategies::{self, Fallback, PromptSet, RowStatus, RuleSet, Strategy, StrategyConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("upstream failure: {0}")]
    Upstream(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Upstream(_) => 3,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "subjscan", version, about = "Sentence-level subjectivity detection pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a corpus with a zero-shot prompting strategy.
    Classify(ClassifyArgs),
    /// Score predictions (or thresholded logits) against gold labels.
    Evaluate(EvaluateArgs),
    /// Fit a temperature on dev logits.
    Calibrate(CalibrateArgs),
    /// Label distribution, token-length statistics and anomalies of a corpus.
    Stats(StatsArgs),
    /// Merge training files into a seed-shuffled curriculum corpus.
    Curriculum(CurriculumArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus TSV (`sentence_id<TAB>sentence<TAB>label`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "en")]
    pub language: String,
    /// train, dev, dev-test or test.
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// annotation, doubledown or perspective.
    #[arg(long)]
    pub strategy: Strategy,
    /// Model name; defaults to o3-mini for annotation, gpt-4.1-mini otherwise.
    #[arg(long)]
    pub model: Option<String>,
    /// Base URL of a chat-completions endpoint.
    #[arg(long, env = "SUBJSCAN_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Answer requests from a mock script instead of the network.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Directory with prompt template overrides.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Decision rules file replacing the bundled set.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Label for unparseable outputs: obj, subj or error.
    #[arg(long, default_value = "obj")]
    pub fallback: Fallback,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Maximum attempts per call, including the first.
    #[arg(long, default_value_t = 5)]
    pub max_attempts: u32,
    /// Base retry delay in milliseconds (doubled per retry, ±20% jitter).
    #[arg(long, default_value_t = 1000)]
    pub retry_base_ms: u64,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    /// Seeds the retry jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold corpus TSV.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions TSV (`sentence_id<TAB>label`).
    #[arg(long, conflicts_with = "logits", required_unless_present = "logits")]
    pub predictions: Option<PathBuf>,
    /// Logits JSONL to threshold instead of a predictions file.
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Calibration model JSON applied to `--logits`.
    #[arg(long, requires = "logits", conflicts_with = "temperature")]
    pub calibration: Option<PathBuf>,
    /// Temperature applied to `--logits`.
    #[arg(long, requires = "logits")]
    pub temperature: Option<f64>,
    #[arg(long, default_value_t = calibration::DEFAULT_SUBJ_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub baseline: Option<f64>,
    /// Value of an undefined precision/recall: zero or one.
    #[arg(long, default_value = "zero")]
    pub zero_division: String,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Dev logits JSONL.
    #[arg(long)]
    pub logits: PathBuf,
    /// Dev gold TSV.
    #[arg(long)]
    pub gold: PathBuf,
    /// Identifier stored as `fitted_on`; defaults to the logits file name.
    #[arg(long)]
    pub fitted_on: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also label these logits with the fitted model.
    #[arg(long, requires = "predictions_out")]
    pub predict: Option<PathBuf>,
    #[arg(long)]
    pub predictions_out: Option<PathBuf>,
    #[arg(long, default_value_t = calibration::DEFAULT_SUBJ_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Rows with more tokens than this are reported as anomalies.
    #[arg(long, default_value_t = 500)]
    pub max_tokens: usize,
    /// Compute statistics after removing anomalous rows.
    #[arg(long)]
    pub drop_anomalies: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurriculumArgs {
    /// `language=path`, in curriculum order; repeat per language.
    #[arg(long = "entry", required = true, value_parser = parse_entry)]
    pub entries: Vec<CurriculumEntry>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Source-size manifest; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub drop_anomalies: bool,
    #[arg(long, default_value_t = 500)]
    pub max_tokens: usize,
}

fn parse_entry(s: &str) -> Result<CurriculumEntry, String> {
    let (language, path) = s.split_once('=').ok_or_else(|| format!("`{s}` is not language=path"))?;
    if language.is_empty() || path.is_empty() {
        return Err(format!("`{s}` is not language=path"));
    }
    Ok(CurriculumEntry {
        language: language.to_string(),
        path: PathBuf::from(path),
    })
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("subjscan: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Classify(a) => classify(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Stats(a) => stats(a),
        Command::Curriculum(a) => curriculum(a),
    }
}

fn load_corpus(a: &CorpusArgs) -> Result<Corpus, CliError> {
    corpus::load_split(&a.input, &a.language, a.split).map_err(data)
}

fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    use sha2::Digest;
    Ok(hex::encode(sha2::Sha256::digest(&bytes)))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(data)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(data)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(data)?;
    }
    fs::File::create(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn classify(a: ClassifyArgs) -> Result<(), CliError> {
    if a.concurrency == 0 {
        return Err(config("--concurrency must be at least 1"));
    }
    if a.max_attempts == 0 {
        return Err(config("--max-attempts must be at least 1"));
    }
    // Everything that can fail on configuration is checked before any call.
    let backend: Arc<dyn ChatBackend> = match (&a.mock, &a.endpoint) {
        (Some(script), _) => {
            let script = MockScript::from_json_file(script).map_err(config)?;
            Arc::new(MockBackend::try_new(script).map_err(config)?)
        }
        (None, Some(endpoint)) => {
            Arc::new(HttpBackend::from_env(Some(endpoint), Duration::from_secs(a.timeout_secs)).map_err(config)?)
        }
        (None, None) => {
            return Err(config(
                "no backend: pass --endpoint (or set SUBJSCAN_ENDPOINT) or --mock <script>",
            ))
        }
    };
    let prompts = match &a.prompts {
        Some(dir) => PromptSet::with_overrides(dir).map_err(config)?,
        None => PromptSet::bundled(),
    };
    let rules = match &a.rules {
        Some(path) => RuleSet::from_file(path).map_err(config)?,
        None => RuleSet::bundled(),
    };
    let corpus = load_corpus(&a.corpus)?;
    if corpus.is_empty() {
        return Err(data("input corpus is empty"));
    }

    let cache = match &a.cache_dir {
        Some(dir) => ResponseCache::on_disk(dir),
        None => ResponseCache::in_memory(),
    };
    let retry = RetryPolicy {
        max_attempts: a.max_attempts,
        base_delay: Duration::from_millis(a.retry_base_ms),
        ..RetryPolicy::default()
    };
    let gateway = Gateway::new(backend)
        .with_cache(cache)
        .with_retry(retry)
        .with_concurrency(a.concurrency)
        .with_jitter_seed(a.seed);
    let strategy_config = StrategyConfig {
        prompts,
        rules,
        model: a.model.clone(),
        max_tokens: a.max_tokens,
    };
    let model = strategy_config.model_for(a.strategy).to_string();

    let run = strategies::run_batch(
        &corpus,
        a.strategy,
        &strategy_config,
        &gateway,
        a.concurrency,
        a.fallback,
    );
    let stats = gateway.stats();

    fs::create_dir_all(&a.out_dir).map_err(data)?;
    let results_path = a.out_dir.join("results.jsonl");
    let mut results = create(&results_path)?;
    for row in &run.rows {
        let line = json!({
            "sentence_id": row.sentence_id,
            "label": row.label,
            "status": row.status,
            "verdict": row.result.as_ref().map(|r| &r.verdict),
            "intermediate": row.result.as_ref().and_then(|r| r.intermediate.as_ref()),
            "error": row.error,
            "trace": row.trace,
        });
        writeln!(results, "{line}").map_err(data)?;
    }

    let run_config = json!({
        "strategy": a.strategy,
        "model": model,
        "backend": gateway.backend_description(),
        "input": a.corpus.input.display().to_string(),
        "input_sha256": file_sha256(&a.corpus.input)?,
        "language": a.corpus.language,
        "split": a.corpus.split,
        "mock_script_sha256": a.mock.as_deref().map(file_sha256).transpose()?,
        "prompt_hashes": strategy_config.prompts.hashes(),
        "rules_hash": strategy_config.rules.hash(),
        "max_tokens": a.max_tokens,
        "fallback": a.fallback,
        "seed": a.seed,
    });
    let config_hash = strategies::sha256_hex(&run_config.to_string());
    let mut status_counts = BTreeMap::new();
    for status in [
        RowStatus::Classified,
        RowStatus::Unparseable,
        RowStatus::EmptyOutput,
        RowStatus::UpstreamError,
    ] {
        status_counts.insert(
            serde_json::to_value(status).unwrap().as_str().unwrap().to_string(),
            run.count(status),
        );
    }
    let manifest = json!({
        "subcommand": "classify",
        "version": env!("CARGO_PKG_VERSION"),
        "config": run_config,
        "config_hash": config_hash,
        "prompt_sources": strategy_config.prompts.sources(),
        "rules_source": strategy_config.rules.source(),
        "rules_count": strategy_config.rules.len(),
        "concurrency": a.concurrency,
        "cache_dir": a.cache_dir.as_ref().map(|p| p.display().to_string()),
        "sentences": corpus.len(),
        "calls": run.calls(),
        "network_attempts": stats.network_attempts,
        "cache_hits": stats.cache_hits,
        "fallback_count": run.fallback_count(),
        "status_counts": status_counts,
        "rows": run.rows,
    });
    write_json(&a.out_dir.join("manifest.json"), &manifest)?;

    let predictions_path = a.out_dir.join("predictions.tsv");
    match run.predictions() {
        Some(preds) => {
            metrics::write_predictions(&preds, create(&predictions_path)?).map_err(data)?;
        }
        None => {
            let _ = fs::remove_file(&predictions_path);
            return Err(data(format!(
                "{} sentence(s) have no label and --fallback=error; see {}",
                run.rows.iter().filter(|r| r.label.is_none()).count(),
                a.out_dir.join("manifest.json").display()
            )));
        }
    }
    eprintln!(
        "classified {} sentences with {} ({} calls, {} network attempts, {} cache hits, {} fallbacks)",
        corpus.len(),
        a.strategy,
        run.calls(),
        stats.network_attempts,
        stats.cache_hits,
        run.fallback_count()
    );
    let upstream = run.count(RowStatus::UpstreamError);
    if upstream > 0 {
        return Err(CliError::Upstream(format!(
            "{upstream} sentence(s) failed upstream; fallback labels written, see manifest"
        )));
    }
    Ok(())
}

fn read_logits_file(path: &Path) -> Result<Vec<LogitRecord>, CliError> {
    let f = fs::File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    calibration::read_logits(BufReader::new(f)).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<CalibrationModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let model: CalibrationModel = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))?;
    model.temperature().map_err(data)?;
    Ok(model)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let zero_division = match a.zero_division.as_str() {
        "zero" => ZeroDivision::Zero,
        "one" => ZeroDivision::One,
        other => return Err(config(format!("--zero-division must be zero or one, got `{other}`"))),
    };
    let policy = DecisionPolicy::new(a.threshold).map_err(config)?;
    let temperature = match (&a.calibration, a.temperature) {
        (Some(path), _) => Some(read_model(path)?.temperature),
        (None, t) => t,
    };
    let t = temperature.map(Temperature::new).transpose().map_err(config)?;

    let gold_corpus = corpus::load_split(&a.gold, "xx", Split::Dev).map_err(data)?;
    let golds = metrics::gold_predictions(&gold_corpus).map_err(data)?;
    let mut metadata = RunMetadata {
        strategy: a.strategy.clone(),
        model: a.model.clone(),
        ..RunMetadata::default()
    };
    let preds: Vec<Prediction> = match (&a.predictions, &a.logits) {
        (Some(path), _) => {
            let f = fs::File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
            metrics::read_predictions(f).map_err(data)?
        }
        (None, Some(path)) => {
            let records = read_logits_file(path)?;
            let t = t.unwrap_or(Temperature::IDENTITY);
            metadata.threshold = Some(policy.subj_threshold());
            metadata.temperature = Some(t.get());
            calibration::calibrate_and_predict(&records, t, policy)
                .map_err(data)?
                .into_iter()
                .map(|p| Prediction::new(p.sentence_id, p.label))
                .collect()
        }
        (None, None) => return Err(config("pass --predictions or --logits")),
    };
    let report = metrics::report(&preds, &golds, a.baseline, zero_division, metadata).map_err(data)?;
    print!("{}", report.render_text());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let policy = DecisionPolicy::new(a.threshold).map_err(config)?;
    let records = read_logits_file(&a.logits)?;
    let gold = corpus::load_split(&a.gold, "xx", Split::Dev).map_err(data)?;
    let golds = calibration::align_golds(&records, &gold).map_err(data)?;
    let fitted_on = a.fitted_on.clone().unwrap_or_else(|| {
        a.logits
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let before = calibration::mean_nll(&records, &golds, 1.0).map_err(data)?;
    let model = calibration::fit_temperature(&records, &golds, &fitted_on).map_err(data)?;
    println!("temperature {:.6}", model.temperature);
    println!("nll before {before:.6} after {:.6}", model.nll);
    write_json(&a.out, &model)?;

    if let (Some(input), Some(out)) = (&a.predict, &a.predictions_out) {
        let records = read_logits_file(input)?;
        let t = model.temperature().map_err(data)?;
        let preds: Vec<Prediction> = calibration::calibrate_and_predict(&records, t, policy)
            .map_err(data)?
            .into_iter()
            .map(|p| Prediction::new(p.sentence_id, p.label))
            .collect();
        metrics::write_predictions(&preds, create(out)?).map_err(data)?;
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    if a.max_tokens == 0 {
        return Err(config("--max-tokens must be at least 1"));
    }
    let mut corpus = load_corpus(&a.corpus)?;
    if corpus.is_empty() {
        return Err(data("corpus is empty"));
    }
    let anomalies = corpus::detect_anomalies(&corpus, &RuleTokenizer, a.max_tokens);
    if a.drop_anomalies {
        let ids: HashSet<&str> = anomalies.iter().map(|x| x.sentence_id.as_str()).collect();
        corpus = corpus.without_ids(&ids);
    }
    let labels = if corpus.split.requires_labels() {
        Some(corpus::label_distribution(&corpus).map_err(data)?)
    } else {
        corpus::label_distribution(&corpus).ok()
    };
    let length = corpus::token_stats(&corpus, &RuleTokenizer).map_err(data)?;
    let report = json!({
        "language": corpus.language,
        "split": corpus.split,
        "sentences": corpus.len(),
        "labels": labels,
        "subj_fraction": labels.map(|l| l.subj_fraction()),
        "length": length,
        "max_tokens": a.max_tokens,
        "anomalies": anomalies,
        "anomalies_dropped": a.drop_anomalies,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(data)?);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn curriculum(a: CurriculumArgs) -> Result<(), CliError> {
    let spec = CurriculumSpec {
        entries: a.entries.clone(),
        seed: a.seed,
    };
    spec.validate().map_err(config)?;
    let built = corpus::build_curriculum(&spec).map_err(data)?;
    let mut merged = built.corpus;
    let mut dropped = Vec::new();
    if a.drop_anomalies {
        dropped = corpus::detect_anomalies(&merged, &RuleTokenizer, a.max_tokens);
        let ids: HashSet<&str> = dropped.iter().map(|x| x.sentence_id.as_str()).collect();
        merged = merged.without_ids(&ids);
    }
    corpus::write_tsv(&merged, create(&a.out)?).map_err(data)?;
    let manifest_path = a
        .manifest
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.manifest.json", a.out.display())));
    let manifest = json!({
        "subcommand": "curriculum",
        "seed": a.seed,
        "shuffle": "fisher-yates/chacha8",
        "language": merged.language,
        "sources": built.sources,
        "total": merged.len(),
        "dropped_anomalies": dropped,
    });
    write_json(&manifest_path, &manifest)?;
    eprintln!("wrote {} sentences to {}", merged.len(), a.out.display());
    Ok(())
}
