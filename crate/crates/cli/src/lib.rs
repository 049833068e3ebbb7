//! `slp`: index corpora, replay session scripts, train and evaluate
//! downstream models, run harness experiments and serve the HTTP API.
//!
//! Exit codes: 0 success, 1 bad input (including unknown flags), 2 internal
//! failure.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use slp_core::corpus::{read_records_file, DEFAULT_MAX_CHARS};
use slp_core::downstream::{metrics_table, ForestParams, DEFAULT_DECISION_THRESHOLD};
use slp_core::harness::{sweep, ExperimentConfig, SweepResult, Trend};
use slp_core::label_model::{read_marginals_csv, read_strong_labels_csv};
use slp_core::search::load_or_build;
use slp_core::{
    replay, Corpus, Index, LabelModelConfig, Metrics, SessionScript, TestSet, TfidfVectorizer, TrainMode,
    TrainedModel,
};
use slp_service::{corpora_dir, index_path, test_path, ServiceConfig, DEFAULT_ADDR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

/// JSON output version, matching the service payloads.
const OUTPUT_VERSION: u32 = slp_service::API_VERSION;

#[derive(Debug, Parser)]
#[command(name = "slp", version, about = "Search, label, propagate: weak supervision for intent classifiers")]
pub struct Cli {
    /// Corpora, index caches and replay exports live here.
    #[arg(long, global = true, env = "SLP_DATA_DIR", default_value = "slp-data")]
    pub data_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a corpus file (plain lines or JSONL) and build its search index.
    Index {
        corpus: PathBuf,
        /// Defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
        max_chars: usize,
        /// Labeled test CSV stored next to the corpus.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Replay a recorded session script and export labels and marginals.
    Session {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        corpus: String,
        /// Defaults to `<data-dir>/replays/<script stem>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on strong labels or marginals and evaluate on a test set.
    Train {
        /// `labels.csv` for strong mode, `marginals.csv` for weak mode.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        test: PathBuf,
        /// Needed when the data directory holds more than one corpus.
        #[arg(long)]
        corpus: Option<String>,
        /// Needed when the test set covers more than one intent.
        #[arg(long)]
        intent: Option<String>,
        /// Save the trained model here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DECISION_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = ForestParams::default().n_trees)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a saved model on a test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DECISION_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        json: bool,
    },
    /// Run the synthetic SLP vs label-only harness.
    Experiment {
        /// Experiment JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write one CSV row per run here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Print the runs and the trend as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "SLP_ADDR", default_value = DEFAULT_ADDR)]
        addr: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strong,
    Weak,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strong => TrainMode::Strong,
            ModeArg::Weak => TrainMode::Weak,
        }
    }
}

/// Bad input detected by the CLI itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<slp_core::Error>() {
            return if e.is_validation() { EXIT_VALIDATION } else { EXIT_INTERNAL };
        }
        if cause.is::<Invalid>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_INTERNAL
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Output goes to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command and returns what it would print.
pub fn execute(cli: &Cli) -> Result<String> {
    let data_dir = cli.data_dir.as_path();
    match &cli.command {
        Command::Index {
            corpus,
            id,
            max_chars,
            test,
        } => index(data_dir, corpus, id.as_deref(), *max_chars, test.as_deref()),
        Command::Session { script, corpus, out } => session(data_dir, script, corpus, out.as_deref()),
        Command::Train {
            labels,
            mode,
            test,
            corpus,
            intent,
            out,
            threshold,
            trees,
            seed,
            json,
        } => {
            let forest = ForestParams {
                n_trees: *trees,
                seed: *seed,
                ..ForestParams::default()
            };
            let req = TrainArgs {
                labels,
                mode: (*mode).into(),
                test,
                corpus: corpus.as_deref(),
                intent: intent.as_deref(),
                out: out.as_deref(),
                threshold: *threshold,
                forest,
            };
            let report = train(data_dir, &req)?;
            report.render(*json)
        }
        Command::Eval {
            model,
            test,
            threshold,
            json,
        } => eval(model, test, *threshold)?.render(*json),
        Command::Experiment { config, csv, json } => experiment(config.as_deref(), csv.as_deref(), *json),
        Command::Serve { addr } => {
            let config = ServiceConfig {
                addr: addr.clone(),
                data_dir: Some(data_dir.to_path_buf()),
            };
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(slp_service::serve(config)).context("serving")?;
            Ok(String::new())
        }
    }
}

fn valid_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(invalid(format!("invalid corpus id {id:?}: use 1-128 of [A-Za-z0-9._-], not starting with '.'")))
    }
}

fn index(data_dir: &Path, path: &Path, id: Option<&str>, max_chars: usize, test: Option<&Path>) -> Result<String> {
    let id = match id {
        Some(id) => id.to_owned(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| invalid(format!("cannot derive a corpus id from {}", path.display())))?,
    };
    valid_id(&id)?;
    let records = read_records_file(path)?;
    let (corpus, report) = Corpus::ingest(&id, records, max_chars)?;
    let cdir = corpora_dir(data_dir);
    if cdir.join(format!("{id}.manifest.json")).exists() {
        let existing = Corpus::load(&cdir, &id)?;
        if existing.fingerprint() != corpus.fingerprint() {
            return Err(invalid(format!(
                "corpus {id:?} already exists in {} with different content",
                cdir.display()
            )));
        }
    } else {
        corpus.save(&cdir)?;
    }
    let mut out = format!(
        "corpus {id}: {} utterances, {} dropped, fingerprint {}\n",
        corpus.len(),
        report.dropped,
        corpus.fingerprint()
    );
    if let Some(t) = test {
        let set = TestSet::load(t, Some(&corpus))?;
        let dest = test_path(data_dir, &id);
        fs::write(&dest, set.to_csv()?).with_context(|| format!("writing {}", dest.display()))?;
        out.push_str(&format!("test set: {} entries\n", set.entries.len()));
    }
    let ipath = index_path(data_dir, &id);
    let (ix, cached) = load_or_build(&ipath, &corpus)?;
    out.push_str(&format!(
        "index: {} docs, {} terms, {} {}\n",
        ix.n_docs(),
        ix.vocabulary_size(),
        if cached { "cached at" } else { "written to" },
        ipath.display()
    ));
    Ok(out)
}

fn load_corpus(data_dir: &Path, id: &str) -> Result<Corpus> {
    valid_id(id)?;
    let cdir = corpora_dir(data_dir);
    if !cdir.join(format!("{id}.manifest.json")).exists() {
        return Err(invalid(format!(
            "no corpus {id:?} under {}; run `slp index` first",
            cdir.display()
        )));
    }
    Ok(Corpus::load(&cdir, id)?)
}

fn load_index(data_dir: &Path, corpus: &Corpus) -> Result<Index> {
    Ok(load_or_build(&index_path(data_dir, corpus.corpus_id()), corpus)?.0)
}

fn session(data_dir: &Path, script_path: &Path, corpus_id: &str, out: Option<&Path>) -> Result<String> {
    let text = fs::read_to_string(script_path)
        .map_err(|e| slp_core::Error::Io { path: script_path.to_path_buf(), source: e })?;
    let script = SessionScript::from_jsonl(&text)?;
    let corpus = load_corpus(data_dir, corpus_id)?;
    let index = load_index(data_dir, &corpus)?;
    let (_, outcome, exports) = replay(&script, &corpus, &index, &LabelModelConfig::default())?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => {
            let stem = script_path.file_stem().map_or_else(|| "script".into(), |s| s.to_string_lossy().into_owned());
            data_dir.join("replays").join(stem)
        }
    };
    let written = exports.write(&dir)?;
    let mut s = format!(
        "replayed {} actions: {} labeling functions, {} strong labels, {} weak marginals\n",
        script.actions.len(),
        outcome.finalized.functions.len(),
        outcome.n_anchor(),
        outcome.n_weak()
    );
    for p in written {
        s.push_str(&format!("wrote {}\n", p.display()));
    }
    Ok(s)
}

struct TrainArgs<'a> {
    labels: &'a Path,
    mode: TrainMode,
    test: &'a Path,
    corpus: Option<&'a str>,
    intent: Option<&'a str>,
    out: Option<&'a Path>,
    threshold: f64,
    forest: ForestParams,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub v: u32,
    pub name: String,
    pub intent: String,
    pub model_kind: String,
    pub n_train: usize,
    pub threshold: f64,
    pub metrics: Metrics,
}

impl Report {
    fn new(name: &str, model: &TrainedModel, threshold: f64, metrics: Metrics) -> Self {
        Report {
            v: OUTPUT_VERSION,
            name: name.to_owned(),
            intent: model.intent.clone(),
            model_kind: model.predictor.kind().to_owned(),
            n_train: model.n_train,
            threshold,
            metrics,
        }
    }

    fn render(&self, json: bool) -> Result<String> {
        if json {
            return Ok(serde_json::to_string_pretty(self)? + "\n");
        }
        let mut s = format!(
            "intent {}: {} model on {} examples, threshold {}\n",
            self.intent, self.model_kind, self.n_train, self.threshold
        );
        s.push_str(&metrics_table(&[(self.name.as_str(), &self.metrics)]));
        Ok(s)
    }
}

fn pick_corpus(data_dir: &Path, id: Option<&str>) -> Result<Corpus> {
    if let Some(id) = id {
        return load_corpus(data_dir, id);
    }
    let cdir = corpora_dir(data_dir);
    let mut ids: Vec<String> = fs::read_dir(&cdir)
        .map(|rd| {
            rd.flatten()
                .filter_map(|e| {
                    let name = e.file_name().to_string_lossy().into_owned();
                    name.strip_suffix(".manifest.json").map(str::to_owned)
                })
                .collect()
        })
        .unwrap_or_default();
    ids.sort();
    match ids.as_slice() {
        [one] => load_corpus(data_dir, one),
        [] => Err(invalid(format!("no corpora under {}; run `slp index` first", cdir.display()))),
        many => Err(invalid(format!("several corpora ({}); pass --corpus", many.join(", ")))),
    }
}

fn pick_intent(test: &TestSet, intent: Option<&str>) -> Result<String> {
    let intents = test.intents();
    if let Some(i) = intent {
        if !intents.contains_key(i) {
            return Err(invalid(format!("test set has no rows for intent {i:?}")));
        }
        return Ok(i.to_owned());
    }
    match intents.keys().collect::<Vec<_>>().as_slice() {
        [one] => Ok(one.to_string()),
        _ => Err(invalid(format!(
            "test set covers {} intents; pass --intent",
            intents.len()
        ))),
    }
}

fn train(data_dir: &Path, req: &TrainArgs) -> Result<Report> {
    let corpus = pick_corpus(data_dir, req.corpus)?;
    let test = TestSet::load(req.test, Some(&corpus))?;
    let intent = pick_intent(&test, req.intent)?;
    let text = fs::read_to_string(req.labels)
        .map_err(|e| slp_core::Error::Io { path: req.labels.to_path_buf(), source: e })?;
    let vectorizer = TfidfVectorizer::fit(corpus.utterances().iter().map(|u| u.text.as_str()), corpus.fingerprint())?;
    let model = match req.mode {
        TrainMode::Strong => {
            let labels = read_strong_labels_csv(&text)?;
            TrainedModel::strong(&intent, vectorizer, &corpus, &labels, &req.forest)?
        }
        TrainMode::Weak => {
            let marginals = read_marginals_csv(&text)?;
            TrainedModel::weak(&intent, vectorizer, &corpus, &marginals, &req.forest)?
        }
    };
    let metrics = model.evaluate(&test, req.threshold)?;
    if let Some(out) = req.out {
        model.save(out)?;
    }
    Ok(Report::new(req.mode.as_str(), &model, req.threshold, metrics))
}

fn eval(model_path: &Path, test: &Path, threshold: f64) -> Result<Report> {
    let model = TrainedModel::load(model_path)?;
    let test = TestSet::load(test, None)?;
    let metrics = model.evaluate(&test, threshold)?;
    let name = model_path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    Ok(Report::new(&name, &model, threshold, metrics))
}

#[derive(Serialize)]
struct ExperimentJson<'a> {
    v: u32,
    trend: Trend,
    rows: &'a SweepResult,
}

pub fn trend_line(t: &Trend) -> String {
    format!(
        "weak beats strong on accuracy and precision(+) in {}/{} runs; mean accuracy weak {:.3}, strong {:.3}, label-only {:.3}\n",
        t.weak_wins, t.runs, t.weak_accuracy, t.strong_accuracy, t.label_only_accuracy
    )
}

fn experiment(config: Option<&Path>, csv: Option<&Path>, json: bool) -> Result<String> {
    let config: ExperimentConfig = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| slp_core::Error::Io { path: p.to_path_buf(), source: e })?;
            serde_json::from_str(&text).map_err(slp_core::Error::from)?
        }
        None => ExperimentConfig::default(),
    };
    let result = sweep(&config)?;
    if let Some(p) = csv {
        fs::write(p, result.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let trend = result.trend();
    if json {
        let doc = ExperimentJson {
            v: OUTPUT_VERSION,
            trend,
            rows: &result,
        };
        return Ok(serde_json::to_string_pretty(&doc)? + "\n");
    }
    Ok(format!("{}{}", result.table(), trend_line(&trend)))
}
