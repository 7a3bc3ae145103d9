//! Command-line workflows. Each subcommand is a function over parsed
//! arguments so the binary stays a thin wrapper and tests can drive the
//! commands in-process.
//!
//! Exit codes: 0 success, 1 validation or load failure, 2 numeric failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::checkpoint::{Checkpoint, CheckpointError, ResumeState};
use crate::config::{DataConfig, RunConfig};
use crate::corpus::{
    self, audit_synthetic, generate_synthetic, load_corpus, load_embeddings, validate_manifest, Corpus, CorpusError,
    EmbeddingStore, ExpectedCounts, Language, Split, SplitCounts, SyntheticConfig, SyntheticTask,
};
use crate::graph::{aggregate_stats, build_graph, edge_stats, GraphStats};
use crate::metrics::MetricsError;
use crate::model::{ModelError, ModelParams};
use crate::training::{self, evaluate, prepare, TrainError, TrainHistory, TrainState, Trainer};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const HISTORY_FILE: &str = "history.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        TrainError::from(e).into()
    }
}

impl From<AutodiffError> for CliError {
    fn from(e: AutodiffError) -> Self {
        TrainError::from(e).into()
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_file(path, s)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Validation(format!("writing output: {e}")))
}

#[derive(Debug, Parser)]
#[command(name = "disclstm", version, about = "Discourse-aware emotion recognition in conversations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoints, history and reports.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Write per-utterance predictions as JSON lines.
    Predict(PredictArgs),
    /// Check analytic gradients of the full network against finite differences.
    Gradcheck(GradcheckArgs),
    /// Edge counts and densities of discourse graphs.
    GraphStats(GraphStatsArgs),
    /// Generate a synthetic corpus with embeddings.
    Synth(SynthArgs),
    /// Compare split sizes against the published M-MELD counts.
    ValidateManifest(ManifestArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Corpus directory or single dialogue file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Embedding blob (f32 little-endian).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Embedding manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl DataArgs {
    fn overlay(&self, data: &mut DataConfig) {
        if let Some(c) = &self.corpus {
            data.corpus = Some(c.clone());
        }
        if let Some(e) = &self.embeddings {
            data.embeddings = Some(e.clone());
        }
        if let Some(m) = &self.manifest {
            data.manifest = Some(m.clone());
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dim_g: Option<usize>,
    #[arg(long)]
    pub dim_h: Option<usize>,
    /// Number of graph-attention layers.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub class_weighted: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from the checkpoints in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Evaluate with every discourse edge removed.
    #[arg(long)]
    pub ablate_edges: bool,
    /// Where to save the JSON report; defaults to `eval_<split>.json` next
    /// to the checkpoint.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    Sigmoid,
    Tanh,
    Matmul,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    /// Break one backward rule on purpose (negative control).
    #[cfg(feature = "fault-injection")]
    #[arg(long)]
    pub corrupt_backward: Option<FaultArg>,
}

#[derive(Debug, Clone, Args)]
pub struct GraphStatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Restrict to one split.
    #[arg(long)]
    pub split: Option<Split>,
    /// Emit JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "local")]
    pub task: SyntheticTask,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train dialogues.
    #[arg(long)]
    pub dialogues: Option<usize>,
    #[arg(long)]
    pub dev_dialogues: Option<usize>,
    #[arg(long)]
    pub test_dialogues: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Language whose published counts to check against.
    #[arg(long, required_unless_present_all = ["dialogues", "utterances"])]
    pub language: Option<Language>,
    /// Expected dialogue counts as train,dev,test.
    #[arg(long, value_parser = parse_counts, requires = "utterances")]
    pub dialogues: Option<SplitCounts>,
    /// Expected utterance counts as train,dev,test.
    #[arg(long, value_parser = parse_counts, requires = "dialogues")]
    pub utterances: Option<SplitCounts>,
}

fn parse_counts(s: &str) -> std::result::Result<SplitCounts, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        &[train, dev, test] => Ok(SplitCounts { train, dev, test }),
        _ => Err(format!("expected three comma-separated counts, got {s:?}")),
    }
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::GraphStats(a) => cmd_graph_stats(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::ValidateManifest(a) => cmd_validate_manifest(&a, out),
    }
}

/// Merge defaults, the optional config file and the flags.
pub fn resolve_train_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Validation)?,
        None => RunConfig::default(),
    };
    args.data.overlay(&mut cfg.data);
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    let m = &mut cfg.model;
    for (slot, v) in [
        (&mut m.dim_g, args.dim_g),
        (&mut m.dim_h, args.dim_h),
        (&mut m.layers, args.layers),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    let t = &mut cfg.train;
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = args.grad_clip {
        t.grad_clip_norm = Some(v);
    }
    if args.class_weighted {
        t.class_weighted = true;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    Ok(cfg)
}

struct LoadedData {
    corpus: Corpus,
    store: EmbeddingStore,
}

fn load_data(data: &DataConfig) -> Result<LoadedData> {
    let corpus_path = data
        .corpus
        .as_ref()
        .ok_or_else(|| CliError::Validation("no corpus given (--corpus or data.corpus)".into()))?;
    let corpus = load_corpus(corpus_path)?;
    let bin = data.embeddings_path().expect("corpus path is set");
    let manifest = data.manifest_path().expect("corpus path is set");
    for p in [&bin, &manifest] {
        if !p.exists() {
            return Err(CliError::Validation(format!("{}: file not found", p.display())));
        }
    }
    let store = load_embeddings(&bin, &manifest)?;
    store.check_coverage(&corpus)?;
    Ok(LoadedData { corpus, store })
}

fn check_compatible(params: &ModelParams, data: &LoadedData) -> Result<()> {
    let c = params.config;
    if c.num_classes != data.corpus.num_classes {
        return Err(CliError::Validation(format!(
            "checkpoint has {} classes but the corpus has {}",
            c.num_classes, data.corpus.num_classes
        )));
    }
    if c.dim_u != data.store.dim() {
        return Err(CliError::Validation(format!(
            "checkpoint expects embeddings of width {} but the store has {}",
            c.dim_u,
            data.store.dim()
        )));
    }
    Ok(())
}

fn load_history(path: &Path) -> Result<TrainHistory> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn resume_state(out_dir: &Path, fresh: &ModelParams) -> Result<TrainState> {
    let last = Checkpoint::load(&out_dir.join(LAST_CHECKPOINT))?;
    let best = Checkpoint::load(&out_dir.join(BEST_CHECKPOINT))?;
    let history = load_history(&out_dir.join(HISTORY_FILE))?;
    let ResumeState {
        adam,
        epochs_completed,
    } = last
        .resume
        .ok_or_else(|| CliError::Validation(format!("{LAST_CHECKPOINT} carries no optimizer state")))?;
    if last.params.config != fresh.config || best.params.config != fresh.config {
        return Err(CliError::Validation("checkpoint config differs from the run config".into()));
    }
    if epochs_completed != history.epochs.len() {
        return Err(CliError::Validation(format!(
            "{LAST_CHECKPOINT} records {epochs_completed} epochs but {HISTORY_FILE} has {}",
            history.epochs.len()
        )));
    }
    Ok(TrainState {
        params: last.params,
        adam,
        best: best.params,
        history,
    })
}

fn save_progress(out_dir: &Path, state: &TrainState, seed: u64) -> Result<()> {
    Checkpoint {
        params: state.params.clone(),
        seed,
        resume: Some(ResumeState {
            adam: state.adam.clone(),
            epochs_completed: state.epochs_completed(),
        }),
    }
    .save(&out_dir.join(LAST_CHECKPOINT))?;
    Checkpoint::new(state.best.clone(), seed).save(&out_dir.join(BEST_CHECKPOINT))?;
    write_json(&out_dir.join(HISTORY_FILE), &state.history)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve_train_config(args)?;
    let out_dir = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Validation("no output directory given (--out or output)".into()))?;
    let data = load_data(&cfg.data)?;
    let model_cfg = cfg
        .model
        .resolve(data.store.dim(), data.corpus.num_classes)
        .map_err(CliError::Validation)?;
    cfg.train.validate()?;
    let train_set = prepare(&data.corpus.train, &data.store)?;
    let dev_set = prepare(&data.corpus.dev, &data.store)?;
    let test_set = prepare(&data.corpus.test, &data.store)?;

    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    write_file(&out_dir.join(CONFIG_FILE), cfg.to_toml_string())?;

    let seed = cfg.train.seed;
    let initial = ModelParams::init(model_cfg, seed)?;
    let state = if args.resume && out_dir.join(LAST_CHECKPOINT).exists() {
        resume_state(&out_dir, &initial)?
    } else {
        TrainState::fresh(initial)
    };
    let mut trainer = Trainer::new(cfg.train.clone(), train_set, dev_set.clone(), state)?;
    let total = cfg.train.epochs;
    trainer.run(|rec, state| {
        eprintln!(
            "epoch {:>3}/{total}  loss {:.6}  dev weighted-F1 {:.4}",
            rec.epoch, rec.train_loss, rec.dev_weighted_f1
        );
        save_progress(&out_dir, state, seed).map_err(|e| TrainError::InvalidConfig(e.to_string()))
    })?;
    let state = trainer.into_state();
    // Zero epochs still leaves a usable output directory.
    save_progress(&out_dir, &state, seed)?;

    let names = &data.corpus.label_names;
    let dev_report = evaluate(&state.best, &dev_set, false)?.with_label_names(names);
    write_json(&out_dir.join("dev_report.json"), &dev_report)?;
    let mut summary = format!(
        "best epoch {}  dev weighted-F1 {:.4}\n",
        state.history.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        dev_report.weighted_f1
    );
    if !test_set.is_empty() {
        let test_report = evaluate(&state.best, &test_set, false)?.with_label_names(names);
        write_json(&out_dir.join("test_report.json"), &test_report)?;
        summary.push_str(&format!("test weighted-F1 {:.4}\n", test_report.weighted_f1));
    }
    summary.push_str(&format!("outputs in {}\n", out_dir.display()));
    emit(out, &summary)
}

fn load_for_inference(checkpoint: &Path, data_args: &DataArgs, split: Split) -> Result<(Checkpoint, LoadedData, Vec<training::Example>)> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut data_cfg = DataConfig::default();
    data_args.overlay(&mut data_cfg);
    let data = load_data(&data_cfg)?;
    check_compatible(&ck.params, &data)?;
    let examples = prepare(data.corpus.split(split), &data.store)?;
    if examples.is_empty() {
        return Err(CliError::Validation(format!("{split} split is empty")));
    }
    Ok((ck, data, examples))
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (ck, data, examples) = load_for_inference(&args.checkpoint, &args.data, args.split)?;
    let report = evaluate(&ck.params, &examples, args.ablate_edges)?.with_label_names(&data.corpus.label_names);
    let path = args.report.clone().unwrap_or_else(|| {
        let dir = args.checkpoint.parent().unwrap_or(Path::new("."));
        let suffix = if args.ablate_edges { "_ablated" } else { "" };
        dir.join(format!("eval_{}{suffix}.json", args.split))
    });
    write_json(&path, &report)?;
    emit(out, &format!("{} split: weighted-F1 {:.4}\n\n{report}", args.split, report.weighted_f1))
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    predictions: Vec<usize>,
    labels: Vec<&'a str>,
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let (ck, data, examples) = load_for_inference(&args.checkpoint, &args.data, args.split)?;
    let mut text = String::new();
    for ex in &examples {
        let predictions = training::predict_example(&ck.params, ex, false)?;
        let labels = predictions.iter().map(|&p| data.corpus.label_name(p)).collect();
        let line = PredictionLine {
            id: &ex.id,
            predictions,
            labels,
        };
        text.push_str(&serde_json::to_string(&line).expect("serializable"));
        text.push('\n');
    }
    match &args.out {
        Some(p) => write_file(p, text),
        None => emit(out, &text),
    }
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let (params, ex) = training::gradient_check_problem(args.seed);
    #[cfg(feature = "fault-injection")]
    let fault = args.corrupt_backward.map(|f| match f {
        FaultArg::Sigmoid => crate::autodiff::BackwardFault::Sigmoid,
        FaultArg::Tanh => crate::autodiff::BackwardFault::Tanh,
        FaultArg::Matmul => crate::autodiff::BackwardFault::MatMul,
    });
    let report = training::check_gradients(&params, &ex, args.eps, |_tape| {
        #[cfg(feature = "fault-injection")]
        if let Some(f) = fault {
            _tape.inject_fault(f);
        }
    })
    .map_err(|e| match e {
        AutodiffError::GradCheck(m) => CliError::Validation(m),
        other => CliError::Numeric(other.to_string()),
    })?;
    let pass = report.max_relative_error < args.threshold;
    emit(
        out,
        &format!(
            "parameters checked   {}\nmax relative error   {:.6e}\nworst coordinate     {} (analytic {:.9e}, numeric {:.9e})\nthreshold            {:e}\nresult               {}\n",
            report.coordinates,
            report.max_relative_error,
            report.worst_coordinate,
            report.analytic,
            report.numeric,
            args.threshold,
            if pass { "PASS" } else { "FAIL" }
        ),
    )?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "max relative error {:.3e} exceeds {:e}",
            report.max_relative_error, args.threshold
        )))
    }
}

#[derive(Serialize)]
struct GraphStatsRow {
    split: Split,
    id: String,
    #[serde(flatten)]
    stats: GraphStats,
}

pub fn cmd_graph_stats(args: &GraphStatsArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let splits: Vec<Split> = match args.split {
        Some(s) => vec![s],
        None => Split::ALL.to_vec(),
    };
    let mut rows = Vec::new();
    for split in splits {
        for d in corpus.split(split) {
            let g = build_graph(d.len(), &d.edge_pairs())
                .map_err(|e| CliError::Validation(format!("dialogue {}: {e}", d.id)))?;
            rows.push(GraphStatsRow {
                split,
                id: d.id.clone(),
                stats: edge_stats(&g),
            });
        }
    }
    let agg = aggregate_stats(&rows.iter().map(|r| r.stats).collect::<Vec<_>>());
    if args.json {
        let value = serde_json::json!({ "dialogues": rows, "aggregate": agg });
        let mut s = serde_json::to_string_pretty(&value).expect("serializable");
        s.push('\n');
        return emit(out, &s);
    }
    let width = rows.iter().map(|r| r.id.len()).max().unwrap_or(0).max(8);
    let mut s = format!(
        "{:<6} {:<width$} {:>6} {:>6} {:>9} {:>8}\n",
        "split", "dialogue", "n", "edges", "complete", "density"
    );
    for r in &rows {
        s.push_str(&format!(
            "{:<6} {:<width$} {:>6} {:>6} {:>9} {:>8.4}\n",
            r.split.to_string(),
            r.id,
            r.stats.n,
            r.stats.edges,
            r.stats.complete_edges,
            r.stats.density
        ));
    }
    s.push_str(&format!(
        "\n{} dialogues, {} edges; mean n {:.4}, mean edges {:.4}, mean density {:.4}\n",
        agg.graphs, agg.total_edges, agg.mean_n, agg.mean_edges, agg.mean_density
    ));
    emit(out, &s)
}

pub fn synth_config(args: &SynthArgs) -> SyntheticConfig {
    let mut c = SyntheticConfig {
        task: args.task,
        ..SyntheticConfig::default()
    };
    let pairs = [
        (&mut c.n_dialogues, args.dialogues),
        (&mut c.dev_dialogues, args.dev_dialogues),
        (&mut c.test_dialogues, args.test_dialogues),
        (&mut c.dim, args.dim),
        (&mut c.num_classes, args.classes),
        (&mut c.len_range.0, args.min_len),
        (&mut c.len_range.1, args.max_len),
    ];
    for (slot, v) in pairs {
        if let Some(v) = v {
            *slot = v;
        }
    }
    c
}

#[derive(Serialize)]
struct SynthRecord<'a> {
    seed: u64,
    config: &'a SyntheticConfig,
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = synth_config(args);
    let s = generate_synthetic(&cfg, args.seed)?;
    corpus::write_corpus(&args.out, &s.corpus)?;
    corpus::write_embeddings(
        &s.embeddings,
        &args.out.join(corpus::EMBEDDINGS_BIN),
        &args.out.join(corpus::EMBEDDINGS_MANIFEST),
    )?;
    write_json(&args.out.join("rule.json"), &s.rule)?;
    let record = SynthRecord {
        seed: args.seed,
        config: &cfg,
    };
    write_file(
        &args.out.join("synth.toml"),
        toml::to_string(&record).expect("synthetic config serializes"),
    )?;
    let audit = audit_synthetic(&s.corpus, &s.embeddings, &s.rule, cfg.task)?;
    emit(
        out,
        &format!(
            "wrote {} train / {} dev / {} test dialogues to {}\nrule audit: {} utterances checked, {} violations\n",
            s.corpus.train.len(),
            s.corpus.dev.len(),
            s.corpus.test.len(),
            args.out.display(),
            audit.checked,
            audit.violations.len()
        ),
    )
}

pub fn cmd_validate_manifest(args: &ManifestArgs, out: &mut dyn Write) -> Result<()> {
    let expected = match (args.dialogues, args.utterances, args.language) {
        (Some(dialogues), Some(utterances), _) => ExpectedCounts { dialogues, utterances },
        (_, _, Some(lang)) => lang.expected_counts(),
        _ => return Err(CliError::Validation("give --language or both --dialogues and --utterances".into())),
    };
    let corpus = load_corpus(&args.corpus)?;
    let report = validate_manifest(&corpus, &expected);
    emit(out, &format!("{report}\n"))?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Validation("split counts differ from the expected manifest".into()))
    }
}
