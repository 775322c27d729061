//! `chatact` subcommands.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 on a data error.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use chatact::corpus::{
    attach_annotations, corpus_stats, parse_slack_exports, parse_transcripts, read_annotations,
    split_corpus, write_annotations, write_transcript, AnnotationRecord, Dialogue, Partition,
    SplitRatios, UserMap,
};
use chatact::experiment::{run_experiment, ExperimentConfig};
use chatact::labeler::{
    evaluate, evaluate_pairs, train_baseline, train_crf, BaselineConfig, BaselineModel, Evaluation,
    FeatureConfig, SequenceModel, TrainConfig,
};
use chatact::metrics::{build_report, build_speaker_report, MetricsConfig, MetricsReport};
use chatact::segmentation::{SegmentParams, Strategy, Window};
use chatact::synth::{generate, SynthConfig};
use chatact::taxonomy::Taxonomy;
use chatact::validation::{compute_centroids, hierarchy_consistency_report, most_similar_pair, CentroidMode};
use chrono::Utc;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::pipeline::{check_binding, prediction_records, predict, windows_for};
use crate::server::{router, AppState};
use crate::store::{ModelEntry, ModelKind, ProjectStore, StoredModel};

#[derive(Debug, Parser)]
#[command(name = "chatact", version, about = "Dialogue-act labeling and team metrics for chat transcripts")]
pub struct Cli {
    /// Project store directory.
    #[arg(long, global = true, env = "CHATACT_STORE", default_value = "chatact-store")]
    store: PathBuf,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Import transcripts, a taxonomy and annotations into the store.
    Ingest(IngestArgs),
    /// Cut every dialogue into windows and store them.
    Segment(SegmentCmd),
    /// Train a sequence model (or the context-free baseline).
    Train(TrainArgs),
    /// Decode stored dialogues and append the predictions to their logs.
    Label(LabelArgs),
    /// Score a model against gold labels.
    Evaluate(EvaluateArgs),
    /// Check that labels under one top-level act sit closer together.
    ValidateTaxonomy(ValidateArgs),
    /// Team metrics report.
    Metrics(MetricsArgs),
    /// Corpus size and label proportions.
    Stats(StatsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic labeled corpus.
    Generate(GenerateArgs),
    /// Compare segmentation strategies and the baseline on one split.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Transcript,
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Part {
    All,
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Args)]
struct SegmentArgs {
    /// message, static, time or speaker.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Sentences per window.
    #[arg(long)]
    lines: Option<usize>,
    /// Largest gap inside a time window, in seconds.
    #[arg(long)]
    gap_secs: Option<u64>,
    /// Most speakers in a speaker window.
    #[arg(long)]
    speakers: Option<usize>,
}

impl SegmentArgs {
    fn explicit(&self) -> Option<(Strategy, SegmentParams)> {
        let strategy = self.strategy?;
        let mut params = SegmentParams::for_strategy(strategy);
        if self.lines.is_some() {
            params.line_limit = self.lines;
        }
        if let Some(g) = self.gap_secs {
            params.gap_limit = Some(std::time::Duration::from_secs(g));
        }
        if self.speakers.is_some() {
            params.speaker_limit = self.speakers;
        }
        Some((strategy, params))
    }

    fn or_static(&self) -> (Strategy, SegmentParams) {
        self.explicit()
            .unwrap_or((Strategy::Static, SegmentParams::for_strategy(Strategy::Static)))
    }
}

fn parse_ratios(s: &str) -> Result<SplitRatios, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [train, dev, test] if parts.iter().all(|x| *x >= 0.0) => Ok(SplitRatios { train, dev, test }),
        _ => Err("expected three non-negative numbers: train,dev,test".into()),
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Transcript (JSON lines) or Slack export files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Transcript)]
    format: InputFormat,
    /// Dialogue id for a Slack export, or for transcript lines without one.
    /// Defaults to the file stem.
    #[arg(long)]
    dialogue_id: Option<String>,
    /// Slack users.json or an {id: name} map.
    #[arg(long)]
    users: Option<PathBuf>,
    /// Annotation records (JSON lines).
    #[arg(long)]
    annotations: Vec<PathBuf>,
    /// Taxonomy TOML; the shipped taxonomy is used otherwise.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentCmd {
    #[command(flatten)]
    segment: SegmentArgs,
    /// Also write the windows here as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    segment: SegmentArgs,
    /// Stored windows to split instead of segmenting afresh.
    #[arg(long, conflicts_with = "strategy")]
    windows: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.05,0.15")]
    ratios: SplitRatios,
    /// Train the context-free n-gram baseline instead.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Feature space of 2^bits hashed features.
    #[arg(long)]
    feature_bits: Option<u32>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long)]
    model: String,
    /// Only these dialogues.
    #[arg(long)]
    dialogue: Vec<String>,
    #[command(flatten)]
    segment: SegmentArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: String,
    /// Restrict to one partition of the split the model was trained on.
    #[arg(long, value_enum, default_value_t = Part::All)]
    partition: Part,
    #[command(flatten)]
    segment: SegmentArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// A stored baseline model; one is trained on the gold labels otherwise.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "sentence-mean")]
    mode: CentroidMode,
    /// Collapse gold labels to the reduced set first.
    #[arg(long)]
    reduced: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Read this transcript instead of the store.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Annotation files for `--in`.
    #[arg(long, requires = "input")]
    annotations: Vec<PathBuf>,
    /// Only these dialogues.
    #[arg(long)]
    dialogue: Vec<String>,
    #[arg(long)]
    speaker: Option<String>,
    /// Metrics configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    segment: SegmentArgs,
    /// Also report per-partition proportions for the split with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.05,0.15")]
    ratios: SplitRatios,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "CHATACT_BIND", default_value = "127.0.0.1:8080")]
    bind: String,
    /// Origin allowed by CORS; any origin when unset.
    #[arg(long, env = "CHATACT_CORS_ORIGIN")]
    cors_origin: Option<String>,
    /// Metrics configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output directory for transcript.jsonl and annotations.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    dialogues: usize,
    #[arg(long, default_value_t = 250)]
    sentences: usize,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Split and training seeds; one run per seed.
    #[arg(long, default_values_t = [1u64])]
    seed: Vec<u64>,
    /// Use a freshly generated synthetic corpus for each seed instead of the store.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

/// Parse `args` and run the chosen command. Returns the exit status.
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let store = cli.store.as_path();
    match cli.command {
        Command::Ingest(a) => ingest(store, a),
        Command::Segment(a) => segment_cmd(store, a),
        Command::Train(a) => train(store, a),
        Command::Label(a) => label(store, a),
        Command::Evaluate(a) => evaluate_cmd(store, a),
        Command::ValidateTaxonomy(a) => validate(store, a),
        Command::Metrics(a) => metrics(store, a),
        Command::Stats(a) => stats(store, a),
        Command::Serve(a) => serve(store, a),
        Command::Generate(a) => generate_cmd(a),
        Command::Experiment(a) => experiment(store, a),
    }
}

fn open_reader(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "default".into())
}

fn read_records(paths: &[PathBuf]) -> anyhow::Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_annotations(open_reader(p)?).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(out)
}

/// Group records by the dialogue holding their target sentence or message.
fn route_records(
    dialogues: &[Dialogue],
    records: Vec<AnnotationRecord>,
) -> anyhow::Result<BTreeMap<String, Vec<AnnotationRecord>>> {
    let mut owner: HashMap<&str, Vec<&str>> = HashMap::new();
    for d in dialogues {
        for s in d.sentences() {
            owner.entry(s.id.as_str()).or_default().push(d.id());
        }
        for m in d.messages() {
            owner.entry(m.id.as_str()).or_default().push(d.id());
        }
    }
    let mut out: BTreeMap<String, Vec<AnnotationRecord>> = BTreeMap::new();
    let mut dangling = Vec::new();
    for r in records {
        match owner.get(r.sentence_id.as_str()).map(Vec::as_slice) {
            Some([one]) => out.entry(one.to_string()).or_default().push(r),
            Some(many) if many.len() > 1 => {
                bail!("annotation target `{}` exists in several dialogues", r.sentence_id)
            }
            _ => dangling.push(r.sentence_id),
        }
    }
    if !dangling.is_empty() {
        return Err(chatact::Error::DanglingAnnotations(dangling).into());
    }
    Ok(out)
}

fn ingest(root: &Path, a: IngestArgs) -> anyhow::Result<()> {
    let store = ProjectStore::init(root)?;
    let taxonomy = match &a.taxonomy {
        Some(p) => Taxonomy::load_path(p).with_context(|| format!("loading {}", p.display()))?,
        None => store.taxonomy()?,
    };
    store.set_taxonomy(&taxonomy)?;

    let dialogues = match a.format {
        InputFormat::Transcript => {
            let mut out: Vec<Dialogue> = Vec::new();
            for p in &a.inputs {
                let default = a.dialogue_id.clone().unwrap_or_else(|| file_stem(p));
                for d in parse_transcripts(open_reader(p)?, &default).with_context(|| format!("parsing {}", p.display()))? {
                    if out.iter().any(|o| o.id() == d.id()) {
                        bail!("dialogue `{}` appears in more than one input", d.id());
                    }
                    out.push(d);
                }
            }
            out
        }
        InputFormat::Slack => {
            let users = match a.users.as_deref() {
                Some(p) => Some(UserMap::load(open_reader(p)?)?),
                None => None,
            };
            let readers = a.inputs.iter().map(|p| open_reader(p)).collect::<anyhow::Result<Vec<_>>>()?;
            let id = a.dialogue_id.clone().unwrap_or_else(|| {
                a.inputs[0]
                    .parent()
                    .and_then(|p| p.file_name())
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| file_stem(&a.inputs[0]))
            });
            let import = parse_slack_exports(readers, &id, users.as_ref())?;
            if import.dropped + import.rejected > 0 {
                eprintln!("{}: {} dropped, {} rejected", id, import.dropped, import.rejected);
            }
            vec![import.dialogue]
        }
    };
    for d in dialogues.iter().filter(|d| d.was_reordered()) {
        log::warn!("{}: messages were out of order and have been sorted", d.id());
    }
    let hash = store.add_corpus(&dialogues)?;
    let messages: usize = dialogues.iter().map(|d| d.messages().len()).sum();
    let sentences: usize = dialogues.iter().map(|d| d.sentences().len()).sum();
    println!(
        "corpus {hash}: {} dialogues, {messages} messages, {sentences} sentences",
        dialogues.len()
    );

    if !a.annotations.is_empty() {
        let all = store.dialogues()?;
        let routed = route_records(&all, read_records(&a.annotations)?)?;
        let mut total = 0;
        for (id, records) in routed {
            let d = all.iter().find(|d| d.id() == id).expect("routed to a stored dialogue");
            store.append(d, &taxonomy, &records).with_context(|| format!("annotations for `{id}`"))?;
            total += records.len();
        }
        println!("annotations: {total} records appended");
    }
    println!("taxonomy {}", taxonomy.hash());
    Ok(())
}

fn segment_cmd(root: &Path, a: SegmentCmd) -> anyhow::Result<()> {
    let store = ProjectStore::open(root)?;
    let (strategy, params) = a.segment.or_static();
    let windows = windows_for(&store.dialogues()?, strategy, &params);
    let hash = store.put_windows(&windows)?;
    if let Some(out) = &a.out {
        let mut f = File::create(out)?;
        for w in &windows {
            serde_json::to_writer(&mut f, w)?;
            f.write_all(b"\n")?;
        }
    }
    println!("windows {hash}: {} windows ({strategy})", windows.len());
    Ok(())
}

fn select(windows: &[Window], split: &chatact::corpus::CorpusSplit, part: Partition) -> Vec<Window> {
    windows
        .iter()
        .enumerate()
        .filter(|(i, _)| split.partition_of(*i) == part)
        .map(|(_, w)| w.clone())
        .collect()
}

/// Collapsed gold `(text, label)` pairs of the sentences in `windows`.
fn gold_examples(dialogues: &[Dialogue], windows: &[Window], taxonomy: &Taxonomy) -> anyhow::Result<Vec<(String, String)>> {
    let by_id: HashMap<&str, &Dialogue> = dialogues.iter().map(|d| (d.id(), d)).collect();
    let mut out = Vec::new();
    for w in windows {
        let d = by_id
            .get(w.dialogue_id.as_str())
            .ok_or_else(|| anyhow!("window {} names unknown dialogue `{}`", w.id, w.dialogue_id))?;
        for s in &d.sentences()[w.sentences.clone()] {
            if let Some(g) = &s.gold_label {
                out.push((s.text.clone(), taxonomy.collapse(g)?.to_string()));
            }
        }
    }
    Ok(out)
}

fn baseline_evaluation(model: &BaselineModel, examples: &[(String, String)]) -> chatact::Result<Evaluation> {
    let mut pairs = Vec::with_capacity(examples.len());
    for (text, gold) in examples {
        let g = model
            .labels
            .iter()
            .position(|l| l == gold)
            .ok_or_else(|| chatact::Error::LabelOutsideModel(gold.clone()))?;
        pairs.push((g, model.predict_index(text)));
    }
    evaluate_pairs(&model.labels, pairs)
}

fn train(root: &Path, a: TrainArgs) -> anyhow::Result<()> {
    let store = ProjectStore::open(root)?;
    let taxonomy = store.taxonomy()?;
    let dialogues = store.annotated_dialogues()?;
    let (windows, strategy, params) = match &a.windows {
        Some(hash) => {
            let ws = store.load_windows(hash)?;
            let first = ws.first().ok_or_else(|| anyhow!("stored window set is empty"))?;
            let (s, p) = (first.strategy, first.params);
            (ws, s, p)
        }
        None => {
            let (s, p) = a.segment.or_static();
            (windows_for(&dialogues, s, &p), s, p)
        }
    };
    let split = split_corpus(&windows, a.ratios, a.seed)?;
    let train_w = select(&windows, &split, Partition::Train);
    let dev_w = select(&windows, &split, Partition::Dev);
    let test_w = select(&windows, &split, Partition::Test);
    let entry = ModelEntry {
        hash: String::new(),
        kind: if a.baseline { ModelKind::Baseline } else { ModelKind::Crf },
        taxonomy_hash: String::new(),
        created_at: Utc::now(),
        strategy: Some(strategy),
        params,
        seed: a.seed,
        ratios: a.ratios,
    };

    let (stored, summary) = if a.baseline {
        let mut config = BaselineConfig::with_seed(a.seed);
        if let Some(e) = a.max_epochs {
            config.epochs = e;
        }
        let examples = gold_examples(&dialogues, &train_w, &taxonomy)?;
        let model = train_baseline(&examples, taxonomy.reduced_set().to_vec(), taxonomy.hash(), &config)?;
        let score = |ws: &[Window]| -> anyhow::Result<Option<f64>> {
            let ex = gold_examples(&dialogues, ws, &taxonomy)?;
            Ok(if ex.is_empty() { None } else { Some(baseline_evaluation(&model, &ex)?.accuracy) })
        };
        let summary = json!({
            "kind": "baseline",
            "config": config,
            "train_sentences": examples.len(),
            "dev_accuracy": score(&dev_w)?,
            "test_accuracy": score(&test_w)?,
        });
        (StoredModel::Baseline(model), summary)
    } else {
        let mut config = TrainConfig::with_seed(a.seed);
        if let Some(e) = a.max_epochs {
            config.max_epochs = e;
        }
        if let Some(l2) = a.l2 {
            config.l2 = l2;
        }
        if let Some(s) = a.step {
            config.step = s;
        }
        if let Some(p) = a.patience {
            config.patience = p;
        }
        if let Some(bits) = a.feature_bits {
            if !(4..=24).contains(&bits) {
                bail!("--feature-bits must be between 4 and 24");
            }
            config.features = FeatureConfig {
                dim: 1 << bits,
                ..FeatureConfig::default()
            };
        }
        let template = SequenceModel::for_taxonomy(&taxonomy, config.features.clone());
        let train_i = template.instances(&dialogues, &train_w, &taxonomy, None)?;
        let dev_i = template.instances(&dialogues, &dev_w, &taxonomy, None)?;
        let test_i = template.instances(&dialogues, &test_w, &taxonomy, None)?;
        let (model, report) = train_crf(&train_i, &dev_i, &taxonomy, &config)?;
        let acc = |inst| evaluate(&model, inst).ok().map(|e| e.accuracy);
        let summary = json!({
            "kind": "crf",
            "config": config,
            "epochs": report.epochs,
            "best_epoch": report.best_epoch,
            "dev_accuracy": acc(&dev_i),
            "test_accuracy": acc(&test_i),
        });
        (StoredModel::Crf(model), summary)
    };
    let hash = store.put_model(&stored, entry)?;
    let mut summary = summary;
    summary["model"] = json!(hash);
    summary["split"] = json!({
        "seed": a.seed,
        "train_windows": train_w.len(),
        "dev_windows": dev_w.len(),
        "test_windows": test_w.len(),
    });
    let report = store.put_report(&summary)?;
    println!("model {hash}");
    for key in ["dev_accuracy", "test_accuracy"] {
        if let Some(x) = summary[key].as_f64() {
            println!("{} {x:.4}", key.replace('_', " "));
        }
    }
    if let Some(best) = summary["best_epoch"].as_u64() {
        println!("best epoch {best} of {}", summary["epochs"].as_array().map_or(0, Vec::len));
    }
    println!("report {report}");
    Ok(())
}

fn label(root: &Path, a: LabelArgs) -> anyhow::Result<()> {
    let store = ProjectStore::open(root)?;
    let taxonomy = store.taxonomy()?;
    let (entry, model) = store.load_model(&a.model)?;
    check_binding(&model, &taxonomy)?;
    let dialogues = store.dialogues()?;
    for id in &a.dialogue {
        if !dialogues.iter().any(|d| d.id() == id) {
            bail!("dialogue `{id}` not found");
        }
    }
    let now = Utc::now();
    let mut total = 0;
    let mut count = 0;
    for d in dialogues.iter().filter(|d| a.dialogue.is_empty() || a.dialogue.iter().any(|x| x == d.id())) {
        let predictions = predict(&model, &entry, d, a.segment.explicit());
        let records = prediction_records(d, &predictions, &entry.hash, now);
        store.append(d, &taxonomy, &records)?;
        total += records.len();
        count += 1;
    }
    println!("labeled {total} sentences in {count} dialogues with model {}", entry.hash);
    Ok(())
}

fn evaluate_cmd(root: &Path, a: EvaluateArgs) -> anyhow::Result<()> {
    let store = ProjectStore::open(root)?;
    let taxonomy = store.taxonomy()?;
    let (entry, model) = store.load_model(&a.model)?;
    check_binding(&model, &taxonomy)?;
    let dialogues = store.annotated_dialogues()?;
    let (strategy, params) = a
        .segment
        .explicit()
        .or(entry.strategy.map(|s| (s, entry.params)))
        .unwrap_or((Strategy::Static, SegmentParams::for_strategy(Strategy::Static)));
    let mut windows = windows_for(&dialogues, strategy, &params);
    if a.partition != Part::All {
        let split = split_corpus(&windows, entry.ratios, entry.seed)?;
        let part = match a.partition {
            Part::Train => Partition::Train,
            Part::Dev => Partition::Dev,
            _ => Partition::Test,
        };
        windows = select(&windows, &split, part);
    }
    let eval = match &model {
        StoredModel::Crf(m) => evaluate(m, &m.instances(&dialogues, &windows, &taxonomy, None)?)?,
        StoredModel::Baseline(m) => baseline_evaluation(m, &gold_examples(&dialogues, &windows, &taxonomy)?)?,
    };
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&eval)?),
        Format::Text => {
            println!("accuracy {:.4} ({}/{})", eval.accuracy, eval.correct, eval.labeled);
            println!("{:<28} {:>7} {:>9} {:>9} {:>7}", "label", "support", "precision", "recall", "correct");
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
            for s in eval.per_label.iter().filter(|s| s.support + s.predicted > 0) {
                println!(
                    "{:<28} {:>7} {:>9} {:>9} {:>7}",
                    s.label,
                    s.support,
                    fmt(s.precision),
                    fmt(s.recall),
                    s.correct
                );
            }
        }
    }
    Ok(())
}

/// Re-fold each dialogue's log with labels collapsed to the reduced set.
fn collapsed(store: &ProjectStore, taxonomy: &Taxonomy) -> anyhow::Result<Vec<Dialogue>> {
    let mut out = Vec::new();
    for d in store.dialogues()? {
        let mut log = store.log(d.id())?;
        for r in &mut log {
            r.label = taxonomy.collapse(&r.label)?.to_string();
        }
        out.push(attach_annotations(&d, &log)?);
    }
    Ok(out)
}

fn validate(root: &Path, a: ValidateArgs) -> anyhow::Result<()> {
    let store = ProjectStore::open(root)?;
    let taxonomy = store.taxonomy()?;
    let model = match &a.model {
        Some(hash) => match store.load_model(hash)?.1 {
            StoredModel::Baseline(m) => m,
            StoredModel::Crf(_) => bail!("centroids need a baseline model; `{hash}` is a sequence model"),
        },
        None => {
            let labels: Vec<String> = if a.reduced {
                taxonomy.reduced_set().to_vec()
            } else {
                taxonomy.labels().iter().map(|l| l.id.clone()).collect()
            };
            let dialogues = if a.reduced { collapsed(&store, &taxonomy)? } else { store.annotated_dialogues()? };
            let examples: Vec<(String, String)> = dialogues
                .iter()
                .flat_map(|d| d.sentences())
                .filter_map(|s| s.gold_label.clone().map(|g| (s.text.clone(), g)))
                .collect();
            train_baseline(&examples, labels, taxonomy.hash(), &BaselineConfig::with_seed(a.seed))?
        }
    };
    let reduced_model = model.labels.iter().all(|l| taxonomy.in_reduced_set(l));
    let dialogues = if a.reduced || reduced_model {
        collapsed(&store, &taxonomy)?
    } else {
        store.annotated_dialogues()?
    };
    let centroids = compute_centroids(&model, &dialogues, &model.labels, a.mode)?;
    let report = hierarchy_consistency_report(&centroids.centroids, &taxonomy)?;
    let closest = most_similar_pair(&centroids.centroids)?;
    match a.format {
        Format::Json => {
            let body = json!({
                "mode": centroids.mode,
                "labels": centroids.centroids.iter().map(|c| json!({"label": c.label, "support": c.support})).collect::<Vec<_>>(),
                "missing": centroids.missing,
                "classes": report.classes,
                "overall": report.overall,
                "violations": report.violations,
                "most_similar": closest,
                "pairs": report.pairs,
            });
            println!("{}", serde_json::to_string_pretty(&body)?);
        }
        Format::Text => {
            let mut out = String::new();
            writeln!(out, "centroids: {} ({})", centroids.centroids.len(), centroids.mode)?;
            if !centroids.missing.is_empty() {
                writeln!(out, "no sentences: {}", centroids.missing.join(", "))?;
            }
            writeln!(out, "{:<12} {:>7} {:>6} {:>9}  ", "class", "members", "pairs", "distance")?;
            for c in &report.classes {
                writeln!(
                    out,
                    "{:<12} {:>7} {:>6} {:>9.4}  {}",
                    c.class,
                    c.members.len(),
                    c.pairs,
                    c.mean_distance,
                    if c.consistent { "ok" } else { "NOT below overall" }
                )?;
            }
            writeln!(out, "{:<12} {:>7} {:>6} {:>9.4}", "overall", centroids.centroids.len(), report.pairs.len(), report.overall)?;
            writeln!(out, "closest pair: {} / {} ({:.4})", closest.a, closest.b, closest.distance)?;
            print!("{out}");
        }
    }
    Ok(())
}

fn load_metrics_config(path: Option<&Path>) -> anyhow::Result<MetricsConfig> {
    match path {
        None => Ok(MetricsConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn metrics(root: &Path, a: MetricsArgs) -> anyhow::Result<()> {
    let config = load_metrics_config(a.config.as_deref())?;
    let (taxonomy, dialogues, store) = match &a.input {
        Some(p) => {
            let taxonomy = Taxonomy::shipped();
            let raw = parse_transcripts(open_reader(p)?, &file_stem(p))?;
            let mut routed = route_records(&raw, read_records(&a.annotations)?)?;
            let dialogues = raw
                .iter()
                .map(|d| attach_annotations(d, &routed.remove(d.id()).unwrap_or_default()))
                .collect::<chatact::Result<Vec<_>>>()?;
            (taxonomy, dialogues, None)
        }
        None => {
            let store = ProjectStore::open(root)?;
            (store.taxonomy()?, store.annotated_dialogues()?, Some(store))
        }
    };
    for id in &a.dialogue {
        if !dialogues.iter().any(|d| d.id() == id) {
            bail!("dialogue `{id}` not found");
        }
    }
    let chosen: Vec<Dialogue> = dialogues
        .into_iter()
        .filter(|d| a.dialogue.is_empty() || a.dialogue.iter().any(|x| x == d.id()))
        .collect();
    let report: MetricsReport = match &a.speaker {
        None => build_report(&chosen, &taxonomy, &config),
        Some(s) => build_speaker_report(&chosen, &taxonomy, &config, s)?,
    };
    if let Some(store) = &store {
        let hash = store.put_report(&report)?;
        log::info!("report {hash}");
    }
    let body = match a.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Text => report.render_text(),
    };
    match &a.out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{body}"),
    }
    Ok(())
}

fn stats(root: &Path, a: StatsArgs) -> anyhow::Result<()> {
    let store = ProjectStore::open(root)?;
    let taxonomy = store.taxonomy()?;
    let dialogues = store.annotated_dialogues()?;
    let (strategy, params) = a.segment.or_static();
    let windows = windows_for(&dialogues, strategy, &params);
    let split = a.seed.map(|s| split_corpus(&windows, a.ratios, s)).transpose()?;
    let tables = corpus_stats(&dialogues, &windows, split.as_ref(), &taxonomy)?;
    let messages: usize = dialogues.iter().map(|d| d.messages().len()).sum();
    let sentences: usize = dialogues.iter().map(|d| d.sentences().len()).sum();
    let mut speakers: Vec<&str> = dialogues
        .iter()
        .flat_map(|d| d.messages().iter().map(|m| m.speaker.as_str()))
        .collect();
    speakers.sort_unstable();
    speakers.dedup();
    match a.format {
        Format::Json => {
            let body = json!({
                "dialogues": dialogues.len(),
                "messages": messages,
                "sentences": sentences,
                "speakers": speakers,
                "windows": windows.len(),
                "proportions": tables,
            });
            println!("{}", serde_json::to_string_pretty(&body)?);
        }
        Format::Text => {
            println!(
                "{} dialogues, {messages} messages, {sentences} sentences, {} speakers, {} windows",
                dialogues.len(),
                speakers.len(),
                windows.len()
            );
            print!("{:<28}", "label");
            for t in &tables {
                print!(" {:>9}", t.partition);
            }
            println!();
            for (i, label) in taxonomy.reduced_set().iter().enumerate() {
                print!("{label:<28}");
                for t in &tables {
                    print!(" {:>9.3}", t.rows[i].2);
                }
                println!();
            }
            print!("{:<28}", "labeled");
            for t in &tables {
                print!(" {:>9}", t.labeled);
            }
            println!();
        }
    }
    Ok(())
}

fn serve(root: &Path, a: ServeArgs) -> anyhow::Result<()> {
    let store = ProjectStore::open(root)?;
    let state = Arc::new(AppState::load(store, load_metrics_config(a.config.as_deref())?)?);
    let app = router(state, a.cors_origin.as_deref());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.bind)
            .await
            .with_context(|| format!("binding {}", a.bind))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}

fn generate_cmd(a: GenerateArgs) -> anyhow::Result<()> {
    let corpus = generate(&SynthConfig {
        dialogues: a.dialogues,
        sentences_per_dialogue: a.sentences,
        ..SynthConfig::with_seed(a.seed)
    })?;
    fs::create_dir_all(&a.out)?;
    write_transcript(File::create(a.out.join("transcript.jsonl"))?, &corpus.dialogues)?;
    let records: Vec<AnnotationRecord> = corpus.annotations.into_iter().flatten().collect();
    write_annotations(File::create(a.out.join("annotations.jsonl"))?, &records)?;
    println!(
        "wrote {} dialogues, {} annotations to {}",
        corpus.dialogues.len(),
        records.len(),
        a.out.display()
    );
    Ok(())
}

fn experiment(root: &Path, a: ExperimentArgs) -> anyhow::Result<()> {
    let (taxonomy, stored) = if a.synthetic {
        (Taxonomy::shipped(), None)
    } else {
        let store = ProjectStore::open(root)?;
        (store.taxonomy()?, Some(store.annotated_dialogues()?))
    };
    let mut reports = Vec::new();
    for &seed in &a.seed {
        let generated;
        let dialogues = match &stored {
            Some(d) => d,
            None => {
                generated = generate(&SynthConfig::with_seed(seed))?.dialogues;
                &generated
            }
        };
        reports.push(run_experiment(dialogues, &taxonomy, &ExperimentConfig::with_seed(seed))?);
    }
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&reports)?),
        Format::Text => {
            for r in &reports {
                println!(
                    "seed {}: {} train / {} dev / {} test sentences, majority {} ({:.4} dev)",
                    r.seed, r.train_sentences, r.dev_sentences, r.test_sentences, r.majority_label, r.majority_dev
                );
                for arm in &r.arms {
                    println!("  {:<16} dev {:.4}  test {:.4}", arm.name, arm.dev_accuracy, arm.test_accuracy);
                }
            }
        }
    }
    Ok(())
}
