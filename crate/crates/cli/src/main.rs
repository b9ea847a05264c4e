use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::Value;

use faultrank_core::dataset::{build_dataset, merge_datasets, DatasetError, RankerExample, SplitSpec};
use faultrank_core::harness::{execute_corpus, Candidate, DriverCommand, ExecutionReport, HarnessError, Limits, Task};
use faultrank_core::jsonl::{self, read_jsonl, write_jsonl, Header, HeaderPolicy, JsonlError, JsonlWriter};
use faultrank_core::metrics::{evaluate_corpus, MetricsError};
use faultrank_core::ranker::features::FeatureConfig;
use faultrank_core::ranker::{
    load_model, rank, rank_by_logprob, save_model, train, RankerError, RankerTask, ScoreRecord, TrainConfig,
};
use faultrank_core::taxonomy::{count_lines, label_report};

const EXIT_VALIDATION: u8 = 2;
const EXIT_ENVIRONMENT: u8 = 3;

#[derive(Parser)]
#[command(name = "faultrank", version, about = "Execute, label, train and evaluate fault-aware code rankers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every candidate against its task's unit tests.
    Execute(ExecuteArgs),
    /// Derive fault labels from execution reports.
    Label(LabelArgs),
    /// Split or mix labeled datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a ranker on a train/val split.
    Train(TrainArgs),
    /// Score and order candidates.
    Rank(RankArgs),
    /// Compute pass@k, exec@k and their ranked variants.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct ExecuteArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "FAULTRANK_INTERPRETER", default_value = "python3")]
    interpreter: PathBuf,
    /// Driver script the interpreter runs.
    #[arg(long, env = "FAULTRANK_DRIVER")]
    driver: PathBuf,
    /// Per-test timeout in seconds.
    #[arg(long, default_value_t = faultrank_core::harness::DEFAULT_TIMEOUT_S)]
    timeout: f64,
    #[arg(long)]
    workers: Option<usize>,
    /// Address-space limit for the driver process.
    #[arg(long)]
    memory_mb: Option<u64>,
    /// Optional per-candidate wall-clock timings.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Source model for candidates that do not name one.
    #[arg(long, default_value = "unknown")]
    source_model: String,
    /// Embed each execution report in its labeled record.
    #[arg(long)]
    keep_reports: bool,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Task-grouped train/val/test split.
    Split(SplitArgs),
    /// Mix several labeled datasets, optionally sampling a fraction of each.
    Merge(MergeArgs),
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving train.jsonl, val.jsonl, test.jsonl and stats.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    val_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Validation tasks must have at least one correct candidate.
    #[arg(long)]
    require_solvable: bool,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// Hashed feature dimension (power of two).
    #[arg(long, default_value_t = 1 << 18)]
    dim: usize,
    #[arg(long, default_value_t = 512)]
    max_tokens: usize,
    /// Highest n-gram order.
    #[arg(long, default_value_t = 3)]
    ngram: usize,
    /// Use raw counts instead of unit-length rows.
    #[arg(long)]
    no_normalize: bool,
}

impl FeatureArgs {
    fn config(&self) -> FeatureConfig {
        FeatureConfig {
            dim: self.dim,
            max_tokens: self.max_tokens,
            ngram: self.ngram,
            normalize: !self.no_normalize,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: RankerTask,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 512)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    line_loss_weight: f64,
    #[command(flatten)]
    features: FeatureArgs,
    /// Per-epoch loss and validation metrics as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_unless_present = "baseline")]
    model: Option<PathBuf>,
    /// Order by a baseline instead of a model.
    #[arg(long, value_parser = ["logprob"], conflicts_with = "model")]
    baseline: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    reports: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<usize>,
    /// Evaluation JSON; the text table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<RankerTask, String> {
    s.parse()
}

/// Resolved settings echoed into every artifact header.
#[derive(Debug, Default, Serialize)]
struct PipelineConfig {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    interpreter: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    driver: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    limits: Option<Limits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<RankerTask>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<FeatureConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<String>,
    paths: BTreeMap<&'static str, PathBuf>,
}

impl PipelineConfig {
    fn header(&self, schema: &str) -> Header {
        Header::new(schema, Some(serde_json::to_value(self).expect("config serializes")))
    }
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path, schema: &str, policy: HeaderPolicy) -> Result<Vec<T>> {
    Ok(read_jsonl(path, schema, policy)?.1)
}

fn read_tasks(path: &Path) -> Result<Vec<Task>> {
    let tasks: Vec<Task> = read_records(path, jsonl::TASKS, HeaderPolicy::Optional)?;
    for t in &tasks {
        t.validate().with_context(|| format!("task {}", t.task_id))?;
    }
    Ok(tasks)
}

fn read_candidates(path: &Path) -> Result<Vec<Candidate>> {
    read_records(path, jsonl::CANDIDATES, HeaderPolicy::Optional)
}

fn read_labeled(path: &Path) -> Result<Vec<RankerExample>> {
    read_records(path, jsonl::LABELED, HeaderPolicy::Required)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    task_id: &'a str,
    candidate_id: &'a str,
    wall_time_ms: u64,
}

fn cmd_execute(args: ExecuteArgs) -> Result<()> {
    let tasks = read_tasks(&args.tasks)?;
    let candidates = read_candidates(&args.candidates)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let limits = Limits {
        timeout_s: args.timeout,
        memory_mb: args.memory_mb,
    };
    let driver = DriverCommand::new(&args.interpreter, &args.driver);
    let config = PipelineConfig {
        command: "execute",
        interpreter: Some(args.interpreter.clone()),
        driver: Some(args.driver.clone()),
        limits: Some(limits),
        workers: Some(workers),
        paths: BTreeMap::from([("tasks", args.tasks.clone()), ("candidates", args.candidates.clone())]),
        ..Default::default()
    };
    info!("executing {} candidates over {} tasks with {workers} workers", candidates.len(), tasks.len());

    let mut out = JsonlWriter::create(&args.out, &config.header(jsonl::REPORTS))
        .with_context(|| format!("creating {}", args.out.display()))?;
    let reports = execute_corpus(&driver, &tasks, &candidates, &limits, workers, |r| {
        out.write(r)?;
        out.flush()
    })?;
    out.into_inner()?;

    if let Some(path) = &args.timing {
        let timings: Vec<TimingRecord> = reports
            .iter()
            .map(|r| TimingRecord {
                task_id: &r.task_id,
                candidate_id: &r.candidate_id,
                wall_time_ms: r.wall_time_ms,
            })
            .collect();
        write_jsonl(path, &config.header(jsonl::TIMING), &timings)?;
    }
    info!("wrote {} reports to {}", reports.len(), args.out.display());
    Ok(())
}

fn cmd_label(args: LabelArgs) -> Result<()> {
    let tasks = read_tasks(&args.tasks)?;
    let candidates = read_candidates(&args.candidates)?;
    let reports: Vec<ExecutionReport> = read_records(&args.reports, jsonl::REPORTS, HeaderPolicy::Required)?;
    let prompts: BTreeMap<&str, &str> = tasks.iter().map(|t| (t.task_id.as_str(), t.prompt.as_str())).collect();
    let by_id: BTreeMap<(&str, &str), &Candidate> = candidates
        .iter()
        .map(|c| ((c.task_id.as_str(), c.candidate_id.as_str()), c))
        .collect();

    let mut examples = Vec::with_capacity(reports.len());
    for report in reports {
        let key = (report.task_id.as_str(), report.candidate_id.as_str());
        let Some(&candidate) = by_id.get(&key) else {
            bail!(ValidationError(format!(
                "report {}/{} has no matching candidate",
                report.task_id, report.candidate_id
            )));
        };
        let Some(&prompt) = prompts.get(report.task_id.as_str()) else {
            bail!(ValidationError(format!("report references unknown task {}", report.task_id)));
        };
        let labels = label_report(&report, candidate, count_lines(&candidate.code));
        examples.push(RankerExample {
            task_id: report.task_id.clone(),
            candidate_id: report.candidate_id.clone(),
            prompt: prompt.to_string(),
            code: candidate.code.clone(),
            labels,
            source_model: candidate
                .source_model
                .clone()
                .unwrap_or_else(|| args.source_model.clone()),
            gen_logprob: candidate.gen_logprob,
            report: args.keep_reports.then_some(report),
        });
    }
    let config = PipelineConfig {
        command: "label",
        paths: BTreeMap::from([
            ("tasks", args.tasks.clone()),
            ("candidates", args.candidates.clone()),
            ("reports", args.reports.clone()),
        ]),
        ..Default::default()
    };
    write_jsonl(&args.out, &config.header(jsonl::LABELED), &examples)?;
    info!("labeled {} candidates", examples.len());
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let examples = read_labeled(&args.input)?;
    let spec = SplitSpec {
        train_frac: args.train_frac,
        val_frac: args.val_frac,
        seed: args.seed,
        require_solvable: args.require_solvable,
    };
    let split = build_dataset(examples, &spec)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let config = PipelineConfig {
        command: "dataset split",
        seed: Some(args.seed),
        split: Some(spec),
        paths: BTreeMap::from([("input", args.input.clone())]),
        ..Default::default()
    };
    let header = config.header(jsonl::LABELED);
    let mut stats = BTreeMap::new();
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        write_jsonl(&args.out_dir.join(format!("{name}.jsonl")), &header, &part.examples)?;
        info!("{name}: {} examples over {} tasks", part.stats.examples, part.stats.tasks);
        stats.insert(name, &part.stats);
    }
    write_json(&args.out_dir.join("stats.json"), &stats)
}

fn cmd_merge(args: MergeArgs) -> Result<()> {
    let inputs = args
        .inputs
        .iter()
        .map(|p| read_labeled(p))
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_datasets(&inputs, args.frac, args.seed)?;
    let mut paths = BTreeMap::new();
    paths.insert("out", args.out.clone());
    let config = PipelineConfig {
        command: "dataset merge",
        seed: Some(args.seed),
        paths,
        ..Default::default()
    };
    let mut header = config.header(jsonl::LABELED);
    if let Some(Value::Object(obj)) = header.config.as_mut() {
        obj.insert("inputs".into(), serde_json::to_value(&args.inputs)?);
        obj.insert("frac".into(), serde_json::to_value(args.frac)?);
    }
    write_jsonl(&args.out, &header, &merged)?;
    info!("merged {} examples from {} inputs", merged.len(), inputs.len());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let train_set = read_labeled(&args.train)?;
    let val_set = read_labeled(&args.val)?;
    let features = args.features.config();
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        line_loss_weight: args.line_loss_weight,
        class_weights: None,
    };
    let outcome = train(&train_set, &val_set, args.task, &features, &cfg)?;
    for class in &outcome.absent_classes {
        warn!("class {class} has no training examples");
    }
    save_model(&outcome.model, &args.out)?;
    if let Some(path) = &args.history {
        write_json(path, &outcome.history)?;
    }
    let best = outcome.model.training.as_ref().map_or(0, |m| m.best_epoch);
    info!("saved {} ranker (best epoch {best}) to {}", args.task, args.out.display());
    Ok(())
}

fn group_candidates<'a>(tasks: &'a [Task], candidates: &'a [Candidate]) -> Result<Vec<(&'a Task, Vec<Candidate>)>> {
    let mut groups: BTreeMap<&str, (&Task, Vec<Candidate>)> =
        tasks.iter().map(|t| (t.task_id.as_str(), (t, Vec::new()))).collect();
    for c in candidates {
        match groups.get_mut(c.task_id.as_str()) {
            Some((_, list)) => list.push(c.clone()),
            None => bail!(ValidationError(format!(
                "candidate {} references unknown task {}",
                c.candidate_id, c.task_id
            ))),
        }
    }
    Ok(groups.into_values().filter(|(_, c)| !c.is_empty()).collect())
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let tasks = read_tasks(&args.tasks)?;
    let candidates = read_candidates(&args.candidates)?;
    let groups = group_candidates(&tasks, &candidates)?;
    let mut config = PipelineConfig {
        command: "rank",
        baseline: args.baseline.clone(),
        paths: BTreeMap::from([("tasks", args.tasks.clone()), ("candidates", args.candidates.clone())]),
        ..Default::default()
    };

    let mut scores: Vec<ScoreRecord> = Vec::with_capacity(candidates.len());
    match &args.model {
        Some(path) => {
            let model = load_model(path).with_context(|| format!("loading {}", path.display()))?;
            config.task = Some(model.task);
            config.features = Some(model.features);
            config.paths.insert("model", path.clone());
            for (task, cands) in &groups {
                scores.extend(rank(&model, task, cands)?);
            }
        }
        None => {
            for (_, cands) in &groups {
                scores.extend(rank_by_logprob(cands)?);
            }
        }
    }
    write_jsonl(&args.out, &config.header(jsonl::SCORES), &scores)?;
    info!("scored {} candidates", scores.len());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (header, scores) = read_jsonl::<ScoreRecord>(&args.scores, jsonl::SCORES, HeaderPolicy::Required)?;
    let reports: Vec<ExecutionReport> = read_records(&args.reports, jsonl::REPORTS, HeaderPolicy::Required)?;
    let task = header
        .and_then(|h| h.config)
        .and_then(|c| c.get("task").cloned())
        .and_then(|t| serde_json::from_value::<RankerTask>(t).ok());
    let report = evaluate_corpus(&scores, &reports, &args.k, task)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

/// A user-input problem detected by the CLI itself.
#[derive(Debug)]
struct ValidationError(String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<JsonlError>() {
            return match e {
                JsonlError::Io { .. } => EXIT_ENVIRONMENT,
                _ => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return match e {
                HarnessError::DriverUnavailable(_) | HarnessError::Io(_) | HarnessError::Sink(_) => EXIT_ENVIRONMENT,
                _ => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<RankerError>() {
            return match e {
                RankerError::Io(_) => EXIT_ENVIRONMENT,
                _ => EXIT_VALIDATION,
            };
        }
        if cause.is::<DatasetError>() || cause.is::<MetricsError>() || cause.is::<ValidationError>() {
            return EXIT_VALIDATION;
        }
        if cause.is::<faultrank_core::harness::TaskError>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_ENVIRONMENT
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Execute(a) => cmd_execute(a),
        Command::Label(a) => cmd_label(a),
        Command::Dataset(DatasetCommand::Split(a)) => cmd_split(a),
        Command::Dataset(DatasetCommand::Merge(a)) => cmd_merge(a),
        Command::Train(a) => cmd_train(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
