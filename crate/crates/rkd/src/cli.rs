//! The `rkd` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rkd_core::data::{gen_synthetic, Dataset, SyntheticSpec};
use rkd_core::divergence::{relational_divergence, DivergenceReport, Histogram};
use rkd_core::eval;
use rkd_core::model::{forward_values, MlpSpec};
use rkd_core::optim::OptimizerSpec;
use rkd_core::train::{
    self, BatchSpec, DistillConfig, LossKind, LossTerm, MetricsRecord, Teacher, TrainRun,
};
use serde::Serialize;

use crate::config::{load_config, parse_list, parse_losses, read_labels};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{MetricsWriter, StdClock};

#[derive(Debug, Parser)]
#[command(name = "rkd", version, about = "Relational knowledge distillation for embedding models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled Gaussian-cluster dataset.
    GenData(GenDataArgs),
    /// Train a teacher from labels alone (triplet or cross-entropy).
    TrainTeacher(TrainTeacherArgs),
    /// Distil a frozen teacher into a student.
    Distill(DistillArgs),
    /// Repeatedly distil a network into a copy of its own architecture.
    SelfDistill(SelfDistillArgs),
    /// Retrieval recall@K (and accuracy, with a classifier head).
    Eval(EvalArgs),
    /// Write a model's embeddings of a dataset.
    Embed(EmbedArgs),
    /// Relational divergence between two embedding files of the same examples.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.15)]
    pub spread: f64,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of every class moved to `--holdout-out`.
    #[arg(long, requires = "holdout_out")]
    pub holdout: Option<f64>,
    #[arg(long, requires = "holdout")]
    pub holdout_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Flags shared by every training subcommand. Unset flags fall back to the
/// `--config` file, then to built-in defaults.
#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// RKEB training data.
    #[arg(long)]
    pub data: PathBuf,
    /// Text file of labels (one per line) replacing those stored in `--data`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Held-out RKEB data for the per-epoch metrics.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// TOML training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Examples per class in each batch.
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerKind>,
    /// Recall@K values reported per epoch, e.g. `1,2,4,8`.
    #[arg(long)]
    pub recall: Option<String>,
    /// Line-delimited JSON log, one record per epoch.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TeacherLoss {
    Triplet,
    Xent,
}

#[derive(Debug, Args)]
pub struct TrainTeacherArgs {
    #[command(flatten)]
    pub train: TrainingFlags,
    /// Layer widths, input first, e.g. `32,64,16`.
    #[arg(long)]
    pub arch: String,
    #[arg(long, value_enum, default_value = "triplet")]
    pub loss: TeacherLoss,
    #[arg(long)]
    pub margin: Option<f64>,
    /// L2-normalize the embedding output.
    #[arg(long)]
    pub l2norm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub train: TrainingFlags,
    /// Teacher parameter file (RKDP).
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Student layer widths, e.g. `32,16,4`.
    #[arg(long)]
    pub student_arch: String,
    /// Weighted loss terms, e.g. `rkd-d=1,rkd-a=2`.
    #[arg(long)]
    pub losses: Option<String>,
    /// Leave student embeddings unnormalized.
    #[arg(long)]
    pub no_l2norm: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Start from these student parameters instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelfDistillArgs {
    #[command(flatten)]
    pub train: TrainingFlags,
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub generations: usize,
    #[arg(long)]
    pub losses: Option<String>,
    /// Directory receiving one parameter file per generation and
    /// `generations.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Parameter file; without it `--data` is evaluated as embeddings.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "1,2,4,8")]
    pub recall: String,
    /// Print one JSON object instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference (teacher-role) embeddings.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Seed of the row subsample for large inputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

/// One link of a self-distillation chain as written to `generations.json`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub teacher: PathBuf,
    pub student: PathBuf,
    pub final_recall: BTreeMap<usize, f64>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage or configuration error, 2 data,
/// file or numerical failure.
pub fn run<I, T>(args: I) -> u8
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
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::TrainTeacher(a) => train_teacher(a),
        Command::Distill(a) => distill(a),
        Command::SelfDistill(a) => self_distill(a),
        Command::Eval(a) => evaluate(a),
        Command::Embed(a) => embed(a),
        Command::Compare(a) => compare(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let spec = SyntheticSpec {
        classes: a.classes,
        per_class: a.per_class,
        ambient_dim: a.dim,
        cluster_spread: a.spread,
        inter_class_separation: a.separation,
        seed: a.seed,
    };
    if let Some(w) = spec.warning() {
        eprintln!("warning: {w}");
    }
    let data = gen_synthetic(&spec)?;
    match (a.holdout, &a.holdout_out) {
        (Some(fraction), Some(path)) => {
            let (train, held) = data.split_per_class(fraction, a.seed)?;
            io::write_embeddings(&a.out, &train)?;
            io::write_embeddings(path, &held)?;
            println!("wrote {} training and {} held-out examples", train.len(), held.len());
        }
        _ => {
            io::write_embeddings(&a.out, &data)?;
            println!("wrote {} examples of dimension {}", data.len(), data.dim());
        }
    }
    Ok(())
}

fn load_data(path: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let mut data = io::read_embeddings(path)?;
    if let Some(lp) = labels {
        let labels = read_labels(lp)?;
        if labels.len() != data.len() {
            return Err(Error::Data(format!(
                "{} has {} labels for {} examples",
                lp.display(),
                labels.len(),
                data.len()
            )));
        }
        data.labels = labels;
    }
    Ok(data)
}

fn parse_widths(text: &str) -> Result<Vec<usize>> {
    parse_list("layer widths", text)
}

/// Base config from `--config` or `default`, with explicit flags applied.
fn resolve_config(flags: &TrainingFlags, default: impl FnOnce() -> DistillConfig) -> Result<DistillConfig> {
    let mut cfg = match &flags.config {
        Some(path) => load_config(path)?,
        None => default(),
    };
    if let Some(e) = flags.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(b) = flags.batch_size {
        cfg.batch.batch_size = b;
    }
    if let Some(k) = flags.per_class {
        cfg.batch.per_class = k;
    }
    if let Some(kind) = flags.optimizer {
        let lr = cfg.optimizer.lr();
        cfg.optimizer = match kind {
            OptimizerKind::Adam => OptimizerSpec::adam(lr),
            OptimizerKind::Sgd => OptimizerSpec::sgd(lr, 0.9, 5e-4),
        };
    }
    if let Some(lr) = flags.lr {
        cfg.optimizer = cfg.optimizer.with_lr(lr);
    }
    if let Some(ks) = &flags.recall {
        cfg.recall_ks = parse_list("recall K values", ks)?;
    }
    Ok(cfg)
}

fn base_config(terms: Vec<LossTerm>) -> DistillConfig {
    DistillConfig::new(terms, OptimizerSpec::adam(1e-3), 30, BatchSpec { batch_size: 40, per_class: 5 }, 0)
}

struct Prepared {
    train: Dataset,
    eval: Option<Dataset>,
}

fn prepare(flags: &TrainingFlags) -> Result<Prepared> {
    let train = load_data(&flags.data, flags.labels.as_deref())?;
    let eval = flags.eval_data.as_deref().map(|p| load_data(p, None)).transpose()?;
    Ok(Prepared { train, eval })
}

/// Trains with an optional metrics log and prints the last epoch's summary.
fn run_training(run: TrainRun<'_>, metrics: Option<&Path>) -> Result<train::TrainOutcome> {
    let clock = StdClock::start();
    let mut writer = metrics.map(MetricsWriter::create).transpose()?;
    let outcome = train::train(run, &clock, &mut |r| {
        if let Some(w) = writer.as_mut() {
            w.write(None, r);
        }
    });
    if let Some(w) = writer {
        w.finish()?;
    }
    let outcome = outcome?;
    if let Some(last) = outcome.records.last() {
        println!("{}", summary(last));
    }
    Ok(outcome)
}

fn summary(r: &MetricsRecord) -> String {
    let mut parts = vec![format!("epoch {}", r.epoch + 1), format!("loss {:.6}", r.total)];
    parts.extend(r.recall.iter().map(|(k, v)| format!("recall@{k} {v:.4}")));
    if let Some(a) = r.accuracy {
        parts.push(format!("accuracy {a:.4}"));
    }
    parts.join("  ")
}

fn train_teacher(a: TrainTeacherArgs) -> Result<()> {
    let data = prepare(&a.train)?;
    let widths = parse_widths(&a.arch)?;
    let (term, classes) = match a.loss {
        TeacherLoss::Triplet => (LossKind::Triplet, None),
        TeacherLoss::Xent => (LossKind::Xent, Some(data.train.num_classes())),
    };
    let mut cfg = resolve_config(&a.train, || base_config(Vec::new()))?;
    cfg.terms = vec![LossTerm::new(term, 1.0)];
    if let Some(m) = a.margin {
        cfg.margin = m;
    }
    if cfg.needs_teacher() {
        return Err(Error::Config("a teacher is trained without distillation terms".into()));
    }
    let mut spec = MlpSpec::new(widths, a.l2norm);
    spec.classifier_classes = classes;
    let run = TrainRun {
        config: &cfg,
        student: &spec,
        init: None,
        teacher: None,
        train: &data.train,
        eval: data.eval.as_ref(),
    };
    let outcome = run_training(run, a.train.metrics.as_deref())?;
    io::save_params(&a.out, &spec, &outcome.params)
}

fn distill(a: DistillArgs) -> Result<()> {
    let data = prepare(&a.train)?;
    let mut cfg = resolve_config(&a.train, || DistillConfig::metric_rkd(30, 1e-3, 0))?;
    if let Some(l) = &a.losses {
        cfg.terms = parse_losses(l)?;
    }
    if let Some(t) = a.temperature {
        cfg.temperature = t;
    }
    if let Some(m) = a.margin {
        cfg.margin = m;
    }
    if let Some(t) = &a.teacher {
        cfg.teacher = Some(t.display().to_string());
    }
    let teacher = match &cfg.teacher {
        Some(path) => Some(io::load_params(Path::new(path))?),
        None if cfg.needs_teacher() => {
            return Err(Error::Config("distillation terms need --teacher (or `teacher` in the config)".into()));
        }
        None => None,
    };

    let mut spec = MlpSpec::new(parse_widths(&a.student_arch)?, !a.no_l2norm);
    let wants_head = [LossKind::Hkd, LossKind::Xent].iter().any(|&k| cfg.weight_of(k) > 0.0);
    if wants_head {
        let classes = teacher
            .as_ref()
            .and_then(|(s, _)| s.classifier_classes)
            .unwrap_or_else(|| data.train.num_classes());
        spec.classifier_classes = Some(classes);
    }
    let init = a.init.as_deref().map(|p| io::load_params_for(p, &spec)).transpose()?;
    let run = TrainRun {
        config: &cfg,
        student: &spec,
        init,
        teacher: teacher.as_ref().map(|(s, p)| Teacher { spec: s, params: p }),
        train: &data.train,
        eval: data.eval.as_ref(),
    };
    let outcome = run_training(run, a.train.metrics.as_deref())?;
    io::save_params(&a.out, &spec, &outcome.params)
}

fn self_distill(a: SelfDistillArgs) -> Result<()> {
    let data = prepare(&a.train)?;
    let mut cfg = resolve_config(&a.train, || DistillConfig::metric_rkd(30, 1e-3, 0))?;
    if let Some(l) = &a.losses {
        cfg.terms = parse_losses(l)?;
    }
    let (tspec, tparams) = io::load_params(&a.teacher)?;
    let sspec = MlpSpec { l2_normalize_output: false, ..tspec.clone() };
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;

    let clock = StdClock::start();
    let mut writer = a.train.metrics.as_deref().map(MetricsWriter::create).transpose()?;
    let teacher = Teacher { spec: &tspec, params: &tparams };
    let result = train::self_distill(
        &cfg,
        teacher,
        &sspec,
        &data.train,
        data.eval.as_ref(),
        a.generations,
        &clock,
        &mut |g, r| {
            if let Some(w) = writer.as_mut() {
                w.write(Some(g), r);
            }
        },
    );
    if let Some(w) = writer {
        w.finish()?;
    }
    let generations = result?;

    let mut records = Vec::with_capacity(generations.len());
    let mut previous = a.teacher.clone();
    for g in &generations {
        let path = a.out_dir.join(format!("gen-{}.rkdp", g.generation));
        io::save_params(&path, &sspec, &g.params)?;
        let recall: Vec<String> = g.final_recall.iter().map(|(k, v)| format!("recall@{k} {v:.4}")).collect();
        println!("generation {}  {}", g.generation, recall.join("  "));
        records.push(GenerationRecord {
            generation: g.generation,
            teacher: previous.clone(),
            student: path.clone(),
            final_recall: g.final_recall.clone(),
        });
        previous = path;
    }
    let index = a.out_dir.join("generations.json");
    let text = serde_json::to_string_pretty(&records).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&index, text).map_err(|e| Error::io(&index, e))
}

#[derive(Serialize)]
struct EvalReport {
    examples: usize,
    recall: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let data = load_data(&a.data, a.labels.as_deref())?;
    let ks: Vec<usize> = parse_list("recall K values", &a.recall)?;
    let (embeddings, logits) = match &a.model {
        Some(path) => {
            let (spec, params) = io::load_params(path)?;
            forward_values(&spec, &params, &data.features)?
        }
        None => (data.features.clone(), None),
    };
    let values = eval::recall_at_k(&embeddings, &data.labels, &ks)?;
    let accuracy = logits.map(|l| eval::accuracy(&l, &data.labels)).transpose()?;
    let report = EvalReport { examples: data.len(), recall: ks.into_iter().zip(values).collect(), accuracy };
    if a.json {
        println!("{}", serde_json::to_string(&report).map_err(|e| Error::Data(e.to_string()))?);
    } else {
        for (k, v) in &report.recall {
            println!("recall@{k} = {v:.4}");
        }
        if let Some(acc) = report.accuracy {
            println!("accuracy = {acc:.4}");
        }
    }
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let data = load_data(&a.data, a.labels.as_deref())?;
    let (spec, params) = io::load_params(&a.model)?;
    let (embeddings, _) = forward_values(&spec, &params, &data.features)?;
    io::write_embeddings(&a.out, &Dataset::new(embeddings, data.labels)?)
}

fn compare(a: CompareArgs) -> Result<()> {
    let ea = io::read_embeddings(&a.a)?;
    let eb = io::read_embeddings(&a.b)?;
    let report = relational_divergence(&ea.features, &eb.features, a.seed)?;
    if a.json {
        println!("{}", serde_json::to_string(&report).map_err(|e| Error::Data(e.to_string()))?);
    } else {
        print!("{}", render_report(&report));
    }
    Ok(())
}

fn render_report(r: &DivergenceReport) -> String {
    let mut out = String::new();
    match &r.subsample {
        Some(_) => out.push_str(&format!("rows: {} (subsampled from {})\n", r.rows_used, r.rows_total)),
        None => out.push_str(&format!("rows: {}\n", r.rows_used)),
    }
    out.push_str(&format!("rkd-d: {:.6}\n", r.rkd_distance));
    match r.rkd_angle {
        Some(v) => out.push_str(&format!("rkd-a: {v:.6}\n")),
        None => out.push_str("rkd-a: n/a (fewer than 3 rows)\n"),
    }
    let mut hist = |name: &str, a: &Histogram, b: &Histogram| {
        out.push_str(&format!("{name} histogram [{:.4}, {:.4}] a | b\n", a.lo, a.hi));
        let width = (a.hi - a.lo) / a.counts.len() as f64;
        for (i, (ca, cb)) in a.counts.iter().zip(&b.counts).enumerate() {
            out.push_str(&format!("  {:>9.4}  {ca:>8}  {cb:>8}\n", a.lo + width * i as f64));
        }
    };
    hist("distance", &r.distance_hist_a, &r.distance_hist_b);
    if let (Some(a), Some(b)) = (&r.angle_hist_a, &r.angle_hist_b) {
        hist("angle", a, b);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flags_exit_with_one() {
        assert_eq!(run(["rkd", "eval", "--bogus"]), 1);
        assert_eq!(run(["rkd", "frobnicate"]), 1);
        assert_eq!(run(["rkd", "--help"]), 0);
    }

    #[test]
    fn default_ks_match_core() {
        assert_eq!(parse_list::<usize>("k", "1,2,4,8").unwrap(), rkd_core::train::default_recall_ks());
    }
}
