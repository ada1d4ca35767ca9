//! Distillation training: the weighted objective, the epoch loop and
//! self-distillation over generations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::baseline::{self, HkdOptions, ProjectionParams, ProjectionVars};
use crate::data::Dataset;
use crate::eval;
use crate::model::{self, MlpSpec, ModelOutput, Parameters};
use crate::optim::{OptimizerSpec, OptimizerState};
use crate::relational;
use crate::sampling::{self, SamplerConfig};
use crate::tape::row_norm;
use crate::{Error, Matrix, Result, Tape, Var, EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LossKind {
    RkdD,
    RkdA,
    Hkd,
    Fitnet,
    Triplet,
    Xent,
}

impl LossKind {
    pub const ALL: [LossKind; 6] =
        [LossKind::RkdD, LossKind::RkdA, LossKind::Hkd, LossKind::Fitnet, LossKind::Triplet, LossKind::Xent];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::RkdD => "rkd-d",
            LossKind::RkdA => "rkd-a",
            LossKind::Hkd => "hkd",
            LossKind::Fitnet => "fitnet",
            LossKind::Triplet => "triplet",
            LossKind::Xent => "xent",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, LossKind::RkdD | LossKind::RkdA | LossKind::Hkd | LossKind::Fitnet)
    }
}

impl core::fmt::Display for LossKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LossTerm {
    pub loss: LossKind,
    pub weight: f64,
}

impl LossTerm {
    pub fn new(loss: LossKind, weight: f64) -> Self {
        LossTerm { loss, weight }
    }

    pub fn is_active(&self) -> bool {
        self.weight > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BatchSpec {
    pub batch_size: usize,
    /// Examples drawn from every class present in a batch.
    pub per_class: usize,
}

/// From `epoch` on (0-based), the learning rate is multiplied by `factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Milestone {
    pub epoch: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DistillConfig {
    pub terms: Vec<LossTerm>,
    pub optimizer: OptimizerSpec,
    pub epochs: usize,
    pub batch: BatchSpec,
    #[cfg_attr(feature = "serde", serde(default))]
    pub lr_milestones: Vec<Milestone>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    /// Teacher parameter file; absent when training from labels alone.
    #[cfg_attr(feature = "serde", serde(default))]
    pub teacher: Option<String>,
    #[cfg_attr(feature = "serde", serde(default = "default_margin"))]
    pub margin: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_temperature"))]
    pub temperature: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub hkd_scale_by_temperature_squared: bool,
    #[cfg_attr(feature = "serde", serde(default))]
    pub sampler: SamplerConfig,
    #[cfg_attr(feature = "serde", serde(default = "default_recall_ks"))]
    pub recall_ks: Vec<usize>,
}

#[cfg(feature = "serde")]
fn default_margin() -> f64 {
    baseline::DEFAULT_MARGIN
}
#[cfg(feature = "serde")]
fn default_temperature() -> f64 {
    baseline::DEFAULT_TEMPERATURE
}

pub fn default_recall_ks() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

/// Rescales milestones given for a `reference_epochs` schedule onto
/// `epochs`, keeping their relative positions.
pub fn scaled_milestones(at: &[usize], reference_epochs: usize, epochs: usize, factor: f64) -> Vec<Milestone> {
    at.iter()
        .map(|&m| Milestone { epoch: (m * epochs).div_ceil(reference_epochs.max(1)), factor })
        .collect()
}

impl DistillConfig {
    pub fn new(terms: Vec<LossTerm>, optimizer: OptimizerSpec, epochs: usize, batch: BatchSpec, seed: u64) -> Self {
        DistillConfig {
            terms,
            optimizer,
            epochs,
            batch,
            lr_milestones: Vec::new(),
            seed,
            teacher: None,
            margin: baseline::DEFAULT_MARGIN,
            temperature: baseline::DEFAULT_TEMPERATURE,
            hkd_scale_by_temperature_squared: false,
            sampler: SamplerConfig::default(),
            recall_ks: default_recall_ks(),
        }
    }

    /// Metric learning by relational distillation alone: RKD-D weight 1,
    /// RKD-A weight 2, Adam, five examples per class.
    pub fn metric_rkd(epochs: usize, lr: f64, seed: u64) -> Self {
        let w = relational::RkdWeights::METRIC;
        Self::new(
            vec![LossTerm::new(LossKind::RkdD, w.distance), LossTerm::new(LossKind::RkdA, w.angle)],
            OptimizerSpec::adam(lr),
            epochs,
            BatchSpec { batch_size: 40, per_class: 5 },
            seed,
        )
    }

    /// Classification with cross-entropy plus Hinton KD (weight 16) and
    /// RKD-D/RKD-A (25/50); SGD momentum 0.9, weight decay 5e-4, learning
    /// rate ×0.2 at 30%, 60% and 80% of the budget.
    pub fn classification_hkd_rkd(epochs: usize, lr: f64, batch: BatchSpec, seed: u64) -> Self {
        let w = relational::RkdWeights::CLASSIFICATION;
        let mut cfg = Self::new(
            vec![
                LossTerm::new(LossKind::Xent, 1.0),
                LossTerm::new(LossKind::Hkd, 16.0),
                LossTerm::new(LossKind::RkdD, w.distance),
                LossTerm::new(LossKind::RkdA, w.angle),
            ],
            OptimizerSpec::sgd(lr, 0.9, 5e-4),
            epochs,
            batch,
            seed,
        );
        cfg.lr_milestones = scaled_milestones(&[60, 120, 160], 200, epochs, 0.2);
        cfg
    }

    pub fn active_terms(&self) -> impl Iterator<Item = &LossTerm> {
        self.terms.iter().filter(|t| t.is_active())
    }

    pub fn needs_teacher(&self) -> bool {
        self.active_terms().any(|t| t.loss.needs_teacher())
    }

    pub fn weight_of(&self, kind: LossKind) -> f64 {
        self.terms.iter().filter(|t| t.loss == kind).map(|t| t.weight).sum()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_milestones
            .iter()
            .filter(|m| m.epoch <= epoch)
            .fold(self.optimizer.lr(), |lr, m| lr * m.factor)
    }

    pub fn hkd_options(&self) -> HkdOptions {
        HkdOptions {
            temperature: self.temperature,
            scale_by_temperature_squared: self.hkd_scale_by_temperature_squared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if let Some(t) = self.terms.iter().find(|t| !(t.weight >= 0.0 && t.weight.is_finite())) {
            return cfg_err(format!("weight of {} must be finite and non-negative, got {}", t.loss, t.weight));
        }
        if self.active_terms().next().is_none() {
            return cfg_err("at least one loss term needs a positive weight".into());
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].iter().any(|u| u.loss == t.loss) {
                return cfg_err(format!("loss term {} listed twice", t.loss));
            }
        }
        if self.epochs == 0 {
            return cfg_err("epochs must be at least 1".into());
        }
        let BatchSpec { batch_size, per_class } = self.batch;
        if per_class == 0 || batch_size == 0 || !batch_size.is_multiple_of(per_class) {
            return cfg_err(format!(
                "batch size {batch_size} is not a positive multiple of {per_class} examples per class"
            ));
        }
        self.optimizer.validate()?;
        if let Some(m) = self.lr_milestones.iter().find(|m| !(m.factor > 0.0 && m.factor.is_finite())) {
            return cfg_err(format!("milestone factor must be positive, got {}", m.factor));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return cfg_err(format!("margin must be non-negative, got {}", self.margin));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return cfg_err(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.recall_ks.contains(&0) {
            return cfg_err("recall K values must be positive".into());
        }
        Ok(())
    }
}

/// Frozen teacher outputs for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutputs {
    pub embedding: Matrix,
    pub logits: Option<Matrix>,
}

/// The weighted objective and the unweighted value of every active term.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: Var,
    pub terms: Vec<(LossKind, Var)>,
}

/// `Σ λ·loss` over the terms of `cfg` with positive weight, in listed
/// order. Terms with zero weight are neither evaluated nor required.
pub fn combined_objective(
    tape: &mut Tape,
    cfg: &DistillConfig,
    teacher: Option<&TeacherOutputs>,
    student: &ModelOutput,
    labels: &[u32],
    projection: Option<ProjectionVars>,
    sampler_seed: u64,
) -> Result<Objective> {
    let mut terms = Vec::new();
    let mut total: Option<Var> = None;
    for term in cfg.active_terms() {
        let t = match (term.loss.needs_teacher(), teacher) {
            (true, None) => {
                return Err(Error::Config(format!("loss {} needs a teacher but none was given", term.loss)));
            }
            (_, t) => t,
        };
        let value = match term.loss {
            LossKind::RkdD => relational::rkd_distance_loss(tape, &t.expect("checked").embedding, student.embedding)?,
            LossKind::RkdA => relational::rkd_angle_loss(tape, &t.expect("checked").embedding, student.embedding)?,
            LossKind::Hkd => {
                let (Some(tl), Some(sl)) = (t.and_then(|t| t.logits.as_ref()), student.logits) else {
                    return Err(Error::Config("hkd needs classifier heads on teacher and student".into()));
                };
                baseline::hkd_loss(tape, tl, sl, cfg.hkd_options())?
            }
            LossKind::Fitnet => {
                let Some(proj) = projection else {
                    return Err(Error::Config("fitnet needs a projection to the teacher space".into()));
                };
                baseline::ikd_l2_loss(tape, &t.expect("checked").embedding, student.embedding, proj)?
            }
            LossKind::Triplet => {
                let mut unit = tape.value(student.embedding).clone();
                for i in 0..unit.rows() {
                    let row = unit.row_mut(i);
                    let n = row_norm(row).max(EPS);
                    row.iter_mut().for_each(|v| *v /= n);
                }
                let trips = sampling::distance_weighted_triplets(&unit, labels, &cfg.sampler, sampler_seed)?;
                baseline::triplet_loss(tape, student.embedding, &trips, cfg.margin)?
            }
            LossKind::Xent => {
                let Some(sl) = student.logits else {
                    return Err(Error::Config("xent needs a classifier head on the student".into()));
                };
                baseline::cross_entropy_loss(tape, sl, labels)?
            }
        };
        let weighted = tape.scale(value, term.weight);
        total = Some(match total {
            None => weighted,
            Some(acc) => tape.add(acc, weighted)?,
        });
        terms.push((term.loss, value));
    }
    let total = total.ok_or_else(|| Error::Config("at least one loss term needs a positive weight".into()))?;
    Ok(Objective { total, terms })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Mean unweighted value of each active term over the epoch's steps.
    pub losses: BTreeMap<String, f64>,
    /// Mean weighted objective.
    pub total: f64,
    pub lr: f64,
    pub recall: BTreeMap<usize, f64>,
    pub accuracy: Option<f64>,
    pub wall_seconds: f64,
}

/// Source of wall-clock time for [`MetricsRecord::wall_seconds`].
pub trait Clock {
    /// Seconds since the clock started.
    fn elapsed_seconds(&self) -> f64;
}

/// Always reports zero; keeps records bitwise comparable.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Teacher<'a> {
    pub spec: &'a MlpSpec,
    pub params: &'a Parameters,
}

impl Teacher<'_> {
    pub fn outputs(&self, inputs: &Matrix) -> Result<TeacherOutputs> {
        let (embedding, logits) = model::forward_values(self.spec, self.params, inputs)?;
        Ok(TeacherOutputs { embedding, logits })
    }
}

/// Everything one training run reads.
#[derive(Debug, Clone)]
pub struct TrainRun<'a> {
    pub config: &'a DistillConfig,
    pub student: &'a MlpSpec,
    /// Starting point; He initialization from the config seed when absent.
    pub init: Option<Parameters>,
    pub teacher: Option<Teacher<'a>>,
    pub train: &'a Dataset,
    /// Held-out data for the per-epoch metrics; the training set otherwise.
    pub eval: Option<&'a Dataset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Parameters,
    /// Learned student→teacher map when a fitnet term was active.
    pub projection: Option<ProjectionParams>,
    pub records: Vec<MetricsRecord>,
}

impl TrainOutcome {
    pub fn final_recall(&self) -> Option<&BTreeMap<usize, f64>> {
        self.records.last().map(|r| &r.recall)
    }
}

/// Retrieval metrics of `params` on `data`.
pub fn evaluate(
    spec: &MlpSpec,
    params: &Parameters,
    data: &Dataset,
    ks: &[usize],
) -> Result<(BTreeMap<usize, f64>, Option<f64>)> {
    let (emb, logits) = model::forward_values(spec, params, &data.features)?;
    let recall = if ks.is_empty() {
        BTreeMap::new()
    } else {
        ks.iter().copied().zip(eval::recall_at_k(&emb, &data.labels, ks)?).collect()
    };
    let accuracy = logits.map(|l| eval::accuracy(&l, &data.labels)).transpose()?;
    Ok((recall, accuracy))
}

fn check_inputs(run: &TrainRun<'_>) -> Result<()> {
    let cfg = run.config;
    cfg.validate()?;
    run.student.validate()?;
    let dim = run.train.dim();
    if run.student.input_dim() != dim {
        return Err(Error::Config(format!(
            "student expects {}-dimensional inputs, data has {dim}",
            run.student.input_dim()
        )));
    }
    if let Some(eval) = run.eval {
        if eval.dim() != dim {
            return Err(Error::Config(format!("evaluation data has dimension {}, training data {dim}", eval.dim())));
        }
    }
    let eval_len = run.eval.unwrap_or(run.train).len();
    if let Some(&k) = cfg.recall_ks.iter().find(|&&k| k >= eval_len) {
        return Err(Error::Config(format!("recall@{k} needs more than {k} evaluation examples, have {eval_len}")));
    }
    match (&run.teacher, cfg.needs_teacher()) {
        (None, true) => {
            let kind = cfg.active_terms().find(|t| t.loss.needs_teacher()).expect("needs_teacher").loss;
            return Err(Error::Config(format!("loss {kind} needs a teacher but none was given")));
        }
        (Some(t), _) => {
            t.params.check_spec(t.spec)?;
            if t.spec.input_dim() != dim {
                return Err(Error::Config(format!(
                    "teacher expects {}-dimensional inputs, data has {dim}",
                    t.spec.input_dim()
                )));
            }
        }
        (None, false) => {}
    }
    if cfg.weight_of(LossKind::Hkd) > 0.0 {
        let t = run.teacher.as_ref().expect("checked above");
        match (t.spec.classifier_classes, run.student.classifier_classes) {
            (Some(a), Some(b)) if a == b => {}
            _ => return Err(Error::Config("hkd needs matching classifier heads on teacher and student".into())),
        }
    }
    if cfg.weight_of(LossKind::Xent) > 0.0 {
        let classes = run.student.classifier_classes.ok_or_else(|| {
            Error::Config("xent needs a classifier head on the student".into())
        })?;
        if run.train.num_classes() > classes {
            return Err(Error::Config(format!(
                "labels reach class {} but the classifier has {classes} outputs",
                run.train.num_classes() - 1
            )));
        }
    }
    Ok(())
}

fn init_projection(student_dim: usize, teacher_dim: usize, seed: u64) -> ProjectionParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let normal = Normal::new(0.0, libm::sqrt(1.0 / student_dim as f64)).expect("positive std");
    ProjectionParams {
        weight: Matrix::from_fn(student_dim, teacher_dim, |_, _| normal.sample(&mut rng)),
        bias: Matrix::zeros(1, teacher_dim),
    }
}

/// Trains the student of `run`, calling `on_epoch` after every epoch.
///
/// Every step builds a fresh tape over one class-balanced batch: the teacher
/// runs outside the tape, the student's tensors are leaves. The run aborts
/// with [`Error::NonFinite`] on the first non-finite loss or gradient.
pub fn train(run: TrainRun<'_>, clock: &dyn Clock, on_epoch: &mut dyn FnMut(&MetricsRecord)) -> Result<TrainOutcome> {
    check_inputs(&run)?;
    let cfg = run.config;
    let mut params = match run.init {
        Some(p) => {
            p.check_spec(run.student)?;
            p
        }
        None => Parameters::init(run.student, cfg.seed)?,
    };
    let mut projection = match (&run.teacher, cfg.weight_of(LossKind::Fitnet) > 0.0) {
        (Some(t), true) => Some(init_projection(run.student.embedding_dim(), t.spec.embedding_dim(), cfg.seed)),
        _ => None,
    };
    let mut optimizer = {
        let mut tensors = params.tensors();
        if let Some(p) = &projection {
            tensors.extend([&p.weight, &p.bias]);
        }
        OptimizerState::new(cfg.optimizer, tensors)
    };
    let teacher = if cfg.needs_teacher() { run.teacher } else { None };

    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let batches = sampling::class_balanced_batches(
            &run.train.labels,
            cfg.batch.batch_size,
            cfg.batch.per_class,
            cfg.seed,
            epoch as u64,
        )?;
        let mut seeds = sampling::epoch_rng(cfg.seed.wrapping_add(1), epoch as u64);
        let mut sums: Vec<(LossKind, f64)> = cfg.active_terms().map(|t| (t.loss, 0.0)).collect();
        let mut total_sum = 0.0;
        for batch in &batches {
            let sampler_seed = seeds.next_u64();
            let inputs = run.train.features.select_rows(batch);
            let labels: Vec<u32> = batch.iter().map(|&i| run.train.labels[i]).collect();
            let teacher_out = teacher.map(|t| t.outputs(&inputs)).transpose()?;

            let mut tape = Tape::new();
            let vars = params.on_tape(&mut tape, true);
            let proj_vars = projection.as_ref().map(|p| ProjectionVars {
                weight: tape.leaf(p.weight.clone()),
                bias: tape.leaf(p.bias.clone()),
            });
            let x = tape.constant(inputs);
            let out = model::forward(&mut tape, run.student, &vars, x)?;
            let obj = combined_objective(&mut tape, cfg, teacher_out.as_ref(), &out, &labels, proj_vars, sampler_seed)?;
            for ((kind, value), (_, sum)) in obj.terms.iter().zip(sums.iter_mut()) {
                let v = tape.value(*value).as_slice()[0];
                if !v.is_finite() {
                    return Err(Error::NonFinite { term: kind.name().into(), epoch, value: v });
                }
                *sum += v;
            }
            total_sum += tape.value(obj.total).as_slice()[0];
            tape.backward(obj.total)?;

            let mut handles = vars.vars();
            if let Some(p) = proj_vars {
                handles.extend([p.weight, p.bias]);
            }
            let mut grads = Vec::with_capacity(handles.len());
            for h in handles {
                let g = tape.grad(h).expect("backward ran");
                if !g.is_finite() {
                    let bad = g.as_slice().iter().copied().find(|v| !v.is_finite()).unwrap_or(f64::NAN);
                    return Err(Error::NonFinite { term: "gradient".into(), epoch, value: bad });
                }
                grads.push(g);
            }
            let mut tensors = params.tensors_mut();
            if let Some(p) = projection.as_mut() {
                tensors.extend([&mut p.weight, &mut p.bias]);
            }
            optimizer.step(&mut tensors, &grads, lr)?;
        }

        let steps = batches.len().max(1) as f64;
        let (recall, accuracy) = evaluate(run.student, &params, run.eval.unwrap_or(run.train), &cfg.recall_ks)?;
        let record = MetricsRecord {
            epoch,
            losses: sums.into_iter().map(|(k, s)| (String::from(k.name()), s / steps)).collect(),
            total: total_sum / steps,
            lr,
            recall,
            accuracy,
            wall_seconds: clock.elapsed_seconds(),
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(TrainOutcome { params, projection, records })
}

/// One link of a self-distillation chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    /// 1 for the first student.
    pub generation: usize,
    pub params: Parameters,
    pub records: Vec<MetricsRecord>,
    pub final_recall: BTreeMap<usize, f64>,
}

/// Distils `teacher` into a fresh network of the same architecture, then
/// uses each student as the next generation's frozen teacher.
///
/// Students follow `student_spec`, which must share the teacher's layer
/// widths and head; typically it differs only by dropping the output
/// normalization. Generation `g` initializes from seed `cfg.seed + g − 1`.
#[allow(clippy::too_many_arguments)]
pub fn self_distill(
    cfg: &DistillConfig,
    teacher: Teacher<'_>,
    student_spec: &MlpSpec,
    train_data: &Dataset,
    eval_data: Option<&Dataset>,
    generations: usize,
    clock: &dyn Clock,
    on_epoch: &mut dyn FnMut(usize, &MetricsRecord),
) -> Result<Vec<GenerationOutcome>> {
    if generations == 0 {
        return Err(Error::Config("self-distillation needs at least one generation".into()));
    }
    if student_spec.layer_widths != teacher.spec.layer_widths
        || student_spec.classifier_classes != teacher.spec.classifier_classes
    {
        return Err(Error::Config(format!(
            "self-distillation needs identical architectures, teacher {:?} vs student {:?}",
            teacher.spec.layer_widths, student_spec.layer_widths
        )));
    }
    let mut out: Vec<GenerationOutcome> = Vec::with_capacity(generations);
    for generation in 1..=generations {
        let mut gen_cfg = cfg.clone();
        gen_cfg.seed = cfg.seed.wrapping_add(generation as u64 - 1);
        let current = match out.last() {
            Some(prev) => Teacher { spec: student_spec, params: &prev.params },
            None => teacher,
        };
        let run = TrainRun {
            config: &gen_cfg,
            student: student_spec,
            init: None,
            teacher: Some(current),
            train: train_data,
            eval: eval_data,
        };
        let outcome = train(run, clock, &mut |r| on_epoch(generation, r))?;
        let final_recall = outcome.final_recall().cloned().unwrap_or_default();
        out.push(GenerationOutcome { generation, params: outcome.params, records: outcome.records, final_recall });
    }
    Ok(out)
}
