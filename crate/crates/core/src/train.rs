//! Distillation drivers: teacher pre-training, simultaneous (mutual) and
//! sequential teacher→student training, and top-1 evaluation.
//!
//! Both strategies share one inner loop. Per batch the teacher and student
//! are run forward, their features projected to node embeddings, and the
//! student is updated with
//!
//! ```text
//! L_s = L_ce + λ_EGA · (w_node · L_node + λ · L_edge) [+ λ_KD · L_KD]
//! ```
//!
//! In simultaneous mode the teacher's head is updated at the same time by
//! its own optimizer on `L_ce` alone; in sequential mode the teacher is
//! fully frozen.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{augment, batch_iter, Batch, Dataset};
use crate::diffcore::{SgdConfig, Tape, Var};
use crate::ega::{cross_entropy, ega_terms, kd_loss, LossNorm};
use crate::error::{Error, Result};
use crate::models::NetworkState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Simultaneous,
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    /// Edge-term weight inside the alignment loss.
    pub lambda: f64,
    pub lambda_ega: f64,
    /// Node-term weight inside the alignment loss; 1 except in ablations.
    pub node_weight: f64,
    pub loss_norm: LossNorm,
    pub enable_kd: bool,
    pub kd_temperature: f64,
    pub kd_weight: f64,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    /// Initial learning rate of the teacher's optimizer in simultaneous mode.
    pub teacher_lr: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Std of the Gaussian jitter applied independently to each view; 0 disables.
    pub noise_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Simultaneous,
            lambda: 0.3,
            lambda_ega: 0.8,
            node_weight: 1.0,
            loss_norm: LossNorm::Frobenius,
            enable_kd: false,
            kd_temperature: 4.0,
            kd_weight: 1.0,
            batch_size: 64,
            sgd: SgdConfig::default(),
            teacher_lr: 0.01,
            seed: 0,
            eval_every: 1,
            noise_std: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_ega", self.lambda_ega),
            ("node_weight", self.node_weight),
            ("kd_weight", self.kd_weight),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        if !(self.kd_temperature > 0.0) {
            return Err(Error::invalid("kd_temperature must be > 0"));
        }
        if !(self.teacher_lr > 0.0) {
            return Err(Error::invalid("teacher_lr must be > 0"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be >= 1"));
        }
        self.sgd.validate()
    }

    fn teacher_sgd(&self) -> SgdConfig {
        SgdConfig {
            initial_lr: self.teacher_lr,
            ..self.sgd.clone()
        }
    }

    /// The loss a run reports, rebuilt from its components.
    pub fn combine(&self, l_ce: f64, l_node: f64, l_edge: f64, l_kd: Option<f64>) -> f64 {
        let mut total = l_ce + self.lambda_ega * (self.node_weight * l_node + self.lambda * l_edge);
        if let Some(kd) = l_kd {
            total += self.kd_weight * kd;
        }
        total
    }
}

/// One record per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub l_ce: f64,
    pub l_node: f64,
    pub l_edge: f64,
    pub l_kd: Option<f64>,
    /// `None` on epochs skipped by `eval_every`.
    pub test_accuracy: Option<f64>,
}

/// Receives each epoch's metrics as soon as the epoch completes.
pub type MetricsSink<'a> = dyn FnMut(&EpochMetrics) -> Result<()> + 'a;

#[derive(Clone, Debug)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Fraction of rows whose argmax logit equals the label; ties go to the
/// lowest class index.
pub fn evaluate(model: &NetworkState, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("evaluate: empty split"));
    }
    let (_, logits) = model.forward(&data.features)?;
    let correct = (0..data.len())
        .filter(|&i| argmax(logits.row(i)) == data.labels[i])
        .count();
    Ok(correct as f64 / data.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            sgd: SgdConfig {
                initial_lr: 0.05,
                decay_start_epoch: 40,
                decay_every: 10,
                total_epochs: 60,
                ..SgdConfig::default()
            },
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

fn abort(epoch: usize, batch: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::NumericalAbort {
            epoch,
            batch,
            detail: e.to_string(),
        },
        other => other,
    }
}

/// Trains the teacher's trainable groups on cross-entropy alone.
///
/// With a frozen backbone this fits the new layers on top of a fixed
/// feature extractor; with nothing frozen it trains from scratch.
pub fn pretrain_teacher(
    teacher: &mut NetworkState,
    data: &TaskData,
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    cfg.sgd.validate()?;
    if cfg.epochs > cfg.sgd.total_epochs {
        return Err(Error::invalid("pretrain epochs exceed the schedule length"));
    }
    warn_on_remnant(data.train.len(), cfg.batch_size);
    let mut final_loss = None;
    for epoch in 0..cfg.epochs {
        let lr = cfg.sgd.lr_at_epoch(epoch)?;
        let mut sum = 0.0;
        let batches = batch_iter(
            data.train.len(),
            cfg.batch_size,
            cfg.seed.wrapping_add(epoch as u64),
        )?;
        for (bi, idx) in batches.iter().enumerate() {
            let batch = data.train.gather(idx);
            let mut step = || -> Result<f64> {
                let mut tape = Tape::new();
                let bound = teacher.bind(&mut tape);
                let x = tape.constant(batch.features.clone());
                let (_, logits) = bound.forward(&mut tape, x)?;
                let loss = cross_entropy(&mut tape, logits, &batch.labels)?;
                let grads = tape.backward(loss)?;
                teacher.accumulate_grads(&bound, &grads)?;
                Ok(tape.value(loss).item())
            };
            sum += step().map_err(abort(epoch, bi))?;
            teacher.sgd_step(lr)?;
        }
        final_loss = Some(sum / batches.len().max(1) as f64);
    }
    if cfg.epochs > 0 {
        teacher.head_pretrained = true;
    }
    Ok(PretrainReport {
        epochs: cfg.epochs,
        final_loss,
        train_accuracy: evaluate(teacher, &data.train)?,
        test_accuracy: evaluate(teacher, &data.test)?,
    })
}

#[derive(Default)]
struct Running {
    batches: usize,
    total: f64,
    ce: f64,
    node: f64,
    edge: f64,
    kd: f64,
}

struct StepValues {
    total: f64,
    ce: f64,
    node: f64,
    edge: f64,
    kd: Option<f64>,
}

/// Weighted sum of scalar tape terms, skipping zero weights.
fn weighted_sum(tape: &mut Tape, terms: &[(Var, f64)]) -> Result<Option<Var>> {
    let mut acc: Option<Var> = None;
    for &(v, w) in terms {
        if w == 0.0 {
            continue;
        }
        let term = if w == 1.0 {
            v
        } else {
            tape.scale_add(v, w, 0.0)?
        };
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    Ok(acc)
}

enum TeacherMode {
    /// Head (and projection) updated on `L_ce` by a second optimizer.
    Mutual,
    Frozen,
}

#[allow(clippy::too_many_arguments)]
fn distill_step(
    teacher: &mut NetworkState,
    student: &mut NetworkState,
    teacher_view: &Batch,
    student_view: &Batch,
    cfg: &TrainConfig,
    mode: &TeacherMode,
    lr: f64,
    teacher_lr: f64,
) -> Result<StepValues> {
    let mut tape = Tape::new();
    let tb = match mode {
        TeacherMode::Mutual => teacher.bind(&mut tape),
        TeacherMode::Frozen => teacher.bind_frozen(&mut tape),
    };
    let xt_in = tape.constant(teacher_view.features.clone());
    let (ft, t_logits) = tb.forward(&mut tape, xt_in)?;
    let x_t = tb.embed(&mut tape, ft)?;

    let sb = student.bind(&mut tape);
    let xs_in = tape.constant(student_view.features.clone());
    let (fs, s_logits) = sb.forward(&mut tape, xs_in)?;
    let x_s = sb.embed(&mut tape, fs)?;

    let terms = ega_terms(&mut tape, x_t, x_s, cfg.loss_norm)?;
    let ce = cross_entropy(&mut tape, s_logits, &student_view.labels)?;
    let kd = if cfg.enable_kd {
        Some(kd_loss(&mut tape, s_logits, t_logits, cfg.kd_temperature)?)
    } else {
        None
    };

    let ega = weighted_sum(
        &mut tape,
        &[(terms.node, cfg.node_weight), (terms.edge, cfg.lambda)],
    )?;
    let mut parts = vec![(ce, 1.0)];
    if let Some(ega) = ega {
        parts.push((ega, cfg.lambda_ega));
    }
    if let Some(kd) = kd {
        parts.push((kd, cfg.kd_weight));
    }
    let total = weighted_sum(&mut tape, &parts)?.expect("ce has unit weight");

    let grads = tape.backward(total)?;
    student.accumulate_grads(&sb, &grads)?;
    student.sgd_step(lr)?;

    if let TeacherMode::Mutual = mode {
        if !teacher.trainable_groups().is_empty() {
            let ce_t = cross_entropy(&mut tape, t_logits, &teacher_view.labels)?;
            let grads = tape.backward(ce_t)?;
            teacher.accumulate_grads(&tb, &grads)?;
            teacher.sgd_step(teacher_lr)?;
        }
    }

    Ok(StepValues {
        total: tape.value(total).item(),
        ce: tape.value(ce).item(),
        node: tape.value(terms.node).item(),
        edge: tape.value(terms.edge).item(),
        kd: kd.map(|k| tape.value(k).item()),
    })
}

// per-view jitter streams
const TEACHER_VIEW: u64 = 0x7465_6163_6865_7200;
const STUDENT_VIEW: u64 = 0x7374_7564_656e_7400;

fn warn_on_remnant(n: usize, batch_size: usize) {
    if batch_size >= 2 && n % batch_size == 1 {
        warn!("one leftover row per epoch is skipped: a single-node graph has no edges");
    }
}

fn run_distillation(
    teacher: &mut NetworkState,
    student: &mut NetworkState,
    data: &TaskData,
    cfg: &TrainConfig,
    mode: TeacherMode,
    sink: &mut MetricsSink<'_>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    warn_on_remnant(data.train.len(), cfg.batch_size);
    let teacher_sgd = cfg.teacher_sgd();
    let mut history = Vec::with_capacity(cfg.sgd.total_epochs);
    let mut batch_counter: u64 = 0;
    for epoch in 0..cfg.sgd.total_epochs {
        let lr = cfg.sgd.lr_at_epoch(epoch)?;
        let teacher_lr = teacher_sgd.lr_at_epoch(epoch)?;
        let batches = batch_iter(
            data.train.len(),
            cfg.batch_size,
            cfg.seed.wrapping_add(epoch as u64),
        )?;
        if batches.is_empty() {
            warn!("epoch {epoch}: no batch with at least two rows; skipping");
        }
        let mut run = Running::default();
        for (bi, idx) in batches.iter().enumerate() {
            let batch = data.train.gather(idx);
            let (tv, sv) = if cfg.noise_std > 0.0 {
                (
                    augment(
                        &batch,
                        cfg.noise_std,
                        cfg.seed ^ TEACHER_VIEW,
                        batch_counter,
                    )?,
                    augment(
                        &batch,
                        cfg.noise_std,
                        cfg.seed ^ STUDENT_VIEW,
                        batch_counter,
                    )?,
                )
            } else {
                (batch.clone(), batch)
            };
            batch_counter += 1;
            let v = distill_step(teacher, student, &tv, &sv, cfg, &mode, lr, teacher_lr)
                .map_err(abort(epoch, bi))?;
            run.batches += 1;
            run.total += v.total;
            run.ce += v.ce;
            run.node += v.node;
            run.edge += v.edge;
            run.kd += v.kd.unwrap_or(0.0);
        }
        let n = run.batches.max(1) as f64;
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: run.total / n,
            l_ce: run.ce / n,
            l_node: run.node / n,
            l_edge: run.edge / n,
            l_kd: cfg.enable_kd.then_some(run.kd / n),
            test_accuracy: should_eval(epoch, cfg)
                .then(|| evaluate(student, &data.test))
                .transpose()?,
        };
        sink(&metrics)?;
        history.push(metrics);
    }
    Ok(history)
}

fn should_eval(epoch: usize, cfg: &TrainConfig) -> bool {
    (epoch + 1).is_multiple_of(cfg.eval_every) || epoch + 1 == cfg.sgd.total_epochs
}

/// Mutual training: teacher head on `L_ce`, student on the full objective.
///
/// The teacher backbone must already be frozen.
pub fn train_simultaneous(
    teacher: &mut NetworkState,
    student: &mut NetworkState,
    data: &TaskData,
    cfg: &TrainConfig,
    sink: &mut MetricsSink<'_>,
) -> Result<Vec<EpochMetrics>> {
    if cfg.strategy != Strategy::Simultaneous {
        return Err(Error::invalid(
            "train_simultaneous called with a sequential config",
        ));
    }
    if !teacher.frozen.backbone {
        return Err(Error::invalid(
            "teacher backbone must be frozen during distillation",
        ));
    }
    check_shapes(teacher, student, data)?;
    run_distillation(teacher, student, data, cfg, TeacherMode::Mutual, sink)
}

/// Sequential training: the (pre-trained) teacher stays fully frozen.
pub fn train_sequential(
    teacher: &NetworkState,
    student: &mut NetworkState,
    data: &TaskData,
    cfg: &TrainConfig,
    sink: &mut MetricsSink<'_>,
) -> Result<Vec<EpochMetrics>> {
    if cfg.strategy != Strategy::Sequential {
        return Err(Error::invalid(
            "train_sequential called with a simultaneous config",
        ));
    }
    if !teacher.head_pretrained {
        warn!("sequential distillation from a teacher whose head was never pre-trained");
    }
    check_shapes(teacher, student, data)?;
    let mut frozen = teacher.clone();
    frozen.freeze_all();
    run_distillation(&mut frozen, student, data, cfg, TeacherMode::Frozen, sink)
}

/// Cross-entropy-only student training with the same batching and schedule.
///
/// No teacher is involved, so the graph terms are reported as zero.
pub fn train_baseline(
    student: &mut NetworkState,
    data: &TaskData,
    cfg: &TrainConfig,
    sink: &mut MetricsSink<'_>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    warn_on_remnant(data.train.len(), cfg.batch_size);
    let mut history = Vec::new();
    for epoch in 0..cfg.sgd.total_epochs {
        let lr = cfg.sgd.lr_at_epoch(epoch)?;
        let batches = batch_iter(
            data.train.len(),
            cfg.batch_size,
            cfg.seed.wrapping_add(epoch as u64),
        )?;
        let mut sum = 0.0;
        for (bi, idx) in batches.iter().enumerate() {
            let batch = data.train.gather(idx);
            let mut step = || -> Result<f64> {
                let mut tape = Tape::new();
                let sb = student.bind(&mut tape);
                let x = tape.constant(batch.features.clone());
                let (_, logits) = sb.forward(&mut tape, x)?;
                let ce = cross_entropy(&mut tape, logits, &batch.labels)?;
                let grads = tape.backward(ce)?;
                student.accumulate_grads(&sb, &grads)?;
                Ok(tape.value(ce).item())
            };
            sum += step().map_err(abort(epoch, bi))?;
            student.sgd_step(lr)?;
        }
        let ce = sum / batches.len().max(1) as f64;
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: ce,
            l_ce: ce,
            l_node: 0.0,
            l_edge: 0.0,
            l_kd: None,
            test_accuracy: should_eval(epoch, cfg)
                .then(|| evaluate(student, &data.test))
                .transpose()?,
        };
        sink(&metrics)?;
        history.push(metrics);
    }
    Ok(history)
}

fn check_shapes(teacher: &NetworkState, student: &NetworkState, data: &TaskData) -> Result<()> {
    let (t, s) = (&teacher.spec, &student.spec);
    if t.input_dim != data.train.input_dim() || s.input_dim != data.train.input_dim() {
        return Err(Error::invalid(format!(
            "input widths differ: teacher {}, student {}, data {}",
            t.input_dim,
            s.input_dim,
            data.train.input_dim()
        )));
    }
    if t.embed_dim != s.embed_dim {
        return Err(Error::invalid(format!(
            "embedding dims differ: teacher {}, student {}",
            t.embed_dim, s.embed_dim
        )));
    }
    if t.num_classes != s.num_classes || s.num_classes != data.train.num_classes {
        return Err(Error::invalid(
            "class counts differ between teacher, student and data",
        ));
    }
    Ok(())
}
