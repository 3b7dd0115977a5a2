//! Losses, Dice, the learning-rate schedule and the training loops.

mod metrics;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{dice_coefficient, dice_from_labels, dice_scores, hard_labels, DiceScores};

use crate::error::{invalid, Error, Result};
use crate::kspace::{ComplexImage, KSpaceSample};
use crate::network::{Forward, Measurement, Model, ModelKind};
use crate::nn::{Adam, Gradients, Graph, Tensor, Var, PROB_CLIP};
use crate::phantom::SegMask;
use crate::real::{mix_seed, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Cross-entropy of the final probability map.
    CeFinal,
    /// Sum of the cross-entropies of every emitted map.
    CeSum,
    /// Final cross-entropy plus the weighted l2 distance of the final image to `x_full`.
    CePlusL2,
}

impl LossVariant {
    pub const ALL: [LossVariant; 3] = [LossVariant::CePlusL2, LossVariant::CeSum, LossVariant::CeFinal];

    pub fn as_str(self) -> &'static str {
        match self {
            LossVariant::CeFinal => "ce_final",
            LossVariant::CeSum => "ce_sum",
            LossVariant::CePlusL2 => "ce_plus_l2",
        }
    }

    /// Row label used in loss-ablation tables.
    pub fn short_name(self) -> &'static str {
        match self {
            LossVariant::CeFinal => "ce",
            LossVariant::CeSum => "ce_sum",
            LossVariant::CePlusL2 => "ce_l2",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" | "ce_final" => Ok(LossVariant::CeFinal),
            "ce_sum" => Ok(LossVariant::CeSum),
            "ce_l2" | "ce_plus_l2" => Ok(LossVariant::CePlusL2),
            _ => Err(invalid!("unknown loss '{s}' (expected ce, ce_sum or ce_l2)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_variant: LossVariant,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Weight of the l2 term of [`LossVariant::CePlusL2`].
    pub l2_weight: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seed of the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_variant: LossVariant::CeFinal,
            learning_rate: 1e-4,
            decay_factor: 0.5,
            decay_every: 20,
            max_epochs: 50,
            batch_size: 12,
            l2_weight: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("decay_factor", self.decay_factor),
            ("epsilon", self.epsilon),
            ("decay_every", self.decay_every as f64),
            ("max_epochs", self.max_epochs as f64),
            ("batch_size", self.batch_size as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return Err(Error::Config("l2_weight must be non-negative".into()));
        }
        Ok(())
    }

    /// Step decay: `learning_rate * decay_factor^floor(epoch / decay_every)`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Whether training `kind` with `variant` reads the fully sampled image.
pub fn needs_x_full(kind: ModelKind, variant: LossVariant) -> bool {
    kind == ModelKind::TwoStep || variant == LossVariant::CePlusL2
}

/// Mean over pixels of `-sum_i gt_i log(max(s_i, 1e-8))`.
pub fn cross_entropy_loss<T: Real>(probs: &Tensor<T>, gt: &SegMask) -> Result<f64> {
    let (c, h, w) = probs.chw();
    if (c, h, w) != (gt.classes, gt.height, gt.width) {
        return Err(invalid!("probabilities {c}x{h}x{w} vs ground truth {}x{}x{}", gt.classes, gt.height, gt.width));
    }
    let total: f64 = probs
        .data()
        .iter()
        .zip(&gt.data)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.to_f64_lossy().max(PROB_CLIP).ln())
        .sum();
    Ok(total / (h * w) as f64)
}

/// Euclidean norm of the stacked real/imaginary difference.
pub fn l2_loss<T: Real>(x: &ComplexImage<T>, x_gt: &ComplexImage<T>) -> Result<f64> {
    if (x.height, x.width) != (x_gt.height, x_gt.width) {
        return Err(invalid!("images {}x{} and {}x{} differ in shape", x.height, x.width, x_gt.height, x_gt.width));
    }
    Ok(x.data.iter().zip(&x_gt.data).map(|(a, b)| (*a - *b).norm_sqr().to_f64_lossy()).sum::<f64>().sqrt())
}

/// Everything the loss needs from one record, precomputed once per run.
pub struct TrainItem<T: Real> {
    pub measurement: Measurement<T>,
    pub target: Arc<Vec<T>>,
    pub labels: Vec<u8>,
    pub x_full: Option<Arc<Vec<T>>>,
}

impl<T: Real> TrainItem<T> {
    pub fn from_sample(sample: &KSpaceSample) -> Result<Self> {
        let seg = sample.seg_gt();
        Ok(Self {
            measurement: Measurement::from_sample(sample)?,
            target: Arc::new(seg.data.iter().map(|&v| T::lit(v)).collect()),
            labels: sample.labels.labels.clone(),
            x_full: sample.x_full.as_ref().map(|x| Arc::new(x.cast::<T>().to_channels())),
        })
    }
}

/// Adds the training objective of `variant` to the graph.
pub fn composite_loss<T: Real>(
    g: &mut Graph<T>,
    forward: &Forward,
    target: &Arc<Vec<T>>,
    x_full: Option<&Arc<Vec<T>>>,
    variant: LossVariant,
    l2_weight: f64,
) -> Result<Var> {
    if forward.segs.is_empty() {
        return Err(invalid!("forward pass produced no probability map"));
    }
    match variant {
        LossVariant::CeFinal => Ok(g.cross_entropy(forward.final_seg(), Arc::clone(target))),
        LossVariant::CeSum => {
            let terms: Vec<Var> = forward.segs.iter().map(|&s| g.cross_entropy(s, Arc::clone(target))).collect();
            Ok(if terms.len() == 1 { terms[0] } else { g.sum(&terms) })
        }
        LossVariant::CePlusL2 => {
            let x = forward.final_image().ok_or_else(|| invalid!("ce_plus_l2 needs a reconstructed image"))?;
            let x_full = x_full.ok_or_else(|| invalid!("ce_plus_l2 needs the fully sampled image"))?;
            let ce = g.cross_entropy(forward.final_seg(), Arc::clone(target));
            let l2 = g.l2_distance(x, Arc::clone(x_full));
            let l2 = g.scale(l2, T::lit(l2_weight));
            Ok(g.sum(&[ce, l2]))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// End-to-end training with the configured loss.
    EndToEnd,
    /// Two-step phase 1: reconstruction blocks against `x_full`.
    Reconstruction,
    /// Two-step phase 2: segmenter on frozen reconstructions.
    Segmentation,
}

impl Phase {
    pub fn title(self) -> &'static str {
        match self {
            Phase::EndToEnd => "end-to-end",
            Phase::Reconstruction => "phase 1: reconstruction (l2)",
            Phase::Segmentation => "phase 2: segmentation (cross-entropy, reconstruction frozen)",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Set when the epoch callback asked to stop.
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn losses(&self, phase: Phase) -> Vec<f64> {
        self.epochs.iter().filter(|e| e.phase == phase).map(|e| e.loss).collect()
    }

    pub fn phases(&self) -> Vec<Phase> {
        let mut out: Vec<Phase> = Vec::new();
        for e in &self.epochs {
            if out.last() != Some(&e.phase) {
                out.push(e.phase);
            }
        }
        out
    }
}

/// Whether training should continue after an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

fn sample_loss<T: Real>(
    model: &Model<T>,
    g: &mut Graph<T>,
    item: &TrainItem<T>,
    phase: Phase,
    cfg: &TrainConfig,
) -> Result<Var> {
    if phase == Phase::Reconstruction {
        let (_, recon) = model.recon_init(g, &item.measurement)?;
        let x_full = item.x_full.as_ref().ok_or_else(|| invalid!("reconstruction phase needs x_full"))?;
        return Ok(g.l2_distance(recon, Arc::clone(x_full)));
    }
    let f = model.forward(g, &item.measurement)?;
    let variant = if phase == Phase::Segmentation { LossVariant::CeFinal } else { cfg.loss_variant };
    composite_loss(g, &f, &item.target, item.x_full.as_ref(), variant, cfg.l2_weight)
}

fn check_training_inputs<T: Real>(model: &Model<T>, cfg: &TrainConfig, data: &[TrainItem<T>]) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let kind = model.config().model_kind;
    if kind == ModelKind::OneStep && cfg.loss_variant == LossVariant::CePlusL2 {
        return Err(Error::Config("one_step has no reconstruction for the l2 term".into()));
    }
    if needs_x_full(kind, cfg.loss_variant) && data.iter().any(|d| d.x_full.is_none()) {
        return Err(Error::Config(format!("{kind} with {} needs x_full for every record", cfg.loss_variant)));
    }
    let classes = model.config().num_classes;
    let (h, w) = data[0].measurement.shape();
    for d in data {
        if d.measurement.shape() != (h, w) || d.target.len() != classes * h * w {
            return Err(Error::Config("records differ in size or class count".into()));
        }
    }
    // Dry-run forward on the first record.
    let mut g = Graph::inference(model.params());
    model.forward(&mut g, &data[0].measurement).map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}

/// Per-sample gradients of one mini-batch, summed in index order.
fn batch_gradients<T: Real>(
    model: &Model<T>,
    trainable: &[bool],
    batch: &[&TrainItem<T>],
    phase: Phase,
    cfg: &TrainConfig,
) -> Result<(f64, Gradients<T>)> {
    let results: Vec<Result<(f64, Gradients<T>)>> = batch
        .par_iter()
        .map(|item| {
            let mut g = Graph::with_trainable(model.params(), trainable.to_vec());
            let loss = sample_loss(model, &mut g, item, phase, cfg)?;
            Ok((g.value(loss).item().to_f64_lossy(), g.backward(loss)))
        })
        .collect();
    let mut total = Gradients::empty(model.params().len());
    let mut loss_sum = 0.0;
    for r in results {
        let (loss, grads) = r?;
        if !loss.is_finite() {
            return Err(Error::ContractViolation(format!("non-finite training loss {loss}")));
        }
        loss_sum += loss;
        total.accumulate(&grads);
    }
    total.scale(T::lit(1.0 / batch.len() as f64));
    Ok((loss_sum, total))
}

fn run_phase<T: Real>(
    model: &mut Model<T>,
    cfg: &TrainConfig,
    data: &[TrainItem<T>],
    phase: Phase,
    report: &mut TrainReport,
    on_epoch: &mut dyn FnMut(&EpochLog, &Model<T>) -> Control,
) -> Result<Control> {
    let trainable: Vec<bool> = match phase {
        Phase::EndToEnd => vec![true; model.params().len()],
        Phase::Reconstruction => model.recon_param_mask(),
        Phase::Segmentation => model.recon_param_mask().into_iter().map(|r| !r).collect(),
    };
    let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.epsilon);
    let phase_tag = phase as u64;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, phase_tag, epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate_at(epoch);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainItem<T>> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = batch_gradients(model, &trainable, &batch, phase, cfg)?;
            loss_sum += loss;
            adam.step(model.params_mut(), &grads, lr);
        }
        let log = EpochLog { phase, epoch, learning_rate: lr, loss: loss_sum / data.len() as f64 };
        report.epochs.push(log.clone());
        if on_epoch(&log, model) == Control::Stop {
            report.stopped_early = true;
            return Ok(Control::Stop);
        }
    }
    Ok(Control::Continue)
}

/// Trains `model` in place. Two-step models run a reconstruction phase followed by
/// a segmentation phase, each for `max_epochs`; every other kind trains end-to-end.
pub fn train_model<T: Real>(
    model: &mut Model<T>,
    cfg: &TrainConfig,
    data: &[TrainItem<T>],
    on_epoch: &mut dyn FnMut(&EpochLog, &Model<T>) -> Control,
) -> Result<TrainReport> {
    check_training_inputs(model, cfg, data)?;
    let mut report = TrainReport::default();
    let phases: &[Phase] = match model.config().model_kind {
        ModelKind::TwoStep => &[Phase::Reconstruction, Phase::Segmentation],
        _ => &[Phase::EndToEnd],
    };
    for &phase in phases {
        if run_phase(model, cfg, data, phase, &mut report, on_epoch)? == Control::Stop {
            break;
        }
    }
    Ok(report)
}

/// Dice of each record and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_record: Vec<DiceScores>,
    pub mean: DiceScores,
}

pub fn evaluate<T: Real>(model: &Model<T>, data: &[TrainItem<T>]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(invalid!("nothing to evaluate"));
    }
    let per_record = data
        .par_iter()
        .map(|item| {
            let p = model.predict(&item.measurement)?;
            dice_from_labels(&hard_labels(p.final_seg()), &item.labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = DiceScores::mean(&per_record).expect("non-empty");
    Ok(Evaluation { per_record, mean })
}

#[cfg(test)]
mod tests;
