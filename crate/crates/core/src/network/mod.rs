//! Learnable components and model assemblies.
//!
//! Images travel through the graph as channel-first `2 x H x W` tensors (real and
//! imaginary parts). Probability maps are `classes x H x W` with channels ordered
//! background, CSF, GM, WM.

mod checkpoint;
mod layers;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use layers::LstmState;
use layers::{pad_to_multiple, RegBlock, Segmenter};

use crate::error::{invalid, Result};
use crate::kspace::{zero_fill, DcOperator, KSpaceGrid, KSpaceSample, SamplingMask};
use crate::nn::{Graph, ParamStore, Tensor, Var};
use crate::phantom::NUM_CLASSES;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Seranet,
    OneStep,
    TwoStep,
    Joint,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Seranet, ModelKind::OneStep, ModelKind::TwoStep, ModelKind::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Seranet => "seranet",
            ModelKind::OneStep => "one_step",
            ModelKind::TwoStep => "two_step",
            ModelKind::Joint => "joint",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Seranet => "SERANet",
            ModelKind::OneStep => "One-step",
            ModelKind::TwoStep => "Two-step",
            ModelKind::Joint => "Joint",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "seranet" => Ok(ModelKind::Seranet),
            "onestep" => Ok(ModelKind::OneStep),
            "twostep" => Ok(ModelKind::TwoStep),
            "joint" => Ok(ModelKind::Joint),
            _ => Err(invalid!("unknown model kind '{s}' (expected seranet, one_step, two_step or joint)")),
        }
    }
}

/// Regularization block architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegType {
    /// Convolution cascade.
    A,
    /// Encoder/decoder.
    B,
}

impl fmt::Display for RegType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegType::A => "A",
            RegType::B => "B",
        })
    }
}

impl FromStr for RegType {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(RegType::A),
            "B" | "b" => Ok(RegType::B),
            _ => Err(invalid!("unknown regularization block type '{s}' (expected A or B)")),
        }
    }
}

/// Which image the attention module weights at recurrence `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionInput {
    /// Output of reconstruction block `N - 1` at every recurrence.
    #[default]
    FixedNMinus1,
    /// The previous refined image (`x_0^(N)` at the first recurrence).
    PreviousX,
}

impl FromStr for AttentionInput {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_n_minus_1" => Ok(AttentionInput::FixedNMinus1),
            "previous_x" => Ok(AttentionInput::PreviousX),
            _ => Err(invalid!("unknown attention input '{s}' (expected fixed_n_minus_1 or previous_x)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_kind: ModelKind,
    pub reg_type: RegType,
    pub n_blocks: usize,
    pub recurrences: usize,
    pub reg_channels: usize,
    pub unet_base_channels: usize,
    pub lstm_hidden_channels: usize,
    pub unet_depth: usize,
    pub num_classes: usize,
    pub attention_input: AttentionInput,
    pub weight_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_kind: ModelKind::Seranet,
            reg_type: RegType::A,
            n_blocks: 2,
            recurrences: 2,
            reg_channels: 64,
            unet_base_channels: 32,
            lstm_hidden_channels: 64,
            unet_depth: 4,
            num_classes: NUM_CLASSES,
            attention_input: AttentionInput::FixedNMinus1,
            weight_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match self.model_kind {
            ModelKind::Seranet if self.n_blocks < 2 => {
                return Err(invalid!("seranet needs at least 2 reconstruction blocks, got {}", self.n_blocks))
            }
            ModelKind::Joint | ModelKind::TwoStep if self.n_blocks < 1 => {
                return Err(invalid!("{} needs at least 1 reconstruction block", self.model_kind))
            }
            _ => {}
        }
        for (name, v) in [
            ("reg_channels", self.reg_channels),
            ("unet_base_channels", self.unet_base_channels),
            ("lstm_hidden_channels", self.lstm_hidden_channels),
            ("unet_depth", self.unet_depth),
        ] {
            if v == 0 {
                return Err(invalid!("{name} must be positive"));
            }
        }
        if self.unet_depth > 8 {
            return Err(invalid!("unet_depth {} is unreasonably large", self.unet_depth));
        }
        if self.num_classes < 2 {
            return Err(invalid!("num_classes must be at least 2"));
        }
        Ok(())
    }

    /// Reconstruction blocks actually built for this kind.
    pub fn recon_blocks(&self) -> usize {
        match self.model_kind {
            ModelKind::OneStep => 0,
            _ => self.n_blocks,
        }
    }

    /// Recurrences actually run for this kind.
    pub fn effective_recurrences(&self) -> usize {
        match self.model_kind {
            ModelKind::Seranet => self.recurrences,
            _ => 0,
        }
    }

    /// Names of the fields whose values differ between two configurations.
    pub fn diff(&self, other: &ModelConfig) -> Vec<String> {
        let (a, b) = (serde_json::to_value(self), serde_json::to_value(other));
        let (Ok(serde_json::Value::Object(a)), Ok(serde_json::Value::Object(b))) = (a, b) else {
            return vec!["<unserializable>".into()];
        };
        a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).map(|(k, _)| k.clone()).collect()
    }

    /// Short run label such as `seranet-A-N2-T2`.
    pub fn label(&self) -> String {
        match self.model_kind {
            ModelKind::OneStep => "one_step".to_string(),
            ModelKind::Seranet => format!("seranet-{}-N{}-T{}", self.reg_type, self.n_blocks, self.recurrences),
            k => format!("{k}-{}-N{}", self.reg_type, self.n_blocks),
        }
    }
}

/// One measurement prepared for the network: the data-consistency operator and the
/// zero-filled image it starts from.
pub struct Measurement<T: Real> {
    pub dc: Arc<DcOperator<T>>,
    pub zero_filled: Tensor<T>,
}

impl<T: Real> Measurement<T> {
    pub fn new(y: &KSpaceGrid<T>, mask: &SamplingMask) -> Result<Self> {
        let dc = Arc::new(DcOperator::new(y, mask)?);
        let zero_filled = Tensor::from_vec(&[2, y.height, y.width], zero_fill(y).to_channels());
        Ok(Self { dc, zero_filled })
    }

    pub fn from_sample(sample: &KSpaceSample) -> Result<Self> {
        Self::new(&sample.y.cast(), &sample.mask)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.dc.shape()
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Forward {
    /// Probability maps `s_0 .. s_T`.
    pub segs: Vec<Var>,
    /// Output of reconstruction block `N - 1` (the zero-filled image when `N = 1`).
    pub recon_prev: Option<Var>,
    /// Output of reconstruction block `N`.
    pub recon: Option<Var>,
    /// Attention-refined images `x_1 .. x_T`.
    pub refined: Vec<Var>,
}

impl Forward {
    pub fn final_seg(&self) -> Var {
        *self.segs.last().expect("forward produced no segmentation")
    }

    /// `x_T`: the last refined image, or the initial reconstruction when `T = 0`.
    pub fn final_image(&self) -> Option<Var> {
        self.refined.last().copied().or(self.recon)
    }
}

/// Concrete results of an inference pass.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub segs: Vec<Tensor<T>>,
    pub image: Option<Tensor<T>>,
}

impl<T: Real> Prediction<T> {
    pub fn final_seg(&self) -> &Tensor<T> {
        self.segs.last().expect("prediction holds at least one map")
    }
}

#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    config: ModelConfig,
    params: ParamStore<T>,
    recon: Vec<RegBlock>,
    attreg: Option<RegBlock>,
    seg: Segmenter,
}

/// Prefix of every reconstruction-block parameter name.
pub const RECON_PREFIX: &str = "recon";

impl<T: Real> Model<T> {
    /// Builds the model with freshly initialized weights.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let seed = config.weight_seed;
        let recon = (0..config.recon_blocks())
            .map(|i| {
                RegBlock::register(&mut params, &format!("{RECON_PREFIX}{i}"), config.reg_type, 2, config.reg_channels, seed)
            })
            .collect();
        let attreg = (config.effective_recurrences() > 0).then(|| {
            RegBlock::register(
                &mut params,
                "attreg",
                config.reg_type,
                2 * config.num_classes,
                config.reg_channels,
                seed,
            )
        });
        let seg = Segmenter::register(
            &mut params,
            "seg",
            config.unet_base_channels,
            config.unet_depth,
            config.lstm_hidden_channels,
            config.num_classes,
            seed,
        );
        Ok(Self { config, params, recon, attreg, seg })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Replaces all weights; names and shapes must match.
    pub fn set_params(&mut self, params: ParamStore<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(invalid!("expected {} parameter arrays, got {}", self.params.len(), params.len()));
        }
        for ((_, n0, t0), (_, n1, t1)) in self.params.iter().zip(params.iter()) {
            if n0 != n1 || t0.shape() != t1.shape() {
                return Err(invalid!("parameter {n0} {:?} does not match {n1} {:?}", t0.shape(), t1.shape()));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            recon: self.recon.clone(),
            attreg: self.attreg.clone(),
            seg: self.seg.clone(),
        }
    }

    /// Per-parameter flags selecting the reconstruction blocks (`true`) or the rest.
    pub fn recon_param_mask(&self) -> Vec<bool> {
        self.params.iter().map(|(_, name, _)| name.starts_with(RECON_PREFIX)).collect()
    }

    fn input<'p>(&self, g: &mut Graph<'p, T>, m: &Measurement<T>) -> Var {
        g.input(m.zero_filled.clone())
    }

    /// Regularization block `index` followed by data consistency.
    pub fn recon_block(&self, g: &mut Graph<T>, index: usize, x: Var, m: &Measurement<T>) -> Result<Var> {
        let block = self.recon.get(index).ok_or_else(|| invalid!("no reconstruction block {index}"))?;
        let r = block.forward(g, x)?;
        g.data_consistency(r, &m.dc)
    }

    /// Unrolled reconstruction from the zero-filled image; returns the outputs of
    /// blocks `N - 1` and `N`.
    pub fn recon_init(&self, g: &mut Graph<T>, m: &Measurement<T>) -> Result<(Var, Var)> {
        if self.recon.is_empty() {
            return Err(invalid!("{} has no reconstruction blocks", self.config.model_kind));
        }
        let mut prev = self.input(g, m);
        let mut x = prev;
        for i in 0..self.recon.len() {
            prev = x;
            x = self.recon_block(g, i, x, m)?;
        }
        Ok((prev, x))
    }

    /// One segmenter pass; pads to the segmenter's size multiple and crops back.
    pub fn segment_step(&self, g: &mut Graph<T>, x: Var, state: Option<LstmState>) -> Result<(Var, LstmState)> {
        let (_, h, w) = g.value(x).chw();
        let xp = pad_to_multiple(g, x, self.seg.multiple())?;
        let (s, state) = self.seg.step(g, xp, state)?;
        Ok((g.crop(s, h, w), state))
    }

    /// Attention-weighted regularization followed by data consistency.
    pub fn attention_refine(&self, g: &mut Graph<T>, x_base: Var, s_prev: Var, m: &Measurement<T>) -> Result<Var> {
        let block = self.attreg.as_ref().ok_or_else(|| invalid!("model has no attention block"))?;
        let att = g.attention_combine(x_base, s_prev)?;
        let r = block.forward(g, att)?;
        g.data_consistency(r, &m.dc)
    }

    fn seranet_forward(&self, g: &mut Graph<T>, m: &Measurement<T>) -> Result<Forward> {
        let (prev, recon) = self.recon_init(g, m)?;
        let (s0, mut state) = self.segment_step(g, recon, None)?;
        let mut out = Forward { segs: vec![s0], recon_prev: Some(prev), recon: Some(recon), refined: Vec::new() };
        for _ in 0..self.config.recurrences {
            let base = match self.config.attention_input {
                AttentionInput::FixedNMinus1 => prev,
                AttentionInput::PreviousX => out.final_image().expect("reconstruction present"),
            };
            let x = self.attention_refine(g, base, out.final_seg(), m)?;
            let (s, next) = self.segment_step(g, x, Some(state))?;
            state = next;
            out.refined.push(x);
            out.segs.push(s);
        }
        Ok(out)
    }

    fn baseline_forward(&self, g: &mut Graph<T>, m: &Measurement<T>) -> Result<Forward> {
        match self.config.model_kind {
            ModelKind::OneStep => {
                let x = self.input(g, m);
                let (s, _) = self.segment_step(g, x, None)?;
                Ok(Forward { segs: vec![s], ..Forward::default() })
            }
            ModelKind::Joint | ModelKind::TwoStep => {
                let (prev, recon) = self.recon_init(g, m)?;
                let (s, _) = self.segment_step(g, recon, None)?;
                Ok(Forward { segs: vec![s], recon_prev: Some(prev), recon: Some(recon), refined: Vec::new() })
            }
            ModelKind::Seranet => Err(invalid!("seranet is not a baseline")),
        }
    }

    /// Full forward pass for the configured model kind.
    pub fn forward(&self, g: &mut Graph<T>, m: &Measurement<T>) -> Result<Forward> {
        let (h, w) = m.shape();
        if m.zero_filled.shape() != [2, h, w] {
            return Err(invalid!("measurement image {:?} does not match operator {h}x{w}", m.zero_filled.shape()));
        }
        match self.config.model_kind {
            ModelKind::Seranet => self.seranet_forward(g, m),
            _ => self.baseline_forward(g, m),
        }
    }

    /// Inference without gradient bookkeeping.
    pub fn predict(&self, m: &Measurement<T>) -> Result<Prediction<T>> {
        let mut g = Graph::inference(&self.params);
        let f = self.forward(&mut g, m)?;
        Ok(Prediction {
            segs: f.segs.iter().map(|&s| g.value(s).clone()).collect(),
            image: f.final_image().map(|x| g.value(x).clone()),
        })
    }
}

#[cfg(test)]
mod tests;
