use std::collections::HashMap;
use std::sync::Arc;

use super::kernels::{self, ConvShape};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{invalid, Error, Result};
use crate::kspace::DcOperator;
use crate::real::Real;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Lower clip applied to probabilities before taking logarithms.
pub const PROB_CLIP: f64 = 1e-8;

enum Op<T: Real> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Var, k: usize },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MaxPool2 { x: Var, argmax: Vec<u32> },
    Upsample2(Var),
    Concat(Vec<Var>),
    Channels { x: Var, start: usize },
    PadReflect(Var),
    Crop(Var),
    Softmax(Var),
    AttentionCombine { x: Var, s: Var },
    DataConsistency { x: Var, op: Arc<DcOperator<T>> },
    CrossEntropy { s: Var, target: Arc<Vec<T>> },
    L2Distance { x: Var, target: Arc<Vec<T>> },
    Sum(Vec<Var>),
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to the trainable parameters it depends on.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn empty(n_params: usize) -> Self {
        Self { grads: vec![None; n_params] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Element-wise sum; used to reduce per-sample gradients of a mini-batch.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            match (mine.as_mut(), theirs) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *mine = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.data().iter().map(|v| v.to_f64_lossy().powi(2)))
            .sum::<f64>()
            .sqrt()
    }
}

/// Tape of one forward evaluation.
pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    trainable: Vec<bool>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self { params, trainable: vec![true; params.len()], nodes: Vec::new(), param_nodes: HashMap::new() }
    }

    /// A graph that treats every parameter as a constant (inference only).
    pub fn inference(params: &'p ParamStore<T>) -> Self {
        Self { params, trainable: vec![false; params.len()], nodes: Vec::new(), param_nodes: HashMap::new() }
    }

    /// A graph in which only the parameters flagged `true` receive gradients.
    pub fn with_trainable(params: &'p ParamStore<T>, trainable: Vec<bool>) -> Self {
        assert_eq!(trainable.len(), params.len());
        Self { params, trainable, nodes: Vec::new(), param_nodes: HashMap::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Leaf => false,
            Op::Param(id) => self.trainable[id.0],
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// Leaf node for a parameter; repeated calls return the same node so that
    /// weight sharing accumulates gradients in one place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id), &[]);
        self.param_nodes.insert(id, v);
        v
    }

    /// "Same" convolution with stride 1 and an odd square kernel.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (cin, h, wd) = self.value(x).chw();
        let ws = self.value(w).shape().to_vec();
        assert!(ws.len() == 4 && ws[1] == cin && ws[2] == ws[3] && ws[2] % 2 == 1, "conv weight {ws:?} vs input {cin} channels");
        let shape = ConvShape { cin, cout: ws[0], h, w: wd, k: ws[2] };
        let out = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), self.value(b).data(), &shape);
        self.push(Tensor::from_vec(&[shape.cout, h, wd], out), Op::Conv2d { x, w, b, k: shape.k }, &[x, w, b])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, Op::Tanh(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shape mismatch");
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(self.value(a).shape(), data);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor), &[x])
    }

    pub fn maxpool2(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        assert!(h % 2 == 0 && w % 2 == 0, "max pooling needs even dimensions, got {h}x{w}");
        let (out, argmax) = kernels::maxpool2_forward(self.value(x).data(), c, h, w);
        self.push(Tensor::from_vec(&[c, h / 2, w / 2], out), Op::MaxPool2 { x, argmax }, &[x])
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        let out = kernels::upsample2_forward(self.value(x).data(), c, h, w);
        self.push(Tensor::from_vec(&[c, 2 * h, 2 * w], out), Op::Upsample2(x), &[x])
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let (_, h, w) = self.value(parts[0]).chw();
        let mut data = Vec::new();
        let mut c = 0;
        for &p in parts {
            let (pc, ph, pw) = self.value(p).chw();
            assert_eq!((ph, pw), (h, w), "concat spatial mismatch");
            data.extend_from_slice(self.value(p).data());
            c += pc;
        }
        self.push(Tensor::from_vec(&[c, h, w], data), Op::Concat(parts.to_vec()), parts)
    }

    /// Channels `start..start + count`.
    pub fn channels(&mut self, x: Var, start: usize, count: usize) -> Var {
        let (c, h, w) = self.value(x).chw();
        assert!(start + count <= c, "channel slice {start}+{count} of {c}");
        let data = self.value(x).data()[start * h * w..(start + count) * h * w].to_vec();
        self.push(Tensor::from_vec(&[count, h, w], data), Op::Channels { x, start }, &[x])
    }

    /// Reflect-pads at the bottom and right edges up to `h2 x w2`.
    pub fn pad_reflect(&mut self, x: Var, h2: usize, w2: usize) -> Var {
        let (c, h, w) = self.value(x).chw();
        if (h2, w2) == (h, w) {
            return x;
        }
        assert!(h2 >= h && w2 >= w && h2 - h < h && w2 - w < w, "reflect pad {h}x{w} -> {h2}x{w2}");
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(c * h2 * w2);
        for ci in 0..c {
            for y in 0..h2 {
                let row = &src[ci * h * w + kernels::reflect(y, h) * w..][..w];
                data.extend((0..w2).map(|xx| row[kernels::reflect(xx, w)]));
            }
        }
        self.push(Tensor::from_vec(&[c, h2, w2], data), Op::PadReflect(x), &[x])
    }

    /// Keeps the top-left `h2 x w2` region.
    pub fn crop(&mut self, x: Var, h2: usize, w2: usize) -> Var {
        let (c, h, w) = self.value(x).chw();
        if (h2, w2) == (h, w) {
            return x;
        }
        assert!(h2 <= h && w2 <= w);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(c * h2 * w2);
        for ci in 0..c {
            for y in 0..h2 {
                data.extend_from_slice(&src[ci * h * w + y * w..ci * h * w + y * w + w2]);
            }
        }
        self.push(Tensor::from_vec(&[c, h2, w2], data), Op::Crop(x), &[x])
    }

    /// Per-pixel softmax across channels.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        let out = kernels::softmax_channels(self.value(x).data(), c, h * w);
        self.push(Tensor::from_vec(&[c, h, w], out), Op::Softmax(x), &[x])
    }

    /// Multiplies the 2-channel image `x` by each probability map of `s` and stacks
    /// the results: group `i` (channels `2i, 2i+1`) is `s[i] * x`.
    pub fn attention_combine(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xc, h, w) = self.value(x).chw();
        let (k, sh, sw) = self.value(s).chw();
        if xc != 2 || (sh, sw) != (h, w) {
            return Err(invalid!("attention inputs: image {xc}x{h}x{w}, probabilities {k}x{sh}x{sw}"));
        }
        let hw = h * w;
        let sv = self.value(s).data();
        let tol = T::lit(1e-3);
        for p in 0..hw {
            let sum: T = (0..k).map(|i| sv[i * hw + p]).sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::ContractViolation(format!(
                    "attention maps must sum to 1 per pixel; pixel {p} sums to {sum}"
                )));
            }
        }
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(2 * k * hw);
        for i in 0..k {
            for c in 0..2 {
                data.extend((0..hw).map(|p| sv[i * hw + p] * xv[c * hw + p]));
            }
        }
        Ok(self.push(Tensor::from_vec(&[2 * k, h, w], data), Op::AttentionCombine { x, s }, &[x, s]))
    }

    /// Hard data-consistency projection of a `2 x H x W` image.
    pub fn data_consistency(&mut self, x: Var, op: &Arc<DcOperator<T>>) -> Result<Var> {
        let (c, h, w) = self.value(x).chw();
        if c != 2 || (h, w) != op.shape() {
            return Err(invalid!("data consistency on {c}x{h}x{w} with operator {:?}", op.shape()));
        }
        let out = op.apply_channels(self.value(x).data());
        Ok(self.push(Tensor::from_vec(&[2, h, w], out), Op::DataConsistency { x, op: Arc::clone(op) }, &[x]))
    }

    /// Pixel-mean of `-sum_i t_i log(max(s_i, 1e-8))`.
    pub fn cross_entropy(&mut self, s: Var, target: Arc<Vec<T>>) -> Var {
        let (c, h, w) = self.value(s).chw();
        assert_eq!(target.len(), c * h * w, "cross-entropy target size");
        let clip = T::lit(PROB_CLIP);
        let mut total = T::zero();
        for (&p, &t) in self.value(s).data().iter().zip(target.iter()) {
            if t != T::zero() {
                total -= t * p.max(clip).ln();
            }
        }
        let loss = total / T::lit((h * w) as f64);
        self.push(Tensor::scalar(loss), Op::CrossEntropy { s, target }, &[s])
    }

    /// Euclidean norm of `x - target`.
    pub fn l2_distance(&mut self, x: Var, target: Arc<Vec<T>>) -> Var {
        assert_eq!(target.len(), self.value(x).len(), "l2 target size");
        let sq: T = self.value(x).data().iter().zip(target.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        self.push(Tensor::scalar(sq.sqrt()), Op::L2Distance { x, target }, &[x])
    }

    pub fn sum(&mut self, scalars: &[Var]) -> Var {
        let total = scalars.iter().map(|&v| self.value(v).item()).sum();
        self.push(Tensor::scalar(total), Op::Sum(scalars.to_vec()), scalars)
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut out = Gradients::empty(self.params.len());
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.grads[id.0] = Some(g),
                Op::Conv2d { x, w, b, k } => {
                    let (cin, h, wd) = self.value(*x).chw();
                    let cout = node.value.shape()[0];
                    let shape = ConvShape { cin, cout, h, w: wd, k: *k };
                    let need_gx = self.needs(*x);
                    let need_gw = self.needs(*w) || self.needs(*b);
                    let (gx, gw, gb) = kernels::conv2d_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        g.data(),
                        &shape,
                        need_gx,
                        need_gw,
                    );
                    if let Some(gx) = gx {
                        self.acc(&mut grads, *x, Tensor::from_vec(&[cin, h, wd], gx));
                    }
                    if let Some(gw) = gw {
                        self.acc(&mut grads, *w, Tensor::from_vec(self.value(*w).shape(), gw));
                    }
                    if let Some(gb) = gb {
                        self.acc(&mut grads, *b, Tensor::from_vec(&[cout], gb));
                    }
                }
                Op::Relu(x) => {
                    let data = g.data().iter().zip(node.value.data()).map(|(&g, &y)| if y > T::zero() { g } else { T::zero() }).collect();
                    self.acc(&mut grads, *x, Tensor::from_vec(g.shape(), data));
                }
                Op::Sigmoid(x) => {
                    let data = g.data().iter().zip(node.value.data()).map(|(&g, &y)| g * y * (T::one() - y)).collect();
                    self.acc(&mut grads, *x, Tensor::from_vec(g.shape(), data));
                }
                Op::Tanh(x) => {
                    let data = g.data().iter().zip(node.value.data()).map(|(&g, &y)| g * (T::one() - y * y)).collect();
                    self.acc(&mut grads, *x, Tensor::from_vec(g.shape(), data));
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        self.acc(&mut grads, *b, g.clone());
                    }
                    self.acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    if self.needs(*a) {
                        let data = g.data().iter().zip(bv).map(|(&g, &y)| g * y).collect();
                        self.acc(&mut grads, *a, Tensor::from_vec(g.shape(), data));
                    }
                    if self.needs(*b) {
                        let data = g.data().iter().zip(av).map(|(&g, &x)| g * x).collect();
                        self.acc(&mut grads, *b, Tensor::from_vec(g.shape(), data));
                    }
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    self.acc(&mut grads, *x, g.map(|v| v * f));
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut gx = Tensor::zeros(self.value(*x).shape());
                    let d = gx.data_mut();
                    for (&j, &gv) in argmax.iter().zip(g.data()) {
                        d[j as usize] += gv;
                    }
                    self.acc(&mut grads, *x, gx);
                }
                Op::Upsample2(x) => {
                    let (c, h, w) = self.value(*x).chw();
                    self.acc(&mut grads, *x, Tensor::from_vec(&[c, h, w], kernels::upsample2_backward(g.data(), c, h, w)));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        if self.needs(p) {
                            let part = g.data()[offset..offset + n].to_vec();
                            self.acc(&mut grads, p, Tensor::from_vec(self.value(p).shape(), part));
                        }
                        offset += n;
                    }
                }
                Op::Channels { x, start } => {
                    let (_, h, w) = self.value(*x).chw();
                    let mut gx = Tensor::zeros(self.value(*x).shape());
                    gx.data_mut()[start * h * w..start * h * w + g.len()].copy_from_slice(g.data());
                    self.acc(&mut grads, *x, gx);
                }
                Op::PadReflect(x) => {
                    let (c, h, w) = self.value(*x).chw();
                    let (_, h2, w2) = g.chw();
                    let mut gx = Tensor::zeros(&[c, h, w]);
                    let d = gx.data_mut();
                    for ci in 0..c {
                        for y in 0..h2 {
                            let sy = kernels::reflect(y, h);
                            for xx in 0..w2 {
                                d[ci * h * w + sy * w + kernels::reflect(xx, w)] += g.data()[ci * h2 * w2 + y * w2 + xx];
                            }
                        }
                    }
                    self.acc(&mut grads, *x, gx);
                }
                Op::Crop(x) => {
                    let (c, h, w) = self.value(*x).chw();
                    let (_, h2, w2) = g.chw();
                    let mut gx = Tensor::zeros(&[c, h, w]);
                    let d = gx.data_mut();
                    for ci in 0..c {
                        for y in 0..h2 {
                            d[ci * h * w + y * w..ci * h * w + y * w + w2]
                                .copy_from_slice(&g.data()[ci * h2 * w2 + y * w2..ci * h2 * w2 + (y + 1) * w2]);
                        }
                    }
                    self.acc(&mut grads, *x, gx);
                }
                Op::Softmax(x) => {
                    let (c, h, w) = node.value.chw();
                    let hw = h * w;
                    let s = node.value.data();
                    let gd = g.data();
                    let mut gx = vec![T::zero(); c * hw];
                    for p in 0..hw {
                        let dot: T = (0..c).map(|i| gd[i * hw + p] * s[i * hw + p]).sum();
                        for i in 0..c {
                            gx[i * hw + p] = s[i * hw + p] * (gd[i * hw + p] - dot);
                        }
                    }
                    self.acc(&mut grads, *x, Tensor::from_vec(&[c, h, w], gx));
                }
                Op::AttentionCombine { x, s } => {
                    let (k, h, w) = self.value(*s).chw();
                    let hw = h * w;
                    let (xv, sv, gd) = (self.value(*x).data(), self.value(*s).data(), g.data());
                    if self.needs(*x) {
                        let mut gx = vec![T::zero(); 2 * hw];
                        for i in 0..k {
                            for c in 0..2 {
                                let gi = &gd[(2 * i + c) * hw..(2 * i + c + 1) * hw];
                                for p in 0..hw {
                                    gx[c * hw + p] += sv[i * hw + p] * gi[p];
                                }
                            }
                        }
                        self.acc(&mut grads, *x, Tensor::from_vec(&[2, h, w], gx));
                    }
                    if self.needs(*s) {
                        let mut gs = vec![T::zero(); k * hw];
                        for i in 0..k {
                            for c in 0..2 {
                                for p in 0..hw {
                                    gs[i * hw + p] += xv[c * hw + p] * gd[(2 * i + c) * hw + p];
                                }
                            }
                        }
                        self.acc(&mut grads, *s, Tensor::from_vec(&[k, h, w], gs));
                    }
                }
                Op::DataConsistency { x, op } => {
                    let gx = op.project_unmeasured_channels(g.data());
                    self.acc(&mut grads, *x, Tensor::from_vec(g.shape(), gx));
                }
                Op::CrossEntropy { s, target } => {
                    let (_, h, w) = self.value(*s).chw();
                    let scale = g.item() / T::lit((h * w) as f64);
                    let clip = T::lit(PROB_CLIP);
                    let data = self
                        .value(*s)
                        .data()
                        .iter()
                        .zip(target.iter())
                        .map(|(&p, &t)| if t != T::zero() && p > clip { -scale * t / p } else { T::zero() })
                        .collect();
                    self.acc(&mut grads, *s, Tensor::from_vec(self.value(*s).shape(), data));
                }
                Op::L2Distance { x, target } => {
                    let norm = node.value.item();
                    let scale = if norm > T::zero() { g.item() / norm } else { T::zero() };
                    let data = self.value(*x).data().iter().zip(target.iter()).map(|(&a, &b)| scale * (a - b)).collect();
                    self.acc(&mut grads, *x, Tensor::from_vec(self.value(*x).shape(), data));
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        self.acc(&mut grads, p, g.clone());
                    }
                }
            }
        }
        out
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.needs(v) {
            return;
        }
        match grads[v.0].as_mut() {
            Some(existing) => existing.add_assign(&g),
            None => grads[v.0] = Some(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{fft2c, make_cartesian_mask, apply_mask, ComplexImage};
    use num_complex::Complex64;

    fn filled(shape: &[usize], seed: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect())
    }

    /// Central-difference check of d(loss)/d(param) for every entry of every parameter.
    fn check_param_grads(params: &ParamStore<f64>, build: impl Fn(&mut Graph<f64>) -> Var) {
        let mut g = Graph::new(params);
        let loss = build(&mut g);
        let grads = g.backward(loss);
        let eps = 1e-6;
        for id in params.ids() {
            let analytic = grads.get(id).expect("gradient present");
            for j in 0..params.get(id).len() {
                let mut plus = params.clone();
                plus.get_mut(id).data_mut()[j] += eps;
                let mut minus = params.clone();
                minus.get_mut(id).data_mut()[j] -= eps;
                let lp = {
                    let mut g = Graph::new(&plus);
                    let l = build(&mut g);
                    g.value(l).item()
                };
                let lm = {
                    let mut g = Graph::new(&minus);
                    let l = build(&mut g);
                    g.value(l).item()
                };
                let numeric = (lp - lm) / (2.0 * eps);
                let a = analytic.data()[j];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                assert!(err < 1e-5, "{} [{j}]: analytic {a} numeric {numeric}", params.name(id));
            }
        }
    }

    #[test]
    fn conv_relu_pool_upsample_softmax_ce_gradients() {
        let mut params = ParamStore::new();
        let w1 = params.add("w1", filled(&[3, 2, 3, 3], 0.7));
        let b1 = params.add("b1", filled(&[3], 0.3));
        let w2 = params.add("w2", filled(&[4, 5, 1, 1], 1.3));
        let b2 = params.add("b2", filled(&[4], 0.9));
        let x = filled(&[2, 4, 6], 0.41);
        let target: Vec<f64> = (0..4 * 4 * 6).map(|i| if i % 4 == (i / 24) % 4 { 1.0 } else { 0.0 }).collect();
        let target = Arc::new(target);
        check_param_grads(&params, |g| {
            let xi = g.input(x.clone());
            let (w1, b1, w2, b2) = (g.param(w1), g.param(b1), g.param(w2), g.param(b2));
            let h = g.conv2d(xi, w1, b1);
            let h = g.tanh(h);
            let p = g.maxpool2(h);
            let u = g.upsample2(p);
            let sig = g.sigmoid(u);
            let skip = g.channels(xi, 0, 2);
            let cat = g.concat(&[sig, skip]);
            let logits = g.conv2d(cat, w2, b2);
            let s = g.softmax(logits);
            g.cross_entropy(s, Arc::clone(&target))
        });
    }

    #[test]
    fn pad_crop_mul_scale_l2_gradients() {
        let mut params = ParamStore::new();
        let a = params.add("a", filled(&[2, 3, 5], 0.37));
        let b = params.add("b", filled(&[2, 3, 5], 0.53));
        let target = Arc::new(filled(&[2, 3, 5], 0.11).into_data());
        check_param_grads(&params, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let m = g.mul(a, b);
            let r = g.relu(m);
            let padded = g.pad_reflect(r, 5, 8);
            let c = g.crop(padded, 3, 5);
            let s = g.scale(c, 1.7);
            let sum = g.add(s, a);
            let l = g.l2_distance(sum, Arc::clone(&target));
            g.sum(&[l, l])
        });
    }

    #[test]
    fn attention_and_data_consistency_gradients() {
        let (h, w) = (6, 8);
        let truth = ComplexImage::from_data(h, w, (0..h * w).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect());
        let mask = make_cartesian_mask(w, 0.5, 2, 4).unwrap();
        let y = apply_mask(&fft2c(&truth), &mask).unwrap();
        let op = Arc::new(DcOperator::new(&y, &mask).unwrap());
        let mut params = ParamStore::new();
        let img = params.add("img", filled(&[2, h, w], 0.77));
        let logits = params.add("logits", filled(&[4, h, w], 1.9));
        let wgt = params.add("w", filled(&[2, 8, 3, 3], 0.21));
        let bias = params.add("b", filled(&[2], 0.5));
        let target = Arc::new(filled(&[2, h, w], 0.05).into_data());
        check_param_grads(&params, |g| {
            let x = g.param(img);
            let l = g.param(logits);
            let s = g.softmax(l);
            let att = g.attention_combine(x, s).unwrap();
            let (wv, bv) = (g.param(wgt), g.param(bias));
            let r = g.conv2d(att, wv, bv);
            let dc = g.data_consistency(r, &op).unwrap();
            g.l2_distance(dc, Arc::clone(&target))
        });
    }

    #[test]
    fn attention_partition_of_unity_and_contract() {
        let params = ParamStore::<f64>::new();
        let mut g = Graph::new(&params);
        let x = g.input(filled(&[2, 3, 4], 0.9));
        let l = g.input(filled(&[4, 3, 4], 2.3));
        let s = g.softmax(l);
        let att = g.attention_combine(x, s).unwrap();
        let v = g.value(att);
        let xv = g.value(x).data();
        for c in 0..2 {
            for p in 0..12 {
                let sum: f64 = (0..4).map(|i| v.data()[(2 * i + c) * 12 + p]).sum();
                assert!((sum - xv[c * 12 + p]).abs() <= 4.0 * f64::EPSILON * xv[c * 12 + p].abs().max(1.0));
            }
        }
        let bad = g.input(Tensor::from_vec(&[4, 3, 4], vec![0.5; 48]));
        assert!(matches!(g.attention_combine(x, bad), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn frozen_parameters_get_no_gradient() {
        let mut params = ParamStore::new();
        let a = params.add("a", filled(&[1, 2, 2], 0.3));
        let b = params.add("b", filled(&[1, 2, 2], 0.4));
        let mut g = Graph::with_trainable(&params, vec![true, false]);
        let (va, vb) = (g.param(a), g.param(b));
        let m = g.mul(va, vb);
        let l = g.l2_distance(m, Arc::new(vec![0.0; 4]));
        let grads = g.backward(l);
        assert!(grads.get(a).is_some());
        assert!(grads.get(b).is_none());
    }
}
