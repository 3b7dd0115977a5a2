use super::RegType;
use crate::error::{invalid, Result};
use crate::nn::{Graph, ParamId, ParamStore, Var};
use crate::real::Real;

/// Square "same" convolution with bias.
#[derive(Clone, Debug)]
pub(crate) struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    /// He-uniform weights (`bound = sqrt(6 / fan_in)`), zero bias.
    fn register<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, k: usize, seed: u64) -> Self {
        let bound = (6.0 / (cin * k * k) as f64).sqrt();
        let w = store.add_uniform(&format!("{name}.w"), &[cout, cin, k, k], bound, seed);
        let b = store.add_uniform(&format!("{name}.b"), &[cout], 0.0, seed);
        Self { w, b }
    }

    /// All-zero weights and bias.
    fn register_zeroed<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, k: usize, seed: u64) -> Self {
        let w = store.add_uniform(&format!("{name}.w"), &[cout, cin, k, k], 0.0, seed);
        let b = store.add_uniform(&format!("{name}.b"), &[cout], 0.0, seed);
        Self { w, b }
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.conv2d(x, w, b)
    }

    fn forward_relu<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let z = self.forward(g, x);
        g.relu(z)
    }
}

/// Two 3x3 convolutions, each followed by a ReLU.
#[derive(Clone, Debug)]
struct DoubleConv([Conv; 2]);

impl DoubleConv {
    fn register<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, seed: u64) -> Self {
        Self([
            Conv::register(store, &format!("{name}.conv0"), cin, cout, 3, seed),
            Conv::register(store, &format!("{name}.conv1"), cout, cout, 3, seed),
        ])
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let h = self.0[0].forward_relu(g, x);
        self.0[1].forward_relu(g, h)
    }
}

/// Image-domain regularizer mapping `cin x H x W` features to a 2-channel image,
/// with a residual connection from the input's first two channels. The output
/// convolution starts at zero, so a fresh block passes the residual through.
#[derive(Clone, Debug)]
pub(crate) struct RegBlock {
    cin: usize,
    body: RegBody,
}

#[derive(Clone, Debug)]
enum RegBody {
    /// Plain convolution cascade.
    Cascade(Vec<Conv>),
    /// Three-scale encoder/decoder with skip connections.
    AutoEncoder { enc: [DoubleConv; 2], mid: DoubleConv, dec: [DoubleConv; 2], out: Conv },
}

/// Number of convolutions in a cascade block, the 2-channel output layer included.
pub(crate) const CASCADE_DEPTH: usize = 5;

impl RegBlock {
    pub(crate) fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        reg_type: RegType,
        cin: usize,
        channels: usize,
        seed: u64,
    ) -> Self {
        let c = channels;
        let body = match reg_type {
            RegType::A => {
                let convs = (0..CASCADE_DEPTH)
                    .map(|i| {
                        let inp = if i == 0 { cin } else { c };
                        let name = format!("{name}.conv{i}");
                        if i + 1 == CASCADE_DEPTH {
                            Conv::register_zeroed(store, &name, inp, 2, 3, seed)
                        } else {
                            Conv::register(store, &name, inp, c, 3, seed)
                        }
                    })
                    .collect();
                RegBody::Cascade(convs)
            }
            RegType::B => RegBody::AutoEncoder {
                enc: [
                    DoubleConv::register(store, &format!("{name}.enc0"), cin, c, seed),
                    DoubleConv::register(store, &format!("{name}.enc1"), c, 2 * c, seed),
                ],
                mid: DoubleConv::register(store, &format!("{name}.mid"), 2 * c, 4 * c, seed),
                dec: [
                    DoubleConv::register(store, &format!("{name}.dec0"), 2 * c + c, c, seed),
                    DoubleConv::register(store, &format!("{name}.dec1"), 4 * c + 2 * c, 2 * c, seed),
                ],
                out: Conv::register_zeroed(store, &format!("{name}.out"), c, 2, 3, seed),
            },
        };
        Self { cin, body }
    }

    pub(crate) fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let (c, h, w) = g.value(x).chw();
        if c != self.cin {
            return Err(invalid!("regularization block expects {} input channels, got {c}", self.cin));
        }
        let delta = match &self.body {
            RegBody::Cascade(convs) => {
                let mut z = x;
                for (i, conv) in convs.iter().enumerate() {
                    z = if i + 1 == convs.len() { conv.forward(g, z) } else { conv.forward_relu(g, z) };
                }
                z
            }
            RegBody::AutoEncoder { enc, mid, dec, out } => {
                let (hp, wp) = (h.div_ceil(4) * 4, w.div_ceil(4) * 4);
                check_pad(h, w, hp, wp)?;
                let xp = g.pad_reflect(x, hp, wp);
                let s0 = enc[0].forward(g, xp);
                let p0 = g.maxpool2(s0);
                let s1 = enc[1].forward(g, p0);
                let p1 = g.maxpool2(s1);
                let m = mid.forward(g, p1);
                let u1 = g.upsample2(m);
                let c1 = g.concat(&[u1, s1]);
                let d1 = dec[1].forward(g, c1);
                let u0 = g.upsample2(d1);
                let c0 = g.concat(&[u0, s0]);
                let d0 = dec[0].forward(g, c0);
                let o = out.forward(g, d0);
                g.crop(o, h, w)
            }
        };
        let residual = if c == 2 { x } else { g.channels(x, 0, 2) };
        Ok(g.add(delta, residual))
    }
}

fn check_pad(h: usize, w: usize, hp: usize, wp: usize) -> Result<()> {
    if hp - h >= h || wp - w >= w {
        return Err(invalid!("image {h}x{w} is too small to reflect-pad to {hp}x{wp}"));
    }
    Ok(())
}

/// ConvLSTM hidden and cell state at the segmenter bottleneck.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

/// UNet with a ConvLSTM cell at the bottleneck and a softmax head.
#[derive(Clone, Debug)]
pub(crate) struct Segmenter {
    depth: usize,
    hidden: usize,
    enc: Vec<DoubleConv>,
    gates: Conv,
    dec: Vec<DoubleConv>,
    head: Conv,
}

impl Segmenter {
    pub(crate) fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        base: usize,
        depth: usize,
        hidden: usize,
        classes: usize,
        seed: u64,
    ) -> Self {
        let width = |l: usize| base << l;
        let enc = (0..depth)
            .map(|l| {
                let cin = if l == 0 { 2 } else { width(l - 1) };
                DoubleConv::register(store, &format!("{name}.enc{l}"), cin, width(l), seed)
            })
            .collect();
        let gates = Conv::register(store, &format!("{name}.lstm"), width(depth - 1) + hidden, 4 * hidden, 3, seed);
        let dec = (0..depth)
            .map(|l| {
                let below = if l + 1 == depth { hidden } else { width(l + 1) };
                DoubleConv::register(store, &format!("{name}.dec{l}"), below + width(l), width(l), seed)
            })
            .collect();
        let head = Conv::register(store, &format!("{name}.head"), base, classes, 1, seed);
        Self { depth, hidden, enc, gates, dec, head }
    }

    pub(crate) fn multiple(&self) -> usize {
        1 << self.depth
    }

    /// One pass on a `2 x H x W` image whose sides are multiples of `2^depth`.
    /// A missing state means a zero-initialized one.
    pub(crate) fn step<T: Real>(
        &self,
        g: &mut Graph<T>,
        x: Var,
        state: Option<LstmState>,
    ) -> Result<(Var, LstmState)> {
        let (c, h, w) = g.value(x).chw();
        let m = self.multiple();
        if c != 2 {
            return Err(invalid!("segmenter expects a 2-channel image, got {c}"));
        }
        if h % m != 0 || w % m != 0 {
            return Err(invalid!("segmenter input {h}x{w} is not divisible by {m}"));
        }
        let mut skips = Vec::with_capacity(self.depth);
        let mut z = x;
        for level in &self.enc {
            let s = level.forward(g, z);
            skips.push(s);
            z = g.maxpool2(s);
        }
        let (bh, bw) = (h / m, w / m);
        let state = match state {
            Some(s) => s,
            None => LstmState {
                hidden: g.input(crate::nn::Tensor::zeros(&[self.hidden, bh, bw])),
                cell: g.input(crate::nn::Tensor::zeros(&[self.hidden, bh, bw])),
            },
        };
        let state = self.lstm_cell(g, z, state);
        let mut z = state.hidden;
        for (level, skip) in self.dec.iter().zip(skips).rev() {
            let up = g.upsample2(z);
            let cat = g.concat(&[up, skip]);
            z = level.forward(g, cat);
        }
        let logits = self.head.forward(g, z);
        Ok((g.softmax(logits), state))
    }

    fn lstm_cell<T: Real>(&self, g: &mut Graph<T>, x: Var, state: LstmState) -> LstmState {
        let k = self.hidden;
        let cat = g.concat(&[x, state.hidden]);
        let z = self.gates.forward(g, cat);
        let zi = g.channels(z, 0, k);
        let zf = g.channels(z, k, k);
        let zo = g.channels(z, 2 * k, k);
        let zg = g.channels(z, 3 * k, k);
        let input = g.sigmoid(zi);
        let forget = g.sigmoid(zf);
        let output = g.sigmoid(zo);
        let candidate = g.tanh(zg);
        let kept = g.mul(forget, state.cell);
        let written = g.mul(input, candidate);
        let cell = g.add(kept, written);
        let squashed = g.tanh(cell);
        let hidden = g.mul(output, squashed);
        LstmState { hidden, cell }
    }
}

/// Reflect-pads `x` to the next multiple of `m` on both sides (bottom/right).
pub(crate) fn pad_to_multiple<T: Real>(g: &mut Graph<T>, x: Var, m: usize) -> Result<Var> {
    let (_, h, w) = g.value(x).chw();
    let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    check_pad(h, w, hp, wp)?;
    Ok(g.pad_reflect(x, hp, wp))
}
