//! Procedural digital brain phantoms and spin-echo image synthesis.
//!
//! A phantom is a 2D label map with four classes (background, CSF, gray matter,
//! white matter) laid out as nested, randomly deformed ellipses with a few CSF
//! ventricles inside the white-matter core. Each tissue carries T1/T2/PD values and
//! the magnitude image follows the closed-form spin-echo signal
//! `S = PD * (1 - exp(-TR/T1)) * exp(-TE/T2)`, multiplied by a smooth phase field.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kspace::ComplexImage;

/// Number of tissue classes handled by the segmentation pipeline.
pub const NUM_CLASSES: usize = 4;

/// Minimum phantom edge length in pixels.
pub const MIN_PHANTOM_DIM: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tissue {
    Background = 0,
    Csf = 1,
    Gm = 2,
    Wm = 3,
}

impl Tissue {
    pub const ALL: [Tissue; NUM_CLASSES] = [Tissue::Background, Tissue::Csf, Tissue::Gm, Tissue::Wm];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Background => "background",
            Tissue::Csf => "csf",
            Tissue::Gm => "gm",
            Tissue::Wm => "wm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "background" | "bg" => Some(Tissue::Background),
            "csf" => Some(Tissue::Csf),
            "gm" | "gray_matter" | "grey_matter" => Some(Tissue::Gm),
            "wm" | "white_matter" => Some(Tissue::Wm),
            _ => None,
        }
    }
}

/// MR physical parameters of one tissue class. Times are in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueParams {
    pub tissue_id: u8,
    pub t1: f64,
    pub t2: f64,
    pub pd: f64,
}

impl TissueParams {
    /// Checks `T2 < T1`, positive relaxation times and `PD` in `(0, 1]`.
    ///
    /// Background is the one tissue allowed `PD = 0` (it carries no signal).
    pub fn validate(&self) -> Result<()> {
        if Tissue::from_id(self.tissue_id).is_none() {
            return Err(invalid!("tissue id {} outside 0..{}", self.tissue_id, NUM_CLASSES));
        }
        if !(self.t1 > 0.0 && self.t2 > 0.0) || !self.t1.is_finite() || !self.t2.is_finite() {
            return Err(invalid!(
                "tissue {}: T1 and T2 must be positive and finite (got T1={}, T2={})",
                self.tissue_id,
                self.t1,
                self.t2
            ));
        }
        if self.t2 >= self.t1 {
            return Err(invalid!("tissue {}: T2 ({}) must be below T1 ({})", self.tissue_id, self.t2, self.t1));
        }
        let pd_ok = if self.tissue_id == Tissue::Background.id() {
            (0.0..=1.0).contains(&self.pd)
        } else {
            self.pd > 0.0 && self.pd <= 1.0
        };
        if !pd_ok {
            return Err(invalid!("tissue {}: PD {} outside (0, 1]", self.tissue_id, self.pd));
        }
        Ok(())
    }
}

/// Per-class tissue parameters, indexed by tissue id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueTable {
    pub entries: Vec<TissueParams>,
}

impl Default for TissueTable {
    fn default() -> Self {
        Self {
            entries: vec![
                TissueParams { tissue_id: 0, t1: 1.0, t2: 0.1, pd: 0.0 },
                TissueParams { tissue_id: 1, t1: 2.569, t2: 0.329, pd: 1.0 },
                TissueParams { tissue_id: 2, t1: 0.833, t2: 0.083, pd: 0.86 },
                TissueParams { tissue_id: 3, t1: 0.500, t2: 0.070, pd: 0.77 },
            ],
        }
    }
}

#[derive(Deserialize)]
struct TissueTableFile {
    tissue: Vec<TissueEntry>,
}

#[derive(Deserialize)]
struct TissueEntry {
    name: String,
    #[serde(alias = "T1")]
    t1: f64,
    #[serde(alias = "T2")]
    t2: f64,
    #[serde(alias = "PD")]
    pd: f64,
}

impl TissueTable {
    pub fn get(&self, id: u8) -> Option<&TissueParams> {
        self.entries.iter().find(|p| p.tissue_id == id)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.entries {
            p.validate()?;
        }
        Ok(())
    }

    /// Parses a TOML table of the form
    ///
    /// ```toml
    /// [[tissue]]
    /// name = "csf"
    /// T1 = 2.569
    /// T2 = 0.329
    /// PD = 1.0
    /// ```
    ///
    /// Entries override the defaults; tissues not listed keep their default values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TissueTableFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("tissue table: {e}")))?;
        let mut table = Self::default();
        for entry in file.tissue {
            let tissue = Tissue::from_name(&entry.name)
                .ok_or_else(|| Error::Config(format!("unknown tissue name {:?}", entry.name)))?;
            let params = TissueParams {
                tissue_id: tissue.id(),
                t1: entry.t1,
                t2: entry.t2,
                pd: entry.pd,
            };
            params.validate()?;
            match table.entries.iter_mut().find(|p| p.tissue_id == tissue.id()) {
                Some(slot) => *slot = params,
                None => table.entries.push(params),
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Spin-echo timing in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub te: f64,
    pub tr: f64,
}

pub const MEAN_TE: f64 = 0.080;
pub const MEAN_TR: f64 = 3.0;
pub const TIMING_VARIATION: f64 = 0.05;

/// Draws TE and TR uniformly within ±5% of 80 ms and 3 s.
pub fn sample_sequence_params(seed: u64) -> SequenceParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let te = rng.random_range(MEAN_TE * (1.0 - TIMING_VARIATION)..=MEAN_TE * (1.0 + TIMING_VARIATION));
    let tr = rng.random_range(MEAN_TR * (1.0 - TIMING_VARIATION)..=MEAN_TR * (1.0 + TIMING_VARIATION));
    SequenceParams { te, tr }
}

/// Closed-form spin-echo magnitude `PD * (1 - exp(-TR/T1)) * exp(-TE/T2)`.
pub fn spin_echo_signal(params: &TissueParams, seq: &SequenceParams) -> Result<f64> {
    if !(params.t1 > 0.0 && params.t2 > 0.0) {
        return Err(invalid!("T1 and T2 must be positive (got T1={}, T2={})", params.t1, params.t2));
    }
    if !(seq.te >= 0.0 && seq.tr >= 0.0) {
        return Err(invalid!("TE and TR must be non-negative (got TE={}, TR={})", seq.te, seq.tr));
    }
    Ok(params.pd * (1.0 - (-seq.tr / params.t1).exp()) * (-seq.te / params.t2).exp())
}

/// Per-pixel tissue labels of one slice, row-major `height x width`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
    pub brain_id: u32,
    pub slice_id: u32,
    pub seed: u64,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(invalid!("label buffer has {} entries, expected {}x{}", labels.len(), height, width));
        }
        Ok(Self { height, width, labels, brain_id: 0, slice_id: 0, seed: 0 })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            if (l as usize) < NUM_CLASSES {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    pub fn border_is_background(&self) -> bool {
        let (h, w) = (self.height, self.width);
        (0..w).all(|c| self.at(0, c) == 0 && self.at(h - 1, c) == 0)
            && (0..h).all(|r| self.at(r, 0) == 0 && self.at(r, w - 1) == 0)
    }
}

/// Smooth radial deformation `1 + sum_k a_k cos(k theta + phi_k)`.
struct Deformation {
    terms: Vec<(f64, f64, f64)>,
}

impl Deformation {
    fn random(rng: &mut ChaCha8Rng, orders: std::ops::RangeInclusive<u32>, max_amp: f64) -> Self {
        let terms = orders
            .map(|k| (k as f64, rng.random_range(0.0..max_amp), rng.random_range(0.0..2.0 * PI)))
            .collect();
        Self { terms }
    }

    fn at(&self, theta: f64) -> f64 {
        1.0 + self.terms.iter().map(|&(k, a, p)| a * (k * theta + p).cos()).sum::<f64>()
    }
}

/// Generates a procedural brain slice: background, CSF rim, folded GM band, WM core
/// and 2–5 CSF ventricles inside the WM.
pub fn generate_label_map(seed: u64, height: usize, width: usize) -> Result<LabelMap> {
    if height < MIN_PHANTOM_DIM || width < MIN_PHANTOM_DIM {
        return Err(invalid!(
            "phantom dimensions {height}x{width} below the minimum {MIN_PHANTOM_DIM}x{MIN_PHANTOM_DIM}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);

    let cy = hf / 2.0 + rng.random_range(-0.02..0.02) * hf;
    let cx = wf / 2.0 + rng.random_range(-0.02..0.02) * wf;
    let semi_y = (hf / 2.0 - 2.0) * rng.random_range(0.80..0.88);
    let semi_x = (wf / 2.0 - 2.0) * rng.random_range(0.80..0.88);

    let skull = Deformation::random(&mut rng, 2..=4, 0.035);
    let csf_inner = Deformation::random(&mut rng, 2..=5, 0.04);
    let gyri = Deformation::random(&mut rng, 6..=11, 0.05);
    let csf_level = rng.random_range(0.84..0.90);
    let wm_level = rng.random_range(0.56..0.66);

    let n_ventricles = rng.random_range(2..=5usize);
    let ventricles: Vec<(f64, f64, f64, f64, f64)> = (0..n_ventricles)
        .map(|_| {
            let r = rng.random_range(0.0..0.30) * wm_level;
            let a = rng.random_range(0.0..2.0 * PI);
            let vy = cy + r * semi_y * a.sin();
            let vx = cx + r * semi_x * a.cos();
            let ry = semi_y * rng.random_range(0.05..0.11);
            let rx = semi_x * rng.random_range(0.05..0.11);
            let rot = rng.random_range(0.0..PI);
            (vy, vx, ry.max(1.0), rx.max(1.0), rot)
        })
        .collect();

    let mut labels = vec![0u8; height * width];
    for row in 0..height {
        for col in 0..width {
            let dy = (row as f64 + 0.5 - cy) / semi_y;
            let dx = (col as f64 + 0.5 - cx) / semi_x;
            let theta = dy.atan2(dx);
            let rho = (dx * dx + dy * dy).sqrt();
            let outer = rho / skull.at(theta);
            let label = if outer > 1.0 {
                Tissue::Background
            } else if outer > csf_level * csf_inner.at(theta) {
                Tissue::Csf
            } else if outer > wm_level * gyri.at(theta) {
                Tissue::Gm
            } else {
                Tissue::Wm
            };
            labels[row * width + col] = label.id();
        }
    }

    for &(vy, vx, ry, rx, rot) in &ventricles {
        let (s, c) = rot.sin_cos();
        for row in 0..height {
            for col in 0..width {
                let idx = row * width + col;
                if labels[idx] != Tissue::Wm.id() {
                    continue;
                }
                let py = row as f64 + 0.5 - vy;
                let px = col as f64 + 0.5 - vx;
                let u = (c * px + s * py) / rx;
                let v = (-s * px + c * py) / ry;
                if u * u + v * v <= 1.0 {
                    labels[idx] = Tissue::Csf.id();
                }
            }
        }
    }

    for col in 0..width {
        labels[col] = 0;
        labels[(height - 1) * width + col] = 0;
    }
    for row in 0..height {
        labels[row * width] = 0;
        labels[row * width + width - 1] = 0;
    }

    Ok(LabelMap { height, width, labels, brain_id: 0, slice_id: 0, seed })
}

/// Low-order polynomial phase `a0 + a1 x + a2 y + a3 x y` on normalized
/// coordinates `x, y` in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub coeffs: [f64; 4],
}

impl PhaseField {
    pub fn zero() -> Self {
        Self { coeffs: [0.0; 4] }
    }

    /// Coefficients drawn from `Uniform(-pi/4, pi/4)`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = [0.0; 4];
        for c in coeffs.iter_mut() {
            *c = rng.random_range(-FRAC_PI_4..FRAC_PI_4);
        }
        Self { coeffs }
    }

    pub fn at(&self, row: usize, col: usize, height: usize, width: usize) -> f64 {
        let y = normalized_coord(row, height);
        let x = normalized_coord(col, width);
        let [a0, a1, a2, a3] = self.coeffs;
        a0 + a1 * x + a2 * y + a3 * x * y
    }
}

fn normalized_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

/// Complex image whose magnitude is the spin-echo signal of each pixel's tissue and
/// whose phase is a random smooth field drawn from `phase_seed`.
pub fn synthesize_complex_image(
    labels: &LabelMap,
    tissue_table: &TissueTable,
    seq: &SequenceParams,
    phase_seed: u64,
) -> Result<ComplexImage<f64>> {
    synthesize_with_phase(labels, tissue_table, seq, &PhaseField::random(phase_seed))
}

pub fn synthesize_with_phase(
    labels: &LabelMap,
    tissue_table: &TissueTable,
    seq: &SequenceParams,
    phase: &PhaseField,
) -> Result<ComplexImage<f64>> {
    let mut signal = [None; NUM_CLASSES];
    for (id, slot) in signal.iter_mut().enumerate() {
        if let Some(p) = tissue_table.get(id as u8) {
            *slot = Some(spin_echo_signal(p, seq)?);
        }
    }
    let (h, w) = (labels.height, labels.width);
    let mut data = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let l = labels.at(row, col);
            let s = signal
                .get(l as usize)
                .copied()
                .flatten()
                .ok_or_else(|| invalid!("no tissue parameters for label {l}"))?;
            data.push(Complex64::from_polar(s, phase.at(row, col, h, w)));
        }
    }
    Ok(ComplexImage::from_data(h, w, data))
}

/// Channel-first class maps (`classes x height x width`), either one-hot ground
/// truth or per-pixel probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMask {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl SegMask {
    pub fn plane(&self, class: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[class * n..(class + 1) * n]
    }

    /// Per-pixel argmax with ties resolved toward the lowest class index.
    pub fn argmax(&self) -> Vec<u8> {
        argmax_channels(&self.data, self.classes, self.height * self.width)
    }
}

pub(crate) fn argmax_channels<T: PartialOrd + Copy>(data: &[T], classes: usize, pixels: usize) -> Vec<u8> {
    (0..pixels)
        .map(|p| {
            let mut best = 0;
            for c in 1..classes {
                if data[c * pixels + p] > data[best * pixels + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

pub fn labels_to_onehot(labels: &LabelMap) -> Result<SegMask> {
    let n = labels.height * labels.width;
    let mut data = vec![0.0; NUM_CLASSES * n];
    for (p, &l) in labels.labels.iter().enumerate() {
        if l as usize >= NUM_CLASSES {
            return Err(invalid!("label {l} at pixel {p} outside 0..{NUM_CLASSES}"));
        }
        data[l as usize * n + p] = 1.0;
    }
    Ok(SegMask { classes: NUM_CLASSES, height: labels.height, width: labels.width, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wm() -> TissueParams {
        TissueTable::default().entries[3]
    }

    #[test]
    fn label_map_has_all_classes_and_is_deterministic() {
        let a = generate_label_map(7, 64, 64).unwrap();
        assert!(a.class_counts().iter().all(|&c| c > 0), "{:?}", a.class_counts());
        assert!(a.border_is_background());
        let b = generate_label_map(7, 64, 64).unwrap();
        assert_eq!(a, b);
        let c = generate_label_map(8, 64, 64).unwrap();
        assert_ne!(a.labels, c.labels);
    }

    #[test]
    fn label_map_rejects_small_dims() {
        assert!(matches!(generate_label_map(1, 31, 64), Err(Error::InvalidArgument(_))));
        assert!(matches!(generate_label_map(1, 64, 16), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sequence_params_stay_in_band() {
        for seed in 0..200 {
            let s = sample_sequence_params(seed);
            assert!((0.076..=0.084).contains(&s.te), "{s:?}");
            assert!((2.85..=3.15).contains(&s.tr), "{s:?}");
        }
        assert_eq!(sample_sequence_params(11), sample_sequence_params(11));
    }

    #[test]
    fn spin_echo_limits() {
        let p = TissueParams { tissue_id: 3, t1: 0.7, t2: 0.05, pd: 1.0 };
        let s = spin_echo_signal(&p, &SequenceParams { te: 0.0, tr: 1e9 }).unwrap();
        assert_eq!(s, 1.0);
        let p = TissueParams { pd: 0.8, ..p };
        let s = spin_echo_signal(&p, &SequenceParams { te: 1e6, tr: 3.0 }).unwrap();
        assert!(s.abs() < 1e-300);
    }

    #[test]
    fn spin_echo_reference_value() {
        // (1 - e^-3) e^-0.8, evaluated in extended precision.
        let p = TissueParams { tissue_id: 1, t1: 1.0, t2: 0.1, pd: 1.0 };
        let s = spin_echo_signal(&p, &SequenceParams { te: 0.08, tr: 3.0 }).unwrap();
        assert!((s - 0.426_958_192_261_055_98).abs() < 1e-12, "{s}");
    }

    #[test]
    fn spin_echo_rejects_nonpositive_relaxation() {
        let seq = SequenceParams { te: 0.08, tr: 3.0 };
        let bad = TissueParams { tissue_id: 1, t1: 0.0, t2: 0.1, pd: 1.0 };
        assert!(spin_echo_signal(&bad, &seq).is_err());
        let bad = TissueParams { tissue_id: 1, t1: 1.0, t2: -0.1, pd: 1.0 };
        assert!(spin_echo_signal(&bad, &seq).is_err());
    }

    #[test]
    fn spin_echo_monotone_in_te_and_tr() {
        let p = wm();
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let te = 0.001 + 0.003 * i as f64;
            let s = spin_echo_signal(&p, &SequenceParams { te, tr: 3.0 }).unwrap();
            assert!(s < prev);
            prev = s;
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..100 {
            let tr = 0.05 + 0.05 * i as f64;
            let s = spin_echo_signal(&p, &SequenceParams { te: 0.08, tr }).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn default_table_is_valid() {
        TissueTable::default().validate().unwrap();
        for p in &TissueTable::default().entries {
            assert!(p.t2 < p.t1);
        }
    }

    #[test]
    fn tissue_table_from_toml_overrides() {
        let t = TissueTable::from_toml_str(
            "[[tissue]]\nname = \"csf\"\nT1 = 3.0\nT2 = 0.5\nPD = 0.9\n",
        )
        .unwrap();
        assert_eq!(t.get(1).unwrap().t1, 3.0);
        assert_eq!(t.get(2), TissueTable::default().get(2));
        assert!(TissueTable::from_toml_str("[[tissue]]\nname = \"bone\"\nT1 = 1\nT2 = 0.1\nPD = 1\n").is_err());
        assert!(TissueTable::from_toml_str("[[tissue]]\nname = \"gm\"\nT1 = 0.1\nT2 = 0.2\nPD = 1\n").is_err());
    }

    #[test]
    fn zero_phase_gives_real_image() {
        let labels = generate_label_map(3, 40, 48).unwrap();
        let table = TissueTable::default();
        let seq = SequenceParams { te: 0.08, tr: 3.0 };
        let img = synthesize_with_phase(&labels, &table, &seq, &PhaseField::zero()).unwrap();
        for (p, v) in img.data.iter().enumerate() {
            assert_eq!(v.im, 0.0);
            let expected = spin_echo_signal(table.get(labels.labels[p]).unwrap(), &seq).unwrap();
            assert_eq!(v.re, expected);
        }
    }

    #[test]
    fn magnitude_matches_tissue_signal() {
        let labels = generate_label_map(5, 48, 48).unwrap();
        let table = TissueTable::default();
        let seq = sample_sequence_params(5);
        let img = synthesize_complex_image(&labels, &table, &seq, 99).unwrap();
        let wm_signal = spin_echo_signal(table.get(3).unwrap(), &seq).unwrap();
        let p = labels.labels.iter().position(|&l| l == 3).unwrap();
        assert!((img.data[p].norm() - wm_signal).abs() < 1e-14);
        assert_eq!(img, synthesize_complex_image(&labels, &table, &seq, 99).unwrap());
        assert!(img.data.iter().any(|v| v.im != 0.0));
    }

    #[test]
    fn missing_tissue_entry_is_rejected() {
        let labels = generate_label_map(5, 48, 48).unwrap();
        let mut table = TissueTable::default();
        table.entries.retain(|p| p.tissue_id != 2);
        let seq = SequenceParams { te: 0.08, tr: 3.0 };
        assert!(matches!(
            synthesize_complex_image(&labels, &table, &seq, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn onehot_partition_of_unity() {
        let labels = generate_label_map(9, 32, 40).unwrap();
        let onehot = labels_to_onehot(&labels).unwrap();
        let n = 32 * 40;
        for p in 0..n {
            let sum: f64 = (0..NUM_CLASSES).map(|c| onehot.data[c * n + p]).sum();
            assert_eq!(sum, 1.0);
        }
        assert_eq!(onehot.argmax(), labels.labels);

        let zeros = LabelMap::new(4, 4, vec![0; 16]).unwrap();
        let z = labels_to_onehot(&zeros).unwrap();
        assert!(z.plane(0).iter().all(|&v| v == 1.0));
        assert!((1..4).all(|c| z.plane(c).iter().all(|&v| v == 0.0)));

        let mut two = LabelMap::new(2, 2, vec![0, 2, 0, 0]).unwrap();
        let t = labels_to_onehot(&two).unwrap();
        assert_eq!([t.data[1], t.data[5], t.data[9], t.data[13]], [0.0, 0.0, 1.0, 0.0]);
        two.labels[3] = 4;
        assert!(labels_to_onehot(&two).is_err());
    }
}
