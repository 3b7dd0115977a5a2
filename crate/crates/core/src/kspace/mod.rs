//! Centered orthonormal 2D Fourier transforms, Cartesian under-sampling masks,
//! k-space noise, zero-filled reconstruction and hard data consistency.
//!
//! Grids are row-major `height x width`. The phase-encode axis is the width (second)
//! axis, so a sampling mask keeps or drops whole columns. The DC component of a
//! spectrum sits at `(height / 2, width / 2)`.

pub mod dataset;

pub use dataset::{
    build_dataset, build_sample, manifest_checksum, split_indices, write_dataset, DatasetSpec, DatasetStore, KSpaceSample,
    Manifest, Split,
};

use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::real::Real;

macro_rules! complex_grid {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T> {
            pub height: usize,
            pub width: usize,
            pub data: Vec<Complex<T>>,
        }

        impl<T: Real> $name<T> {
            pub fn zeros(height: usize, width: usize) -> Self {
                Self { height, width, data: vec![Complex::zero(); height * width] }
            }

            pub fn from_data(height: usize, width: usize, data: Vec<Complex<T>>) -> Self {
                assert_eq!(data.len(), height * width, "grid buffer size");
                Self { height, width, data }
            }

            /// Builds a grid from a channel-first `2 x height x width` buffer (real, imaginary).
            pub fn from_channels(height: usize, width: usize, channels: &[T]) -> Result<Self> {
                let n = height * width;
                if channels.len() != 2 * n {
                    return Err(invalid!(
                        "expected 2x{height}x{width} = {} values, got {}",
                        2 * n,
                        channels.len()
                    ));
                }
                let data = (0..n).map(|p| Complex::new(channels[p], channels[n + p])).collect();
                Ok(Self { height, width, data })
            }

            /// Channel-first `2 x height x width` layout (real plane then imaginary plane).
            pub fn to_channels(&self) -> Vec<T> {
                let mut out = Vec::with_capacity(2 * self.data.len());
                out.extend(self.data.iter().map(|c| c.re));
                out.extend(self.data.iter().map(|c| c.im));
                out
            }

            pub fn re(&self) -> Vec<T> {
                self.data.iter().map(|c| c.re).collect()
            }

            pub fn im(&self) -> Vec<T> {
                self.data.iter().map(|c| c.im).collect()
            }

            pub fn magnitude(&self) -> Vec<T> {
                self.data.iter().map(|c| c.norm()).collect()
            }

            /// Squared Euclidean norm over both channels, accumulated in `f64`.
            pub fn energy(&self) -> f64 {
                self.data.iter().map(|c| c.norm_sqr().to_f64_lossy()).sum()
            }

            pub fn max_abs_diff(&self, other: &Self) -> T {
                assert_eq!((self.height, self.width), (other.height, other.width));
                self.data
                    .iter()
                    .zip(&other.data)
                    .map(|(a, b)| (a.re - b.re).abs().max((a.im - b.im).abs()))
                    .fold(T::zero(), T::max)
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            }

            pub fn cast<U: Real>(&self) -> $name<U> {
                $name {
                    height: self.height,
                    width: self.width,
                    data: self
                        .data
                        .iter()
                        .map(|c| Complex::new(U::lit(c.re.to_f64_lossy()), U::lit(c.im.to_f64_lossy())))
                        .collect(),
                }
            }

            pub fn scale(&mut self, factor: T) {
                for c in self.data.iter_mut() {
                    *c = *c * factor;
                }
            }
        }
    };
}

complex_grid!(
    /// Image-domain complex data (the 2-channel real/imaginary image).
    ComplexImage
);
complex_grid!(
    /// Frequency-domain data with the DC component at the grid center.
    KSpaceGrid
);

/// Planned centered orthonormal 2D FFT for a fixed grid size.
pub struct CenteredFft2<T: Real> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> CenteredFft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            scale: T::one() / T::lit(((height * width) as f64).sqrt()),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.row_inv, &self.col_inv);
    }

    /// ifftshift -> FFT -> fftshift along each axis, then orthonormal scaling.
    fn transform(&self, data: &mut [Complex<T>], rows: &Arc<dyn Fft<T>>, cols: &Arc<dyn Fft<T>>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(data.len(), h * w, "fft buffer size");
        let mut buf = vec![Complex::zero(); h.max(w)];
        let mut scratch =
            vec![Complex::zero(); rows.get_inplace_scratch_len().max(cols.get_inplace_scratch_len())];

        for r in 0..h {
            let row = &mut data[r * w..(r + 1) * w];
            let line = &mut buf[..w];
            for (j, v) in line.iter_mut().enumerate() {
                *v = row[(j + w / 2) % w];
            }
            rows.process_with_scratch(line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                row[(j + w / 2) % w] = *v;
            }
        }
        for c in 0..w {
            let line = &mut buf[..h];
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[((i + h / 2) % h) * w + c];
            }
            cols.process_with_scratch(line, &mut scratch);
            for (i, v) in line.iter().enumerate() {
                data[((i + h / 2) % h) * w + c] = *v * self.scale;
            }
        }
    }
}

pub fn fft2c<T: Real>(x: &ComplexImage<T>) -> KSpaceGrid<T> {
    let mut data = x.data.clone();
    CenteredFft2::new(x.height, x.width).forward(&mut data);
    KSpaceGrid { height: x.height, width: x.width, data }
}

pub fn ifft2c<T: Real>(k: &KSpaceGrid<T>) -> ComplexImage<T> {
    let mut data = k.data.clone();
    CenteredFft2::new(k.height, k.width).inverse(&mut data);
    ComplexImage { height: k.height, width: k.width, data }
}

/// Set of kept phase-encode lines (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub kept_lines: Vec<bool>,
    pub rate: f64,
    pub center_lines: usize,
    pub seed: u64,
}

impl SamplingMask {
    pub fn full(width: usize) -> Self {
        Self { kept_lines: vec![true; width], rate: 1.0, center_lines: width, seed: 0 }
    }

    pub fn empty(width: usize) -> Self {
        Self { kept_lines: vec![false; width], rate: 0.0, center_lines: 0, seed: 0 }
    }

    pub fn width(&self) -> usize {
        self.kept_lines.len()
    }

    pub fn count(&self) -> usize {
        self.kept_lines.iter().filter(|&&k| k).count()
    }

    /// Row-major `height x width` boolean grid, constant along the rows' axis.
    pub fn expand(&self, height: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(height * self.width());
        for _ in 0..height {
            out.extend_from_slice(&self.kept_lines);
        }
        out
    }
}

/// First column of the centered block of `center_lines` columns.
pub fn center_block_start(width: usize, center_lines: usize) -> usize {
    (width / 2).saturating_sub(center_lines / 2)
}

/// Pseudo-random Cartesian mask: a fully sampled center block plus lines drawn
/// without replacement with probability proportional to a zero-mean Gaussian
/// density over the distance from the center (`sigma = width / 6`).
pub fn make_cartesian_mask(width: usize, rate: f64, center_lines: usize, seed: u64) -> Result<SamplingMask> {
    if width == 0 {
        return Err(invalid!("mask width must be positive"));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(invalid!("sampling rate {rate} outside (0, 1]"));
    }
    let n_keep = (rate * width as f64).round() as usize;
    if n_keep < center_lines || center_lines > width {
        return Err(invalid!(
            "round({rate} * {width}) = {n_keep} kept lines cannot hold {center_lines} center lines"
        ));
    }
    let mut kept = vec![false; width];
    let start = center_block_start(width, center_lines);
    for k in kept.iter_mut().skip(start).take(center_lines) {
        *k = true;
    }

    // Weighted sampling without replacement (Efraimidis–Spirakis keys ln(u) / w).
    let sigma = width as f64 / 6.0;
    let center = (width / 2) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize)> = (0..width)
        .filter(|&j| !kept[j])
        .map(|j| {
            let d = j as f64 - center;
            let weight = (-(d * d) / (2.0 * sigma * sigma)).exp();
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / weight, j)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, j) in keyed.iter().take(n_keep - center_lines) {
        kept[j] = true;
    }
    Ok(SamplingMask { kept_lines: kept, rate, center_lines, seed })
}

pub fn rms_magnitude<T: Real>(k: &KSpaceGrid<T>) -> T {
    if k.data.is_empty() {
        return T::zero();
    }
    T::lit((k.energy() / k.data.len() as f64).sqrt())
}

/// Adds complex white Gaussian noise with per-component standard deviation
/// `noise_level * RMS(|k|) / sqrt(2)` to every entry.
pub fn add_kspace_noise<T: Real>(k: &KSpaceGrid<T>, noise_level: f64, noise_seed: u64) -> Result<KSpaceGrid<T>> {
    if !(noise_level >= 0.0) || !noise_level.is_finite() {
        return Err(invalid!("noise level {noise_level} must be a finite non-negative fraction"));
    }
    let mut out = k.clone();
    if noise_level == 0.0 {
        return Ok(out);
    }
    let sigma = noise_level * rms_magnitude(k).to_f64_lossy() / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    for c in out.data.iter_mut() {
        let nr: f64 = StandardNormal.sample(&mut rng);
        let ni: f64 = StandardNormal.sample(&mut rng);
        c.re += T::lit(sigma * nr);
        c.im += T::lit(sigma * ni);
    }
    Ok(out)
}

/// Zeroes every unsampled phase-encode line.
pub fn apply_mask<T: Real>(k: &KSpaceGrid<T>, mask: &SamplingMask) -> Result<KSpaceGrid<T>> {
    if mask.width() != k.width {
        return Err(invalid!("mask width {} does not match k-space width {}", mask.width(), k.width));
    }
    let mut out = k.clone();
    for row in out.data.chunks_mut(k.width) {
        for (v, &keep) in row.iter_mut().zip(&mask.kept_lines) {
            if !keep {
                *v = Complex::zero();
            }
        }
    }
    Ok(out)
}

/// Noise on the full grid first, then retrospective under-sampling.
pub fn corrupt_and_undersample<T: Real>(
    k_full: &KSpaceGrid<T>,
    mask: &SamplingMask,
    noise_level: f64,
    noise_seed: u64,
) -> Result<KSpaceGrid<T>> {
    apply_mask(&add_kspace_noise(k_full, noise_level, noise_seed)?, mask)
}

pub fn zero_fill<T: Real>(y: &KSpaceGrid<T>) -> ComplexImage<T> {
    ifft2c(y)
}

/// Hard data-consistency projection bound to one measurement.
///
/// `apply` computes `ifft2c(m * y + (1 - m) * fft2c(x))`. The map is affine in `x`;
/// its linear part `ifft2c((1 - m) * fft2c(.))` is self-adjoint and is what
/// [`DcOperator::project_unmeasured`] applies (used for back-propagation).
pub struct DcOperator<T: Real> {
    fft: CenteredFft2<T>,
    measured: Vec<Complex<T>>,
    keep: Vec<bool>,
}

impl<T: Real> DcOperator<T> {
    pub fn new(y: &KSpaceGrid<T>, mask: &SamplingMask) -> Result<Self> {
        if mask.width() != y.width {
            return Err(invalid!("mask width {} does not match k-space width {}", mask.width(), y.width));
        }
        Ok(Self {
            fft: CenteredFft2::new(y.height, y.width),
            measured: y.data.clone(),
            keep: mask.expand(y.height),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.fft.shape()
    }

    pub fn measured(&self) -> &[Complex<T>] {
        &self.measured
    }

    pub fn fft(&self) -> &CenteredFft2<T> {
        &self.fft
    }

    pub fn apply_in_place(&self, x: &mut [Complex<T>]) {
        self.fft.forward(x);
        for ((v, &keep), &m) in x.iter_mut().zip(&self.keep).zip(&self.measured) {
            if keep {
                *v = m;
            }
        }
        self.fft.inverse(x);
    }

    pub fn project_unmeasured(&self, g: &mut [Complex<T>]) {
        self.fft.forward(g);
        for (v, &keep) in g.iter_mut().zip(&self.keep) {
            if keep {
                *v = Complex::zero();
            }
        }
        self.fft.inverse(g);
    }

    /// Same as `apply_in_place` on a channel-first `2 x H x W` buffer.
    pub fn apply_channels(&self, channels: &[T]) -> Vec<T> {
        self.map_channels(channels, |op, buf| op.apply_in_place(buf))
    }

    pub fn project_unmeasured_channels(&self, channels: &[T]) -> Vec<T> {
        self.map_channels(channels, |op, buf| op.project_unmeasured(buf))
    }

    fn map_channels(&self, channels: &[T], f: impl Fn(&Self, &mut [Complex<T>])) -> Vec<T> {
        let n = self.keep.len();
        assert_eq!(channels.len(), 2 * n, "DC input must be 2 x H x W");
        let mut buf: Vec<Complex<T>> = (0..n).map(|p| Complex::new(channels[p], channels[n + p])).collect();
        f(self, &mut buf);
        let mut out = Vec::with_capacity(2 * n);
        out.extend(buf.iter().map(|c| c.re));
        out.extend(buf.iter().map(|c| c.im));
        out
    }
}

pub fn data_consistency<T: Real>(
    x: &ComplexImage<T>,
    y: &KSpaceGrid<T>,
    mask: &SamplingMask,
) -> Result<ComplexImage<T>> {
    if (x.height, x.width) != (y.height, y.width) {
        return Err(invalid!(
            "image {}x{} and k-space {}x{} differ in shape",
            x.height,
            x.width,
            y.height,
            y.width
        ));
    }
    let op = DcOperator::new(y, mask)?;
    let mut data = x.data.clone();
    op.apply_in_place(&mut data);
    Ok(ComplexImage { height: x.height, width: x.width, data })
}

/// Divides the image by its maximum magnitude (no-op for an all-zero image).
pub fn normalize_max_magnitude<T: Real>(x: &ComplexImage<T>) -> ComplexImage<T> {
    let peak = x.data.iter().map(|c| c.norm()).fold(T::zero(), T::max);
    let mut out = x.clone();
    if peak > T::zero() {
        for c in out.data.iter_mut() {
            *c = *c / peak;
        }
    }
    out
}
