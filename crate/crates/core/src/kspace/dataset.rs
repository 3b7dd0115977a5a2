//! Synthetic training data: phantom -> spin-echo image -> k-space -> noise -> mask,
//! and the on-disk dataset container.
//!
//! Container layout (one directory per dataset):
//!
//! ```text
//! manifest.json                  human-readable record listing
//! records/NNNNN.y.f32            2 x H x W float32 LE, under-sampled noisy k-space
//! records/NNNNN.x_full.f32       2 x H x W float32 LE, fully sampled (noisy) image
//! records/NNNNN.labels.u8        H x W uint8 tissue labels
//! records/NNNNN.mask.u8          W uint8 (0/1) kept phase-encode lines
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    add_kspace_noise, apply_mask, fft2c, ifft2c, make_cartesian_mask, normalize_max_magnitude, ComplexImage,
    KSpaceGrid, SamplingMask,
};
use crate::error::{invalid, Error, Result};
use crate::phantom::{
    generate_label_map, labels_to_onehot, sample_sequence_params, synthesize_complex_image, LabelMap, SegMask,
    TissueTable,
};
use crate::real::mix_seed;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_NAME: &str = "seranet-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Generation parameters of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub train_brains: usize,
    pub test_brains: usize,
    pub slices_per_brain: usize,
    pub height: usize,
    pub width: usize,
    pub rate: f64,
    pub center_lines: usize,
    pub noise_level: f64,
    pub seed: u64,
    pub tissue_table: TissueTable,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            train_brains: 17,
            test_brains: 3,
            slices_per_brain: 57,
            height: 180,
            width: 216,
            rate: 0.30,
            center_lines: 16,
            noise_level: 0.10,
            seed: 0,
            tissue_table: TissueTable::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_brains + self.test_brains == 0 || self.slices_per_brain == 0 {
            return Err(invalid!("dataset needs at least one brain and one slice per brain"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(invalid!("noise level {} must be non-negative", self.noise_level));
        }
        self.tissue_table.validate()?;
        // Surface mask and phantom precondition failures before any work is done.
        make_cartesian_mask(self.width, self.rate, self.center_lines, 0)?;
        generate_label_map(0, self.height, self.width)?;
        Ok(())
    }

    pub fn brain_split(&self, brain_id: usize) -> Split {
        if brain_id < self.train_brains {
            Split::Train
        } else {
            Split::Test
        }
    }

    pub fn total_records(&self) -> usize {
        (self.train_brains + self.test_brains) * self.slices_per_brain
    }
}

/// Seeds used to produce one record, all derived from `(master seed, brain, slice)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSeeds {
    pub phantom: u64,
    pub sequence: u64,
    pub phase: u64,
    pub mask: u64,
    pub noise: u64,
}

impl RecordSeeds {
    pub fn derive(master: u64, brain_id: usize, slice_id: usize) -> Self {
        let base = [master, brain_id as u64, slice_id as u64];
        let stream = |tag: u64| mix_seed(&[base[0], base[1], base[2], tag]);
        Self { phantom: stream(1), sequence: stream(2), phase: stream(3), mask: stream(4), noise: stream(5) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    pub brain_id: usize,
    pub slice_id: usize,
    pub split: Split,
    pub te: f64,
    pub tr: f64,
    pub seeds: RecordSeeds,
}

/// One training record. `x_full` is the image of the fully sampled, noisy k-space;
/// it is only needed by reconstruction-loss training and for visualization.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceSample {
    pub y: KSpaceGrid<f32>,
    pub mask: SamplingMask,
    pub labels: LabelMap,
    pub x_full: Option<ComplexImage<f32>>,
    pub noise_level: f64,
    pub meta: SampleMeta,
}

impl KSpaceSample {
    pub fn seg_gt(&self) -> SegMask {
        labels_to_onehot(&self.labels).expect("labels validated at construction")
    }

    pub fn x_full(&self) -> Result<&ComplexImage<f32>> {
        self.x_full
            .as_ref()
            .ok_or_else(|| invalid!("record {} was loaded without its fully sampled image", self.meta.index))
    }
}

/// Generates one slice of one brain.
pub fn build_sample(spec: &DatasetSpec, brain_id: usize, slice_id: usize, index: usize) -> Result<KSpaceSample> {
    let seeds = RecordSeeds::derive(spec.seed, brain_id, slice_id);
    let mut labels = generate_label_map(seeds.phantom, spec.height, spec.width)?;
    labels.brain_id = brain_id as u32;
    labels.slice_id = slice_id as u32;
    let seq = sample_sequence_params(seeds.sequence);
    let image = synthesize_complex_image(&labels, &spec.tissue_table, &seq, seeds.phase)?;
    let image = normalize_max_magnitude(&image);
    let k_full = fft2c(&image);
    let mask = make_cartesian_mask(spec.width, spec.rate, spec.center_lines, seeds.mask)?;
    let k_noisy = add_kspace_noise(&k_full, spec.noise_level, seeds.noise)?;
    let y = apply_mask(&k_noisy, &mask)?;
    let x_full = ifft2c(&k_noisy);
    Ok(KSpaceSample {
        y: y.cast(),
        mask,
        labels,
        x_full: Some(x_full.cast()),
        noise_level: spec.noise_level,
        meta: SampleMeta {
            index,
            brain_id,
            slice_id,
            split: spec.brain_split(brain_id),
            te: seq.te,
            tr: seq.tr,
            seeds,
        },
    })
}

/// Builds every record, brain-major. Slices are generated in parallel; each one
/// depends only on its own derived seeds.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Vec<KSpaceSample>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.train_brains + spec.test_brains)
        .flat_map(|b| (0..spec.slices_per_brain).map(move |s| (b, s)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(index, &(b, s))| build_sample(spec, b, s, index))
        .collect()
}

/// Indices of records belonging to a split.
pub fn split_indices(samples: &[KSpaceSample], split: Split) -> Vec<usize> {
    samples.iter().enumerate().filter(|(_, s)| s.meta.split == split).map(|(i, _)| i).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordFiles {
    pub y: String,
    pub x_full: String,
    pub labels: String,
    pub mask: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(flatten)]
    pub meta: SampleMeta,
    pub kept_lines: usize,
    pub files: RecordFiles,
    pub sha256: RecordFiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_records: usize,
    pub test_records: usize,
    pub train_brains: Vec<usize>,
    pub test_brains: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub label_dtype: String,
    pub mask_dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub spec: DatasetSpec,
    pub splits: SplitSummary,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.meta.split == split)
    }
}

fn f32_le_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn f32_from_le(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Corrupt { path: path.into(), reason: "length not a multiple of 4".into() });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a dataset container. The directory must not exist or must be empty.
pub fn write_dataset(dir: &Path, spec: &DatasetSpec, samples: &[KSpaceSample]) -> Result<Manifest> {
    let records_dir = dir.join("records");
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let stem = format!("{:05}", s.meta.index);
        let files = RecordFiles {
            y: format!("records/{stem}.y.f32"),
            x_full: format!("records/{stem}.x_full.f32"),
            labels: format!("records/{stem}.labels.u8"),
            mask: format!("records/{stem}.mask.u8"),
        };
        let y = f32_le_bytes(&s.y.to_channels());
        let x = f32_le_bytes(&s.x_full()?.to_channels());
        let labels = s.labels.labels.clone();
        let mask: Vec<u8> = s.mask.kept_lines.iter().map(|&k| k as u8).collect();
        let sha256 = RecordFiles {
            y: sha256_hex(&y),
            x_full: sha256_hex(&x),
            labels: sha256_hex(&labels),
            mask: sha256_hex(&mask),
        };
        write_file(&dir.join(&files.y), &y)?;
        write_file(&dir.join(&files.x_full), &x)?;
        write_file(&dir.join(&files.labels), &labels)?;
        write_file(&dir.join(&files.mask), &mask)?;
        records.push(ManifestRecord { meta: s.meta.clone(), kept_lines: s.mask.count(), files, sha256 });
    }
    let brains = |split| {
        let mut ids: Vec<usize> = samples.iter().filter(|s| s.meta.split == split).map(|s| s.meta.brain_id).collect();
        ids.dedup();
        ids
    };
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        dtype: "float32".into(),
        label_dtype: "uint8".into(),
        mask_dtype: "uint8".into(),
        byte_order: "little-endian".into(),
        layout: "channel-first 2 x height x width (real, imaginary); row-major".into(),
        spec: spec.clone(),
        splits: SplitSummary {
            train_records: samples.iter().filter(|s| s.meta.split == Split::Train).count(),
            test_records: samples.iter().filter(|s| s.meta.split == Split::Test).count(),
            train_brains: brains(Split::Train),
            test_brains: brains(Split::Test),
        },
        records,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(manifest)
}

/// Read access to a dataset container. Records are loaded on demand; reads of the
/// fully sampled image are counted so callers can prove a run never touched it.
pub struct DatasetStore {
    dir: PathBuf,
    manifest: Manifest,
    x_full_reads: AtomicUsize,
}

impl DatasetStore {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != FORMAT_NAME || manifest.version != FORMAT_VERSION {
            return Err(Error::Corrupt {
                path,
                reason: format!("unsupported format {} v{}", manifest.format, manifest.version),
            });
        }
        if manifest.dtype != "float32" || manifest.byte_order != "little-endian" {
            return Err(Error::Corrupt { path, reason: "expected little-endian float32 arrays".into() });
        }
        Ok(Self { dir: dir.to_path_buf(), manifest, x_full_reads: AtomicUsize::new(0) })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn x_full_reads(&self) -> usize {
        self.x_full_reads.load(Ordering::SeqCst)
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.manifest.records.iter().enumerate().filter(|(_, r)| r.meta.split == split).map(|(i, _)| i).collect()
    }

    fn read(&self, rel: &str, expected_sha: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != expected_sha {
            return Err(Error::Corrupt { path, reason: "checksum mismatch".into() });
        }
        Ok(bytes)
    }

    /// Loads record `index`; the fully sampled image is read only when requested.
    pub fn load(&self, index: usize, with_x_full: bool) -> Result<KSpaceSample> {
        let rec = self
            .manifest
            .records
            .get(index)
            .ok_or_else(|| invalid!("record {index} out of range (dataset has {})", self.len()))?;
        let (h, w) = (self.manifest.spec.height, self.manifest.spec.width);
        let y_path = self.dir.join(&rec.files.y);
        let y = KSpaceGrid::from_channels(h, w, &f32_from_le(&self.read(&rec.files.y, &rec.sha256.y)?, &y_path)?)?;
        let labels = self.read(&rec.files.labels, &rec.sha256.labels)?;
        let mut labels = LabelMap::new(h, w, labels)?;
        labels.brain_id = rec.meta.brain_id as u32;
        labels.slice_id = rec.meta.slice_id as u32;
        labels.seed = rec.meta.seeds.phantom;
        labels_to_onehot(&labels)?;
        let kept: Vec<bool> = self.read(&rec.files.mask, &rec.sha256.mask)?.into_iter().map(|b| b != 0).collect();
        if kept.len() != w {
            return Err(Error::Corrupt { path: self.dir.join(&rec.files.mask), reason: "mask length".into() });
        }
        let spec = &self.manifest.spec;
        let mask =
            SamplingMask { kept_lines: kept, rate: spec.rate, center_lines: spec.center_lines, seed: rec.meta.seeds.mask };
        let x_full = if with_x_full {
            self.x_full_reads.fetch_add(1, Ordering::SeqCst);
            let path = self.dir.join(&rec.files.x_full);
            let values = f32_from_le(&self.read(&rec.files.x_full, &rec.sha256.x_full)?, &path)?;
            Some(ComplexImage::from_channels(h, w, &values)?)
        } else {
            None
        };
        Ok(KSpaceSample { y, mask, labels, x_full, noise_level: spec.noise_level, meta: rec.meta.clone() })
    }
}

/// SHA-256 of the manifest file, a cheap fingerprint of the whole container.
pub fn manifest_checksum(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(sha256_hex(&bytes))
}
