use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ModelConfig;
use crate::training::{DiceScores, EpochLog, Evaluation, LossVariant, TrainConfig};

pub const RUN_FORMAT: &str = "seranet-run";

/// Dataset facts recorded with every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    pub manifest_sha256: String,
    pub noise_level: f64,
    pub height: usize,
    pub width: usize,
    pub train_records: usize,
    pub test_records: usize,
}

/// Machine-readable record of one training run (`metrics.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub format: String,
    pub label: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetInfo,
    pub parameters: usize,
    pub epochs: Vec<EpochLog>,
    pub train_dice: DiceScores,
    pub test_dice: Option<DiceScores>,
    /// Number of fully sampled images read from disk during the run.
    pub x_full_reads: usize,
    pub checkpoint_sha256: String,
}

impl RunMetrics {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunMetrics = serde_json::from_str(&text)?;
        if m.format != RUN_FORMAT {
            return Err(Error::Corrupt { path: path.to_path_buf(), reason: format!("unexpected format {}", m.format) });
        }
        Ok(m)
    }

    /// Row label in comparison tables, e.g. `SERANet-2 (A)`.
    pub fn method_name(&self) -> String {
        let m = &self.model;
        match m.model_kind {
            crate::network::ModelKind::OneStep => m.model_kind.display_name().to_string(),
            k => format!("{}-{} ({})", k.display_name(), m.n_blocks, m.reg_type),
        }
    }
}

/// Machine-readable evaluation output (`eval.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub checkpoint_sha256: String,
    pub split: String,
    pub model: ModelConfig,
    pub dataset: DatasetInfo,
    pub evaluation: Evaluation,
}

pub const DICE_COLUMNS: [&str; 4] = ["CSF", "GM", "WM", "Aver."];

/// Fixed-width table with a method column followed by CSF, GM, WM and Aver.
pub fn dice_table(title: &str, rows: &[(String, Option<DiceScores>)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    writeln!(s, "{title}").unwrap();
    write!(s, "{:<name_w$}", "Method").unwrap();
    for c in DICE_COLUMNS {
        write!(s, " {c:>7}").unwrap();
    }
    s.push('\n');
    for (name, dice) in rows {
        write!(s, "{name:<name_w$}").unwrap();
        match dice {
            Some(d) => d.as_array().iter().for_each(|v| write!(s, " {v:>7.4}").unwrap()),
            None => DICE_COLUMNS.iter().for_each(|_| write!(s, " {:>7}", "-").unwrap()),
        }
        s.push('\n');
    }
    s
}

/// Text table of a single run.
pub fn run_table(m: &RunMetrics) -> String {
    let mut rows = vec![(format!("{} train", m.method_name()), Some(m.train_dice))];
    rows.push((format!("{} test", m.method_name()), m.test_dice));
    dice_table(
        &format!("{} | loss {} | noise {:.0}%", m.label, m.train.loss_variant, 100.0 * m.dataset.noise_level),
        &rows,
    )
}

struct Reported {
    name: &'static str,
    /// CSF, GM, WM, Aver. at 10% and at 20% noise.
    ten: [f64; 4],
    twenty: [f64; 4],
}

/// Loss ablation, columns CSF, GM, WM, Aver.
const LOSS_ROWS: [Reported; 3] = [
    Reported { name: "ce_l2", ten: [0.8048, 0.8841, 0.8518, 0.8469], twenty: [0.7995, 0.8751, 0.8092, 0.8279] },
    Reported { name: "ce_sum", ten: [0.8513, 0.9082, 0.8796, 0.8797], twenty: [0.8041, 0.8733, 0.8283, 0.8352] },
    Reported { name: "ce", ten: [0.8482, 0.9102, 0.8814, 0.8799], twenty: [0.8083, 0.8762, 0.8415, 0.8423] },
];

/// Method comparison, published with columns CSF, WM, GM, Aver.; stored here
/// reordered to CSF, GM, WM, Aver. following those column labels.
const METHOD_ROWS: [Reported; 6] = [
    Reported { name: "One-step", ten: [0.7677, 0.7900, 0.8334, 0.7970], twenty: [0.7600, 0.7911, 0.8324, 0.7945] },
    Reported { name: "LI-net", ten: [0.6849, 0.7558, 0.7576, 0.7328], twenty: [0.6686, 0.7282, 0.7276, 0.7081] },
    Reported { name: "Syn-net", ten: [0.7558, 0.7961, 0.8256, 0.7925], twenty: [0.7307, 0.7808, 0.8095, 0.7737] },
    Reported { name: "SegNetMRI", ten: [0.8210, 0.8575, 0.8905, 0.8563], twenty: [0.7817, 0.7728, 0.8472, 0.8006] },
    Reported { name: "SERANet-2", ten: [0.8344, 0.8669, 0.8977, 0.8663], twenty: [0.8053, 0.8373, 0.8706, 0.8377] },
    Reported { name: "SERANet-7", ten: [0.8548, 0.8905, 0.9175, 0.8876], twenty: [0.8122, 0.8457, 0.8798, 0.8459] },
];

fn reported_section(title: &str, rows: &[Reported]) -> String {
    let mut s = String::new();
    writeln!(s, "{title}").unwrap();
    write!(s, "{:<10}", "Method").unwrap();
    for noise in ["10%", "20%"] {
        for c in DICE_COLUMNS {
            write!(s, " {:>11}", format!("{c}@{noise}")).unwrap();
        }
    }
    s.push('\n');
    for r in rows {
        write!(s, "{:<10}", r.name).unwrap();
        for v in r.ten.iter().chain(&r.twenty) {
            write!(s, " {v:>11.4}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Published reference values, byte-identical on every invocation.
pub fn published_reference_block() -> String {
    let mut s = String::from("=== paper-reported, not reproduced ===\n");
    s.push_str(&reported_section("Loss ablation (SERANet)", &LOSS_ROWS));
    s.push('\n');
    s.push_str(&reported_section("Method comparison", &METHOD_ROWS));
    s.push_str("=== end paper-reported ===\n");
    s
}

/// Published value for a loss-ablation row, if any.
pub fn reported_loss_average(variant: LossVariant, noise_percent: u32) -> Option<f64> {
    let row = LOSS_ROWS.iter().find(|r| r.name == variant.short_name())?;
    match noise_percent {
        10 => Some(row.ten[3]),
        20 => Some(row.twenty[3]),
        _ => None,
    }
}

/// Published value for a method-comparison row, if any.
pub fn reported_method_average(name: &str, noise_percent: u32) -> Option<f64> {
    let row = METHOD_ROWS.iter().find(|r| r.name == name)?;
    match noise_percent {
        10 => Some(row.ten[3]),
        20 => Some(row.twenty[3]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_averages() {
        assert_eq!(reported_method_average("SERANet-7", 10), Some(0.8876));
        assert_eq!(reported_method_average("SegNetMRI", 10), Some(0.8563));
        assert_eq!(reported_loss_average(LossVariant::CeFinal, 10), Some(0.8799));
        assert_eq!(reported_loss_average(LossVariant::CePlusL2, 20), Some(0.8279));
        assert_eq!(reported_method_average("SERANet-7", 15), None);
    }

    #[test]
    fn reported_block_is_stable_and_labeled() {
        let a = published_reference_block();
        assert_eq!(a, published_reference_block());
        assert!(a.starts_with("=== paper-reported, not reproduced ==="));
        assert!(a.contains("0.8876") && a.contains("0.8563"));
    }

    #[test]
    fn table_layout() {
        let t = dice_table("t", &[("x".into(), Some(DiceScores::new(1.0, 0.5, 0.0))), ("y".into(), None)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), ["Method", "CSF", "GM", "WM", "Aver."]);
        assert!(lines[2].contains("1.0000") && lines[2].contains("0.5000"));
        assert!(lines[3].contains('-'));
    }
}
