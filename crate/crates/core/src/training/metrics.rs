use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::Tensor;
use crate::phantom::{argmax_channels, SegMask, NUM_CLASSES};
use crate::real::Real;

/// Dice scores of the three foreground tissues and their arithmetic mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiceScores {
    pub csf: f64,
    pub gm: f64,
    pub wm: f64,
    pub average: f64,
}

impl DiceScores {
    pub fn new(csf: f64, gm: f64, wm: f64) -> Self {
        Self { csf, gm, wm, average: (csf + gm + wm) / 3.0 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.csf, self.gm, self.wm, self.average]
    }

    /// Per-class arithmetic mean over slices; the average column is the mean of the
    /// per-slice averages.
    pub fn mean(scores: &[DiceScores]) -> Option<DiceScores> {
        if scores.is_empty() {
            return None;
        }
        let n = scores.len() as f64;
        let sum = |f: fn(&DiceScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        Some(DiceScores { csf: sum(|d| d.csf), gm: sum(|d| d.gm), wm: sum(|d| d.wm), average: sum(|d| d.average) })
    }

    pub fn all_in_unit_interval(&self) -> bool {
        self.as_array().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// `2|A n B| / (|A| + |B|)`, 1 when both sets are empty.
pub fn dice_coefficient(a: &[u8], b: &[u8], class: u8) -> f64 {
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (ia, ib) = (x == class, y == class);
        na += ia as usize;
        nb += ib as usize;
        inter += (ia && ib) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// Dice of two hard label maps over CSF, GM and WM.
pub fn dice_from_labels(pred: &[u8], gt: &[u8]) -> Result<DiceScores> {
    if pred.len() != gt.len() {
        return Err(invalid!("label maps have {} and {} pixels", pred.len(), gt.len()));
    }
    Ok(DiceScores::new(dice_coefficient(pred, gt, 1), dice_coefficient(pred, gt, 2), dice_coefficient(pred, gt, 3)))
}

/// Hard labels from a `classes x H x W` probability map; ties go to the lowest class.
pub fn hard_labels<T: Real>(probs: &Tensor<T>) -> Vec<u8> {
    let (c, h, w) = probs.chw();
    argmax_channels(probs.data(), c, h * w)
}

pub fn dice_scores<T: Real>(pred: &Tensor<T>, gt: &SegMask) -> Result<DiceScores> {
    let (c, h, w) = pred.chw();
    if c != NUM_CLASSES || gt.classes != NUM_CLASSES || (h, w) != (gt.height, gt.width) {
        return Err(invalid!(
            "prediction {c}x{h}x{w} and ground truth {}x{}x{} differ",
            gt.classes,
            gt.height,
            gt.width
        ));
    }
    dice_from_labels(&hard_labels(pred), &gt.argmax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identities() {
        let a = [0u8, 1, 1, 2, 2, 3, 3, 0];
        assert_eq!(dice_from_labels(&a, &a).unwrap(), DiceScores::new(1.0, 1.0, 1.0));
        let b = [0u8, 0, 0, 0, 1, 1, 0, 0];
        let c = [0u8, 1, 1, 0, 0, 0, 0, 0];
        assert_eq!(dice_coefficient(&b, &c, 1), 0.0);
        let d = [1u8, 1, 1, 1, 0, 0, 0, 0];
        let e = [0u8, 0, 1, 1, 1, 1, 0, 0];
        assert_eq!(dice_coefficient(&d, &e, 1), 0.5);
        assert_eq!(dice_coefficient(&d, &e, 3), 1.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let p = Tensor::from_vec(&[4, 1, 2], vec![0.25, 0.1, 0.25, 0.4, 0.25, 0.4, 0.25, 0.1]);
        assert_eq!(hard_labels(&p), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(0u8..4, 1..200), seed in 0u8..4) {
            let b: Vec<u8> = a.iter().map(|&v| (v + seed) % 4).collect();
            let ab = dice_from_labels(&a, &b).unwrap();
            let ba = dice_from_labels(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.all_in_unit_interval());
            let aa = dice_from_labels(&a, &a).unwrap();
            prop_assert_eq!(aa.average, 1.0);
            if seed != 0 {
                prop_assert!(ab.average < 1.0);
            }
        }
    }
}
