//! Confusion-matrix metrics: per-class IoU and Dice, their means, and pixel
//! accuracy. Counts stay integral until the final division.

use std::fmt::Write as _;
use std::ops::AddAssign;

use crate::error::{data_err, Result};

/// `counts[g * C + p]` = pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Ground-truth pixels of class `c`.
    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    /// Predicted pixels of class `c`.
    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, c)).sum()
    }

    pub fn accumulate(&mut self, pred: &[u8], truth: &[u8]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(data_err!(
                "prediction has {} pixels, ground truth {}",
                pred.len(),
                truth.len()
            ));
        }
        let k = self.classes;
        if let Some(bad) = pred.iter().chain(truth).find(|&&v| usize::from(v) >= k) {
            return Err(data_err!("class index {bad} out of range for {k} classes"));
        }
        for (&p, &g) in pred.iter().zip(truth) {
            self.counts[usize::from(g) * k + usize::from(p)] += 1;
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)` as an exact fraction; `None` when the class is
    /// absent from both prediction and truth.
    pub fn iou_fraction(&self, c: usize) -> Option<(u64, u64)> {
        let tp = self.get(c, c);
        let den = self.row_sum(c) + self.col_sum(c) - tp;
        (den > 0).then_some((tp, den))
    }

    /// `2·TP / (|pred| + |truth|)` as an exact fraction.
    pub fn dice_fraction(&self, c: usize) -> Option<(u64, u64)> {
        let den = self.row_sum(c) + self.col_sum(c);
        (den > 0).then_some((2 * self.get(c, c), den))
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }

    pub fn report(&self) -> EvalReport {
        let ratio = |f: Option<(u64, u64)>| f.map(|(a, b)| a as f64 / b as f64);
        let iou: Vec<_> = (0..self.classes).map(|c| ratio(self.iou_fraction(c))).collect();
        let dice: Vec<_> = (0..self.classes).map(|c| ratio(self.dice_fraction(c))).collect();
        let mean = |v: &[Option<f64>]| {
            let present: Vec<f64> = v.iter().flatten().copied().collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        };
        EvalReport {
            miou: mean(&iou),
            mean_dice: mean(&dice),
            pixel_accuracy: self.pixel_accuracy(),
            excluded: iou
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_none())
                .map(|(c, _)| c)
                .collect(),
            iou,
            dice,
            class_pixels: (0..self.classes).map(|c| self.row_sum(c)).collect(),
            confusion: self.clone(),
        }
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        assert_eq!(self.classes, rhs.classes);
        for (a, b) in self.counts.iter_mut().zip(&rhs.counts) {
            *a += b;
        }
    }
}

/// Metrics over one confusion matrix. Classes absent from both prediction
/// and ground truth have `None` IoU/Dice and are left out of the means;
/// their indices are listed in `excluded`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub iou: Vec<Option<f64>>,
    pub dice: Vec<Option<f64>>,
    pub miou: f64,
    pub mean_dice: f64,
    pub pixel_accuracy: f64,
    pub class_pixels: Vec<u64>,
    pub excluded: Vec<usize>,
    pub confusion: ConfusionMatrix,
}

pub const CLASS_NAMES: [&str; 3] = ["background", "bioink", "nozzle"];

fn class_name(c: usize) -> String {
    CLASS_NAMES
        .get(c)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("class{c}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "nan".into())
}

impl EvalReport {
    /// Foreground-only mean Dice (all classes but background).
    pub fn foreground_dice(&self) -> f64 {
        let fg: Vec<f64> = self.dice.iter().skip(1).flatten().copied().collect();
        if fg.is_empty() {
            0.0
        } else {
            fg.iter().sum::<f64>() / fg.len() as f64
        }
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "miou={:.6}", self.miou);
        let _ = writeln!(s, "mean_dice={:.6}", self.mean_dice);
        let _ = writeln!(s, "foreground_dice={:.6}", self.foreground_dice());
        let _ = writeln!(s, "pixel_accuracy={:.6}", self.pixel_accuracy);
        for c in 0..self.iou.len() {
            let name = class_name(c);
            let _ = writeln!(s, "iou_{name}={}", opt(self.iou[c]));
            let _ = writeln!(s, "dice_{name}={}", opt(self.dice[c]));
            let _ = writeln!(s, "pixels_{name}={}", self.class_pixels[c]);
        }
        let excluded: Vec<String> = self.excluded.iter().map(|&c| class_name(c)).collect();
        let _ = writeln!(s, "excluded={}", excluded.join(","));
        s
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["model".to_string(), "miou".into(), "dice".into(), "pixel_acc".into()];
        for c in 0..self.iou.len() {
            cols.push(format!("iou_{}", class_name(c)));
            cols.push(format!("dice_{}", class_name(c)));
        }
        cols.join(",")
    }

    pub fn csv_row(&self, model: &str) -> String {
        let mut cols = vec![
            model.to_string(),
            format!("{:.6}", self.miou),
            format!("{:.6}", self.mean_dice),
            format!("{:.6}", self.pixel_accuracy),
        ];
        for c in 0..self.iou.len() {
            cols.push(opt(self.iou[c]));
            cols.push(opt(self.dice[c]));
        }
        cols.join(",")
    }
}

/// Dataset-level evaluation: one confusion matrix over all pixels.
pub fn evaluate<'a>(
    classes: usize,
    pairs: impl IntoIterator<Item = (&'a [u8], &'a [u8])>,
) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(classes);
    for (pred, truth) in pairs {
        cm.accumulate(pred, truth)?;
    }
    Ok(cm.report())
}

/// Per-image evaluation: metrics computed per pair, then averaged.
pub fn evaluate_per_image<'a>(
    classes: usize,
    pairs: impl IntoIterator<Item = (&'a [u8], &'a [u8])>,
) -> Result<(f64, f64, f64)> {
    let mut sums = (0.0, 0.0, 0.0);
    let mut n = 0usize;
    for (pred, truth) in pairs {
        let mut cm = ConfusionMatrix::new(classes);
        cm.accumulate(pred, truth)?;
        let r = cm.report();
        sums.0 += r.miou;
        sums.1 += r.mean_dice;
        sums.2 += r.pixel_accuracy;
        n += 1;
    }
    if n == 0 {
        return Err(data_err!("no images to evaluate"));
    }
    let k = n as f64;
    Ok((sums.0 / k, sums.1 / k, sums.2 / k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(pred: &[u8], truth: &[u8]) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new(3);
        m.accumulate(pred, truth).unwrap();
        m
    }

    #[test]
    fn accumulate_examples() {
        let m = cm(&[1, 1, 1, 1], &[1, 1, 1, 1]);
        assert_eq!(m.get(1, 1), 4);
        assert_eq!(m.total(), 4);
        let halves = {
            let mut a = cm(&[0, 1], &[0, 2]);
            a += &cm(&[2, 2], &[1, 2]);
            a
        };
        assert_eq!(halves, cm(&[0, 1, 2, 2], &[0, 2, 1, 2]));
        assert_eq!(ConfusionMatrix::new(3).total(), 0);
        assert!(ConfusionMatrix::new(3).accumulate(&[3], &[0]).is_err());
        assert!(ConfusionMatrix::new(3).accumulate(&[0, 0], &[0]).is_err());
    }

    #[test]
    fn worked_two_by_two() {
        let r = cm(&[0, 1, 1, 1], &[0, 0, 1, 1]).report();
        assert_eq!(r.iou[0], Some(0.5));
        assert_eq!(r.iou[1], Some(2.0 / 3.0));
        assert_eq!(r.iou[2], None);
        assert!((r.miou - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(r.dice[0], Some(2.0 / 3.0));
        assert_eq!(r.dice[1], Some(0.8));
        assert_eq!(r.pixel_accuracy, 0.75);
        assert_eq!(r.excluded, vec![2]);
    }

    #[test]
    fn all_background_prediction() {
        let truth = [0u8, 1, 2, 0, 1, 2];
        let r = cm(&[0; 6], &truth).report();
        assert_eq!(r.iou, vec![Some(1.0 / 3.0), Some(0.0), Some(0.0)]);
        assert!((r.miou - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_and_dice_iou_identity() {
        let m = [0u8, 1, 2, 2, 1, 0, 0, 0];
        let r = cm(&m, &m).report();
        assert_eq!((r.miou, r.mean_dice, r.pixel_accuracy), (1.0, 1.0, 1.0));
        let r = cm(&[0, 2, 1, 1, 0, 2, 2, 0], &m).report();
        for c in 0..3 {
            let (i, d) = (r.iou[c].unwrap(), r.dice[c].unwrap());
            assert!((d - 2.0 * i / (1.0 + i)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_and_kv_layout() {
        let r = cm(&[0, 1, 2], &[0, 1, 2]).report();
        assert_eq!(
            r.csv_header(),
            "model,miou,dice,pixel_acc,iou_background,dice_background,iou_bioink,dice_bioink,iou_nozzle,dice_nozzle"
        );
        assert!(r.csv_row("m").starts_with("m,1.000000,1.000000,1.000000"));
        assert!(r.to_key_value().contains("pixel_accuracy=1.000000"));
    }
}
