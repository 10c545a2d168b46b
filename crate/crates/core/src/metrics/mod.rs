//! Evaluation protocol: confusion under an ignore mask, F1 and accuracy.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernels::running::{centered_max, centered_min};
use crate::raster::{IgnoreMask, LabelImage};

/// Class names in palette order.
pub const CLASS_NAMES: [&str; 6] = [
    "impervious surfaces",
    "building",
    "low vegetation",
    "tree",
    "car",
    "clutter/background",
];

/// Short column heads in palette order.
const SHORT_NAMES: [&str; 6] = ["Imp. Surf.", "Building", "Low Veg.", "Tree", "Car", "Clutter"];

/// Label index of the unknown / clutter class.
pub const UNKNOWN: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Five classes; ground-truth unknown pixels are excluded.
    Vaihingen,
    /// Six classes; unknown is scored like any other class.
    Potsdam,
    /// `K` classes, nothing excluded beyond the mask.
    Classes(usize),
}

impl EvalMode {
    pub fn classes(self) -> usize {
        match self {
            EvalMode::Vaihingen => 5,
            EvalMode::Potsdam => 6,
            EvalMode::Classes(k) => k,
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vaihingen" => Ok(EvalMode::Vaihingen),
            "potsdam" => Ok(EvalMode::Potsdam),
            other => other
                .parse()
                .map(EvalMode::Classes)
                .map_err(|_| Error::Parameter(format!("unknown evaluation mode `{other}`"))),
        }
    }
}

/// Masks every pixel that has a differently labelled pixel within Chebyshev
/// distance `radius`.
pub fn boundary_ignore_mask(gt: &LabelImage, radius: usize) -> IgnoreMask {
    let (w, h) = (gt.width(), gt.height());
    if radius == 0 {
        return IgnoreMask::none(w, h);
    }
    // Window min and max over the (2r+1)^2 square, rows then columns.
    let mut row_min = Vec::with_capacity(w * h);
    let mut row_max = Vec::with_capacity(w * h);
    for row in gt.data().chunks(w) {
        row_min.extend(centered_min(row, radius));
        row_max.extend(centered_max(row, radius));
    }
    let mut masked = vec![false; w * h];
    let mut col = vec![0u8; h];
    let mut col_min = vec![vec![0u8; h]; w];
    for x in 0..w {
        for y in 0..h {
            col[y] = row_min[y * w + x];
        }
        col_min[x] = centered_min(&col, radius);
    }
    for x in 0..w {
        for y in 0..h {
            col[y] = row_max[y * w + x];
        }
        for (y, m) in centered_max(&col, radius).into_iter().enumerate() {
            masked[y * w + x] = m != col_min[x][y];
        }
    }
    IgnoreMask::new(w, h, masked).expect("extent matches")
}

/// `K x K` counts, rows ground truth, columns prediction.
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

    /// Builds a matrix from rows of counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::dim("confusion", "matrix must be square"));
        }
        Ok(ConfusionMatrix {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// Adds another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::dim("confusion", format!("{} vs {} classes", self.classes, other.classes)));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn gt_total(&self, k: usize) -> u64 {
        (0..self.classes).map(|p| self.get(k, p)).sum()
    }

    fn pred_total(&self, k: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, k)).sum()
    }
}

/// Counts unmasked pixels. In Vaihingen mode ground-truth unknown pixels are
/// skipped as well.
pub fn confusion(pred: &LabelImage, gt: &LabelImage, mask: &IgnoreMask, mode: EvalMode) -> Result<ConfusionMatrix> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::dim(
            "extent",
            format!(
                "prediction is {}x{}, ground truth {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            ),
        ));
    }
    mask.check_extent(gt.width(), gt.height())?;
    let k = mode.classes();
    let mut m = ConfusionMatrix::new(k);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if mask.get(y, x) {
                continue;
            }
            let (g, p) = (gt.get(y, x), pred.get(y, x));
            if mode == EvalMode::Vaihingen && g == UNKNOWN {
                continue;
            }
            if g as usize >= k || p as usize >= k {
                return Err(Error::Data(format!(
                    "label at ({y}, {x}) is outside 0..{k} (ground truth {g}, prediction {p})"
                )));
            }
            m.counts[g as usize * k + p as usize] += 1;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    /// `2TP / (2TP + FP + FN)`; `None` when the class is absent from both
    /// ground truth and prediction.
    pub per_class_f1: Vec<Option<f64>>,
    /// Whether each class occurs in the ground truth.
    pub present: Vec<bool>,
    /// Mean F1 over classes present in the ground truth.
    pub overall_f1: f64,
    pub overall_accuracy: f64,
}

pub fn scores(m: &ConfusionMatrix) -> Result<Scores> {
    let total = m.total();
    if total == 0 {
        return Err(Error::Undefined("scores of an empty confusion matrix".into()));
    }
    let k = m.classes();
    let per_class_f1: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let tp = m.get(c, c);
            let fp = m.pred_total(c) - tp;
            let fn_ = m.gt_total(c) - tp;
            let den = 2 * tp + fp + fn_;
            (den > 0).then(|| 2.0 * tp as f64 / den as f64)
        })
        .collect();
    let present: Vec<bool> = (0..k).map(|c| m.gt_total(c) > 0).collect();
    let counted: Vec<f64> = per_class_f1
        .iter()
        .zip(&present)
        .filter(|(_, &p)| p)
        .map(|(f, _)| f.expect("present classes have a defined F1"))
        .collect();
    Ok(Scores {
        overall_f1: counted.iter().sum::<f64>() / counted.len() as f64,
        overall_accuracy: m.trace() as f64 / total as f64,
        per_class_f1,
        present,
    })
}

/// Table of per-class F1 followed by overall F1 and accuracy, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix,
    pub scores: Scores,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.matrix.classes();
        let head = |c: usize| SHORT_NAMES.get(c).map_or_else(|| format!("class {c}"), |s| s.to_string());
        for c in 0..k {
            write!(f, "{:>12}", head(c))?;
        }
        writeln!(f, "{:>12}{:>14}", "Overall F1", "Overall Acc.")?;
        for (c, v) in self.scores.per_class_f1.iter().enumerate() {
            match v {
                Some(v) if self.scores.present[c] => write!(f, "{:>12.2}", 100.0 * v)?,
                Some(v) => write!(f, "{:>11.2}*", 100.0 * v)?,
                None => write!(f, "{:>12}", "-")?,
            }
        }
        writeln!(
            f,
            "{:>12.2}{:>14.2}",
            100.0 * self.scores.overall_f1,
            100.0 * self.scores.overall_accuracy
        )?;
        if self.scores.present.iter().any(|p| !p) {
            writeln!(f, "classes absent from the ground truth (* or -) are left out of Overall F1")?;
        }
        writeln!(f, "evaluated pixels: {}", self.matrix.total())
    }
}

pub fn evaluate(pred: &LabelImage, gt: &LabelImage, mask: &IgnoreMask, mode: EvalMode) -> Result<EvalReport> {
    let matrix = confusion(pred, gt, mask, mode)?;
    let scores = scores(&matrix)?;
    Ok(EvalReport { matrix, scores })
}
