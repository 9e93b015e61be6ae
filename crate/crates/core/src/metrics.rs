//! Overlap and boundary-distance metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{squared_distance, BinaryMask};

/// Pixel-wise confusion counts of a prediction against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion_counts(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    pred.check_shape(truth)?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Dice coefficient `2tp / (2tp + fp + fn)`; two empty masks score 1.
pub fn dsc(c: &ConfusionCounts) -> f64 {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / den as f64
    }
}

/// `tn / (tn + fp)`.
pub fn specificity(c: &ConfusionCounts) -> Result<f64> {
    let den = c.tn + c.fp;
    if den == 0 {
        return Err(Error::NoNegatives);
    }
    Ok(c.tn as f64 / den as f64)
}

/// `tp / (tp + fp)`, the fraction of predicted pixels that are correct.
pub fn sensitivity_eq4(c: &ConfusionCounts) -> Result<f64> {
    let den = c.tp + c.fp;
    if den == 0 {
        return Err(Error::ZeroDenominator("tp + fp"));
    }
    Ok(c.tp as f64 / den as f64)
}

/// `tp / (tp + fn)`, the fraction of reference pixels recovered.
pub fn recall(c: &ConfusionCounts) -> Result<f64> {
    let den = c.tp + c.fn_;
    if den == 0 {
        return Err(Error::ZeroDenominator("tp + fn"));
    }
    Ok(c.tp as f64 / den as f64)
}

/// Integer pixel coordinates `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryPointSet {
    points: Vec<(i64, i64)>,
}

impl BoundaryPointSet {
    /// Sorted and deduplicated.
    pub fn new(mut points: Vec<(i64, i64)>) -> Self {
        points.sort_unstable();
        points.dedup();
        Self { points }
    }

    pub fn points(&self) -> &[(i64, i64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Foreground pixels with a background 4-neighbour or on the image edge.
pub fn boundary_points(mask: &BinaryMask) -> Result<BoundaryPointSet> {
    let (w, h) = (mask.width(), mask.height());
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            if edge
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1)
            {
                points.push((x as i64, y as i64));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(BoundaryPointSet::new(points))
}

/// Largest squared distance from a point of `a` to its nearest point of `b`.
fn directed_sq(a: &BoundaryPointSet, b: &BoundaryPointSet) -> Result<u64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(x, y) in a.points.iter().chain(&b.points) {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (w, h) = ((x1 - x0 + 1) as u64, (y1 - y0 + 1) as u64);
    let pairs = a.len() as u64 * b.len() as u64;
    if w.saturating_mul(h) > pairs.saturating_mul(4).max(1 << 16) {
        // Sparse points over a wide area: pairwise scan is cheaper.
        return Ok(a
            .points
            .iter()
            .map(|&(ax, ay)| {
                b.points
                    .iter()
                    .map(|&(bx, by)| sq(ax - bx, ay - by))
                    .min()
                    .unwrap()
            })
            .max()
            .unwrap());
    }
    let (w, h) = (w as usize, h as usize);
    let mut seed = vec![false; w * h];
    for &(x, y) in &b.points {
        seed[(y - y0) as usize * w + (x - x0) as usize] = true;
    }
    let d = squared_distance(w, h, |i| seed[i]);
    Ok(a.points
        .iter()
        .map(|&(x, y)| d[(y - y0) as usize * w + (x - x0) as usize] as u64)
        .max()
        .unwrap())
}

#[inline]
fn sq(dx: i64, dy: i64) -> u64 {
    (dx * dx + dy * dy) as u64
}

/// `max_{p∈a} min_{q∈b} |p − q|`, pixels.
pub fn directed_hausdorff(a: &BoundaryPointSet, b: &BoundaryPointSet) -> Result<f64> {
    Ok((directed_sq(a, b)? as f64).sqrt())
}

/// Symmetric Hausdorff distance, pixels.
pub fn hausdorff(a: &BoundaryPointSet, b: &BoundaryPointSet) -> Result<f64> {
    Ok((directed_sq(a, b)?.max(directed_sq(b, a)?) as f64).sqrt())
}

/// Hausdorff distance between the boundaries of two masks.
pub fn mask_hausdorff(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    pred.check_shape(truth)?;
    hausdorff(&boundary_points(pred)?, &boundary_points(truth)?)
}

/// All metrics of one prediction; undefined ratios are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub dsc: f64,
    pub hausdorff: Option<f64>,
    pub specificity: Option<f64>,
    pub sensitivity_eq4: Option<f64>,
    pub recall: Option<f64>,
}

pub fn evaluate(pred: &BinaryMask, truth: &BinaryMask) -> Result<Evaluation> {
    let counts = confusion_counts(pred, truth)?;
    let hausdorff = match (boundary_points(pred), boundary_points(truth)) {
        (Ok(a), Ok(b)) => Some(hausdorff(&a, &b)?),
        _ => None,
    };
    Ok(Evaluation {
        counts,
        dsc: dsc(&counts),
        hausdorff,
        specificity: specificity(&counts).ok(),
        sensitivity_eq4: sensitivity_eq4(&counts).ok(),
        recall: recall(&counts).ok(),
    })
}
