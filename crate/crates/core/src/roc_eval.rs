//! ROC curves, AUC, partial AUC and vertically averaged ROC curves.
//!
//! Sensitivity at cut `c` is `pr(Z > c | y = 1)` and specificity is
//! `pr(Z ≤ c | y = 0)`. Tied scores move the curve diagonally and count ½ in
//! the AUC.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Score cut at each point; `+∞` for the origin.
    pub thresholds: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn class_counts(scores: &[f64], labels: &[f64]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut pos = 0;
    for &l in labels {
        if l == 1.0 {
            pos += 1;
        } else if l != 0.0 {
            return Err(Error::InvalidLabel(l));
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::OneClassInput);
    }
    Ok((pos, neg))
}

pub fn roc_curve(scores: &[f64], labels: &[f64]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let cut = scores[order[i]];
        while i < order.len() && scores[order[i]] == cut {
            if labels[order[i]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        thresholds.push(cut);
    }
    Ok(RocCurve {
        points,
        thresholds,
        n_pos,
        n_neg,
    })
}

/// Mann–Whitney AUC with mid-ranks for ties.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] == 1.0 {
                rank_sum += mid;
            }
        }
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

impl RocCurve {
    /// Trapezoidal area under the whole curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    /// Highest tpr reached at `fpr`, interpolating linearly between points.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let fpr = fpr.clamp(0.0, 1.0);
        let pts = &self.points;
        // last point with x ≤ fpr
        let k = pts.partition_point(|p| p.0 <= fpr);
        let (x0, y0) = pts[k - 1];
        if x0 == fpr || k == pts.len() {
            return y0;
        }
        let (x1, y1) = pts[k];
        y0 + (y1 - y0) * (fpr - x0) / (x1 - x0)
    }

    /// Tab-separated `fpr tpr threshold` lines with a header.
    pub fn to_columns(&self) -> String {
        let mut out = String::from("fpr\ttpr\tthreshold\n");
        for ((f, t), c) in self.points.iter().zip(&self.thresholds) {
            let _ = writeln!(out, "{f}\t{t}\t{c}");
        }
        out
    }
}

/// Area under the curve for `fpr ∈ [lo, hi]`.
pub fn partial_auc(curve: &RocCurve, fpr_lo: f64, fpr_hi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fpr_lo) || !(0.0..=1.0).contains(&fpr_hi) || fpr_lo >= fpr_hi {
        return Err(Error::InvalidRange {
            lo: fpr_lo,
            hi: fpr_hi,
        });
    }
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let a = x0.max(fpr_lo);
        let b = x1.min(fpr_hi);
        if b <= a {
            continue;
        }
        let at = |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        area += (b - a) * (at(a) + at(b)) / 2.0;
    }
    Ok(area)
}

pub fn sensitivity_at_fpr(curve: &RocCurve, fpr: f64) -> f64 {
    curve.tpr_at(fpr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRoc {
    pub fpr_grid: Vec<f64>,
    pub mean_tpr: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n_curves: usize,
}

pub fn fpr_grid(grid_size: usize) -> Vec<f64> {
    let g = grid_size.max(2);
    (0..g).map(|i| i as f64 / (g - 1) as f64).collect()
}

/// Vertical averaging at `grid_size` equispaced fpr values with normal
/// 95% pointwise intervals.
pub fn average_roc(curves: &[RocCurve], grid_size: usize) -> Result<AveragedRoc> {
    let rows: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| fpr_grid(grid_size).iter().map(|&f| c.tpr_at(f)).collect())
        .collect();
    average_tpr_rows(&rows, &fpr_grid(grid_size))
}

/// Vertical averaging of curves already sampled on `grid`.
pub fn average_tpr_rows(rows: &[Vec<f64>], grid: &[f64]) -> Result<AveragedRoc> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("ROC curves"));
    }
    let n = rows.len() as f64;
    let mut mean_tpr = Vec::with_capacity(grid.len());
    let mut ci_lo = Vec::with_capacity(grid.len());
    let mut ci_hi = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let mean = rows.iter().map(|r| r[g]).sum::<f64>() / n;
        let sd = if rows.len() > 1 {
            (rows.iter().map(|r| (r[g] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * sd / n.sqrt();
        mean_tpr.push(mean);
        ci_lo.push((mean - half).max(0.0));
        ci_hi.push((mean + half).min(1.0));
    }
    Ok(AveragedRoc {
        fpr_grid: grid.to_vec(),
        mean_tpr,
        ci_lo,
        ci_hi,
        n_curves: rows.len(),
    })
}
