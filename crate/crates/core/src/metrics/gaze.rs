//! Gaze-following metrics: distance and heatmap ROC AUC.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::Point;
use crate::metrics::ap::argmax;

/// Row-major `height x width` grid of scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(height > 0 && width > 0, "empty heatmap");
        ensure!(data.len() == height * width, "heatmap data has {} values, expected {}", data.len(), height * width);
        Ok(Self { height, width, data })
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Center of the highest cell in unit-square coordinates; ties resolve
    /// to the lowest linear index.
    pub fn argmax_point(&self) -> Point {
        let k = argmax(&self.data).unwrap_or(0);
        cell_center(k / self.width, k % self.width, self.height, self.width)
    }

    pub fn resized(&self, height: usize, width: usize) -> Heatmap {
        Heatmap {
            height,
            width,
            data: resize_bilinear(&self.data, self.height, self.width, height, width),
        }
    }
}

pub fn cell_center(row: usize, col: usize, height: usize, width: usize) -> Point {
    Point::new((col as f64 + 0.5) / width as f64, (row as f64 + 0.5) / height as f64)
}

/// Grid cell `(row, col)` containing a unit-square point.
pub fn cell_of(p: &Point, height: usize, width: usize) -> (usize, usize) {
    let r = ((p.y * height as f64).floor().max(0.0) as usize).min(height - 1);
    let c = ((p.x * width as f64).floor().max(0.0) as usize).min(width - 1);
    (r, c)
}

/// 1-D bilinear sampling weights (half-pixel centers, edge clamped):
/// for every output index, `(lo, hi, weight_of_hi)`.
pub fn linear_resample_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let x = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (x.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let w = if hi == lo { 0.0 } else { x - lo as f64 };
            (lo, hi, w)
        })
        .collect()
}

/// Dense `dst x src` interpolation matrix, row-major.
pub fn linear_resample_matrix(src: usize, dst: usize) -> Vec<f64> {
    let mut m = vec![0.0; dst * src];
    for (o, (lo, hi, w)) in linear_resample_taps(src, dst).into_iter().enumerate() {
        m[o * src + lo] += 1.0 - w;
        m[o * src + hi] += w;
    }
    m
}

pub fn resize_bilinear(data: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let rows = linear_resample_taps(sh, dh);
    let cols = linear_resample_taps(sw, dw);
    let mut out = Vec::with_capacity(dh * dw);
    for &(r0, r1, wr) in &rows {
        for &(c0, c1, wc) in &cols {
            let top = data[r0 * sw + c0] * (1.0 - wc) + data[r0 * sw + c1] * wc;
            let bot = data[r1 * sw + c0] * (1.0 - wc) + data[r1 * sw + c1] * wc;
            out.push(top * (1.0 - wr) + bot * wr);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistResult {
    /// Distance to the mean ground-truth point.
    pub dist: f64,
    pub min_dist: f64,
    /// Mean of the distances to every ground-truth point.
    pub avg_dist: f64,
}

pub fn dist(pred: &Point, gts: &[Point]) -> Result<DistResult> {
    ensure!(!gts.is_empty(), "distance needs at least one ground-truth point");
    let ds: Vec<f64> = gts.iter().map(|g| pred.distance(g)).collect();
    let n = gts.len() as f64;
    let mean = Point::new(gts.iter().map(|g| g.x).sum::<f64>() / n, gts.iter().map(|g| g.y).sum::<f64>() / n);
    Ok(DistResult {
        dist: pred.distance(&mean),
        min_dist: ds.iter().copied().fold(f64::INFINITY, f64::min),
        avg_dist: ds.iter().sum::<f64>() / n,
    })
}

/// ROC AUC; tied scores form one ROC step, integrated with the trapezoid rule.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    ensure!(scores.len() == labels.len(), "scores and labels differ in length");
    ensure!(scores.iter().all(|s| s.is_finite()), "AUC scores must be finite");
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    ensure!(pos > 0.0 && neg > 0.0, "AUC needs both positive and negative cells");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp / pos, fp / neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

/// Binary map with ones at the cells holding annotated points.
pub fn gt_binary_map(points: &[Point], height: usize, width: usize) -> Vec<bool> {
    let mut m = vec![false; height * width];
    for p in points {
        let (r, c) = cell_of(p, height, width);
        m[r * width + c] = true;
    }
    m
}

/// Heatmap AUC against the binary map of `gts` on a `grid` resolution; the
/// heatmap is bilinearly resized to that grid first.
pub fn heatmap_auc(pred: &Heatmap, gts: &[Point], grid: (usize, usize)) -> Result<f64> {
    ensure!(!gts.is_empty(), "AUC needs at least one ground-truth point");
    let resized = pred.resized(grid.0, grid.1);
    roc_auc(&resized.data, &gt_binary_map(gts, grid.0, grid.1))
}
