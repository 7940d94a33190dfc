//! Geometric post-processing of predicted gaze points into social labels,
//! and F1 scoring of binary decisions.

use serde::Serialize;

use crate::geometry::{nearest_containing, BBox, Point};

/// Default shared-attention distance threshold in unit-square units.
pub const DEFAULT_SA_THRESHOLD: f64 = 0.10;

/// Decoder scores at or above this value count as positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Target slot of each person: the other head box containing its predicted
/// point, nearest center first.
pub fn pp_lah(points: &[Point], boxes: &[BBox]) -> Vec<Option<usize>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let others: Vec<usize> = (0..boxes.len()).filter(|&j| j != i).collect();
            nearest_containing(p, others.iter().map(|&j| &boxes[j])).map(|k| others[k])
        })
        .collect()
}

pub fn pp_laeo(lah: &[Option<usize>], i: usize, j: usize) -> bool {
    lah[i] == Some(j) && lah[j] == Some(i)
}

/// Shared-attention score: negated distance between the two gaze points, so
/// that larger is more likely; positive when `-score <= threshold`.
pub fn pp_sa_score(a: &Point, b: &Point) -> f64 {
    -a.distance(b)
}

pub fn pp_sa(a: &Point, b: &Point, threshold: f64) -> bool {
    a.distance(b) <= threshold
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct F1Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl F1Counts {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    /// One person's LAH decision: a positive with the wrong target is both a
    /// false positive and a false negative.
    pub fn add_target(&mut self, predicted: Option<u32>, actual: Option<u32>) {
        match (predicted, actual) {
            (Some(p), Some(a)) if p == a => self.tp += 1,
            (Some(_), Some(_)) => {
                self.fp += 1;
                self.fn_ += 1;
            }
            (Some(_), None) => self.fp += 1,
            (None, Some(_)) => self.fn_ += 1,
            (None, None) => {}
        }
    }

    pub fn merge(&mut self, o: F1Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    /// `None` when there is nothing to score.
    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }
}
