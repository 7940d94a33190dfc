//! All-points average precision and the argmax-assignment protocols used for
//! looking-at-human and mutual-gaze scoring.

use crate::error::{ensure, Error, Result};

/// One scored detection; `hit` marks a true positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub score: f64,
    pub hit: bool,
}

/// AP = sum over distinct thresholds (descending) of `(R_k - R_{k-1}) * P_k`.
/// Detections sharing a score are admitted together. `total_positives` may
/// exceed the number of hits: the difference is recall that is never reached.
pub fn ap_from_detections(detections: &[Detection], total_positives: usize) -> Result<f64> {
    ensure!(total_positives > 0, "average precision needs at least one positive");
    ensure!(
        detections.iter().all(|d| d.score.is_finite()),
        "average precision scores must be finite"
    );
    let hits = detections.iter().filter(|d| d.hit).count();
    ensure!(hits <= total_positives, "more hits ({hits}) than positives ({total_positives})");

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));

    let total = total_positives as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = detections[order[i]].score;
        while i < order.len() && detections[order[i]].score == s {
            if detections[order[i]].hit {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Binary AP over scored samples.
pub fn ap_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    ensure!(scores.len() == labels.len(), "scores and labels differ in length");
    let dets: Vec<Detection> = scores
        .iter()
        .zip(labels)
        .map(|(&score, &hit)| Detection { score, hit })
        .collect();
    let positives = labels.iter().filter(|&&l| l).count();
    ap_from_detections(&dets, positives)
}

/// Index of the largest score; ties go to the lowest index. NaN never wins.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if b >= s => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Ground truth of a looking-at-human sample whose label is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LahTruth {
    Target(u32),
    Negative,
}

/// One person at one frame: scores toward every valid candidate (self and
/// padding already removed).
#[derive(Debug, Clone, PartialEq)]
pub struct LahSample {
    pub candidates: Vec<(u32, f64)>,
    pub truth: LahTruth,
}

impl LahSample {
    /// Assigned candidate and its score.
    pub fn assignment(&self) -> Option<(u32, f64)> {
        let scores: Vec<f64> = self.candidates.iter().map(|c| c.1).collect();
        argmax(&scores).map(|k| self.candidates[k])
    }
}

/// AP where each person contributes one detection: its argmax candidate.
/// Positives assigned to the wrong person are never recalled.
pub fn ap_lah(samples: &[LahSample]) -> Result<f64> {
    let mut dets = Vec::new();
    let mut positives = 0;
    for s in samples {
        let assigned = s.assignment();
        match s.truth {
            LahTruth::Target(t) => {
                positives += 1;
                if let Some((j, score)) = assigned {
                    if j == t {
                        dets.push(Detection { score, hit: true });
                    }
                }
            }
            LahTruth::Negative => {
                if let Some((_, score)) = assigned {
                    dets.push(Detection { score, hit: false });
                }
            }
        }
    }
    if positives == 0 {
        return Err(Error::validation("no positive looking-at-human samples"));
    }
    ap_from_detections(&dets, positives)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LaeoRetention {
    /// Keep a pair when it is the argmax pair of at least one endpoint.
    #[default]
    EitherEndpoint,
    /// Keep a pair only when it is the argmax pair of both endpoints.
    BothEndpoints,
}

/// Mutual-gaze scores of one frame: symmetric `n x n`, diagonal ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LaeoFrame {
    pub scores: Vec<Vec<f64>>,
    /// Known labels, keyed by slot indices `(i, j)` with `i < j`.
    pub truth: Vec<((usize, usize), bool)>,
}

/// Per-slot argmax partner over the off-diagonal scores.
pub fn laeo_partners(scores: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = scores.len();
    (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..n).map(|j| if j == i { f64::NAN } else { scores[i][j] }).collect();
            argmax(&row)
        })
        .collect()
}

/// True when pair `(i, j)` survives the argmax zeroing.
pub fn laeo_retained(partners: &[Option<usize>], i: usize, j: usize, mode: LaeoRetention) -> bool {
    let a = partners[i] == Some(j);
    let b = partners[j] == Some(i);
    match mode {
        LaeoRetention::EitherEndpoint => a || b,
        LaeoRetention::BothEndpoints => a && b,
    }
}

/// Scores after the argmax zeroing.
pub fn laeo_zeroed(scores: &[Vec<f64>], mode: LaeoRetention) -> Vec<Vec<f64>> {
    let partners = laeo_partners(scores);
    let n = scores.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && laeo_retained(&partners, i, j, mode) {
                out[i][j] = scores[i][j];
            }
        }
    }
    out
}

/// AP over unordered pairs after argmax zeroing. Zeroed pairs are not
/// detections; zeroed positives are lost recall.
pub fn ap_laeo(frames: &[LaeoFrame], mode: LaeoRetention) -> Result<f64> {
    let mut dets = Vec::new();
    let mut positives = 0;
    for f in frames {
        let n = f.scores.len();
        ensure!(f.scores.iter().all(|r| r.len() == n), "mutual-gaze score matrix is not square");
        let partners = laeo_partners(&f.scores);
        for &((i, j), label) in &f.truth {
            ensure!(i < j && j < n, "bad pair index ({i},{j})");
            positives += label as usize;
            if laeo_retained(&partners, i, j, mode) {
                dets.push(Detection {
                    score: f.scores[i][j],
                    hit: label,
                });
            }
        }
    }
    if positives == 0 {
        return Err(Error::validation("no positive mutual-gaze pairs"));
    }
    ap_from_detections(&dets, positives)
}
