//! Scores a prediction file against unified ground truth, per dataset.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::annotations::{DatasetId, FrameKey, InOut, LahLabel, PairLabel, UnifiedFrameRecord};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point};
use crate::metrics::ap::{ap_binary, ap_lah, ap_laeo, laeo_zeroed, LaeoFrame, LaeoRetention, LahSample, LahTruth};
use crate::metrics::gaze::{dist, heatmap_auc};
use crate::metrics::social::{pp_laeo, pp_lah, pp_sa, pp_sa_score, F1Counts, DECISION_THRESHOLD, DEFAULT_SA_THRESHOLD};
use crate::predictions::PredictionFrame;

/// Where social decisions come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SocialSource {
    /// The model's LAH/LAEO/SA score matrices.
    #[default]
    Decoder,
    /// Geometry of the predicted gaze points against ground-truth head boxes.
    PostProcess,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub social: SocialSource,
    pub sa_threshold: f64,
    pub laeo_retention: LaeoRetention,
    /// Resolution of the binary map used for heatmap AUC.
    pub auc_grid: (usize, usize),
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            social: SocialSource::Decoder,
            sa_threshold: DEFAULT_SA_THRESHOLD,
            laeo_retention: LaeoRetention::EitherEndpoint,
            auc_grid: (64, 64),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    frames: usize,
    dist: Vec<f64>,
    min_dist: Vec<f64>,
    avg_dist: Vec<f64>,
    auc: Vec<f64>,
    io_scores: Vec<f64>,
    io_labels: Vec<bool>,
    lah_samples: Vec<LahSample>,
    f1_lah: F1Counts,
    laeo_frames: Vec<LaeoFrame>,
    f1_laeo: F1Counts,
    sa_scores: Vec<f64>,
    sa_labels: Vec<bool>,
    f1_sa: F1Counts,
}

impl Accumulator {
    fn merge(&mut self, o: &Accumulator) {
        self.frames += o.frames;
        self.dist.extend_from_slice(&o.dist);
        self.min_dist.extend_from_slice(&o.min_dist);
        self.avg_dist.extend_from_slice(&o.avg_dist);
        self.auc.extend_from_slice(&o.auc);
        self.io_scores.extend_from_slice(&o.io_scores);
        self.io_labels.extend_from_slice(&o.io_labels);
        self.lah_samples.extend_from_slice(&o.lah_samples);
        self.f1_lah.merge(o.f1_lah);
        self.laeo_frames.extend_from_slice(&o.laeo_frames);
        self.f1_laeo.merge(o.f1_laeo);
        self.sa_scores.extend_from_slice(&o.sa_scores);
        self.sa_labels.extend_from_slice(&o.sa_labels);
        self.f1_sa.merge(o.f1_sa);
    }

    fn finish(&self, opts: &EvalOptions) -> MetricRow {
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let decoder = opts.social == SocialSource::Decoder;
        MetricRow {
            frames: self.frames,
            gaze_samples: self.dist.len(),
            dist: mean(&self.dist),
            auc: mean(&self.auc),
            min_dist: mean(&self.min_dist),
            avg_dist: mean(&self.avg_dist),
            ap_io: ap_binary(&self.io_scores, &self.io_labels).ok(),
            f1_lah: self.f1_lah.f1(),
            f1_laeo: self.f1_laeo.f1(),
            f1_sa: self.f1_sa.f1(),
            ap_sa: ap_binary(&self.sa_scores, &self.sa_labels).ok(),
            ap_lah: if decoder { ap_lah(&self.lah_samples).ok() } else { None },
            ap_laeo: if decoder { ap_laeo(&self.laeo_frames, opts.laeo_retention).ok() } else { None },
        }
    }
}

/// One table row. A metric is `None` when its sample set has no positives
/// (for AP) or is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricRow {
    pub frames: usize,
    pub gaze_samples: usize,
    pub dist: Option<f64>,
    pub auc: Option<f64>,
    pub min_dist: Option<f64>,
    pub avg_dist: Option<f64>,
    pub ap_io: Option<f64>,
    pub f1_lah: Option<f64>,
    pub f1_laeo: Option<f64>,
    pub f1_sa: Option<f64>,
    pub ap_sa: Option<f64>,
    pub ap_lah: Option<f64>,
    pub ap_laeo: Option<f64>,
}

impl MetricRow {
    /// Every score column with its name, in report order.
    pub fn values(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("dist", self.dist),
            ("auc", self.auc),
            ("min_dist", self.min_dist),
            ("avg_dist", self.avg_dist),
            ("ap_io", self.ap_io),
            ("f1_lah", self.f1_lah),
            ("f1_laeo", self.f1_laeo),
            ("f1_sa", self.f1_sa),
            ("ap_sa", self.ap_sa),
            ("ap_lah", self.ap_lah),
            ("ap_laeo", self.ap_laeo),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub social: SocialSource,
    pub config_hash: Option<String>,
    pub per_dataset: BTreeMap<DatasetId, MetricRow>,
    pub overall: MetricRow,
    /// Ground-truth frames with no prediction.
    pub missing_frames: usize,
}

struct Slot<'a> {
    id: u32,
    slot: usize,
    head: BBox,
    person: &'a crate::annotations::UnifiedPerson,
}

fn score_frame(gt: &UnifiedFrameRecord, pred: &PredictionFrame, opts: &EvalOptions, acc: &mut Accumulator) -> Result<()> {
    for p in &pred.persons {
        if gt.person(p.person_id).is_none() {
            return Err(Error::validation(format!(
                "prediction for {}:{} names unknown person {}",
                gt.clip_id, gt.frame_idx, p.person_id
            )));
        }
    }
    let present: Vec<Slot> = gt
        .persons
        .iter()
        .filter_map(|p| {
            pred.slot_of(p.person_id).map(|slot| Slot {
                id: p.person_id,
                slot,
                head: p.head_box,
                person: p,
            })
        })
        .collect();
    acc.frames += 1;

    for s in &present {
        let pp = &pred.persons[s.slot];
        if s.person.gaze_in_frame() {
            let multi = s.person.annotator_points.len() >= 2;
            let gts: Vec<Point> = if multi {
                s.person.annotator_points.clone()
            } else {
                vec![s.person.gaze_point.expect("in-frame gaze has a point")]
            };
            let d = dist(&pp.gaze_point, &gts)?;
            acc.dist.push(d.dist);
            if multi {
                acc.min_dist.push(d.min_dist);
                acc.avg_dist.push(d.avg_dist);
                if let Some(h) = &pp.heatmap {
                    acc.auc.push(heatmap_auc(h, &gts, opts.auc_grid)?);
                }
            }
        }
        if let Some(io) = s.person.inout {
            acc.io_scores.push(pp.inout);
            acc.io_labels.push(io == InOut::In);
        }
    }

    let points: Vec<Point> = present.iter().map(|s| pred.persons[s.slot].gaze_point).collect();
    let heads: Vec<BBox> = present.iter().map(|s| s.head).collect();
    let pp_targets = pp_lah(&points, &heads);

    for (a, s) in present.iter().enumerate() {
        let truth = match gt.lah_of(s.id) {
            LahLabel::Unknown => continue,
            LahLabel::None => LahTruth::Negative,
            LahLabel::Target(t) => {
                if !present.iter().any(|o| o.id == t) {
                    continue;
                }
                LahTruth::Target(t)
            }
        };
        let actual = match truth {
            LahTruth::Target(t) => Some(t),
            LahTruth::Negative => None,
        };
        match opts.social {
            SocialSource::Decoder => {
                let sample = LahSample {
                    candidates: present
                        .iter()
                        .filter(|o| o.id != s.id)
                        .map(|o| (o.id, pred.lah[s.slot][o.slot]))
                        .collect(),
                    truth,
                };
                let predicted = sample
                    .assignment()
                    .filter(|&(_, score)| score >= DECISION_THRESHOLD)
                    .map(|(j, _)| j);
                acc.f1_lah.add_target(predicted, actual);
                acc.lah_samples.push(sample);
            }
            SocialSource::PostProcess => {
                acc.f1_lah.add_target(pp_targets[a].map(|k| present[k].id), actual);
            }
        }
    }

    let n = present.len();
    let laeo_scores: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| if a == b { 0.0 } else { pred.laeo[present[a].slot][present[b].slot] }).collect())
        .collect();
    let zeroed = laeo_zeroed(&laeo_scores, opts.laeo_retention);
    let mut truth = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let (ia, ib) = (present[a].id, present[b].id);
            let laeo = gt.laeo.label(ia, ib);
            if laeo != PairLabel::Unknown {
                let actual = laeo == PairLabel::Positive;
                truth.push(((a, b), actual));
                let predicted = match opts.social {
                    SocialSource::Decoder => zeroed[a][b] >= DECISION_THRESHOLD,
                    SocialSource::PostProcess => pp_laeo(&pp_targets, a, b),
                };
                acc.f1_laeo.add(predicted, actual);
            }
            let sa = gt.sa.label(ia, ib);
            if sa != PairLabel::Unknown {
                let actual = sa == PairLabel::Positive;
                let (score, predicted) = match opts.social {
                    SocialSource::Decoder => {
                        let v = pred.sa[present[a].slot][present[b].slot];
                        (v, v >= DECISION_THRESHOLD)
                    }
                    SocialSource::PostProcess => (
                        pp_sa_score(&points[a], &points[b]),
                        pp_sa(&points[a], &points[b], opts.sa_threshold),
                    ),
                };
                acc.sa_scores.push(score);
                acc.sa_labels.push(actual);
                acc.f1_sa.add(predicted, actual);
            }
        }
    }
    if !truth.is_empty() {
        acc.laeo_frames.push(LaeoFrame {
            scores: laeo_scores,
            truth,
        });
    }
    Ok(())
}

/// Every prediction must correspond to a ground-truth frame; ground-truth
/// frames without predictions are counted in `missing_frames`.
pub fn evaluate(preds: &[PredictionFrame], gt: &[UnifiedFrameRecord], opts: &EvalOptions) -> Result<MetricReport> {
    let index: BTreeMap<(DatasetId, FrameKey), &UnifiedFrameRecord> =
        gt.iter().map(|r| ((r.dataset, r.key()), r)).collect();
    let mut per: BTreeMap<DatasetId, Accumulator> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut config_hash: Option<String> = None;
    for p in preds {
        let key = p.key();
        let rec = index.get(&key).ok_or_else(|| {
            Error::validation(format!("prediction for {}:{}:{} has no ground truth", p.dataset, p.clip_id, p.frame_idx))
        })?;
        if !seen.insert(key) {
            return Err(Error::validation(format!("duplicate prediction for {}:{}", p.clip_id, p.frame_idx)));
        }
        match &config_hash {
            None => config_hash = Some(p.config_hash.clone()),
            Some(h) if *h != p.config_hash => {
                return Err(Error::validation("prediction file mixes config hashes"));
            }
            _ => {}
        }
        score_frame(rec, p, opts, per.entry(p.dataset).or_default())?;
    }
    let mut all = Accumulator::default();
    for acc in per.values() {
        all.merge(acc);
    }
    Ok(MetricReport {
        social: opts.social,
        config_hash,
        per_dataset: per.iter().map(|(d, a)| (*d, a.finish(opts))).collect(),
        overall: all.finish(opts),
        missing_frames: gt.len() - seen.len(),
    })
}

const COLUMNS: [&str; 13] = [
    "frames", "gaze", "Dist", "AUC", "Min.Dist", "Avg.Dist", "AP_IO", "F1_LAH", "F1_LAEO", "F1_SA", "AP_SA", "AP_LAH",
    "AP_LAEO",
];

fn write_row(f: &mut fmt::Formatter<'_>, name: &str, r: &MetricRow) -> fmt::Result {
    let c = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    write!(f, "{name:<12} {:>8} {:>8}", r.frames, r.gaze_samples)?;
    for v in [
        r.dist, r.auc, r.min_dist, r.avg_dist, r.ap_io, r.f1_lah, r.f1_laeo, r.f1_sa, r.ap_sa, r.ap_lah, r.ap_laeo,
    ] {
        write!(f, " {:>8}", c(v))?;
    }
    writeln!(f)
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.social {
            SocialSource::Decoder => "decoder",
            SocialSource::PostProcess => "post-process",
        };
        writeln!(f, "# social: {mode}")?;
        writeln!(f, "# config_hash: {}", self.config_hash.as_deref().unwrap_or("-"))?;
        writeln!(f, "# missing_frames: {}", self.missing_frames)?;
        write!(f, "{:<12}", "dataset")?;
        for c in COLUMNS {
            write!(f, " {c:>8}")?;
        }
        writeln!(f)?;
        for (d, r) in &self.per_dataset {
            write_row(f, d.as_str(), r)?;
        }
        write_row(f, "all", &self.overall)
    }
}
