//! Positive/negative annotation counts per dataset.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::AddAssign;

use serde::Serialize;

use crate::annotations::{DatasetId, LahLabel, PairLabel, UnifiedFrameRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub positive: u64,
    pub negative: u64,
    pub unknown: u64,
}

impl Counts {
    fn add(&mut self, label: PairLabel) {
        match label {
            PairLabel::Positive => self.positive += 1,
            PairLabel::Negative => self.negative += 1,
            PairLabel::Unknown => self.unknown += 1,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.positive += o.positive;
        self.negative += o.negative;
        self.unknown += o.unknown;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub frames: u64,
    pub persons: u64,
    pub gaze_points: u64,
    /// Counted over ordered pairs (looker, candidate).
    pub lah: Counts,
    /// Counted over unordered pairs.
    pub laeo: Counts,
    pub sa: Counts,
}

impl AddAssign for DatasetStats {
    fn add_assign(&mut self, o: DatasetStats) {
        self.frames += o.frames;
        self.persons += o.persons;
        self.gaze_points += o.gaze_points;
        self.lah += o.lah;
        self.laeo += o.laeo;
        self.sa += o.sa;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsTable {
    pub per_dataset: BTreeMap<DatasetId, DatasetStats>,
    /// Sum over the video datasets.
    pub video_total: DatasetStats,
}

pub fn frame_statistics(r: &UnifiedFrameRecord) -> DatasetStats {
    let mut s = DatasetStats {
        frames: 1,
        persons: r.persons.len() as u64,
        gaze_points: r.persons.iter().filter(|p| p.gaze_point.is_some()).count() as u64,
        ..Default::default()
    };
    let ids = r.person_ids();
    for &i in &ids {
        let lah = r.lah_of(i);
        for &j in ids.iter().filter(|&&j| j != i) {
            s.lah.add(match lah {
                LahLabel::Unknown => PairLabel::Unknown,
                LahLabel::Target(t) if t == j => PairLabel::Positive,
                _ => PairLabel::Negative,
            });
        }
    }
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            s.laeo.add(r.laeo.label(a, b));
            s.sa.add(r.sa.label(a, b));
        }
    }
    s
}

pub fn emit_statistics(records: &[UnifiedFrameRecord]) -> StatsTable {
    let mut table = StatsTable::default();
    for r in records {
        let s = frame_statistics(r);
        *table.per_dataset.entry(r.dataset).or_default() += s;
        if r.dataset.is_video() {
            table.video_total += s;
        }
    }
    table
}

impl fmt::Display for StatsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>8} {:>12} {:>22} {:>22} {:>22}",
            "dataset", "frames", "gaze_points", "lah pos/neg/unk", "laeo pos/neg/unk", "sa pos/neg/unk"
        )?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, s: &DatasetStats| {
            let c = |c: &Counts| format!("{}/{}/{}", c.positive, c.negative, c.unknown);
            writeln!(
                f,
                "{:<12} {:>8} {:>12} {:>22} {:>22} {:>22}",
                name,
                s.frames,
                s.gaze_points,
                c(&s.lah),
                c(&s.laeo),
                c(&s.sa)
            )
        };
        for (d, s) in &self.per_dataset {
            row(f, d.as_str(), s)?;
        }
        row(f, "video-total", &self.video_total)
    }
}
