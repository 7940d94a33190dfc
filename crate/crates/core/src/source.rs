//! Heterogeneous source annotations and externally produced head tracks.
//!
//! Both are line-delimited JSON. A source line describes one annotated frame
//! of one of the supported datasets; a track line is one tracked head box.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::annotations::{DatasetId, InOut};
use crate::error::{ensure, Error, Result};
use crate::geometry::{BBox, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePerson {
    pub person_id: u32,
    pub head_box: BBox,
    /// One point per annotator; empty when gaze is not annotated.
    #[serde(default)]
    pub gaze_points: Vec<Point>,
    #[serde(default)]
    pub inout: Option<InOut>,
    #[serde(default)]
    pub speaking: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceObject {
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// A group of people sharing attention on `objects[object]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaGroup {
    pub persons: Vec<u32>,
    pub object: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    /// Optional on disk; when present it must agree with the declared source format.
    #[serde(default)]
    pub dataset: Option<DatasetId>,
    pub clip_id: String,
    pub frame_idx: u32,
    #[serde(default)]
    pub persons: Vec<SourcePerson>,
    #[serde(default)]
    pub objects: Vec<SourceObject>,
    #[serde(default)]
    pub laeo_pairs: Vec<(u32, u32)>,
    #[serde(default)]
    pub sa_groups: Vec<SaGroup>,
}

impl SourceRecord {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.persons {
            ensure!(seen.insert(p.person_id), "duplicate person id {} in {}:{}", p.person_id, self.clip_id, self.frame_idx);
            p.head_box.validate()?;
            for g in &p.gaze_points {
                ensure!(g.is_finite() && g.in_unit_square(), "gaze point outside unit square for person {}", p.person_id);
            }
            if let Some(s) = p.speaking {
                ensure!((0.0..=1.0).contains(&s), "speaking score {s} outside [0,1]");
            }
        }
        for o in &self.objects {
            o.bbox.validate()?;
        }
        for &(a, b) in &self.laeo_pairs {
            ensure!(a != b && seen.contains(&a) && seen.contains(&b), "bad laeo pair ({a},{b})");
        }
        for g in &self.sa_groups {
            ensure!(g.object < self.objects.len(), "sa group references missing object {}", g.object);
            ensure!(g.persons.len() >= 2, "sa group needs at least two persons");
            for p in &g.persons {
                ensure!(seen.contains(p), "sa group references unknown person {p}");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackBox {
    pub clip_id: String,
    pub frame_idx: u32,
    pub track_id: u32,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

fn read_lines<T, R, F>(reader: R, mut check: F) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
    F: FnMut(&T) -> Result<()>,
{
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        check(&item)?;
        out.push(item);
    }
    Ok(out)
}

pub fn parse_source_line(line: &str) -> Result<SourceRecord> {
    let rec: SourceRecord = serde_json::from_str(line)?;
    rec.validate()?;
    Ok(rec)
}

/// Reads source records, stamping each with `dataset`.
pub fn read_source<R: BufRead>(reader: R, dataset: DatasetId) -> Result<Vec<SourceRecord>> {
    let mut recs: Vec<SourceRecord> = read_lines(reader, |r: &SourceRecord| {
        if let Some(d) = r.dataset {
            ensure!(d == dataset, "record declares dataset `{d}` but source format is `{dataset}`");
        }
        r.validate()
    })?;
    for r in &mut recs {
        r.dataset = Some(dataset);
    }
    Ok(recs)
}

pub fn parse_track_line(line: &str) -> Result<TrackBox> {
    let t: TrackBox = serde_json::from_str(line)?;
    t.bbox.validate()?;
    Ok(t)
}

pub fn read_tracks<R: BufRead>(reader: R) -> Result<Vec<TrackBox>> {
    read_lines(reader, |t: &TrackBox| t.bbox.validate())
}
