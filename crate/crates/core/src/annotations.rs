//! The unified (`vsgaze-1`) frame record: one JSON object per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::{ser_opt_fixed6, BBox, Point};

pub const SCHEMA_VERSION: &str = "vsgaze-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    GazeFollow,
    Vat,
    ChildPlay,
    VideoCoAtt,
    UcoLaeo,
    Synthetic,
}

impl DatasetId {
    pub const ALL: [DatasetId; 6] = [
        DatasetId::GazeFollow,
        DatasetId::Vat,
        DatasetId::ChildPlay,
        DatasetId::VideoCoAtt,
        DatasetId::UcoLaeo,
        DatasetId::Synthetic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetId::GazeFollow => "gazefollow",
            DatasetId::Vat => "vat",
            DatasetId::ChildPlay => "childplay",
            DatasetId::VideoCoAtt => "videocoatt",
            DatasetId::UcoLaeo => "ucolaeo",
            DatasetId::Synthetic => "synthetic",
        }
    }

    /// Video datasets that make up the combined video corpus.
    pub fn is_video(&self) -> bool {
        !matches!(self, DatasetId::GazeFollow)
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown dataset `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameKey {
    pub clip_id: String,
    pub frame_idx: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InOut {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeSource {
    Native,
    FromObjectCenter,
    FromHeadCenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedPerson {
    pub person_id: u32,
    pub head_box: BBox,
    pub gaze_point: Option<Point>,
    pub inout: Option<InOut>,
    pub gaze_source: GazeSource,
    /// Every annotator's point when more than one exists (multi-annotator test sets).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotator_points: Vec<Point>,
    /// Speaking probability in [0,1], when known.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt_fixed6"
    )]
    pub speaking: Option<f64>,
}

impl UnifiedPerson {
    pub fn track_only(person_id: u32, head_box: BBox) -> Self {
        Self {
            person_id,
            head_box,
            gaze_point: None,
            inout: None,
            gaze_source: GazeSource::Native,
            annotator_points: Vec::new(),
            speaking: None,
        }
    }

    /// Gaze is annotated (either a point, several points, or an explicit out-of-frame label).
    pub fn has_gaze_annotation(&self) -> bool {
        self.gaze_point.is_some() || !self.annotator_points.is_empty() || self.inout.is_some()
    }

    /// True when the gaze target is a point inside the frame.
    pub fn gaze_in_frame(&self) -> bool {
        self.gaze_point.is_some() && self.inout != Some(InOut::Out)
    }
}

/// Looking-at-humans label of one person.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LahLabel {
    Target(u32),
    None,
    Unknown,
}

impl LahLabel {
    pub fn target(&self) -> Option<u32> {
        match self {
            LahLabel::Target(t) => Some(*t),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LahRepr {
    Target { target: u32 },
    Word(String),
}

impl Serialize for LahLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LahLabel::Target(t) => LahRepr::Target { target: *t }.serialize(s),
            LahLabel::None => s.serialize_str("none"),
            LahLabel::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for LahLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match LahRepr::deserialize(d)? {
            LahRepr::Target { target } => Ok(LahLabel::Target(target)),
            LahRepr::Word(w) if w == "none" => Ok(LahLabel::None),
            LahRepr::Word(w) if w == "unknown" => Ok(LahLabel::Unknown),
            LahRepr::Word(w) => Err(serde::de::Error::custom(format!("bad lah label `{w}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Positive,
    Negative,
    Unknown,
}

/// Unordered pair, stored with the smaller id first.
pub fn ordered_pair(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Labels over unordered pairs of the persons in a frame. Pairs listed in
/// neither set are negative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabels {
    pub positive: BTreeSet<(u32, u32)>,
    pub unknown: BTreeSet<(u32, u32)>,
}

impl PairLabels {
    pub fn label(&self, a: u32, b: u32) -> PairLabel {
        let key = ordered_pair(a, b);
        if self.positive.contains(&key) {
            PairLabel::Positive
        } else if self.unknown.contains(&key) {
            PairLabel::Unknown
        } else {
            PairLabel::Negative
        }
    }

    /// Every pair of `ids` marked unknown.
    pub fn all_unknown(ids: &[u32]) -> Self {
        let mut out = PairLabels::default();
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                out.unknown.insert(ordered_pair(a, b));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedFrameRecord {
    pub schema: String,
    pub dataset: DatasetId,
    pub clip_id: String,
    pub frame_idx: u32,
    pub persons: Vec<UnifiedPerson>,
    pub lah: BTreeMap<u32, LahLabel>,
    pub laeo: PairLabels,
    pub sa: PairLabels,
}

impl UnifiedFrameRecord {
    pub fn key(&self) -> FrameKey {
        FrameKey {
            clip_id: self.clip_id.clone(),
            frame_idx: self.frame_idx,
        }
    }

    pub fn person_ids(&self) -> Vec<u32> {
        self.persons.iter().map(|p| p.person_id).collect()
    }

    pub fn person(&self, id: u32) -> Option<&UnifiedPerson> {
        self.persons.iter().find(|p| p.person_id == id)
    }

    pub fn lah_of(&self, id: u32) -> LahLabel {
        self.lah.get(&id).copied().unwrap_or(LahLabel::Unknown)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                found: self.schema.clone(),
            });
        }
        let mut ids = BTreeSet::new();
        for p in &self.persons {
            ensure!(ids.insert(p.person_id), "duplicate person id {} in {}:{}", p.person_id, self.clip_id, self.frame_idx);
            p.head_box.validate()?;
            if let Some(g) = &p.gaze_point {
                ensure!(g.is_finite() && g.in_unit_square(), "gaze point outside unit square for person {}", p.person_id);
                ensure!(p.inout != Some(InOut::Out), "person {} has a gaze point but is labelled out-of-frame", p.person_id);
            }
            for g in &p.annotator_points {
                ensure!(g.is_finite() && g.in_unit_square(), "annotator point outside unit square for person {}", p.person_id);
            }
            if let Some(s) = p.speaking {
                ensure!((0.0..=1.0).contains(&s), "speaking score {s} outside [0,1]");
            }
        }
        for (who, label) in &self.lah {
            ensure!(ids.contains(who), "lah entry for unknown person {who}");
            if let LahLabel::Target(t) = label {
                ensure!(ids.contains(t), "lah target {t} is not a person of the frame");
                ensure!(t != who, "person {who} cannot look at themself");
            }
        }
        for set in [&self.laeo.positive, &self.laeo.unknown, &self.sa.positive, &self.sa.unknown] {
            for &(a, b) in set {
                ensure!(a < b, "pair ({a},{b}) must be ordered with distinct ids");
                ensure!(ids.contains(&a) && ids.contains(&b), "pair ({a},{b}) references unknown persons");
            }
        }
        ensure!(
            self.laeo.positive.is_disjoint(&self.laeo.unknown) && self.sa.positive.is_disjoint(&self.sa.unknown),
            "pair marked both positive and unknown"
        );
        Ok(())
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Parses a single line (without validating semantic invariants).
pub fn parse_record_line(line: &str) -> Result<UnifiedFrameRecord> {
    // Check the version before the full shape so newer schemas report a mismatch.
    let probe: serde_json::Value = serde_json::from_str(line)?;
    match probe.get("schema").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                found: other.into(),
            })
        }
        None => return Err(Error::validation("record lacks a `schema` field")),
    }
    Ok(serde_json::from_value(probe)?)
}

/// Reads and validates a whole annotation file.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<UnifiedFrameRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record_line(&line).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                line: n + 1,
                message: j.to_string(),
            },
            other => other,
        })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[UnifiedFrameRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_line()?)?;
    }
    Ok(())
}
