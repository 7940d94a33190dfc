//! Line-delimited prediction files: one record per annotated frame.

use std::io::{BufRead, Write};

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::annotations::{DatasetId, FrameKey};
use crate::error::{ensure, Error, Result};
use crate::geometry::{round6, Fixed6, Point};
use crate::metrics::gaze::Heatmap;

pub const PRED_SCHEMA_VERSION: &str = "vsgaze-pred-1";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PersonPrediction {
    pub person_id: u32,
    pub gaze_point: Point,
    pub inout: f64,
    #[serde(default)]
    pub heatmap: Option<Heatmap>,
}

impl Serialize for PersonPrediction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("PersonPrediction", 4)?;
        st.serialize_field("person_id", &self.person_id)?;
        st.serialize_field("gaze_point", &self.gaze_point)?;
        st.serialize_field("inout", &Fixed6(self.inout))?;
        if let Some(h) = &self.heatmap {
            st.serialize_field("heatmap", &HeatmapOut(h))?;
        } else {
            st.skip_field("heatmap")?;
        }
        st.end()
    }
}

struct HeatmapOut<'a>(&'a Heatmap);

impl Serialize for HeatmapOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Heatmap", 3)?;
        st.serialize_field("height", &self.0.height)?;
        st.serialize_field("width", &self.0.width)?;
        let data: Vec<Fixed6> = self.0.data.iter().map(|&v| Fixed6(v)).collect();
        st.serialize_field("data", &data)?;
        st.end()
    }
}

fn ser_matrix<S: Serializer>(m: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<Fixed6>> = m.iter().map(|r| r.iter().map(|&v| Fixed6(v)).collect()).collect();
    rows.serialize(s)
}

/// Predictions for every person of one frame. Matrices are indexed in
/// `persons` order; the diagonal is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFrame {
    pub schema: String,
    pub config_hash: String,
    pub dataset: DatasetId,
    pub clip_id: String,
    pub frame_idx: u32,
    pub persons: Vec<PersonPrediction>,
    #[serde(serialize_with = "ser_matrix")]
    pub lah: Vec<Vec<f64>>,
    #[serde(serialize_with = "ser_matrix")]
    pub laeo: Vec<Vec<f64>>,
    #[serde(serialize_with = "ser_matrix")]
    pub sa: Vec<Vec<f64>>,
}

impl PredictionFrame {
    pub fn key(&self) -> (DatasetId, FrameKey) {
        (
            self.dataset,
            FrameKey {
                clip_id: self.clip_id.clone(),
                frame_idx: self.frame_idx,
            },
        )
    }

    pub fn slot_of(&self, person_id: u32) -> Option<usize> {
        self.persons.iter().position(|p| p.person_id == person_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != PRED_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: PRED_SCHEMA_VERSION.into(),
                found: self.schema.clone(),
            });
        }
        let n = self.persons.len();
        let mut ids: Vec<u32> = self.persons.iter().map(|p| p.person_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ensure!(ids.len() == n, "duplicate person ids in prediction {}:{}", self.clip_id, self.frame_idx);
        for p in &self.persons {
            ensure!(p.gaze_point.is_finite(), "non-finite gaze point");
            ensure!((0.0..=1.0).contains(&p.inout), "in-out score {} outside [0,1]", p.inout);
            if let Some(h) = &p.heatmap {
                ensure!(h.height > 0 && h.width > 0 && h.data.len() == h.height * h.width, "malformed heatmap");
            }
        }
        for (name, m) in [("lah", &self.lah), ("laeo", &self.laeo), ("sa", &self.sa)] {
            ensure!(m.len() == n && m.iter().all(|r| r.len() == n), "{name} matrix is not {n}x{n}");
            ensure!(
                m.iter().flatten().all(|v| (0.0..=1.0).contains(v)),
                "{name} scores must lie in [0,1]"
            );
        }
        Ok(())
    }

    /// Copy with every float rounded to the serialized precision.
    pub fn rounded(&self) -> PredictionFrame {
        let r = |m: &Vec<Vec<f64>>| m.iter().map(|row| row.iter().map(|&v| round6(v)).collect()).collect();
        PredictionFrame {
            persons: self
                .persons
                .iter()
                .map(|p| PersonPrediction {
                    person_id: p.person_id,
                    gaze_point: p.gaze_point.rounded(),
                    inout: round6(p.inout),
                    heatmap: p.heatmap.as_ref().map(|h| Heatmap {
                        height: h.height,
                        width: h.width,
                        data: h.data.iter().map(|&v| round6(v)).collect(),
                    }),
                })
                .collect(),
            lah: r(&self.lah),
            laeo: r(&self.laeo),
            sa: r(&self.sa),
            ..self.clone()
        }
    }

    pub fn to_line(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: Option<String>,
}

pub fn parse_prediction_line(line: &str) -> Result<PredictionFrame> {
    let probe: SchemaProbe = serde_json::from_str(line)?;
    match probe.schema.as_deref() {
        Some(PRED_SCHEMA_VERSION) => {}
        other => {
            return Err(Error::SchemaMismatch {
                expected: PRED_SCHEMA_VERSION.into(),
                found: other.unwrap_or("<missing>").into(),
            })
        }
    }
    let f: PredictionFrame = serde_json::from_str(line)?;
    f.validate()?;
    Ok(f)
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionFrame>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_prediction_line(&line).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                line: n + 1,
                message: j.to_string(),
            },
            other => other,
        })?);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut w: W, frames: &[PredictionFrame]) -> Result<()> {
    for f in frames {
        writeln!(w, "{}", f.to_line()?)?;
    }
    Ok(())
}
