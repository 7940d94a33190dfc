//! Running a trained model over annotated clips to produce prediction records.

use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socialgaze_core::annotations::UnifiedFrameRecord;
use socialgaze_core::clips::{assemble_clip, clip_windows, ClipSample};
use socialgaze_core::frames::FrameSource;
use socialgaze_core::metrics::gaze::Heatmap;
use socialgaze_core::predictions::{PersonPrediction, PredictionFrame, PRED_SCHEMA_VERSION};
use socialgaze_core::sampling::SampleMode;

use crate::batch::collate;
use crate::error::Result;
use crate::model::{ModelOutput, SocialGazeModel};
use crate::train::assemble_options;

#[derive(Debug, Clone, Copy, Default)]
pub struct InferOptions {
    /// Attach the full heatmap to every person prediction.
    pub heatmaps: bool,
    /// Pad every window to this many person slots instead of its own count.
    pub pad_to: Option<usize>,
}

fn to_f64(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}

/// Converts the output for one single-clip sample into per-frame records.
pub fn frames_from_output(model: &SocialGazeModel, sample: &ClipSample, out: &ModelOutput, opts: InferOptions) -> Result<Vec<PredictionFrame>> {
    let (_, np, t, hh, ww) = out.heatmaps.dims5()?;
    let hm = to_f64(&out.heatmaps)?;
    let inout = to_f64(&out.inout)?;
    let (lah, laeo, sa) = (to_f64(&out.social.lah)?, to_f64(&out.social.laeo)?, to_f64(&out.social.sa)?);
    let hash = model.config.hash();
    let mut frames = Vec::with_capacity(sample.keys.len());
    for (ti, key) in sample.keys.iter().enumerate() {
        let slots: Vec<usize> = (0..sample.np).filter(|&i| sample.mask[i * sample.t + ti]).collect();
        let persons = slots
            .iter()
            .map(|&i| {
                let at = (i * t + ti) * hh * ww;
                let map = Heatmap::new(hh, ww, hm[at..at + hh * ww].to_vec())?;
                Ok(PersonPrediction {
                    person_id: sample.person_ids[i].expect("test mode fills every slot"),
                    gaze_point: map.argmax_point(),
                    inout: inout[i * t + ti],
                    heatmap: opts.heatmaps.then_some(map),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let matrix = |v: &[f64]| -> Vec<Vec<f64>> {
            slots
                .iter()
                .map(|&i| slots.iter().map(|&j| v[(i * np + j) * t + ti]).collect())
                .collect()
        };
        frames.push(PredictionFrame {
            schema: PRED_SCHEMA_VERSION.into(),
            config_hash: hash.clone(),
            dataset: sample.dataset,
            clip_id: sample.clip_id.clone(),
            frame_idx: key.frame_idx,
            persons,
            lah: matrix(&lah),
            laeo: matrix(&laeo),
            sa: matrix(&sa),
        });
    }
    Ok(frames)
}

/// Predictions for every frame of every clip; each window is scored with all
/// of its people present.
pub fn infer(model: &SocialGazeModel, records: &[UnifiedFrameRecord], frames: &dyn FrameSource, opts: InferOptions) -> Result<Vec<PredictionFrame>> {
    let cfg = &model.config;
    let aopts = assemble_options(cfg, SampleMode::Test);
    // Test-mode sampling draws nothing; the generator is only a formality.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(records.len());
    for w in clip_windows(records, cfg.effective_window(), cfg.data.stride) {
        let recs: Vec<&UnifiedFrameRecord> = w.iter().map(|&i| &records[i]).collect();
        let sample = assemble_clip(&recs, frames, &aopts, &mut rng)?;
        let batch = collate(std::slice::from_ref(&sample), opts.pad_to, model.dtype(), model.params.device())?;
        let pred = model.forward((&batch).into())?;
        out.extend(frames_from_output(model, &sample, &pred, opts)?);
    }
    out.sort_by(|a, b| (a.dataset, &a.clip_id, a.frame_idx).cmp(&(b.dataset, &b.clip_id, b.frame_idx)));
    Ok(out)
}
