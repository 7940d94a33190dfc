//! Temporal windows over annotated clips and their dense model inputs.

use std::collections::BTreeMap;

use rand::Rng;

use crate::annotations::{DatasetId, FrameKey, InOut, LahLabel, PairLabel, UnifiedFrameRecord};
use crate::error::{ensure, Result};
use crate::frames::{frame_tensor, head_crop, FrameSource};
use crate::sampling::{sample_people, SampleMode};
use crate::targets::{synth_gt_heatmap, synth_gt_vector};

/// Splits `n` frame positions into windows of frames `stride` apart. Each
/// residue class modulo `stride` is chunked into runs of `window`, so every
/// position lands in exactly one window; trailing windows may be shorter.
pub fn tile_windows(n: usize, window: usize, stride: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if window == 0 || stride == 0 {
        return out;
    }
    for r in 0..stride.min(n) {
        let class: Vec<usize> = (r..n).step_by(stride).collect();
        out.extend(class.chunks(window).map(|c| c.to_vec()));
    }
    out
}

/// Record indices grouped by clip, sorted by frame index.
pub fn group_clips(records: &[UnifiedFrameRecord]) -> BTreeMap<(DatasetId, String), Vec<usize>> {
    let mut m: BTreeMap<(DatasetId, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        m.entry((r.dataset, r.clip_id.clone())).or_default().push(i);
    }
    for v in m.values_mut() {
        v.sort_by_key(|&i| records[i].frame_idx);
    }
    m
}

/// All windows of all clips, as record indices.
pub fn clip_windows(records: &[UnifiedFrameRecord], window: usize, stride: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for idx in group_clips(records).values() {
        for w in tile_windows(idx.len(), window, stride) {
            out.push(w.into_iter().map(|k| idx[k]).collect());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    pub image_size: usize,
    pub crop_size: usize,
    pub heatmap_size: usize,
    pub sigma: f64,
    pub mode: SampleMode,
    pub speaking: bool,
    /// Time slots; windows shorter than this are padded with masked steps.
    pub time_slots: usize,
}

/// Dense inputs and targets of one window; `np` person slots, `t` time slots.
/// Arrays are row-major in the documented index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSample {
    pub dataset: DatasetId,
    pub clip_id: String,
    /// Frame keys of the real (unpadded) time steps.
    pub keys: Vec<FrameKey>,
    pub t: usize,
    pub np: usize,
    pub person_ids: Vec<Option<u32>>,
    /// `[t, 3, S, S]`
    pub frames: Vec<f32>,
    /// `[np, t, 3, C, C]`
    pub crops: Vec<f32>,
    /// `[np, t, 4]`
    pub boxes: Vec<f64>,
    /// `[np, t]`
    pub mask: Vec<bool>,
    /// `[np, t]`, present only when speaking scores are enabled.
    pub speaking: Option<Vec<f64>>,
    /// `[np, t, H*W]`
    pub heatmaps: Vec<f64>,
    pub heatmap_valid: Vec<bool>,
    /// `[np, t, 2]`
    pub vectors: Vec<f64>,
    pub vector_valid: Vec<bool>,
    /// `[np, t]`, 1 for in-frame.
    pub inout: Vec<f64>,
    pub inout_valid: Vec<bool>,
    /// `[np, np, t]`
    pub lah: Vec<f64>,
    pub lah_valid: Vec<bool>,
    /// `[np, np, t]`, symmetric.
    pub sa: Vec<f64>,
    pub sa_valid: Vec<bool>,
}

/// Builds the sample of one window (records of one clip, in time order).
pub fn assemble_clip<R: Rng + ?Sized>(
    window: &[&UnifiedFrameRecord],
    frames: &dyn FrameSource,
    opts: &AssembleOptions,
    rng: &mut R,
) -> Result<ClipSample> {
    ensure!(!window.is_empty(), "empty window");
    ensure!(window.len() <= opts.time_slots, "window of {} frames exceeds {} time slots", window.len(), opts.time_slots);
    let first = window[0];
    ensure!(
        window.iter().all(|r| r.dataset == first.dataset && r.clip_id == first.clip_id),
        "window mixes clips"
    );
    let mut ids: Vec<u32> = window.iter().flat_map(|r| r.person_ids()).collect();
    ids.sort_unstable();
    ids.dedup();
    let slots = sample_people(ids.len(), opts.mode, rng)?;
    let person_ids: Vec<Option<u32>> = slots.iter().map(|s| s.map(|k| ids[k])).collect();

    let (t, np) = (opts.time_slots, person_ids.len());
    let (s, c, hm) = (opts.image_size, opts.crop_size, opts.heatmap_size);
    let mut out = ClipSample {
        dataset: first.dataset,
        clip_id: first.clip_id.clone(),
        keys: window.iter().map(|r| r.key()).collect(),
        t,
        np,
        person_ids: person_ids.clone(),
        frames: vec![0.0; t * 3 * s * s],
        crops: vec![0.0; np * t * 3 * c * c],
        boxes: vec![0.0; np * t * 4],
        mask: vec![false; np * t],
        speaking: opts.speaking.then(|| vec![0.0; np * t]),
        heatmaps: vec![0.0; np * t * hm * hm],
        heatmap_valid: vec![false; np * t],
        vectors: vec![0.0; np * t * 2],
        vector_valid: vec![false; np * t],
        inout: vec![0.0; np * t],
        inout_valid: vec![false; np * t],
        lah: vec![0.0; np * np * t],
        lah_valid: vec![false; np * np * t],
        sa: vec![0.0; np * np * t],
        sa_valid: vec![false; np * np * t],
    };

    for (ti, rec) in window.iter().enumerate() {
        let img = frames.frame(rec.dataset, &rec.clip_id, rec.frame_idx)?;
        let ft = frame_tensor(&img, s);
        out.frames[ti * 3 * s * s..(ti + 1) * 3 * s * s].copy_from_slice(&ft);
        for (i, pid) in person_ids.iter().enumerate() {
            let Some(p) = pid.and_then(|id| rec.person(id)) else { continue };
            let it = i * t + ti;
            out.mask[it] = true;
            out.boxes[it * 4..it * 4 + 4].copy_from_slice(&p.head_box.as_array());
            let crop = head_crop(&img, &p.head_box, c);
            let cs = 3 * c * c;
            out.crops[it * cs..(it + 1) * cs].copy_from_slice(&crop);
            if let (Some(sp), Some(v)) = (out.speaking.as_mut(), p.speaking) {
                sp[it] = v;
            }
            if p.gaze_in_frame() {
                let g = p.gaze_point.expect("in-frame gaze has a point");
                let h = synth_gt_heatmap(&g, hm, hm, opts.sigma)?;
                out.heatmaps[it * hm * hm..(it + 1) * hm * hm].copy_from_slice(&h);
                out.heatmap_valid[it] = true;
                if let Some(v) = synth_gt_vector(&p.head_box, &g) {
                    out.vectors[it * 2..it * 2 + 2].copy_from_slice(&v);
                    out.vector_valid[it] = true;
                }
            }
            if let Some(io) = p.inout {
                out.inout[it] = if io == InOut::In { 1.0 } else { 0.0 };
                out.inout_valid[it] = true;
            }
        }
        for (i, pi) in person_ids.iter().enumerate() {
            let Some(a) = pi.filter(|&id| rec.person(id).is_some()) else { continue };
            let lah = rec.lah_of(a);
            for (j, pj) in person_ids.iter().enumerate() {
                let Some(b) = pj.filter(|&id| id != a && rec.person(id).is_some()) else { continue };
                let ij = (i * np + j) * t + ti;
                if lah != LahLabel::Unknown {
                    out.lah_valid[ij] = true;
                    out.lah[ij] = if lah == LahLabel::Target(b) { 1.0 } else { 0.0 };
                }
                let sa = rec.sa.label(a, b);
                if sa != PairLabel::Unknown {
                    out.sa_valid[ij] = true;
                    out.sa[ij] = if sa == PairLabel::Positive { 1.0 } else { 0.0 };
                }
            }
        }
    }
    Ok(out)
}
