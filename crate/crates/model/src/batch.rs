//! Stacking assembled clips into padded batch tensors.

use candle_core::{DType, Device, Tensor};
use socialgaze_core::clips::ClipSample;

use crate::error::{ensure, Result};

#[derive(Debug, Clone)]
pub struct Targets {
    /// `[Bc, Np, T, H*W]`
    pub heatmaps: Tensor,
    /// `[Bc, Np, T]`, 1 where the target is defined; likewise below.
    pub heatmap_valid: Tensor,
    /// `[Bc, Np, T, 2]`
    pub vectors: Tensor,
    pub vector_valid: Tensor,
    /// `[Bc, Np, T]`
    pub inout: Tensor,
    pub inout_valid: Tensor,
    /// `[Bc, Np, Np, T]`
    pub lah: Tensor,
    pub lah_valid: Tensor,
    pub sa: Tensor,
    pub sa_valid: Tensor,
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[Bc, T, 3, S, S]`
    pub frames: Tensor,
    /// `[Bc, Np, T, 3, C, C]`
    pub crops: Tensor,
    /// `[Bc, Np, T, 4]`
    pub boxes: Tensor,
    /// `[Bc, Np, T]`
    pub mask: Tensor,
    pub speaking: Option<Tensor>,
    pub targets: Targets,
    pub clips: usize,
    pub persons: usize,
    pub steps: usize,
}

fn bools(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

struct Stacker {
    np: usize,
    t: usize,
}

impl Stacker {
    /// Copies a per-person array `[np_s, t, k]` into a `[np, t, k]` slab.
    fn person(&self, src: &[f64], np_s: usize, k: usize, out: &mut Vec<f64>) {
        let slab = self.t * k;
        out.extend_from_slice(&src[..np_s * slab]);
        out.resize(out.len() + (self.np - np_s) * slab, 0.0);
    }

    /// Copies a pair array `[np_s, np_s, t]` into a `[np, np, t]` slab.
    fn pair(&self, src: &[f64], np_s: usize, out: &mut Vec<f64>) {
        let t = self.t;
        for i in 0..self.np {
            for j in 0..self.np {
                if i < np_s && j < np_s {
                    let at = (i * np_s + j) * t;
                    out.extend_from_slice(&src[at..at + t]);
                } else {
                    out.resize(out.len() + t, 0.0);
                }
            }
        }
    }
}

/// Stacks samples, padding every one to `persons` slots (at least the largest
/// sample's slot count). Padded slots are fully masked.
pub fn collate(samples: &[ClipSample], persons: Option<usize>, dtype: DType, device: &Device) -> Result<Batch> {
    ensure!(!samples.is_empty(), "cannot collate an empty batch");
    let t = samples[0].t;
    ensure!(samples.iter().all(|s| s.t == t), "samples differ in time slots");
    let max_np = samples.iter().map(|s| s.np).max().unwrap_or(0);
    let np = persons.unwrap_or(max_np);
    ensure!(np >= max_np, "capacity {np} is below the {max_np} persons of a sample");
    let speaking = samples[0].speaking.is_some();
    ensure!(samples.iter().all(|s| s.speaking.is_some() == speaking), "samples disagree on speaking scores");

    ensure!(samples.iter().all(|s| s.np >= 1), "every sample needs at least one person slot");
    let first = &samples[0];
    let frame_len = first.frames.len() / t;
    let side = ((frame_len / 3) as f64).sqrt().round() as usize;
    let crop_len = first.crops.len() / (first.np * t);
    let crop_side = ((crop_len / 3) as f64).sqrt().round() as usize;
    let hw = first.heatmaps.len() / (first.np * t);

    let st = Stacker { np, t };
    let bc = samples.len();
    let (mut frames, mut crops) = (Vec::new(), Vec::new());
    let (mut boxes, mut mask, mut spk) = (Vec::new(), Vec::new(), Vec::new());
    let (mut hm, mut hm_v, mut vec_, mut vec_v) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut io, mut io_v, mut lah, mut lah_v, mut sa, mut sa_v) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in samples {
        ensure!(s.frames.len() == t * frame_len, "samples differ in frame size");
        ensure!(s.crops.len() == s.np * t * crop_len && s.heatmaps.len() == s.np * t * hw, "samples differ in crop or heatmap size");
        frames.extend(s.frames.iter().map(|&v| v as f64));
        let c: Vec<f64> = s.crops.iter().map(|&v| v as f64).collect();
        st.person(&c, s.np, crop_len, &mut crops);
        st.person(&s.boxes, s.np, 4, &mut boxes);
        st.person(&bools(&s.mask), s.np, 1, &mut mask);
        if let Some(v) = &s.speaking {
            st.person(v, s.np, 1, &mut spk);
        }
        st.person(&s.heatmaps, s.np, hw, &mut hm);
        st.person(&bools(&s.heatmap_valid), s.np, 1, &mut hm_v);
        st.person(&s.vectors, s.np, 2, &mut vec_);
        st.person(&bools(&s.vector_valid), s.np, 1, &mut vec_v);
        st.person(&s.inout, s.np, 1, &mut io);
        st.person(&bools(&s.inout_valid), s.np, 1, &mut io_v);
        st.pair(&s.lah, s.np, &mut lah);
        st.pair(&bools(&s.lah_valid), s.np, &mut lah_v);
        st.pair(&s.sa, s.np, &mut sa);
        st.pair(&bools(&s.sa_valid), s.np, &mut sa_v);
    }
    let mk = |v: Vec<f64>, shape: &[usize]| -> Result<Tensor> { Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?) };
    let pt = [bc, np, t];
    let pp = [bc, np, np, t];
    Ok(Batch {
        frames: mk(frames, &[bc, t, 3, side, side])?,
        crops: mk(crops, &[bc, np, t, 3, crop_side, crop_side])?,
        boxes: mk(boxes, &[bc, np, t, 4])?,
        mask: mk(mask, &pt)?,
        speaking: if speaking { Some(mk(spk, &pt)?) } else { None },
        targets: Targets {
            heatmaps: mk(hm, &[bc, np, t, hw])?,
            heatmap_valid: mk(hm_v, &pt)?,
            vectors: mk(vec_, &[bc, np, t, 2])?,
            vector_valid: mk(vec_v, &pt)?,
            inout: mk(io, &pt)?,
            inout_valid: mk(io_v, &pt)?,
            lah: mk(lah, &pp)?,
            lah_valid: mk(lah_v, &pp)?,
            sa: mk(sa, &pp)?,
            sa_valid: mk(sa_v, &pp)?,
        },
        clips: bc,
        persons: np,
        steps: t,
    })
}
