//! Interleaved person/scene attention blocks.

use candle_core::{Tensor, D};
use socialgaze_core::config::RunConfig;

use crate::error::{ensure, Result};
use crate::layers::{diagonal_bias, key_bias, TransformerLayer};
use crate::params::Scope;
use crate::vit::SceneEncoder;

/// One block's encoders. Every encoder exists regardless of ablation flags
/// so that ablated and full models share a parameter layout.
#[derive(Debug, Clone)]
pub struct InteractionBlock {
    pub person_to_scene: TransformerLayer,
    pub scene_to_person: TransformerLayer,
    pub social: TransformerLayer,
    pub temporal: TransformerLayer,
}

impl InteractionBlock {
    pub fn new(s: &Scope, cfg: &RunConfig) -> Result<Self> {
        let m = &cfg.model;
        Ok(Self {
            person_to_scene: TransformerLayer::new(&s.sub("person_to_scene"), m.dim, m.heads, m.mlp_ratio, true)?,
            scene_to_person: TransformerLayer::new(&s.sub("scene_to_person"), m.dim, m.heads, m.mlp_ratio, true)?,
            social: TransformerLayer::new(&s.sub("social"), m.dim, m.heads, m.mlp_ratio, false)?,
            temporal: TransformerLayer::new(&s.sub("temporal"), m.dim, m.heads, m.mlp_ratio, false)?,
        })
    }
}

/// Which encoders run; cleared flags skip the encoder entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wiring {
    pub person_to_scene: bool,
    pub scene_to_person: bool,
    pub social_temporal: bool,
    /// Restrict temporal attention to each step itself.
    pub static_model: bool,
}

impl Wiring {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            person_to_scene: !cfg.ablation.no_i_ps,
            scene_to_person: !cfg.ablation.no_i_sp,
            social_temporal: !cfg.ablation.no_i_ppt,
            static_model: cfg.ablation.static_model,
        }
    }
}

/// All intermediate tokens of the interaction stack.
#[derive(Debug, Clone)]
pub struct InteractionTrace {
    /// One entry per block, `[Bc*T, Nf, D]`.
    pub frames: Vec<Tensor>,
    /// Person-module tokens followed by one entry per block, `[Bc, Np, T, D]`.
    pub persons: Vec<Tensor>,
}

fn per_frame(p: &Tensor) -> Result<Tensor> {
    let (bc, np, t, d) = p.dims4()?;
    Ok(p.permute((0, 2, 1, 3))?.contiguous()?.reshape((bc * t, np, d))?)
}

fn from_per_frame(p: &Tensor, bc: usize) -> Result<Tensor> {
    let (bt, np, d) = p.dims3()?;
    Ok(p.reshape((bc, bt / bc, np, d))?.permute((0, 2, 1, 3))?.contiguous()?)
}

#[derive(Debug, Clone)]
pub struct InteractionModule {
    pub blocks: Vec<InteractionBlock>,
    pub wiring: Wiring,
}

impl InteractionModule {
    pub fn new(s: &Scope, cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            blocks: (0..cfg.model.blocks)
                .map(|b| InteractionBlock::new(&s.sub(format!("blocks.{b}")), cfg))
                .collect::<Result<_>>()?,
            wiring: Wiring::from_config(cfg),
        })
    }

    /// `frames [Bc*T, Nf, D]` from the scene tokenizer, `persons [Bc, Np, T, D]`,
    /// `mask [Bc, Np, T]` with 1 on valid person steps.
    pub fn forward(&self, scene: &SceneEncoder, frames: &Tensor, persons: &Tensor, mask: &Tensor) -> Result<InteractionTrace> {
        let (bc, np, t, d) = persons.dims4()?;
        ensure!(frames.dim(0)? == bc * t, "frame tokens cover {} frames, expected {}", frames.dim(0)?, bc * t);
        let mask_frame = mask.permute((0, 2, 1))?.contiguous()?.reshape((bc * t, np))?;
        let mask_person = mask.reshape((bc * np, t))?;
        let frame_bias = key_bias(&mask_frame)?;
        let mut time_bias = key_bias(&mask_person)?;
        if self.wiring.static_model {
            time_bias = time_bias.broadcast_add(&diagonal_bias(t, mask.dtype(), mask.device())?)?;
        }
        // Frames without any valid person keep their tokens unchanged.
        let any_person = mask_frame.max(D::Minus1)?.reshape((bc * t, 1, 1))?;
        let keep_frame = mask_frame.unsqueeze(2)?;
        let keep_person = mask_person.unsqueeze(2)?;

        let mut f = frames.clone();
        let mut p = persons.clone();
        let mut trace = InteractionTrace {
            frames: Vec::with_capacity(self.blocks.len()),
            persons: vec![p.clone()],
        };
        for (b, blk) in self.blocks.iter().enumerate() {
            if self.wiring.person_to_scene {
                let ctx = per_frame(&p)?;
                f = blk.person_to_scene.forward(&f, Some(&ctx), Some(&frame_bias), Some(&any_person))?;
            }
            f = scene.run_block(b, &f)?;
            let mut pf = per_frame(&p)?;
            if self.wiring.scene_to_person {
                pf = blk.scene_to_person.forward(&pf, Some(&f), None, None)?.broadcast_mul(&keep_frame)?;
            }
            if self.wiring.social_temporal {
                pf = blk.social.forward(&pf, None, Some(&frame_bias), None)?.broadcast_mul(&keep_frame)?;
                let pt = from_per_frame(&pf, bc)?.reshape((bc * np, t, d))?;
                let pt = blk.temporal.forward(&pt, None, Some(&time_bias), None)?.broadcast_mul(&keep_person)?;
                p = pt.reshape((bc, np, t, d))?;
            } else {
                p = from_per_frame(&pf, bc)?;
            }
            trace.frames.push(f.clone());
            trace.persons.push(p.clone());
        }
        Ok(trace)
    }
}
