//! Scene encoder: patch tokenizer plus a stack of transformer layers that
//! never mixes information across frames.

use std::cell::Cell;
use std::ops::Range;

use candle_core::Tensor;
use socialgaze_core::config::{RunConfig, SplitMode};

use crate::error::{ensure, Result};
use crate::layers::{Conv2d, TransformerLayer};
use crate::params::{Init, Scope};

#[derive(Debug, Clone)]
pub struct SceneEncoder {
    pub patch_embed: Conv2d,
    /// `[Nf, D]`
    pub pos: Tensor,
    pub layers: Vec<TransformerLayer>,
    ranges: Vec<Range<usize>>,
    patch: usize,
    image_size: usize,
    passes: Cell<usize>,
}

/// 0-indexed layer range run by each block.
pub fn block_ranges(splits: &[usize], mode: SplitMode) -> Vec<Range<usize>> {
    let ends: Vec<usize> = match mode {
        SplitMode::OneBasedEnd => splits.to_vec(),
        SplitMode::ZeroBasedEnd => splits.iter().map(|s| s + 1).collect(),
    };
    let mut start = 0;
    ends.into_iter()
        .map(|e| {
            let r = start..e;
            start = e;
            r
        })
        .collect()
}

impl SceneEncoder {
    /// Only layers some block uses are created; trailing ViT layers past the
    /// last split would never influence an output.
    pub fn new(s: &Scope, cfg: &RunConfig) -> Result<Self> {
        let m = &cfg.model;
        let grid = m.image_size / m.patch;
        let ranges = block_ranges(&m.splits, m.split_mode);
        let used = ranges.last().map_or(0, |r| r.end);
        ensure!(used <= m.vit_depth, "splits need {used} layers but the scene encoder has {}", m.vit_depth);
        Ok(Self {
            patch_embed: Conv2d::new(&s.sub("patch_embed"), 3, m.dim, m.patch, m.patch, 0, true)?,
            pos: s.param("pos", &[grid * grid, m.dim], Init::Normal(0.02))?,
            layers: (0..used)
                .map(|k| TransformerLayer::new(&s.sub(format!("layers.{k}")), m.dim, m.heads, m.mlp_ratio, false))
                .collect::<Result<_>>()?,
            ranges,
            patch: m.patch,
            image_size: m.image_size,
            passes: Cell::new(0),
        })
    }

    /// Number of tokenizer calls so far.
    pub fn passes(&self) -> usize {
        self.passes.get()
    }

    /// `[M, 3, S, S] -> [M, Nf, D]`
    pub fn tokenize(&self, frames: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = frames.dims4()?;
        ensure!(c == 3, "frames need 3 channels, got {c}");
        ensure!(h == w && h == self.image_size, "frames must be {0}x{0}, got {h}x{w}", self.image_size);
        ensure!(h % self.patch == 0, "frame size {h} is not a multiple of the patch size {}", self.patch);
        self.passes.set(self.passes.get() + 1);
        let x = self.patch_embed.forward(frames)?;
        let x = x.flatten_from(2)?.transpose(1, 2)?.contiguous()?;
        Ok(x.broadcast_add(&self.pos)?)
    }

    /// Runs the layers of block `b` (0-indexed) on `[M, Nf, D]` tokens.
    pub fn run_block(&self, b: usize, tokens: &Tensor) -> Result<Tensor> {
        let mut x = tokens.clone();
        for l in &self.layers[self.ranges[b].clone()] {
            x = l.forward(&x, None, None, None)?;
        }
        Ok(x)
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch
    }
}
