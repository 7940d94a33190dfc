//! Output heads: a person-conditioned dense decoder for gaze heatmaps and
//! pairwise social decoders on multi-scale person tokens.

use candle_core::{Tensor, D};
use socialgaze_core::config::RunConfig;

use crate::error::{ensure, Result};
use crate::layers::{gelu, resize_bilinear, sigmoid, Conv2d, ConvTranspose2d, Linear, ResidualMlp};
use crate::params::Scope;

/// Initial heatmap logit: targets are mostly background.
const HEATMAP_PRIOR: f64 = -4.0;

#[derive(Debug, Clone)]
enum Resample {
    Identity,
    Up(ConvTranspose2d),
    Down(Vec<Conv2d>),
}

/// Turns one level of frame tokens into a feature map at its target stride.
#[derive(Debug, Clone)]
pub struct Reassemble {
    proj: Conv2d,
    resample: Resample,
    /// Person token to per-channel gains.
    pub condition: Linear,
    pub channels: usize,
}

impl Reassemble {
    fn new(s: &Scope, dim: usize, channels: usize, patch: usize, scale: usize) -> Result<Self> {
        let resample = if scale == patch {
            Resample::Identity
        } else if scale < patch {
            Resample::Up(ConvTranspose2d::new(&s.sub("up"), channels, channels, patch / scale)?)
        } else {
            let steps = (scale / patch).trailing_zeros() as usize;
            Resample::Down(
                (0..steps)
                    .map(|k| Conv2d::new(&s.sub(format!("down.{k}")), channels, channels, 3, 2, 1, true))
                    .collect::<Result<_>>()?,
            )
        };
        Ok(Self {
            proj: Conv2d::new(&s.sub("proj"), dim, channels, 1, 1, 0, true)?,
            resample,
            condition: Linear::new(&s.sub("condition"), dim, channels)?,
            channels,
        })
    }

    /// `[M, Nf, D]` tokens on a `grid x grid` patch layout to `[M, C, h, w]`.
    pub fn forward(&self, tokens: &Tensor, grid: usize) -> Result<Tensor> {
        let (m, nf, d) = tokens.dims3()?;
        ensure!(nf == grid * grid, "{nf} tokens do not form a {grid}x{grid} grid");
        let x = tokens.transpose(1, 2)?.contiguous()?.reshape((m, d, grid, grid))?;
        let mut x = self.proj.forward(&x)?;
        match &self.resample {
            Resample::Identity => {}
            Resample::Up(up) => x = up.forward(&x)?,
            Resample::Down(convs) => {
                for c in convs {
                    x = c.forward(&x)?;
                }
            }
        }
        Ok(x)
    }
}

/// Hadamard product of a shared map `[Bc*T, C, h, w]` with per-person gains
/// `[Bc, Np, T, C]`, giving `[Bc*Np*T, C, h, w]`.
pub fn condition_map(map: &Tensor, gains: &Tensor) -> Result<Tensor> {
    let (bc, np, t, c) = gains.dims4()?;
    let (_, c2, h, w) = map.dims4()?;
    ensure!(c == c2, "gain width {c} does not match {c2} map channels");
    let m = map.reshape((bc, 1, t, c, h, w))?;
    let g = gains.reshape((bc, np, t, c, 1, 1))?;
    Ok(m.broadcast_mul(&g)?.reshape((bc * np * t, c, h, w))?)
}

/// Residual convolution unit.
#[derive(Debug, Clone)]
struct Rcu {
    c1: Conv2d,
    c2: Conv2d,
}

impl Rcu {
    fn new(s: &Scope, f: usize) -> Result<Self> {
        Ok(Self {
            c1: Conv2d::new(&s.sub("c1"), f, f, 3, 1, 1, true)?,
            c2: Conv2d::new(&s.sub("c2"), f, f, 3, 1, 1, true)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.c2.forward(&gelu(&self.c1.forward(&gelu(x)?)?)?)?;
        Ok((x + h)?)
    }
}

#[derive(Debug, Clone)]
pub struct HeatmapDecoder {
    pub reassemble: Vec<Reassemble>,
    layer_rn: Vec<Conv2d>,
    /// Lateral units; the coarsest level has none.
    lateral: Vec<Rcu>,
    fuse: Vec<Rcu>,
    head1: Conv2d,
    head2: Conv2d,
    head3: Conv2d,
    grid: usize,
    heatmap: usize,
}

impl HeatmapDecoder {
    pub fn new(s: &Scope, cfg: &RunConfig) -> Result<Self> {
        let m = &cfg.model;
        let f = m.dpt_features;
        let nb = m.blocks;
        let mut reassemble = Vec::new();
        let mut layer_rn = Vec::new();
        for b in 0..nb {
            let c = m.dpt_channels[b];
            reassemble.push(Reassemble::new(&s.sub(format!("reassemble.{b}")), m.dim, c, m.patch, m.dpt_scales[b])?);
            layer_rn.push(Conv2d::new(&s.sub(format!("layer_rn.{b}")), c, f, 3, 1, 1, false)?);
        }
        Ok(Self {
            reassemble,
            layer_rn,
            lateral: (0..nb.saturating_sub(1))
                .map(|b| Rcu::new(&s.sub(format!("lateral.{b}")), f))
                .collect::<Result<_>>()?,
            fuse: (0..nb).map(|b| Rcu::new(&s.sub(format!("fuse.{b}")), f)).collect::<Result<_>>()?,
            head1: Conv2d::new(&s.sub("head1"), f, f / 2, 3, 1, 1, true)?,
            head2: Conv2d::new(&s.sub("head2"), f / 2, f / 2, 3, 1, 1, true)?,
            head3: Conv2d::logits(&s.sub("head3"), f / 2, 1, HEATMAP_PRIOR)?,
            grid: m.image_size / m.patch,
            heatmap: m.heatmap_size,
        })
    }

    /// Unconditioned map of level `b`.
    pub fn reassemble_level(&self, b: usize, frame_tokens: &Tensor) -> Result<Tensor> {
        self.reassemble[b].forward(frame_tokens, self.grid)
    }

    /// Per-person gains of level `b` from `[Bc, Np, T, D]` tokens.
    pub fn gains(&self, b: usize, person_tokens: &Tensor) -> Result<Tensor> {
        self.reassemble[b].condition.forward(person_tokens)
    }

    /// Fuses conditioned maps (finest first) into `[K, Hh, Wh]` probabilities.
    pub fn decode(&self, maps: &[Tensor]) -> Result<Tensor> {
        ensure!(maps.len() == self.layer_rn.len(), "expected {} maps, got {}", self.layer_rn.len(), maps.len());
        let levels: Vec<Tensor> = maps
            .iter()
            .zip(&self.layer_rn)
            .map(|(m, c)| c.forward(m))
            .collect::<Result<_>>()?;
        let last = levels.len() - 1;
        let mut path = self.fuse[last].forward(&levels[last])?;
        for b in (0..last).rev() {
            let (_, _, h, w) = levels[b].dims4()?;
            path = resize_bilinear(&path, h, w)?;
            path = self.fuse[b].forward(&(path + self.lateral[b].forward(&levels[b])?)?)?;
        }
        let h = self.head1.forward(&path)?;
        let h = resize_bilinear(&h, self.heatmap, self.heatmap)?;
        let h = self.head3.forward(&gelu(&self.head2.forward(&h)?)?)?;
        sigmoid(&h.squeeze(1)?)
    }

    /// Heatmaps `[Bc, Np, T, Hh, Wh]` from per-block frame tokens
    /// `[Bc*T, Nf, D]` and matching person tokens `[Bc, Np, T, D]`.
    pub fn forward(&self, frames: &[Tensor], persons: &[Tensor]) -> Result<Tensor> {
        ensure!(frames.len() == persons.len(), "frame and person levels differ in count");
        let (bc, np, t, _) = persons[0].dims4()?;
        let maps = frames
            .iter()
            .zip(persons)
            .enumerate()
            .map(|(b, (f, p))| condition_map(&self.reassemble_level(b, f)?, &self.gains(b, p)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.decode(&maps)?.reshape((bc, np, t, self.heatmap, self.heatmap))?)
    }
}

#[derive(Debug, Clone)]
pub struct SocialScores {
    /// `[Bc, Np, Np, T]`, row looks at column.
    pub lah: Tensor,
    pub laeo: Tensor,
    pub sa: Tensor,
}

#[derive(Debug, Clone)]
pub struct SocialHeads {
    pub levels: Vec<Linear>,
    pub lah: ResidualMlp,
    pub sa: ResidualMlp,
    pub inout: ResidualMlp,
}

impl SocialHeads {
    pub fn new(s: &Scope, cfg: &RunConfig) -> Result<Self> {
        let m = &cfg.model;
        let width = (m.blocks + 1) * m.ms_dim;
        Ok(Self {
            levels: (0..=m.blocks)
                .map(|l| Linear::new(&s.sub(format!("levels.{l}")), m.dim, m.ms_dim))
                .collect::<Result<_>>()?,
            lah: ResidualMlp::new(&s.sub("lah"), 2 * width, width, 1, 1)?,
            sa: ResidualMlp::new(&s.sub("sa"), 2 * width, width, 1, 1)?,
            inout: ResidualMlp::new(&s.sub("inout"), width, width, 1, 3)?,
        })
    }

    /// Concatenated per-level projections, level 0 first: `[Bc, Np, T, (B+1)*Dms]`.
    pub fn multiscale(&self, persons: &[Tensor]) -> Result<Tensor> {
        ensure!(
            persons.len() == self.levels.len(),
            "expected {} token levels, got {}",
            self.levels.len(),
            persons.len()
        );
        let parts = persons
            .iter()
            .zip(&self.levels)
            .map(|(p, l)| l.forward(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&parts, D::Minus1)?)
    }

    /// Ordered pair features `[Bc, Np, Np, T, 2W]`, entry `(i, j)` = `[ms_i, ms_j]`.
    fn pairs(ms: &Tensor) -> Result<Tensor> {
        let (bc, np, t, w) = ms.dims4()?;
        let shape = (bc, np, np, t, w);
        let first = ms.unsqueeze(2)?.broadcast_as(shape)?;
        let second = ms.unsqueeze(1)?.broadcast_as(shape)?;
        Ok(Tensor::cat(&[&first, &second], D::Minus1)?)
    }

    /// `mask [Bc, Np, T]` gates rows, columns and the diagonal.
    pub fn social(&self, ms: &Tensor, mask: &Tensor) -> Result<SocialScores> {
        let np = ms.dim(1)?;
        let pm = pair_mask(mask, np)?;
        let pairs = Self::pairs(ms)?;
        let lah = (sigmoid(&self.lah.forward(&pairs)?.squeeze(D::Minus1)?)? * &pm)?;
        // Average logits, not probabilities: a saturated direction would
        // otherwise pin the pair at 0.5 with no gradient to pull it out.
        let raw = self.sa.forward(&pairs)?.squeeze(D::Minus1)?;
        let sa = (sigmoid(&((&raw + raw.transpose(1, 2)?)? * 0.5)?)? * &pm)?;
        let laeo = lah.minimum(&lah.transpose(1, 2)?)?.contiguous()?;
        Ok(SocialScores {
            lah,
            laeo,
            sa: sa.contiguous()?,
        })
    }

    /// `[Bc, Np, T]` in-frame probabilities, zero on masked steps.
    pub fn inout(&self, ms: &Tensor, mask: &Tensor) -> Result<Tensor> {
        Ok((sigmoid(&self.inout.forward(ms)?.squeeze(D::Minus1)?)? * mask)?)
    }
}

/// `[Bc, Np, Np, T]` with 1 where both persons are valid and differ.
pub fn pair_mask(mask: &Tensor, np: usize) -> Result<Tensor> {
    let both = mask.unsqueeze(2)?.broadcast_mul(&mask.unsqueeze(1)?)?;
    let eye = Tensor::eye(np, mask.dtype(), mask.device())?;
    let off = (eye.ones_like()? - eye)?.reshape((1, np, np, 1))?;
    Ok(both.broadcast_mul(&off)?)
}
