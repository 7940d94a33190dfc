//! Per-person gaze encoding: head crops to person tokens.

use candle_core::{Tensor, D};
use socialgaze_core::config::{BackboneKind, RunConfig};

use crate::error::{ensure, Result};
use crate::layers::{diagonal_bias, gelu, key_bias, Conv2d, Linear, Mlp, TransformerLayer};
use crate::params::{Init, Scope};

/// Rejects tensors holding NaN or infinite values.
pub(crate) fn ensure_finite(t: &Tensor, what: &str) -> Result<()> {
    let probe = (t - t)?.sum_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    ensure!(probe.is_finite(), "{what} contains non-finite values");
    Ok(())
}

/// Three stride-2 conv stages, global average pooling and a projection.
#[derive(Debug, Clone)]
pub struct ToyCnn {
    stages: Vec<Conv2d>,
    proj: Linear,
}

impl ToyCnn {
    const WIDTHS: [usize; 3] = [8, 16, 32];

    pub fn new(s: &Scope, out_dim: usize) -> Result<Self> {
        let mut stages = Vec::new();
        let mut c_in = 3;
        for (k, &w) in Self::WIDTHS.iter().enumerate() {
            stages.push(Conv2d::new(&s.sub(format!("stage{k}")), c_in, w, 3, 2, 1, true)?);
            c_in = w;
        }
        Ok(Self {
            stages,
            proj: Linear::new(&s.sub("proj"), c_in, out_dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for st in &self.stages {
            h = gelu(&st.forward(&h)?)?;
        }
        self.proj.forward(&h.mean(D::Minus1)?.mean(D::Minus1)?)
    }
}

/// Inference-mode batch norm; running statistics are buffers.
#[derive(Debug, Clone)]
struct BatchNorm {
    gamma: Tensor,
    beta: Tensor,
    mean: Tensor,
    var: Tensor,
}

impl BatchNorm {
    fn new(s: &Scope, c: usize) -> Result<Self> {
        Ok(Self {
            gamma: s.param("gamma", &[c], Init::Ones)?,
            beta: s.param("beta", &[c], Init::Zeros)?,
            mean: s.buffer("running_mean", &[c], Init::Zeros)?,
            var: s.buffer("running_var", &[c], Init::Ones)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.gamma.dim(0)?;
        let shape = (1, c, 1, 1);
        let scale = (&self.gamma / (&self.var + 1e-5)?.sqrt()?)?;
        let shift = (&self.beta - (&self.mean * &scale)?)?;
        Ok(x.broadcast_mul(&scale.reshape(shape)?)?.broadcast_add(&shift.reshape(shape)?)?)
    }
}

#[derive(Debug, Clone)]
struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    down: Option<(Conv2d, BatchNorm)>,
}

impl BasicBlock {
    fn new(s: &Scope, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        let down = if stride != 1 || c_in != c_out {
            Some((
                Conv2d::new(&s.sub("down.conv"), c_in, c_out, 1, stride, 0, false)?,
                BatchNorm::new(&s.sub("down.bn"), c_out)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::new(&s.sub("conv1"), c_in, c_out, 3, stride, 1, false)?,
            bn1: BatchNorm::new(&s.sub("bn1"), c_out)?,
            conv2: Conv2d::new(&s.sub("conv2"), c_out, c_out, 3, 1, 1, false)?,
            bn2: BatchNorm::new(&s.sub("bn2"), c_out)?,
            down,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?)?;
        let skip = match &self.down {
            Some((c, bn)) => bn.forward(&c.forward(x)?)?,
            None => x.clone(),
        };
        Ok((h + skip)?.relu()?)
    }
}

/// ResNet18 trunk without the classifier, producing 512-d embeddings.
/// Parameter names follow a flat dotted layout so converted weights can be
/// loaded with `ParamStore::set`.
#[derive(Debug, Clone)]
pub struct ResNet18 {
    stem: Conv2d,
    stem_bn: BatchNorm,
    blocks: Vec<BasicBlock>,
}

impl ResNet18 {
    pub const OUT_DIM: usize = 512;

    pub fn new(s: &Scope) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut c_in = 64;
        for (stage, &c) in [64usize, 128, 256, 512].iter().enumerate() {
            for k in 0..2 {
                let stride = if stage > 0 && k == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(&s.sub(format!("layer{}.{k}", stage + 1)), c_in, c, stride)?);
                c_in = c;
            }
        }
        Ok(Self {
            stem: Conv2d::new(&s.sub("conv1"), 3, 64, 7, 2, 3, false)?,
            stem_bn: BatchNorm::new(&s.sub("bn1"), 64)?,
            blocks,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.stem_bn.forward(&self.stem.forward(x)?)?.relu()?;
        // Post-ReLU activations are non-negative, so zero padding acts like
        // the usual negative-infinity padding of the max pool.
        let h = h.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
        let mut h = h.max_pool2d_with_stride(3, 2)?;
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        Ok(h.mean(D::Minus1)?.mean(D::Minus1)?)
    }
}

#[derive(Debug, Clone)]
pub enum GazeBackbone {
    Toy(ToyCnn),
    ResNet18(ResNet18),
}

impl GazeBackbone {
    /// `[M, 3, C, C] -> [M, Dg]`, each crop processed independently.
    pub fn forward(&self, crops: &Tensor) -> Result<Tensor> {
        match self {
            GazeBackbone::Toy(b) => b.forward(crops),
            GazeBackbone::ResNet18(b) => b.forward(crops),
        }
    }
}

/// Everything the person module computes for `N` person tracks of `T` steps.
#[derive(Debug, Clone)]
pub struct PersonOutput {
    /// `[N, T, Dg]`
    pub static_emb: Tensor,
    /// `[N, T, Dg]`
    pub temporal: Tensor,
    /// `[N, T, 2]`, unnormalized.
    pub vectors: Tensor,
    /// `[N, T, D]`, zero on masked steps.
    pub tokens: Tensor,
}

#[derive(Debug, Clone)]
pub struct PersonModule {
    pub backbone: GazeBackbone,
    /// `[window, Dg]`, added before the temporal encoder when enabled.
    pub temporal_pos: Option<Tensor>,
    pub temporal: TransformerLayer,
    pub vector_head: Mlp,
    pub proj_gaze: Linear,
    pub proj_box: Linear,
    pub proj_speaking: Option<Linear>,
    static_model: bool,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl PersonModule {
    pub fn new(s: &Scope, cfg: &RunConfig) -> Result<Self> {
        let m = &cfg.model;
        let gd = m.gaze_dim;
        let backbone = match m.backbone {
            BackboneKind::Toy => GazeBackbone::Toy(ToyCnn::new(&s.sub("backbone"), gd)?),
            BackboneKind::ResNet18 => {
                ensure!(gd == ResNet18::OUT_DIM, "the ResNet18 backbone produces {} features", ResNet18::OUT_DIM);
                GazeBackbone::ResNet18(ResNet18::new(&s.sub("backbone"))?)
            }
        };
        let temporal_pos = if m.temporal_pos {
            Some(s.param("temporal_pos", &[cfg.data.window.max(1), gd], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self {
            backbone,
            temporal_pos,
            temporal: TransformerLayer::new(&s.sub("temporal"), gd, gcd(m.heads, gd), m.mlp_ratio, false)?,
            vector_head: Mlp::new(&s.sub("vector_head"), gd, gd, 2)?,
            proj_gaze: Linear::new(&s.sub("proj_gaze"), gd, m.dim)?,
            proj_box: Linear::new(&s.sub("proj_box"), 4, m.dim)?,
            proj_speaking: if cfg.ablation.speaking {
                Some(Linear::new(&s.sub("proj_speaking"), 1, m.dim)?)
            } else {
                None
            },
            static_model: cfg.ablation.static_model,
        })
    }

    /// Static per-frame embeddings, `[N, T, 3, C, C] -> [N, T, Dg]`.
    pub fn embed(&self, crops: &Tensor) -> Result<Tensor> {
        let (n, t, c, h, w) = crops.dims5()?;
        ensure_finite(crops, "head crops")?;
        let e = self.backbone.forward(&crops.reshape((n * t, c, h, w))?)?;
        let dg = e.dim(1)?;
        Ok(e.reshape((n, t, dg))?)
    }

    /// Temporal encoding of static embeddings; `mask [N, T]` hides invalid
    /// steps from the attention keys.
    pub fn encode_time(&self, static_emb: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (_, t, _) = static_emb.dims3()?;
        let mut x = static_emb.clone();
        if let Some(pos) = &self.temporal_pos {
            ensure!(t <= pos.dim(0)?, "window of {t} steps exceeds the {} learned positions", pos.dim(0)?);
            x = x.broadcast_add(&pos.narrow(0, 0, t)?)?;
        }
        let mut bias = key_bias(mask)?;
        if self.static_model {
            bias = bias.broadcast_add(&diagonal_bias(t, x.dtype(), x.device())?)?;
        }
        self.temporal.forward(&x, None, Some(&bias), None)
    }

    /// Person tokens: sum of the projected temporal embedding, head box and
    /// optional speaking score, zeroed on masked steps.
    pub fn tokenize(&self, temporal: &Tensor, boxes: &Tensor, speaking: Option<&Tensor>, mask: &Tensor) -> Result<Tensor> {
        let (n, t, _) = temporal.dims3()?;
        ensure!(boxes.dims() == [n, t, 4], "boxes have shape {:?}, expected [{n}, {t}, 4]", boxes.dims());
        let mut p = (self.proj_gaze.forward(temporal)? + self.proj_box.forward(boxes)?)?;
        match (speaking, &self.proj_speaking) {
            (Some(s), Some(proj)) => {
                ensure!(s.dims() == [n, t], "speaking scores have shape {:?}, expected [{n}, {t}]", s.dims());
                p = (p + proj.forward(&s.unsqueeze(2)?)?)?;
            }
            (Some(_), None) => return Err(crate::ModelError::validation("speaking scores given but the speaking projection is disabled")),
            _ => {}
        }
        Ok(p.broadcast_mul(&mask.unsqueeze(2)?)?)
    }

    pub fn forward(&self, crops: &Tensor, boxes: &Tensor, speaking: Option<&Tensor>, mask: &Tensor) -> Result<PersonOutput> {
        ensure_finite(boxes, "head boxes")?;
        let static_emb = self.embed(crops)?;
        let temporal = self.encode_time(&static_emb, mask)?;
        let vectors = self.vector_head.forward(&temporal)?.broadcast_mul(&mask.unsqueeze(2)?)?;
        let tokens = self.tokenize(&temporal, boxes, speaking, mask)?;
        Ok(PersonOutput {
            static_emb,
            temporal,
            vectors,
            tokens,
        })
    }
}
