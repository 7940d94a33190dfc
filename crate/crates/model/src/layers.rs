//! Building blocks composed from differentiable tensor primitives.

use candle_core::{DType, Device, Tensor, D};

use crate::error::Result;
use crate::params::{Init, Scope};

/// Additive bias used to exclude keys from attention; `exp` underflows to 0.
pub const MASK_BIAS: f64 = -1e9;

pub fn gelu(x: &Tensor) -> Result<Tensor> {
    Ok(x.gelu_erf()?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(s: &Scope, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            weight: s.param("weight", &[d_out, d_in], Init::LeCun { fan_in: d_in })?,
            bias: Some(s.param("bias", &[d_out], Init::Zeros)?),
        })
    }

    pub fn no_bias(s: &Scope, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            weight: s.param("weight", &[d_out, d_in], Init::LeCun { fan_in: d_in })?,
            bias: None,
        })
    }

    /// Applies to the last dimension of any-rank input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let d_in = *dims.last().expect("rank >= 1");
        let rows = x.elem_count() / d_in.max(1);
        let y = x.reshape((rows, d_in))?.matmul(&self.weight.t()?)?;
        let y = match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        };
        let mut out = dims;
        *out.last_mut().expect("rank >= 1") = self.weight.dim(0)?;
        Ok(y.reshape(out)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(s: &Scope, d: usize) -> Result<Self> {
        Ok(Self {
            gamma: s.param("gamma", &[d], Init::Ones)?,
            beta: s.param("beta", &[d], Init::Zeros)?,
            eps: 1e-6,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(xn.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Two linear layers with a GELU in between.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(s: &Scope, d_in: usize, hidden: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(&s.sub("fc1"), d_in, hidden)?,
            fc2: Linear::new(&s.sub("fc2"), hidden, d_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&gelu(&self.fc1.forward(x)?)?)
    }
}

/// Input projection, `hidden_layers` residual GELU layers of equal width, and
/// an unskipped output projection.
#[derive(Debug, Clone)]
pub struct ResidualMlp {
    pub input: Linear,
    pub hidden: Vec<Linear>,
    pub output: Linear,
}

impl ResidualMlp {
    pub fn new(s: &Scope, d_in: usize, width: usize, d_out: usize, hidden_layers: usize) -> Result<Self> {
        Ok(Self {
            input: Linear::new(&s.sub("input"), d_in, width)?,
            hidden: (0..hidden_layers)
                .map(|k| Linear::new(&s.sub(format!("hidden.{k}")), width, width))
                .collect::<Result<_>>()?,
            output: Linear::new(&s.sub("output"), width, d_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = gelu(&self.input.forward(x)?)?;
        for l in &self.hidden {
            h = (&h + gelu(&l.forward(&h)?)?)?;
        }
        self.output.forward(&h)
    }
}

#[derive(Debug, Clone)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(s: &Scope, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            q: Linear::new(&s.sub("q"), dim, dim)?,
            k: Linear::new(&s.sub("k"), dim, dim)?,
            v: Linear::new(&s.sub("v"), dim, dim)?,
            out: Linear::new(&s.sub("out"), dim, dim)?,
            heads,
        })
    }

    fn split(&self, x: &Tensor) -> Result<Tensor> {
        let (n, l, d) = x.dims3()?;
        Ok(x.reshape((n, l, self.heads, d / self.heads))?.transpose(1, 2)?.contiguous()?)
    }

    /// `queries [N, Lq, D]`, `context [N, Lk, D]`; `bias` broadcasts to
    /// `[N, heads, Lq, Lk]` and is added to the logits.
    pub fn forward(&self, queries: &Tensor, context: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let (n, lq, d) = queries.dims3()?;
        let q = self.split(&self.q.forward(queries)?)?;
        let k = self.split(&self.k.forward(context)?)?;
        let v = self.split(&self.v.forward(context)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let mut logits = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? * scale)?;
        if let Some(b) = bias {
            logits = logits.broadcast_add(b)?;
        }
        let w = candle_nn::ops::softmax(&logits, D::Minus1)?;
        let o = w.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((n, lq, d))?;
        self.out.forward(&o)
    }
}

/// Pre-norm transformer layer. With a context it is a cross-attention layer
/// (queries from `x`, keys/values from the context), otherwise self-attention.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub norm_q: LayerNorm,
    pub norm_kv: Option<LayerNorm>,
    pub attn: Attention,
    pub norm_ff: LayerNorm,
    pub ff: Mlp,
}

impl TransformerLayer {
    pub fn new(s: &Scope, dim: usize, heads: usize, mlp_ratio: usize, cross: bool) -> Result<Self> {
        Ok(Self {
            norm_q: LayerNorm::new(&s.sub("norm_q"), dim)?,
            norm_kv: if cross { Some(LayerNorm::new(&s.sub("norm_kv"), dim)?) } else { None },
            attn: Attention::new(&s.sub("attn"), dim, heads)?,
            norm_ff: LayerNorm::new(&s.sub("norm_ff"), dim)?,
            ff: Mlp::new(&s.sub("ff"), dim, dim * mlp_ratio, dim)?,
        })
    }

    /// `gate` (broadcastable to `x`) scales both residual increments.
    pub fn forward(&self, x: &Tensor, context: Option<&Tensor>, bias: Option<&Tensor>, gate: Option<&Tensor>) -> Result<Tensor> {
        let q = self.norm_q.forward(x)?;
        let a = match (context, &self.norm_kv) {
            (Some(c), Some(n)) => self.attn.forward(&q, &n.forward(c)?, bias)?,
            _ => self.attn.forward(&q, &q, bias)?,
        };
        let a = match gate {
            Some(g) => a.broadcast_mul(g)?,
            None => a,
        };
        let x = (x + a)?;
        let f = self.ff.forward(&self.norm_ff.forward(&x)?)?;
        let f = match gate {
            Some(g) => f.broadcast_mul(g)?,
            None => f,
        };
        Ok((x + f)?)
    }

    /// Parameters whose zeroing turns the layer into the identity.
    pub fn output_projections(&self) -> [&Linear; 2] {
        [&self.attn.out, &self.ff.fc2]
    }
}

/// `[N, L]` validity mask (1 valid, 0 excluded) to a `[N, 1, 1, L]` key bias.
pub fn key_bias(mask: &Tensor) -> Result<Tensor> {
    let (n, l) = mask.dims2()?;
    Ok(((mask.ones_like()? - mask)? * MASK_BIAS)?.reshape((n, 1, 1, l))?)
}

/// `[1, 1, L, L]` bias restricting every position to itself.
pub fn diagonal_bias(l: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut v = vec![MASK_BIAS; l * l];
    for i in 0..l {
        v[i * l + i] = 0.0;
    }
    Ok(Tensor::from_vec(v, (1, 1, l, l), device)?.to_dtype(dtype)?)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(s: &Scope, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize, bias: bool) -> Result<Self> {
        Ok(Self {
            weight: s.param("weight", &[c_out, c_in, k, k], Init::LeCun { fan_in: c_in * k * k })?,
            bias: if bias { Some(s.param("bias", &[c_out], Init::Zeros)?) } else { None },
            stride,
            padding,
        })
    }

    /// 1x1 output layer with small weights and a constant bias, so the
    /// initial logits sit near `bias` everywhere.
    pub fn logits(s: &Scope, c_in: usize, c_out: usize, bias: f64) -> Result<Self> {
        Ok(Self {
            weight: s.param("weight", &[c_out, c_in, 1, 1], Init::Normal(1e-2))?,
            bias: Some(s.param("bias", &[c_out], Init::Const(bias))?),
            stride: 1,
            padding: 0,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?)?,
            None => y,
        })
    }
}

/// Transposed convolution with kernel equal to stride, upsampling by exactly
/// `stride` without overlap.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl ConvTranspose2d {
    pub fn new(s: &Scope, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            weight: s.param("weight", &[c_in, c_out, stride, stride], Init::LeCun { fan_in: c_in })?,
            bias: s.param("bias", &[c_out], Init::Zeros)?,
            stride,
        })
    }

    /// `[N, C, H, W] -> [N, C', H*stride, W*stride]`
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, 0, 0, self.stride, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, self.bias.dim(0)?, 1, 1))?)?)
    }
}

/// Dense `dst x src` bilinear interpolation matrix (half-pixel centers).
pub fn resample_matrix(src: usize, dst: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let m = socialgaze_core::metrics::gaze::linear_resample_matrix(src, dst);
    Ok(Tensor::from_vec(m, (dst, src), device)?.to_dtype(dtype)?)
}

/// Bilinear resize of `[N, C, H, W]` to `[N, C, oh, ow]` as two matrix products.
pub fn resize_bilinear(x: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if (h, w) == (oh, ow) {
        return Ok(x.clone());
    }
    let (dt, dev) = (x.dtype(), x.device());
    let mw = resample_matrix(w, ow, dt, dev)?;
    let mh = resample_matrix(h, oh, dt, dev)?;
    // rows: [N*C*H, W] x [W, ow]
    let y = x.reshape((n * c * h, w))?.matmul(&mw.t()?)?;
    // columns: [oh, H] x [N*C, H, ow]
    let y = y.reshape((n * c, h, ow))?;
    let y = mh.unsqueeze(0)?.broadcast_as((n * c, oh, h))?.contiguous()?.matmul(&y)?;
    Ok(y.reshape((n, c, oh, ow))?)
}
