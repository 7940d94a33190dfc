//! Training objective: weighted sum of five masked loss terms.

use candle_core::{DType, Tensor, D};
use socialgaze_core::config::RunConfig;
use serde::Serialize;

use crate::batch::Targets;
use crate::error::{ensure, Result};
use crate::model::ModelOutput;

/// Probabilities are clamped to `[CLAMP, 1]` inside logarithms.
pub const CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub heatmap: f64,
    pub vector: f64,
    pub inout: f64,
    pub lah: f64,
    pub sa: f64,
    pub positive_weight: f64,
}

impl LossWeights {
    /// Configured coefficients with ablated terms set to zero.
    pub fn from_config(cfg: &RunConfig) -> Self {
        let l = &cfg.loss;
        let gf = if cfg.ablation.no_gf_loss { 0.0 } else { 1.0 };
        let soc = if cfg.ablation.no_social_loss { 0.0 } else { 1.0 };
        Self {
            heatmap: l.heatmap * gf,
            vector: l.vector * gf,
            inout: l.inout * gf,
            lah: l.lah * soc,
            sa: l.sa * soc,
            positive_weight: l.positive_weight,
        }
    }

    pub fn combine(&self, t: &LossTerms) -> f64 {
        self.heatmap * t.heatmap + self.vector * t.vector + self.inout * t.inout + self.lah * t.lah + self.sa * t.sa
    }
}

/// Unweighted per-term values; skipped or empty terms are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossTerms {
    pub heatmap: f64,
    pub vector: f64,
    pub inout: f64,
    pub lah: f64,
    pub sa: f64,
}

#[derive(Debug, Clone)]
pub struct Loss {
    pub total: Tensor,
    pub terms: LossTerms,
}

impl Loss {
    pub fn value(&self) -> Result<f64> {
        Ok(self.total.to_dtype(DType::F64)?.to_scalar::<f64>()?)
    }
}

fn count(valid: &Tensor) -> Result<f64> {
    Ok(valid.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Mean of `values` over entries where `valid` is 1, or `None` if none are.
fn masked_mean(values: &Tensor, valid: &Tensor) -> Result<Option<Tensor>> {
    let n = count(valid)?;
    if n == 0.0 {
        return Ok(None);
    }
    Ok(Some(((values * valid)?.sum_all()? / n)?))
}

/// Per-pixel squared error averaged per map: `[.., H*W] -> [..]`.
pub fn heatmap_mse(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    Ok((pred - gt)?.sqr()?.mean(D::Minus1)?)
}

/// `1 - cos` between raw predictions and unit targets, `[.., 2] -> [..]`.
pub fn cosine_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    let dot = (pred * gt)?.sum(D::Minus1)?;
    let norm = (pred.sqr()?.sum(D::Minus1)? + 1e-12)?.sqrt()?;
    Ok((1.0 - (dot / norm)?)?)
}

/// Binary cross-entropy with positives scaled by `positive_weight`.
pub fn weighted_bce(p: &Tensor, y: &Tensor, positive_weight: f64) -> Result<Tensor> {
    let log_p = p.maximum(CLAMP)?.log()?;
    let log_q = (1.0 - p)?.maximum(CLAMP)?.log()?;
    let pos = ((y * log_p)? * positive_weight)?;
    let neg = ((1.0 - y)? * log_q)?;
    Ok((pos + neg)?.neg()?)
}

/// Weighted total loss; a zero weight or an empty valid set skips the term.
pub fn loss_total(out: &ModelOutput, tg: &Targets, w: &LossWeights) -> Result<Loss> {
    let (bc, np, t, hh, ww) = out.heatmaps.dims5()?;
    ensure!(tg.heatmaps.dims() == [bc, np, t, hh * ww], "heatmap targets have shape {:?}", tg.heatmaps.dims());
    let mut total = out.heatmaps.zeros_like()?.sum_all()?;
    let mut terms = LossTerms::default();
    let add = |total: &mut Tensor, weight: f64, term: Option<Tensor>, slot: &mut f64| -> Result<()> {
        if let Some(v) = term {
            *slot = scalar(&v)?;
            *total = (&*total + (v * weight)?)?;
        }
        Ok(())
    };
    if w.heatmap != 0.0 {
        let pred = out.heatmaps.reshape((bc, np, t, hh * ww))?;
        let v = masked_mean(&heatmap_mse(&pred, &tg.heatmaps)?, &tg.heatmap_valid)?;
        add(&mut total, w.heatmap, v, &mut terms.heatmap)?;
    }
    if w.vector != 0.0 {
        let v = masked_mean(&cosine_loss(&out.vectors, &tg.vectors)?, &tg.vector_valid)?;
        add(&mut total, w.vector, v, &mut terms.vector)?;
    }
    if w.inout != 0.0 {
        let v = masked_mean(&weighted_bce(&out.inout, &tg.inout, 1.0)?, &tg.inout_valid)?;
        add(&mut total, w.inout, v, &mut terms.inout)?;
    }
    if w.lah != 0.0 {
        let v = masked_mean(&weighted_bce(&out.social.lah, &tg.lah, w.positive_weight)?, &tg.lah_valid)?;
        add(&mut total, w.lah, v, &mut terms.lah)?;
    }
    if w.sa != 0.0 {
        let v = masked_mean(&weighted_bce(&out.social.sa, &tg.sa, w.positive_weight)?, &tg.sa_valid)?;
        add(&mut total, w.sa, v, &mut terms.sa)?;
    }
    Ok(Loss { total, terms })
}
