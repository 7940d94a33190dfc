//! Two-stage training with AdamW, linear warmup and cosine decay.

use candle_core::Var;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use socialgaze_core::annotations::UnifiedFrameRecord;
use socialgaze_core::clips::{assemble_clip, clip_windows, AssembleOptions, ClipSample};
use socialgaze_core::config::RunConfig;
use socialgaze_core::frames::FrameSource;
use socialgaze_core::sampling::SampleMode;

use crate::batch::{collate, Batch};
use crate::checkpoint::Stage;
use crate::error::{ensure, ModelError, Result};
use crate::loss::{loss_total, LossTerms, LossWeights};
use crate::model::SocialGazeModel;

/// Learning rate at `step` of `total`: linear ramp from 0 over the warmup
/// fraction, then cosine decay from `peak` down to `floor * peak`.
pub fn lr_at(step: usize, total: usize, peak: f64, warmup: f64, floor: f64) -> f64 {
    let warm = (warmup * total as f64).round() as usize;
    if step < warm {
        return peak * step as f64 / warm as f64;
    }
    let span = total.saturating_sub(warm).max(1);
    let progress = ((step - warm) as f64 / span as f64).min(1.0);
    peak * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Configuration actually trained in a stage; stage 1 always trains the
/// static model.
pub fn stage_config(cfg: &RunConfig, stage: Stage) -> RunConfig {
    let mut c = cfg.clone();
    if stage == Stage::One {
        c.ablation.static_model = true;
    }
    c
}

/// Parameters the optimizer updates: buffers never, the scene encoder not in
/// stage 2, the gaze backbone not when frozen.
pub fn trainable(model: &SocialGazeModel, stage: Stage) -> Vec<(String, Var)> {
    model
        .params
        .learned()
        .into_iter()
        .filter(|(n, _)| !(stage == Stage::Two && n.starts_with("scene.")))
        .filter(|(n, _)| !(model.config.model.freeze_backbone && n.starts_with("person.backbone.")))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StepLog {
    pub stage: String,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    #[serde(flatten)]
    pub terms: LossTerms,
}

pub fn assemble_options(cfg: &RunConfig, mode: SampleMode) -> AssembleOptions {
    AssembleOptions {
        image_size: cfg.model.image_size,
        crop_size: cfg.model.crop_size,
        heatmap_size: cfg.model.heatmap_size,
        sigma: cfg.loss.sigma,
        mode,
        speaking: cfg.ablation.speaking,
        time_slots: cfg.effective_window(),
    }
}

/// Windows of a dataset, assembled once per draw.
pub struct TrainData<'a> {
    pub records: &'a [UnifiedFrameRecord],
    pub frames: &'a dyn FrameSource,
}

impl TrainData<'_> {
    pub fn windows(&self, cfg: &RunConfig) -> Vec<Vec<usize>> {
        clip_windows(self.records, cfg.effective_window(), cfg.data.stride)
    }

    pub fn sample(&self, window: &[usize], opts: &AssembleOptions, rng: &mut ChaCha8Rng) -> Result<ClipSample> {
        let recs: Vec<&UnifiedFrameRecord> = window.iter().map(|&i| &self.records[i]).collect();
        Ok(assemble_clip(&recs, self.frames, opts, rng)?)
    }
}

pub struct TrainOutcome {
    pub model: SocialGazeModel,
    pub steps: usize,
    pub log: Vec<StepLog>,
}

/// Trains one stage. Stage 2 starts from the weights of `init`, which must be
/// a stage-1 model; stage 1 may optionally warm-start too.
pub fn train(
    cfg: &RunConfig,
    stage: Stage,
    data: &TrainData<'_>,
    init: Option<&SocialGazeModel>,
    mut on_step: impl FnMut(&StepLog) -> Result<()>,
) -> Result<TrainOutcome> {
    let cfg = stage_config(cfg, stage);
    cfg.validate()?;
    if stage == Stage::Two && init.is_none() {
        return Err(ModelError::validation("stage 2 needs a stage-1 checkpoint to start from"));
    }
    let model = SocialGazeModel::new(&cfg)?;
    if let Some(src) = init {
        let weights = crate::checkpoint::snapshot(src)?;
        crate::checkpoint::load_weights(&model, &weights, true)?;
    }

    let windows = data.windows(&cfg);
    ensure!(!windows.is_empty(), "the training set has no windows");
    let bs = cfg.train.batch_size;
    let steps = if cfg.train.steps > 0 {
        cfg.train.steps
    } else {
        cfg.train.epochs * windows.len().div_ceil(bs)
    };
    let peak = match stage {
        Stage::One => cfg.train.lr_stage1,
        Stage::Two => cfg.train.lr_stage2,
    };
    let vars: Vec<Var> = trainable(&model, stage).into_iter().map(|(_, v)| v).collect();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: 0.0,
            beta1: cfg.train.beta1,
            beta2: cfg.train.beta2,
            eps: cfg.train.eps,
            weight_decay: cfg.train.weight_decay,
        },
    )?;
    let weights = LossWeights::from_config(&cfg);
    let opts = assemble_options(&cfg, SampleMode::Train { cap: cfg.data.max_persons });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(steps);

    for step in 0..steps {
        let mut picked = Vec::with_capacity(bs);
        while picked.len() < bs {
            if order.is_empty() {
                order = (0..windows.len()).collect();
                order.shuffle(&mut rng);
            }
            picked.push(order.pop().expect("refilled"));
        }
        let samples = picked
            .iter()
            .map(|&w| data.sample(&windows[w], &opts, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let batch = collate(&samples, None, model.dtype(), model.params.device())?;
        let (loss_value, terms) = train_step(&model, &mut opt, &batch, &weights, lr_at(step, steps, peak, cfg.train.warmup, cfg.train.cosine_floor))?;
        let entry = StepLog {
            stage: stage.to_string(),
            step,
            lr: opt.learning_rate(),
            loss: loss_value,
            terms,
        };
        on_step(&entry)?;
        log.push(entry);
    }
    Ok(TrainOutcome { model, steps, log })
}

/// One optimizer update; returns the pre-update loss.
pub fn train_step(model: &SocialGazeModel, opt: &mut AdamW, batch: &Batch, weights: &LossWeights, lr: f64) -> Result<(f64, LossTerms)> {
    let out = model.forward(batch.into())?;
    let loss = loss_total(&out, &batch.targets, weights)?;
    let value = loss.value()?;
    ensure!(value.is_finite(), "training loss became non-finite");
    opt.set_learning_rate(lr);
    opt.backward_step(&loss.total)?;
    Ok((value, loss.terms))
}
