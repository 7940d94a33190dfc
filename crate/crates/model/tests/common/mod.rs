#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socialgaze_core::annotations::UnifiedFrameRecord;
use socialgaze_core::config::RunConfig;
use socialgaze_core::frames::FrameStore;
use socialgaze_core::sampling::SampleMode;
use socialgaze_core::synth::{synth_dataset, SynthOptions};
use socialgaze_model::batch::{collate, Batch};
use socialgaze_model::train::{assemble_options, TrainData};
use socialgaze_model::{Inputs, SocialGazeModel};

/// Random model inputs with every tensor owned.
pub struct RandomInputs {
    pub frames: Tensor,
    pub crops: Tensor,
    pub boxes: Tensor,
    pub mask: Tensor,
    pub speaking: Option<Tensor>,
}

impl RandomInputs {
    pub fn inputs(&self) -> Inputs<'_> {
        Inputs {
            frames: &self.frames,
            crops: &self.crops,
            boxes: &self.boxes,
            mask: &self.mask,
            speaking: self.speaking.as_ref(),
        }
    }

    /// Same inputs with person slots reordered along dimension 1.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let idx = Tensor::new(perm.iter().map(|&i| i as u32).collect::<Vec<_>>(), self.mask.device()).unwrap();
        RandomInputs {
            frames: self.frames.clone(),
            crops: self.crops.index_select(&idx, 1).unwrap(),
            boxes: self.boxes.index_select(&idx, 1).unwrap(),
            mask: self.mask.index_select(&idx, 1).unwrap(),
            speaking: self.speaking.as_ref().map(|s| s.index_select(&idx, 1).unwrap()),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// Inputs of `bc` clips with `np` slots and `t` steps. With `pad`, each slot
/// step is absent with probability 0.3, but every clip keeps one person.
pub fn random_inputs(cfg: &RunConfig, bc: usize, np: usize, t: usize, pad: bool, seed: u64) -> RandomInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = &cfg.model;
    let dt = socialgaze_model::model::dtype_of(m.precision);
    let dev = Device::Cpu;
    let (s, c) = (m.image_size, m.crop_size);
    let f = normal(&mut rng, bc * t * 3 * s * s);
    let cr = normal(&mut rng, bc * np * t * 3 * c * c);
    let mut boxes = Vec::with_capacity(bc * np * t * 4);
    for _ in 0..bc * np * t {
        let (x0, y0) = (rng.random_range(0.0..0.8), rng.random_range(0.0..0.8));
        let (w, h) = (rng.random_range(0.05..0.2), rng.random_range(0.05..0.2));
        boxes.extend([x0, y0, x0 + w, y0 + h]);
    }
    let mut mask: Vec<f64> = (0..bc * np * t)
        .map(|_| if !pad || rng.random_bool(0.7) { 1.0 } else { 0.0 })
        .collect();
    for b in 0..bc {
        let slab = &mut mask[b * np * t..(b + 1) * np * t];
        if !slab.is_empty() && slab.iter().all(|&v| v == 0.0) {
            slab[rng.random_range(0..np * t)] = 1.0;
        }
    }
    let speaking = cfg
        .ablation
        .speaking
        .then(|| Tensor::from_vec((0..bc * np * t).map(|_| rng.random::<f64>()).collect::<Vec<_>>(), (bc, np, t), &dev));
    let tensor = |v: Vec<f64>, shape: &[usize]| Tensor::from_vec(v, shape, &dev).unwrap().to_dtype(dt).unwrap();
    RandomInputs {
        frames: tensor(f, &[bc, t, 3, s, s]),
        crops: tensor(cr, &[bc, np, t, 3, c, c]),
        boxes: tensor(boxes, &[bc, np, t, 4]),
        mask: tensor(mask, &[bc, np, t]),
        speaking: speaking.map(|s| s.unwrap().to_dtype(dt).unwrap()),
    }
}

pub fn synth(n_clips: usize, persons: usize, seed: u64) -> (Vec<UnifiedFrameRecord>, FrameStore) {
    synth_dataset(&SynthOptions {
        seed,
        n_clips,
        persons_per_clip: persons,
        frames_per_clip: 4,
        ..SynthOptions::default()
    })
    .unwrap()
}

/// A training batch of the first `clips` windows, padded to `capacity`.
pub fn synth_batch(cfg: &RunConfig, clips: usize, capacity: Option<usize>, seed: u64) -> Batch {
    let (records, frames) = synth(clips.max(2), cfg.data.max_persons + 1, seed);
    let data = TrainData { records: &records, frames: &frames };
    let opts = assemble_options(cfg, SampleMode::Train { cap: cfg.data.max_persons });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let windows = data.windows(cfg);
    let mut seen = std::collections::BTreeSet::new();
    let samples: Vec<_> = windows
        .iter()
        .filter(|w| seen.insert(records[w[0]].clip_id.clone()))
        .take(clips)
        .map(|w| data.sample(w, &opts, &mut rng).unwrap())
        .collect();
    collate(&samples, capacity, dtype(cfg), &Device::Cpu).unwrap()
}

pub fn dtype(cfg: &RunConfig) -> DType {
    socialgaze_model::model::dtype_of(cfg.model.precision)
}

pub fn flat(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.dims(), b.dims());
    flat(a).iter().zip(flat(b)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn var(model: &SocialGazeModel, name: &str) -> Var {
    model
        .params
        .vars()
        .into_iter()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("no parameter {name}"))
        .1
}

/// Sum of absolute gradient entries over parameters whose name starts with
/// any of `prefixes`; parameters outside the graph count as zero.
pub fn grad_mass(model: &SocialGazeModel, loss: &Tensor, prefixes: &[&str]) -> f64 {
    let grads = loss.backward().unwrap();
    model
        .params
        .vars()
        .iter()
        .filter(|(n, _)| prefixes.iter().any(|p| n.starts_with(p)))
        .filter_map(|(_, v)| grads.get(v.as_tensor()))
        .map(|g| flat(g).iter().map(|x| x.abs()).sum::<f64>())
        .sum()
}

/// Zeroes the attention and feed-forward output projections under `prefix`,
/// turning that transformer layer into the identity.
pub fn zero_layer(model: &SocialGazeModel, prefix: &str) {
    let n = model.params.fill_prefix(&format!("{prefix}.attn.out."), 0.0).unwrap()
        + model.params.fill_prefix(&format!("{prefix}.ff.fc2."), 0.0).unwrap();
    assert_eq!(n, 4, "{prefix} is not a transformer layer");
}

pub fn toy_with(f: impl FnOnce(&mut RunConfig)) -> RunConfig {
    let mut cfg = RunConfig::toy();
    f(&mut cfg);
    cfg
}
