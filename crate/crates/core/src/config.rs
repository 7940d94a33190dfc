//! Run configuration: a flat `key = value` text format with dotted keys.
//!
//! Every key has a default, files and `--set` overrides only change the
//! keys they name, and unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::metrics::LaeoRetention;

/// How `model.splits` maps to ViT layer ranges per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Block `b` runs layers `(l[b-1], l[b]]`, 1-indexed, `l[0] = 0`.
    OneBasedEnd,
    /// Same ranges with 0-indexed layer numbers, so block 1 also runs layer `l[1]`.
    ZeroBasedEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    ResNet18,
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:path => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }
        impl ConfigValue for $ty {
            fn parse_value(s: &str) -> std::result::Result<Self, String> { s.parse() }
            fn render(&self) -> String { self.to_string() }
        }
    };
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! scalar_value {
    ($($ty:ty),*) => {$(
        impl ConfigValue for $ty {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String { self.to_string() }
        }
    )*};
}
scalar_value!(usize, u64, f64, bool);

impl ConfigValue for Vec<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect()
    }
    fn render(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

keyword_enum!(SplitMode { SplitMode::OneBasedEnd => "one_based_end", SplitMode::ZeroBasedEnd => "zero_based_end" });
keyword_enum!(BackboneKind { BackboneKind::ResNet18 => "resnet18", BackboneKind::Toy => "toy" });
keyword_enum!(Precision { Precision::F32 => "f32", Precision::F64 => "f64" });
keyword_enum!(LaeoRetention { LaeoRetention::EitherEndpoint => "either", LaeoRetention::BothEndpoints => "both" });

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub gaze_dim: usize,
    pub ms_dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub vit_depth: usize,
    pub patch: usize,
    pub image_size: usize,
    pub crop_size: usize,
    pub blocks: usize,
    pub splits: Vec<usize>,
    pub split_mode: SplitMode,
    pub backbone: BackboneKind,
    pub freeze_backbone: bool,
    pub temporal_pos: bool,
    pub heatmap_size: usize,
    pub dpt_features: usize,
    pub dpt_channels: Vec<usize>,
    /// Output stride of each reassembled map, relative to the input frame.
    pub dpt_scales: Vec<usize>,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub window: usize,
    pub stride: usize,
    pub max_persons: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub heatmap: f64,
    pub vector: f64,
    pub inout: f64,
    pub lah: f64,
    pub sa: f64,
    pub positive_weight: f64,
    /// Ground-truth heatmap Gaussian width, in heatmap cells.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub warmup: f64,
    pub cosine_floor: f64,
    pub epochs: usize,
    /// Fixed step count; 0 derives it from `epochs`.
    pub steps: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AblationConfig {
    pub no_i_ps: bool,
    pub no_i_sp: bool,
    pub no_i_ppt: bool,
    pub no_social_loss: bool,
    pub no_gf_loss: bool,
    pub static_model: bool,
    pub speaking: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub sa_threshold: f64,
    pub laeo_retention: LaeoRetention,
    pub auc_grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $($key => {
                        self.$($field).+ = ConfigValue::parse_value(value)
                            .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$($field).+.render()),)*
                    _ => None,
                }
            }
        }
    };
}

config_keys! {
    "model.dim" => model.dim;
    "model.gaze_dim" => model.gaze_dim;
    "model.ms_dim" => model.ms_dim;
    "model.heads" => model.heads;
    "model.mlp_ratio" => model.mlp_ratio;
    "model.vit_depth" => model.vit_depth;
    "model.patch" => model.patch;
    "model.image_size" => model.image_size;
    "model.crop_size" => model.crop_size;
    "model.blocks" => model.blocks;
    "model.splits" => model.splits;
    "model.split_mode" => model.split_mode;
    "model.backbone" => model.backbone;
    "model.freeze_backbone" => model.freeze_backbone;
    "model.temporal_pos" => model.temporal_pos;
    "model.heatmap_size" => model.heatmap_size;
    "model.dpt_features" => model.dpt_features;
    "model.dpt_channels" => model.dpt_channels;
    "model.dpt_scales" => model.dpt_scales;
    "model.precision" => model.precision;
    "data.window" => data.window;
    "data.stride" => data.stride;
    "data.max_persons" => data.max_persons;
    "loss.heatmap" => loss.heatmap;
    "loss.vector" => loss.vector;
    "loss.inout" => loss.inout;
    "loss.lah" => loss.lah;
    "loss.sa" => loss.sa;
    "loss.positive_weight" => loss.positive_weight;
    "loss.sigma" => loss.sigma;
    "train.lr_stage1" => train.lr_stage1;
    "train.lr_stage2" => train.lr_stage2;
    "train.warmup" => train.warmup;
    "train.cosine_floor" => train.cosine_floor;
    "train.epochs" => train.epochs;
    "train.steps" => train.steps;
    "train.batch_size" => train.batch_size;
    "train.weight_decay" => train.weight_decay;
    "train.beta1" => train.beta1;
    "train.beta2" => train.beta2;
    "train.eps" => train.eps;
    "ablation.no_i_ps" => ablation.no_i_ps;
    "ablation.no_i_sp" => ablation.no_i_sp;
    "ablation.no_i_ppt" => ablation.no_i_ppt;
    "ablation.no_social_loss" => ablation.no_social_loss;
    "ablation.no_gf_loss" => ablation.no_gf_loss;
    "ablation.static" => ablation.static_model;
    "ablation.speaking" => ablation.speaking;
    "eval.sa_threshold" => eval.sa_threshold;
    "eval.laeo_retention" => eval.laeo_retention;
    "eval.auc_grid" => eval.auc_grid;
    "seed" => seed;
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl RunConfig {
    /// Full-size configuration: ViT-base scene encoder, ResNet18 gaze backbone.
    pub fn reference() -> Self {
        RunConfig {
            model: ModelConfig {
                dim: 768,
                gaze_dim: 512,
                ms_dim: 64,
                heads: 12,
                mlp_ratio: 4,
                vit_depth: 12,
                patch: 16,
                image_size: 224,
                crop_size: 224,
                blocks: 4,
                splits: vec![2, 5, 8, 11],
                split_mode: SplitMode::OneBasedEnd,
                backbone: BackboneKind::ResNet18,
                freeze_backbone: false,
                temporal_pos: true,
                heatmap_size: 64,
                dpt_features: 256,
                dpt_channels: vec![96, 192, 384, 768],
                dpt_scales: vec![4, 8, 16, 32],
                precision: Precision::F32,
            },
            data: DataConfig {
                window: 5,
                stride: 3,
                max_persons: 4,
            },
            loss: LossConfig {
                heatmap: 1000.0,
                vector: 3.0,
                inout: 2.0,
                lah: 1.0,
                sa: 1.0,
                positive_weight: 2.0,
                sigma: 3.0,
            },
            train: TrainConfig {
                lr_stage1: 1e-4,
                lr_stage2: 3e-6,
                warmup: 0.05,
                cosine_floor: 0.01,
                epochs: 20,
                steps: 0,
                batch_size: 8,
                weight_decay: 0.01,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            ablation: AblationConfig::default(),
            eval: EvalConfig {
                sa_threshold: 0.10,
                laeo_retention: LaeoRetention::EitherEndpoint,
                auc_grid: 64,
            },
            seed: 0,
        }
    }

    /// Tiny CPU configuration used by tests and the synthetic benchmarks.
    pub fn toy() -> Self {
        let mut c = Self::reference();
        c.model = ModelConfig {
            dim: 16,
            gaze_dim: 8,
            ms_dim: 8,
            heads: 2,
            mlp_ratio: 2,
            vit_depth: 2,
            patch: 8,
            image_size: 16,
            crop_size: 16,
            blocks: 2,
            splits: vec![1, 2],
            split_mode: SplitMode::OneBasedEnd,
            backbone: BackboneKind::Toy,
            freeze_backbone: false,
            temporal_pos: true,
            heatmap_size: 8,
            dpt_features: 8,
            dpt_channels: vec![8, 16],
            dpt_scales: vec![4, 8],
            precision: Precision::F64,
        };
        c.data = DataConfig {
            window: 2,
            stride: 1,
            max_persons: 2,
        };
        c.train.batch_size = 2;
        c.train.lr_stage1 = 1e-3;
        c.train.lr_stage2 = 1e-3;
        c.eval.auc_grid = 8;
        c
    }

    /// Small model sized for the default synthetic dataset (16-cell grid).
    pub fn synthetic() -> Self {
        let mut c = Self::toy();
        let m = &mut c.model;
        m.dim = 32;
        m.gaze_dim = 16;
        m.ms_dim = 16;
        m.heads = 4;
        m.image_size = 32;
        m.crop_size = 16;
        m.heatmap_size = 16;
        m.dpt_features = 16;
        m.dpt_channels = vec![16, 32];
        c.data.max_persons = 3;
        c.loss.sigma = 1.0;
        c.train.steps = 500;
        c.train.batch_size = 8;
        c.train.lr_stage1 = 2e-3;
        c.train.lr_stage2 = 2e-4;
        c.eval.auc_grid = 16;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "reference" => Ok(Self::reference()),
            "toy" => Ok(Self::toy()),
            "synthetic" => Ok(Self::synthetic()),
            _ => Err(Error::Config(format!("unknown preset `{name}` (expected reference, toy or synthetic)"))),
        }
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::reference();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides, e.g. from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn entries(&self) -> BTreeMap<String, String> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::reference();
        for (k, v) in entries {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Canonical text: every key, sorted, one per line.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Number of frames in one temporal window; static models see one.
    pub fn effective_window(&self) -> usize {
        if self.ablation.static_model {
            1
        } else {
            self.data.window
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        ensure!(m.dim > 0 && m.gaze_dim > 0 && m.ms_dim > 0, "model dimensions must be positive");
        ensure!(m.heads > 0 && m.dim % m.heads == 0, "model.heads ({}) must divide model.dim ({})", m.heads, m.dim);
        ensure!(m.mlp_ratio > 0, "model.mlp_ratio must be positive");
        ensure!(m.patch > 0 && m.image_size % m.patch == 0, "model.image_size must be a multiple of model.patch");
        ensure!(m.crop_size >= 8, "model.crop_size must be at least 8");
        ensure!(m.blocks > 0, "model.blocks must be positive");
        ensure!(m.splits.len() == m.blocks, "model.splits needs {} entries", m.blocks);
        ensure!(m.splits.windows(2).all(|w| w[0] < w[1]), "model.splits must be strictly increasing");
        ensure!(m.splits[0] >= 1, "model.splits entries start at 1");
        let last = *m.splits.last().expect("non-empty");
        match m.split_mode {
            SplitMode::OneBasedEnd => ensure!(last <= m.vit_depth, "model.splits exceed model.vit_depth"),
            SplitMode::ZeroBasedEnd => ensure!(last < m.vit_depth, "model.splits exceed model.vit_depth"),
        }
        ensure!(m.heatmap_size > 0 && m.dpt_features >= 2, "bad heatmap/decoder size");
        ensure!(m.dpt_channels.len() == m.blocks, "model.dpt_channels needs {} entries", m.blocks);
        ensure!(m.dpt_scales.len() == m.blocks, "model.dpt_scales needs {} entries", m.blocks);
        ensure!(m.dpt_channels.iter().all(|&c| c > 0), "model.dpt_channels must be positive");
        for &s in &m.dpt_scales {
            let ok = (s <= m.patch && m.patch % s == 0 && (m.patch / s).is_power_of_two())
                || (s > m.patch && s % m.patch == 0 && (s / m.patch).is_power_of_two());
            ensure!(ok, "decoder scale {s} must be the patch size times a power of two");
        }
        if m.backbone == BackboneKind::ResNet18 {
            ensure!(m.gaze_dim == 512, "the ResNet18 backbone produces 512-d embeddings");
        }
        let d = &self.data;
        ensure!(d.window >= 1 && d.stride >= 1, "data.window and data.stride must be positive");
        ensure!(d.max_persons >= 1, "data.max_persons must be positive");
        let l = &self.loss;
        for (name, v) in [
            ("loss.heatmap", l.heatmap),
            ("loss.vector", l.vector),
            ("loss.inout", l.inout),
            ("loss.lah", l.lah),
            ("loss.sa", l.sa),
            ("loss.positive_weight", l.positive_weight),
        ] {
            ensure!(v.is_finite() && v >= 0.0, "{name} must be a finite non-negative number");
        }
        ensure!(l.sigma > 0.0, "loss.sigma must be positive");
        let t = &self.train;
        ensure!(t.lr_stage1 >= 0.0 && t.lr_stage2 >= 0.0, "learning rates must be non-negative");
        ensure!((0.0..1.0).contains(&t.warmup), "train.warmup must be in [0,1)");
        ensure!((0.0..=1.0).contains(&t.cosine_floor), "train.cosine_floor must be in [0,1]");
        ensure!(t.batch_size >= 1, "train.batch_size must be positive");
        ensure!(t.steps > 0 || t.epochs > 0, "either train.steps or train.epochs must be positive");
        ensure!(t.eps > 0.0 && (0.0..1.0).contains(&t.beta1) && (0.0..1.0).contains(&t.beta2), "bad AdamW moments");
        ensure!(self.eval.sa_threshold >= 0.0, "eval.sa_threshold must be non-negative");
        ensure!(self.eval.auc_grid > 0, "eval.auc_grid must be positive");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RunConfig::reference().validate().unwrap();
        RunConfig::toy().validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::toy();
        c.loss.sigma = 2.5;
        c.ablation.no_i_sp = true;
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(RunConfig::from_entries(&c.entries()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(RunConfig::parse("model.depth = 3"), Err(Error::Config(_))));
        assert!(RunConfig::parse("model.dim = many").is_err());
        assert!(RunConfig::parse("model.dim").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn overrides_and_comments() {
        let mut c = RunConfig::parse("# toy run\nmodel.dim = 32 # wider\nmodel.splits = 1, 3").unwrap();
        assert_eq!(c.model.dim, 32);
        assert_eq!(c.model.splits, vec![1, 3]);
        c.apply_overrides(&["seed=9", "eval.laeo_retention=both"]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.eval.laeo_retention, LaeoRetention::BothEndpoints);
        let h = c.hash();
        c.seed = 10;
        assert_ne!(h, c.hash());
    }

    #[test]
    fn validation_catches_bad_splits() {
        let mut c = RunConfig::reference();
        c.model.splits = vec![2, 5, 5, 11];
        assert!(c.validate().is_err());
        c.model.splits = vec![2, 5, 8, 12];
        c.validate().unwrap();
        c.model.split_mode = SplitMode::ZeroBasedEnd;
        assert!(c.validate().is_err());
        let mut c = RunConfig::toy();
        c.model.dpt_scales = vec![4, 12];
        assert!(c.validate().is_err());
    }
}
