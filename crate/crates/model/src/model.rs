//! The full network: person module, scene encoder with interaction blocks,
//! and prediction heads.

use candle_core::{DType, Tensor};
use socialgaze_core::config::{Precision, RunConfig};

use crate::batch::Batch;
use crate::error::{ensure, Result};
use crate::interaction::{InteractionModule, InteractionTrace};
use crate::params::ParamStore;
use crate::person::{PersonModule, PersonOutput};
use crate::prediction::{HeatmapDecoder, SocialHeads, SocialScores};
use crate::vit::SceneEncoder;

pub fn dtype_of(p: Precision) -> DType {
    match p {
        Precision::F32 => DType::F32,
        Precision::F64 => DType::F64,
    }
}

/// Model inputs for `Bc` clips, `Np` person slots and `T` steps.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    /// `[Bc, T, 3, S, S]`
    pub frames: &'a Tensor,
    /// `[Bc, Np, T, 3, C, C]`
    pub crops: &'a Tensor,
    /// `[Bc, Np, T, 4]`
    pub boxes: &'a Tensor,
    /// `[Bc, Np, T]`
    pub mask: &'a Tensor,
    /// `[Bc, Np, T]`
    pub speaking: Option<&'a Tensor>,
}

impl<'a> From<&'a Batch> for Inputs<'a> {
    fn from(b: &'a Batch) -> Self {
        Inputs {
            frames: &b.frames,
            crops: &b.crops,
            boxes: &b.boxes,
            mask: &b.mask,
            speaking: b.speaking.as_ref(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// `[Bc, Np, T, Hh, Wh]`
    pub heatmaps: Tensor,
    /// `[Bc, Np, T, 2]`
    pub vectors: Tensor,
    /// `[Bc, Np, T]`
    pub inout: Tensor,
    pub social: SocialScores,
    /// `[Bc, Np, T, (B+1)*Dms]`
    pub multiscale: Tensor,
    pub person: PersonOutput,
    pub trace: InteractionTrace,
}

pub struct SocialGazeModel {
    pub config: RunConfig,
    pub params: ParamStore,
    pub person: PersonModule,
    pub scene: SceneEncoder,
    pub interaction: InteractionModule,
    pub decoder: HeatmapDecoder,
    pub heads: SocialHeads,
}

impl SocialGazeModel {
    /// Builds a freshly initialized model; the seed fixes every weight.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::new(config.seed, dtype_of(config.model.precision));
        let root = params.root();
        let person = PersonModule::new(&root.sub("person"), config)?;
        let scene = SceneEncoder::new(&root.sub("scene"), config)?;
        let interaction = InteractionModule::new(&root.sub("interaction"), config)?;
        let decoder = HeatmapDecoder::new(&root.sub("decoder"), config)?;
        let heads = SocialHeads::new(&root.sub("heads"), config)?;
        Ok(Self {
            config: config.clone(),
            params,
            person,
            scene,
            interaction,
            decoder,
            heads,
        })
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn forward(&self, x: Inputs<'_>) -> Result<ModelOutput> {
        let (bc, np, t, _) = x.boxes.dims4()?;
        let (fb, ft, _, _, _) = x.frames.dims5()?;
        ensure!(fb == bc && ft == t, "frames cover [{fb}, {ft}] clips/steps, persons [{bc}, {t}]");
        ensure!(x.mask.dims() == [bc, np, t], "mask shape {:?} does not match [{bc}, {np}, {t}]", x.mask.dims());
        ensure!(np >= 1, "at least one person slot is required");
        let present = x.mask.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        ensure!(present > 0.0, "no person is present in the input");
        crate::person::ensure_finite(x.frames, "frames")?;

        let cd = x.crops.dims();
        ensure!(cd.len() == 6 && cd[..3] == [bc, np, t], "crops shape {cd:?} does not match [{bc}, {np}, {t}, 3, C, C]");
        let (c, hc, wc) = (cd[3], cd[4], cd[5]);
        let flat_mask = x.mask.reshape((bc * np, t))?;
        let speaking = x.speaking.map(|s| s.reshape((bc * np, t))).transpose()?;
        let person = self.person.forward(
            &x.crops.reshape((bc * np, t, c, hc, wc))?,
            &x.boxes.reshape((bc * np, t, 4))?,
            speaking.as_ref(),
            &flat_mask,
        )?;
        let d = self.config.model.dim;
        let tokens = person.tokens.reshape((bc, np, t, d))?;

        let (_, _, cf, hf, wf) = x.frames.dims5()?;
        let frames = self.scene.tokenize(&x.frames.reshape((bc * t, cf, hf, wf))?)?;
        let trace = self.interaction.forward(&self.scene, &frames, &tokens, x.mask)?;

        let heatmaps = self.decoder.forward(&trace.frames, &trace.persons[1..])?;
        let hm_mask = x.mask.reshape((bc, np, t, 1, 1))?;
        let heatmaps = heatmaps.broadcast_mul(&hm_mask)?;
        let multiscale = self.heads.multiscale(&trace.persons)?;
        let social = self.heads.social(&multiscale, x.mask)?;
        let inout = self.heads.inout(&multiscale, x.mask)?;
        let vectors = person.vectors.reshape((bc, np, t, 2))?;
        Ok(ModelOutput {
            heatmaps,
            vectors,
            inout,
            social,
            multiscale,
            person,
            trace,
        })
    }
}
