//! Trains the toy model on synthetic clips and reports training-set metrics.
//!
//! `cargo run --release -p socialgaze-model --example overfit -- [key=value ...]`

use std::time::Instant;

use socialgaze_core::config::RunConfig;
use socialgaze_core::metrics::{evaluate, EvalOptions};
use socialgaze_core::synth::{synth_dataset, SynthOptions};
use socialgaze_model::checkpoint::Stage;
use socialgaze_model::infer::{infer, InferOptions};
use socialgaze_model::train::{train, TrainData};

fn main() -> anyhow::Result<()> {
    let mut cfg = RunConfig::preset("synthetic")?;
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    cfg.apply_overrides(&overrides)?;
    let (records, frames) = synth_dataset(&SynthOptions {
        seed: cfg.seed,
        ..SynthOptions::default()
    })?;
    let start = Instant::now();
    let data = TrainData { records: &records, frames: &frames };
    let out = train(&cfg, Stage::One, &data, None, |s| {
        if s.step % 50 == 0 {
            println!("step {:4} lr {:.5} loss {:.4} {:?}", s.step, s.lr, s.loss, s.terms);
        }
        Ok(())
    })?;
    println!("trained {} steps in {:.1}s", out.steps, start.elapsed().as_secs_f64());
    let preds = infer(&out.model, &records, &frames, InferOptions::default())?;
    let report = evaluate(&preds, &records, &EvalOptions::default())?;
    println!("{report}");
    Ok(())
}
