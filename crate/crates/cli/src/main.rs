use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use socialgaze_core::annotations::{read_records, write_records, DatasetId, UnifiedFrameRecord};
use socialgaze_core::config::RunConfig;
use socialgaze_core::frames::{save_frame, FrameDir, FrameSource, FrameStore};
use socialgaze_core::metrics::{evaluate, EvalOptions, SocialSource};
use socialgaze_core::pipeline::{build_annotations, PipelineOptions, DEFAULT_TRACK_IOU};
use socialgaze_core::predictions::{read_predictions, write_predictions};
use socialgaze_core::source::{read_source, read_tracks};
use socialgaze_core::synth::{synth_generate, SynthOptions};
use socialgaze_model::checkpoint::{self, Stage};
use socialgaze_model::infer::{infer, InferOptions};
use socialgaze_model::train::{train, TrainData};
use socialgaze_cli::render::{render_frame, RenderOptions};

#[derive(Parser)]
#[command(name = "socialgaze", version, about = "Multi-person gaze following and social gaze prediction")]
struct Cli {
    /// Root for outputs whose path is not given explicitly.
    #[arg(long, env = "SOCIALGAZE_HOME", default_value = "socialgaze-out", global = true)]
    home: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset's source annotations into unified records.
    BuildAnnotations(BuildArgs),
    /// Write a procedural dataset: records plus rendered frames.
    SynthData(SynthArgs),
    /// Train stage 1, stage 2 or both.
    Train(TrainArgs),
    /// Predict every annotated frame with a checkpoint.
    Infer(InferArgs),
    /// Score predictions against unified records.
    Evaluate(EvalArgs),
    /// Draw predictions over their frames.
    Render(RenderArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Starting values: reference, toy or synthetic.
    #[arg(long, default_value = "reference")]
    preset: String,
    /// `key = value` file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` overrides applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Train the single-frame model.
    #[arg(long = "static")]
    static_model: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::preset(&self.preset)?;
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            cfg.apply_text(&text)?;
        }
        cfg.apply_overrides(&self.overrides)?;
        if self.static_model {
            cfg.ablation.static_model = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    dataset: DatasetId,
    /// Source records, one JSON object per line.
    #[arg(long)]
    source: PathBuf,
    /// Tracked head boxes, one JSON object per line.
    #[arg(long)]
    tracks: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TRACK_IOU)]
    track_iou: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    clips: usize,
    #[arg(long, default_value_t = 3)]
    persons: usize,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    frame_size: u32,
    #[arg(long, default_value_t = 16)]
    grid: usize,
    /// Attach speaking scores to every person.
    #[arg(long)]
    speaking: bool,
    /// Output directory; holds `annotations.jsonl` and `frames/`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    stage: StageArg,
    /// Checkpoint to start from; required when training stage 2 alone.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the loss every this many steps.
    #[arg(long, default_value_t = 50)]
    log_every: usize,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    /// Include the full heatmap of every person.
    #[arg(long)]
    heatmaps: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SocialArg {
    Decoder,
    Pp,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Score social gaze from the decoders or from the predicted points.
    #[arg(long, value_enum, default_value = "decoder")]
    social: SocialArg,
    /// Evaluation settings come from `eval.*` keys.
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Records providing the head boxes.
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value_t = 256)]
    min_width: u32,
    /// Scores at or above this count as a social label.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_records(path: &Path) -> Result<Vec<UnifiedFrameRecord>> {
    read_records(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn build(home: &Path, a: &BuildArgs) -> Result<()> {
    let sources = read_source(open(&a.source)?, a.dataset)?;
    let tracks = match &a.tracks {
        Some(p) => read_tracks(open(p)?)?,
        None => Vec::new(),
    };
    let built = build_annotations(a.dataset, &sources, &tracks, &PipelineOptions { track_iou: a.track_iou })?;
    let out = a.out.clone().unwrap_or_else(|| home.join(format!("{}.jsonl", a.dataset)));
    let mut w = create(&out)?;
    write_records(&mut w, &built.records)?;
    w.flush()?;
    for c in &built.conflicts {
        eprintln!("track conflict: {c:?}");
    }
    println!("{} records, {} track conflicts -> {}", built.records.len(), built.conflicts.len(), out.display());
    Ok(())
}

fn synth(home: &Path, a: &SynthArgs) -> Result<()> {
    let opts = SynthOptions {
        seed: a.seed,
        n_clips: a.clips,
        persons_per_clip: a.persons,
        frames_per_clip: a.frames,
        frame_size: a.frame_size,
        grid: a.grid,
        speaking: a.speaking,
        ..SynthOptions::default()
    };
    let out = a.out.clone().unwrap_or_else(|| home.join("synth"));
    let scenes = synth_generate(&opts)?;
    let mut records = Vec::new();
    for s in &scenes {
        for r in s.records() {
            let img = s.render(r.frame_idx as usize, opts.frame_size);
            save_frame(&out.join("frames"), r.dataset, &r.clip_id, r.frame_idx, &img)?;
            records.push(r);
        }
    }
    let mut w = create(&out.join("annotations.jsonl"))?;
    write_records(&mut w, &records)?;
    w.flush()?;
    println!("{} clips, {} frames -> {}", scenes.len(), records.len(), out.display());
    Ok(())
}

/// Every frame the records name, read once.
fn preload(records: &[UnifiedFrameRecord], root: &Path) -> Result<FrameStore> {
    let dir = FrameDir { root: root.to_path_buf() };
    let mut store = FrameStore::default();
    for r in records {
        store.insert(r.dataset, &r.clip_id, r.frame_idx, dir.frame(r.dataset, &r.clip_id, r.frame_idx)?);
    }
    Ok(store)
}

fn train_cmd(home: &Path, a: &TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let records = load_records(&a.annotations)?;
    let frames = preload(&records, &a.frames)?;
    let data = TrainData { records: &records, frames: &frames };
    let out = a.out.clone().unwrap_or_else(|| home.join("runs").join(&cfg.hash()[..12]));
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    let mut log = create(&out.join("train_log.jsonl"))?;
    let every = a.log_every.max(1);

    let init = a.init.as_deref().map(checkpoint::load).transpose()?;
    let stages: &[Stage] = match a.stage {
        StageArg::One => &[Stage::One],
        StageArg::Two => &[Stage::Two],
        StageArg::Both => &[Stage::One, Stage::Two],
    };
    if matches!(a.stage, StageArg::Two) && init.is_none() {
        bail!(socialgaze_model::ModelError::validation("--stage 2 needs --init with a stage-1 checkpoint"));
    }
    let mut current = init.map(|(m, _)| m);
    for &stage in stages {
        let outcome = train(&cfg, stage, &data, current.as_ref(), |s| {
            writeln!(log, "{}", serde_json::to_string(s)?)?;
            if s.step % every == 0 {
                eprintln!("{} step {:>6} lr {:.3e} loss {:.6}", s.stage, s.step, s.lr, s.loss);
            }
            Ok(())
        })?;
        let path = out.join(format!("{stage}.safetensors"));
        checkpoint::save(&outcome.model, stage, outcome.steps, &path)?;
        println!("{stage}: {} steps -> {}", outcome.steps, path.display());
        current = Some(outcome.model);
    }
    log.flush()?;
    Ok(())
}

fn infer_cmd(home: &Path, a: &InferArgs) -> Result<()> {
    let records = load_records(&a.annotations)?;
    let (model, meta) = checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let frames = FrameDir { root: a.frames.clone() };
    let preds = infer(&model, &records, &frames, InferOptions { heatmaps: a.heatmaps, pad_to: None })?;
    let out = a.out.clone().unwrap_or_else(|| home.join("predictions.jsonl"));
    let mut w = create(&out)?;
    write_predictions(&mut w, &preds)?;
    w.flush()?;
    println!("{} frames from {} checkpoint -> {}", preds.len(), meta.stage, out.display());
    Ok(())
}

fn evaluate_cmd(a: &EvalArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let preds = read_predictions(open(&a.predictions)?).with_context(|| format!("reading {}", a.predictions.display()))?;
    let records = load_records(&a.annotations)?;
    let opts = EvalOptions {
        social: match a.social {
            SocialArg::Decoder => SocialSource::Decoder,
            SocialArg::Pp => SocialSource::PostProcess,
        },
        sa_threshold: cfg.eval.sa_threshold,
        laeo_retention: cfg.eval.laeo_retention,
        auc_grid: (cfg.eval.auc_grid, cfg.eval.auc_grid),
    };
    let report = evaluate(&preds, &records, &opts)?;
    print!("{report}");
    if let Some(p) = &a.json {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn render_cmd(home: &Path, a: &RenderArgs) -> Result<()> {
    let preds = read_predictions(open(&a.predictions)?)?;
    let records = load_records(&a.annotations)?;
    let index: std::collections::HashMap<_, _> = records.iter().map(|r| ((r.dataset, r.key()), r)).collect();
    let frames = FrameDir { root: a.frames.clone() };
    let out = a.out.clone().unwrap_or_else(|| home.join("render"));
    let opts = RenderOptions { min_width: a.min_width, threshold: a.threshold };
    for p in &preds {
        let gt = index
            .get(&p.key())
            .with_context(|| format!("no record for {}/{}/{}", p.dataset, p.clip_id, p.frame_idx))?;
        let img = frames.frame(p.dataset, &p.clip_id, p.frame_idx)?;
        save_frame(&out, p.dataset, &p.clip_id, p.frame_idx, &render_frame(&img, p, gt, &opts))?;
    }
    println!("{} images -> {}", preds.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::BuildAnnotations(a) => build(&cli.home, a),
        Command::SynthData(a) => synth(&cli.home, a),
        Command::Train(a) => train_cmd(&cli.home, a),
        Command::Infer(a) => infer_cmd(&cli.home, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Render(a) => render_cmd(&cli.home, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            socialgaze_cli::exit_code(&e)
        }
    }
}
