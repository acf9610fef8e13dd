//! The `cerf` command line: `synth`, `train`, `render`, `eval` and `ablate`.
//!
//! Config keys can be overridden with `--section.key=value` anywhere on the command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Ablation, CerfConfig, SyntheticSpec};
use crate::error::{CerfError, Result};
use crate::math::Pose;
use crate::model::Model;
use crate::scene_io::{
    load_blender_dataset_with, load_checkpoint, render_synthetic_depth, save_checkpoint, synthetic_dataset,
    write_blender_split, write_depth_png16, write_png_rgb, CameraFrame, Checkpoint, Dataset, Split, SyntheticScene,
};
use crate::training::{evaluate, render_view, resolve_bounds, train_with, TrainOptions};

/// Default output directory when neither `--out` nor `output_dir` is given.
pub const OUTPUT_DIR_ENV: &str = "CERF_OUTPUT_DIR";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Parser)]
#[command(name = "cerf", version, about = "Train, render and evaluate ray-derivative radiance models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render an analytic scene into a Blender-format dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Render images (and optionally depth maps) from a checkpoint.
    Render(RenderArgs),
    /// Print PSNR/SSIM for a split.
    Eval(EvalArgs),
    /// Train one ablation variant.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scene JSON; the default is a single lit sphere.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// No geometry: every image is background.
    #[arg(long, conflicts_with = "scene")]
    pub empty: bool,
    #[arg(long, default_value_t = 20)]
    pub train_views: usize,
    #[arg(long, default_value_t = 5)]
    pub val_views: usize,
    #[arg(long, default_value_t = 5)]
    pub test_views: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// `full`, `no_rho_f`, `no_rho_g`, `no_alpha`, `no_beta` or `no_l_e`.
    #[arg(long)]
    pub variant: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset directory; defaults to the checkpoint's own data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test", conflicts_with = "pose")]
    pub split: String,
    /// JSON file holding a 4×4 camera-to-world matrix.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value_t = 0.6911112070083618)]
    pub camera_angle_x: f64,
    /// Also write a 16-bit depth PNG per image.
    #[arg(long)]
    pub depth: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub json: bool,
}

/// Separates `--section.key=value` overrides from the arguments clap understands.
pub fn split_overrides<I: IntoIterator<Item = OsString>>(args: I) -> (Vec<OsString>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        match arg.to_str() {
            Some(s) if is_override(s) => overrides.push(s.trim_start_matches("--").to_string()),
            _ => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn is_override(arg: &str) -> bool {
    let Some(body) = arg.strip_prefix("--") else {
        return false;
    };
    match body.split_once('=') {
        Some((key, _)) => key.contains('.') || key == "encoder" || key == "seed" || key == "output_dir",
        None => false,
    }
}

/// Process exit code for an error: 1 for bad input, 2 for everything else.
pub fn exit_code(err: &CerfError) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

pub fn run(cli: Cli, overrides: &[String]) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, overrides),
        Command::Train(a) => cmd_train(a.config.as_deref(), overrides, a.out.as_deref(), None).map(|_| ()),
        Command::Ablate(a) => {
            let ablation = Ablation::from_variant(&a.variant)?;
            cmd_train(a.config.as_deref(), overrides, a.out.as_deref(), Some(ablation)).map(|_| ())
        }
        Command::Render(a) => cmd_render(&a),
        Command::Eval(a) => cmd_eval(&a).map(|text| print!("{text}")),
    }
}

/// Base config from an optional file plus overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<CerfConfig> {
    let mut cfg = match path {
        Some(p) => CerfConfig::load(p)?,
        None => CerfConfig::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

/// `--out`, then the config's `output_dir`, then the environment, then `runs`.
pub fn output_dir(flag: Option<&Path>, config: Option<&CerfConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = config.and_then(|c| c.output_dir.as_ref()) {
        return PathBuf::from(p);
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("runs"),
    }
}

/// One split of the configured data source.
pub fn load_split(config: &CerfConfig, split: Split) -> Result<Dataset> {
    if let Some(dir) = &config.data.dataset {
        return load_blender_dataset_with(dir, split, config.data.background);
    }
    let spec = config.data.synthetic.clone().unwrap_or_default();
    let n = match split {
        Split::Train => spec.train_views,
        Split::Val => spec.val_views,
        Split::Test => spec.test_views,
    };
    synthetic_dataset(&spec.scene, split, n, spec.height, spec.width)
}

fn cmd_synth(a: &SynthArgs, overrides: &[String]) -> Result<()> {
    let cfg = load_config(None, overrides)?;
    let scene = if a.empty {
        SyntheticScene::empty()
    } else if let Some(path) = &a.scene {
        let text = std::fs::read_to_string(path).map_err(|e| CerfError::io(path, e))?;
        let scene: SyntheticScene = serde_json::from_str(&text).map_err(|e| CerfError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        scene.validate()?;
        scene
    } else {
        SyntheticScene::default()
    };
    let spec = SyntheticSpec {
        scene,
        train_views: a.train_views,
        val_views: a.val_views,
        test_views: a.test_views,
        height: a.height,
        width: a.width,
    };
    write_synthetic(&spec, &output_dir(a.out.as_deref(), Some(&cfg)))
}

/// Writes all three splits with analytic depth maps (misses stored as 0).
pub fn write_synthetic(spec: &SyntheticSpec, root: &Path) -> Result<()> {
    if spec.height == 0 || spec.width == 0 {
        return Err(CerfError::Validation("image size must be positive".into()));
    }
    for (split, n) in [
        (Split::Train, spec.train_views),
        (Split::Val, spec.val_views),
        (Split::Test, spec.test_views),
    ] {
        let ds = synthetic_dataset(&spec.scene, split, n, spec.height, spec.width)?;
        let depth: Vec<Vec<f64>> = ds
            .frames
            .iter()
            .map(|f| render_synthetic_depth(&spec.scene, f, f64::INFINITY))
            .collect();
        write_blender_split(root, split, &ds, Some(&depth))?;
    }
    log::info!("wrote synthetic dataset to {}", root.display());
    Ok(())
}

/// Trains and writes `model.ckpt`, its sidecar, `config.json` and the logs. Returns the
/// checkpoint path.
pub fn cmd_train(
    config: Option<&Path>,
    overrides: &[String],
    out: Option<&Path>,
    ablation: Option<Ablation>,
) -> Result<PathBuf> {
    let mut cfg = load_config(config, overrides)?;
    if let Some(a) = ablation {
        cfg.train.ablation = a;
    }
    let dir = output_dir(out, Some(&cfg));
    let train = load_split(&cfg, Split::Train)?;
    let val = if cfg.train.eval_every > 0 {
        Some(load_split(&cfg, Split::Val)?)
    } else {
        None
    };
    std::fs::create_dir_all(&dir).map_err(|e| CerfError::io(&dir, e))?;
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(|e| CerfError::io(&cfg_path, e))?;
    let outcome = train_with(
        &train,
        &cfg,
        TrainOptions {
            val: val.as_ref(),
            log_dir: Some(dir.clone()),
            init: None,
        },
    )?;
    let ckpt = Checkpoint {
        params: outcome.params,
        config: cfg.clone(),
        step: cfg.train.iterations as u64,
    };
    let path = dir.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &path)?;
    log::info!("[{}] checkpoint written to {}", cfg.train.ablation.label(), path.display());
    Ok(path)
}

fn data_config(ckpt: &Checkpoint<f32>, data: Option<&Path>) -> CerfConfig {
    let mut cfg = ckpt.config.clone();
    if let Some(d) = data {
        cfg.data.dataset = Some(d.to_string_lossy().into_owned());
    }
    cfg
}

fn read_pose(path: &Path) -> Result<Pose> {
    let text = std::fs::read_to_string(path).map_err(|e| CerfError::io(path, e))?;
    let parse = |message: String| CerfError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
    let matrix = value.get("transform_matrix").unwrap_or(&value);
    let m: [[f64; 4]; 4] = serde_json::from_value(matrix.clone()).map_err(|e| parse(e.to_string()))?;
    Ok(Pose(m))
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let ckpt: Checkpoint<f32> = load_checkpoint(&a.checkpoint)?;
    let model = Model::new(&ckpt.config)?;
    model.check_params(&ckpt.params)?;
    let cfg = data_config(&ckpt, a.data.as_deref());
    let (frames, near, far, name) = match &a.pose {
        Some(p) => {
            let pose = read_pose(p)?;
            let focal = crate::scene_io::focal_from_fov(a.width, a.camera_angle_x);
            let frame = CameraFrame::new(vec![0.0; a.width * a.height * 3], a.width, a.height, pose, focal)?;
            let defaults = synthetic_bounds(&cfg);
            let near = cfg.sampling.near.unwrap_or(defaults.0);
            let far = cfg.sampling.far.unwrap_or(defaults.1);
            (vec![frame], near, far, "pose".to_string())
        }
        None => {
            let split: Split = a.split.parse()?;
            let ds = load_split(&cfg, split)?;
            let (near, far) = resolve_bounds(&cfg, &ds);
            (ds.frames, near, far, split.to_string())
        }
    };
    let dir = output_dir(a.out.as_deref(), None).join(&name);
    std::fs::create_dir_all(&dir).map_err(|e| CerfError::io(&dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        let view = render_view(&model, &ckpt.params, frame, near, far)?;
        let rgb: Vec<f32> = view.rgb.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
        write_png_rgb(dir.join(format!("r_{i}.png")), view.width, view.height, &rgb)?;
        if a.depth {
            write_depth_png16(dir.join(format!("r_{i}_depth.png")), view.width, view.height, &view.depth)?;
        }
    }
    log::info!("rendered {} image(s) to {}", frames.len(), dir.display());
    Ok(())
}

fn synthetic_bounds(cfg: &CerfConfig) -> (f64, f64) {
    let scene = cfg.data.synthetic.clone().unwrap_or_default().scene;
    crate::scene_io::Orbit::for_scene(&scene).near_far(&scene)
}

/// The metrics table for one split, as text or JSON.
pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let ckpt: Checkpoint<f32> = load_checkpoint(&a.checkpoint)?;
    let cfg = data_config(&ckpt, a.data.as_deref());
    let split: Split = a.split.parse()?;
    let ds = load_split(&cfg, split)?;
    let table = evaluate(&ckpt, &ds)?;
    Ok(if a.json {
        table.to_json() + "\n"
    } else {
        table.to_text()
    })
}
