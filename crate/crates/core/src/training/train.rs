use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{lr_schedule, psnr, Adam};
use crate::config::CerfConfig;
use crate::error::{CerfError, Result};
use crate::model::{LossParts, Model};
use crate::raygen::{rays_from_camera, Ray};
use crate::scene_io::{CameraFrame, Dataset};

/// Optional extras for [`train_with`].
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Frames for the periodic PSNR (`train.eval_every`).
    pub val: Option<&'a Dataset>,
    /// Directory receiving `train_log.txt` and `train_log.jsonl`.
    pub log_dir: Option<PathBuf>,
    /// Starting parameters instead of a fresh initialization.
    pub init: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub coarse_mse: f64,
    pub fine_mse: f64,
    pub weight_l1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_psnr: Option<f64>,
    pub variant: String,
    pub seconds: f64,
}

impl LogRecord {
    pub fn human(&self) -> String {
        let mut s = format!(
            "[{}] step {:>6}  lr {:.3e}  loss {:.6}  fine_mse {:.6}  w_l1 {:.4}  {:.1}s",
            self.variant, self.step, self.lr, self.loss, self.fine_mse, self.weight_l1, self.seconds
        );
        if let Some(p) = self.val_psnr {
            s.push_str(&format!("  val_psnr {p:.2}"));
        }
        s
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub params: Vec<f32>,
    pub log: Vec<LogRecord>,
    /// Losses of every step, in order.
    pub losses: Vec<f64>,
}

/// Near/far from the config when set, else from the dataset.
pub fn resolve_bounds(config: &CerfConfig, dataset: &Dataset) -> (f64, f64) {
    (
        config.sampling.near.unwrap_or(dataset.near),
        config.sampling.far.unwrap_or(dataset.far),
    )
}

/// Every pixel ray of a frame, row-major, with its target color.
pub fn frame_rays(frame: &CameraFrame, near: f64, far: f64) -> Result<(Vec<Ray>, Vec<[f64; 3]>)> {
    let mut rays = Vec::with_capacity(frame.width() * frame.height());
    let mut colors = Vec::with_capacity(rays.capacity());
    for v in 0..frame.height() {
        for u in 0..frame.width() {
            rays.push(rays_from_camera(frame, u, v, near, far)?);
            colors.push(frame.pixel(u, v).map(f64::from));
        }
    }
    Ok((rays, colors))
}

pub fn train(dataset: &Dataset, config: &CerfConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, TrainOptions::default())
}

struct LogSink {
    text: Option<std::fs::File>,
    json: Option<std::fs::File>,
    dir: Option<PathBuf>,
}

impl LogSink {
    fn open(dir: Option<PathBuf>) -> Result<LogSink> {
        let Some(dir) = dir else {
            return Ok(LogSink {
                text: None,
                json: None,
                dir: None,
            });
        };
        std::fs::create_dir_all(&dir).map_err(|e| CerfError::io(&dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map_err(|e| CerfError::io(p, e))
        };
        Ok(LogSink {
            text: Some(open("train_log.txt")?),
            json: Some(open("train_log.jsonl")?),
            dir: Some(dir),
        })
    }

    fn write(&mut self, rec: &LogRecord) -> Result<()> {
        log::info!("{}", rec.human());
        let dir = self.dir.clone().unwrap_or_default();
        if let Some(f) = &mut self.text {
            writeln!(f, "{}", rec.human()).map_err(|e| CerfError::io(dir.join("train_log.txt"), e))?;
        }
        if let Some(f) = &mut self.json {
            let line = serde_json::to_string(rec).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| CerfError::io(dir.join("train_log.jsonl"), e))?;
        }
        Ok(())
    }
}

fn validation_psnr(model: &Model, params: &[f32], val: &Dataset, config: &CerfConfig) -> Result<f64> {
    let (near, far) = resolve_bounds(config, val);
    let mut total = 0.0;
    for frame in &val.frames {
        let (rays, colors) = frame_rays(frame, near, far)?;
        let out = model.render_rays(params, &rays, 2048)?;
        let img: Vec<f64> = out.iter().flat_map(|o| o.rgb).collect();
        let gt: Vec<f64> = colors.iter().flatten().copied().collect();
        total += psnr(&img, &gt)?;
    }
    Ok(total / val.frames.len().max(1) as f64)
}

fn diagnostics(params: &[f32], grads: &[f32], parts: &LossParts, lr: f64) -> String {
    let bad_p = params.iter().filter(|v| !v.is_finite()).count();
    let bad_g = grads.iter().filter(|v| !v.is_finite()).count();
    let norm = |v: &[f32]| v.iter().filter(|x| x.is_finite()).map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    format!(
        "loss parts {parts:?}, lr {lr:.3e}, non-finite params {bad_p}, non-finite grads {bad_g}, \
         |params| {:.4e}, |grads| {:.4e}",
        norm(params),
        norm(grads)
    )
}

/// Runs the optimization loop. Serial and deterministic for a fixed seed.
pub fn train_with(dataset: &Dataset, config: &CerfConfig, opts: TrainOptions<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.frames.is_empty() {
        return Err(CerfError::Validation("training dataset has no frames".into()));
    }
    let model = Model::new(config)?;
    let mut params = match opts.init {
        Some(p) => {
            model.check_params(&p)?;
            p
        }
        None => model.init::<f32>(config.seed),
    };
    let (near, far) = resolve_bounds(config, dataset);
    let mut rays = Vec::with_capacity(dataset.pixel_count());
    let mut colors = Vec::with_capacity(dataset.pixel_count());
    for frame in &dataset.frames {
        let (r, c) = frame_rays(frame, near, far)?;
        rays.extend(r);
        colors.extend(c);
    }

    let tc = &config.train;
    let variant = tc.ablation.label();
    let mut sink = LogSink::open(opts.log_dir)?;
    let mut adam = Adam::new(params.len(), tc.beta1, tc.beta2, tc.adam_eps);
    let mut grads = vec![0f32; params.len()];
    let mut log = Vec::new();
    let mut losses = Vec::with_capacity(tc.iterations);
    let started = Instant::now();
    let mut batch_rays = Vec::with_capacity(tc.batch_rays);
    let mut batch_colors = Vec::with_capacity(tc.batch_rays);
    for step in 0..tc.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(step as u64 + 1);
        batch_rays.clear();
        batch_colors.clear();
        for _ in 0..tc.batch_rays {
            let i = rng.gen_range(0..rays.len());
            batch_rays.push(rays[i]);
            batch_colors.push(colors[i]);
        }
        grads.iter_mut().for_each(|g| *g = 0.0);
        let lr = lr_schedule(step, tc.iterations, tc.lr_start, tc.lr_end);
        let parts = model.loss_and_grad(&params, &batch_rays, &batch_colors, Some(&mut rng), Some(&mut grads))?;
        if !parts.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(CerfError::Diverged {
                step,
                diagnostics: diagnostics(&params, &grads, &parts, lr),
            });
        }
        losses.push(parts.total);
        adam.update(&mut params, &grads, lr);

        let done = step + 1;
        let last = done == tc.iterations;
        if (tc.log_every > 0 && done % tc.log_every == 0) || last {
            let val_psnr = match opts.val {
                Some(val) if tc.eval_every > 0 && (done % tc.eval_every == 0 || last) => {
                    Some(validation_psnr(&model, &params, val, config)?)
                }
                _ => None,
            };
            let rec = LogRecord {
                step: done,
                lr,
                loss: parts.total,
                coarse_mse: parts.coarse_mse,
                fine_mse: parts.fine_mse,
                weight_l1: parts.weight_l1,
                val_psnr,
                variant: variant.clone(),
                seconds: started.elapsed().as_secs_f64(),
            };
            sink.write(&rec)?;
            log.push(rec);
        }
    }
    Ok(TrainOutcome {
        model,
        params,
        log,
        losses,
    })
}
