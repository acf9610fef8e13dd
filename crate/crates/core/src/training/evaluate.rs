use serde::Serialize;

use super::{frame_rays, psnr, resolve_bounds, ssim, PSNR_CAP};
use crate::error::Result;
use crate::model::Model;
use crate::scene_io::{CameraFrame, Checkpoint, Dataset};

/// Rays evaluated per forward pass when rendering images.
const CHUNK: usize = 2048;

/// One rendered view, row-major `height × width`.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    /// `height × width × 3`.
    pub rgb: Vec<f64>,
    pub depth: Vec<f64>,
    /// Weight of the epipolar slot per pixel, absent without the slot.
    pub epipolar: Option<Vec<f64>>,
}

pub fn render_view(model: &Model, params: &[f32], frame: &CameraFrame, near: f64, far: f64) -> Result<RenderedView> {
    let (rays, _) = frame_rays(frame, near, far)?;
    let out = model.render_rays(params, &rays, CHUNK)?;
    Ok(RenderedView {
        width: frame.width(),
        height: frame.height(),
        rgb: out.iter().flat_map(|o| o.rgb).collect(),
        depth: out.iter().map(|o| o.depth).collect(),
        epipolar: out.iter().map(|o| o.epipolar_weight).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalTable {
    pub variant: String,
    pub encoder: String,
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

fn fmt_psnr(v: f64) -> String {
    if v >= PSNR_CAP {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

impl EvalTable {
    pub fn to_text(&self) -> String {
        let mut s = format!("# {} {}\n{:>6}  {:>8}  {:>7}\n", self.variant, self.encoder, "image", "PSNR", "SSIM");
        for r in &self.rows {
            s.push_str(&format!("{:>6}  {:>8}  {:>7.4}\n", r.index, fmt_psnr(r.psnr), r.ssim));
        }
        s.push_str(&format!("{:>6}  {:>8}  {:>7.4}\n", "mean", fmt_psnr(self.mean_psnr), self.mean_ssim));
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Renders every frame of `dataset` with the checkpoint and scores it.
pub fn evaluate(ckpt: &Checkpoint<f32>, dataset: &Dataset) -> Result<EvalTable> {
    let model = Model::new(&ckpt.config)?;
    model.check_params(&ckpt.params)?;
    let (near, far) = resolve_bounds(&ckpt.config, dataset);
    let mut rows = Vec::with_capacity(dataset.frames.len());
    for (index, frame) in dataset.frames.iter().enumerate() {
        let view = render_view(&model, &ckpt.params, frame, near, far)?;
        let gt: Vec<f64> = frame.image.iter().map(|&v| v as f64).collect();
        rows.push(EvalRow {
            index,
            psnr: psnr(&view.rgb, &gt)?,
            ssim: ssim(&view.rgb, &gt, frame.height(), frame.width())?,
        });
    }
    let n = rows.len().max(1) as f64;
    Ok(EvalTable {
        variant: ckpt.config.train.ablation.label(),
        encoder: ckpt.config.encoder.clone(),
        mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        rows,
    })
}
