//! Camera frames, Blender-format datasets, analytic scenes, images and checkpoints.

mod blender;
mod checkpoint;
mod image_io;
mod synthetic;

pub use blender::{
    composite_background, focal_from_fov, load_blender_dataset, load_blender_dataset_with, write_blender_split, Dataset, Split,
    DEFAULT_FAR, DEFAULT_NEAR,
};
pub use checkpoint::{load_checkpoint, metadata_path, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use image_io::{read_depth_png16, read_png, write_depth_png16, write_depth_raw, write_png_rgb, DepthScale, PngImage};
pub use synthetic::{
    analytic_ray_color, ray_sphere_distance, render_synthetic_depth, render_synthetic_views, synthetic_dataset,
    Orbit, Sphere, SyntheticScene,
};

use crate::error::{CerfError, Result};
use crate::math::Pose;

/// Tolerance on `RᵀR − I` (max norm) for accepted poses.
pub const POSE_TOLERANCE: f64 = 1e-5;

/// One posed image.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraFrame {
    /// `height × width × 3`, row-major, values in `[0, 1]`.
    pub image: Vec<f32>,
    width: usize,
    height: usize,
    pub pose: Pose,
    /// Focal length in pixels.
    pub focal: f64,
}

impl CameraFrame {
    pub fn new(image: Vec<f32>, width: usize, height: usize, pose: Pose, focal: f64) -> Result<CameraFrame> {
        if image.len() != width * height * 3 {
            return Err(CerfError::Shape(format!(
                "image has {} values, expected {width}x{height}x3",
                image.len()
            )));
        }
        if let Some(v) = image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CerfError::Validation(format!("pixel value {v} outside [0, 1]")));
        }
        validate_pose(&pose)?;
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(CerfError::Validation(format!("focal length {focal} must be positive")));
        }
        Ok(CameraFrame {
            image,
            width,
            height,
            pose,
            focal,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        let i = 3 * (v * self.width + u);
        [self.image[i], self.image[i + 1], self.image[i + 2]]
    }
}

pub fn validate_pose(pose: &Pose) -> Result<()> {
    let err = pose.orthonormality_error();
    if !(err <= POSE_TOLERANCE) {
        return Err(CerfError::Validation(format!(
            "pose rotation is not orthonormal (max |RᵀR − I| = {err:.3e} > {POSE_TOLERANCE:e})"
        )));
    }
    let last = pose.0[3];
    let expect = [0.0, 0.0, 0.0, 1.0];
    if last.iter().zip(expect).any(|(a, b)| (a - b).abs() > POSE_TOLERANCE) {
        return Err(CerfError::Validation(format!("pose last row is {last:?}, expected [0, 0, 0, 1]")));
    }
    if pose.0.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CerfError::Validation("pose has non-finite entries".into()));
    }
    Ok(())
}
