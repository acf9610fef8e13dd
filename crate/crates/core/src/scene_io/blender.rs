use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image_io::{read_png, write_depth_png16, write_png_rgb};
use super::CameraFrame;
use crate::error::{CerfError, Result};
use crate::math::Pose;

/// Conventional bounds for the Blender synthetic scenes.
pub const DEFAULT_NEAR: f64 = 2.0;
pub const DEFAULT_FAR: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CerfError;

    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CerfError::config("split", format!("`{other}` is not one of train/val/test"))),
        }
    }
}

/// Frames of one split plus the sampling bounds that go with them.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub frames: Vec<CameraFrame>,
    pub near: f64,
    pub far: f64,
    pub camera_angle_x: f64,
}

impl Dataset {
    pub fn pixel_count(&self) -> usize {
        self.frames.iter().map(|f| f.width() * f.height()).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformsFile {
    camera_angle_x: f64,
    frames: Vec<FrameRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    near: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    far: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

/// `out = rgb·a + bg·(1 − a)` for an `H×W×4` buffer.
pub fn composite_background(rgba: &[f32], bg: [f64; 3]) -> Result<Vec<f32>> {
    if rgba.len() % 4 != 0 {
        return Err(CerfError::Shape(format!("{} values is not a whole number of RGBA pixels", rgba.len())));
    }
    if let Some(v) = rgba.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CerfError::Validation(format!("RGBA value {v} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(rgba.len() / 4 * 3);
    for px in rgba.chunks_exact(4) {
        let a = px[3] as f64;
        for k in 0..3 {
            out.push((px[k] as f64 * a + bg[k] * (1.0 - a)) as f32);
        }
    }
    Ok(out)
}

fn resolve_image(root: &Path, file_path: &str) -> PathBuf {
    let rel = file_path.trim_start_matches("./");
    let mut path = root.join(rel);
    if path.extension().map(|e| e.to_ascii_lowercase() != "png").unwrap_or(true) {
        let mut s = path.into_os_string();
        s.push(".png");
        path = PathBuf::from(s);
    }
    path
}

pub fn focal_from_fov(width: usize, camera_angle_x: f64) -> f64 {
    0.5 * width as f64 / (0.5 * camera_angle_x).tan()
}

/// Loads `transforms_<split>.json` and its images composited over white.
pub fn load_blender_dataset(root: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    load_blender_dataset_with(root, split, [1.0; 3])
}

pub fn load_blender_dataset_with(root: impl AsRef<Path>, split: Split, background: [f64; 3]) -> Result<Dataset> {
    let root = root.as_ref();
    let json_path = root.join(format!("transforms_{split}.json"));
    let text = std::fs::read_to_string(&json_path).map_err(|e| CerfError::io(&json_path, e))?;
    let parsed: TransformsFile = serde_json::from_str(&text).map_err(|e| CerfError::Parse {
        path: json_path.clone(),
        message: e.to_string(),
    })?;
    if !(parsed.camera_angle_x > 0.0 && parsed.camera_angle_x < std::f64::consts::PI) {
        return Err(CerfError::Parse {
            path: json_path,
            message: format!("camera_angle_x {} outside (0, π)", parsed.camera_angle_x),
        });
    }
    let mut frames = Vec::with_capacity(parsed.frames.len());
    for (i, record) in parsed.frames.iter().enumerate() {
        let pose = Pose(record.transform_matrix);
        super::validate_pose(&pose).map_err(|e| {
            CerfError::Validation(format!("{} frame {i} ({}): {e}", json_path.display(), record.file_path))
        })?;
        let img_path = resolve_image(root, &record.file_path);
        let png = read_png(&img_path)?;
        let rgb = if png.channels == 4 {
            composite_background(&png.data, background)?
        } else {
            png.data
        };
        let focal = focal_from_fov(png.width, parsed.camera_angle_x);
        frames.push(CameraFrame::new(rgb, png.width, png.height, pose, focal)?);
    }
    Ok(Dataset {
        frames,
        near: parsed.near.unwrap_or(DEFAULT_NEAR),
        far: parsed.far.unwrap_or(DEFAULT_FAR),
        camera_angle_x: parsed.camera_angle_x,
    })
}

/// Writes one split in Blender layout: `transforms_<split>.json` and `<split>/r_<i>.png`,
/// plus `<split>/r_<i>_depth.png` when depth maps are given.
pub fn write_blender_split(
    root: impl AsRef<Path>,
    split: Split,
    dataset: &Dataset,
    depth: Option<&[Vec<f64>]>,
) -> Result<()> {
    let root = root.as_ref();
    let dir = root.join(split.as_str());
    std::fs::create_dir_all(&dir).map_err(|e| CerfError::io(&dir, e))?;
    let mut records = Vec::with_capacity(dataset.frames.len());
    for (i, frame) in dataset.frames.iter().enumerate() {
        let name = format!("r_{i}");
        write_png_rgb(dir.join(format!("{name}.png")), frame.width(), frame.height(), &frame.image)?;
        if let Some(maps) = depth {
            write_depth_png16(dir.join(format!("{name}_depth.png")), frame.width(), frame.height(), &maps[i])?;
        }
        records.push(FrameRecord {
            file_path: format!("./{split}/{name}"),
            transform_matrix: frame.pose.0,
        });
    }
    let file = TransformsFile {
        camera_angle_x: dataset.camera_angle_x,
        frames: records,
        near: Some(dataset.near),
        far: Some(dataset.far),
    };
    let path = root.join(format!("transforms_{split}.json"));
    let text = serde_json::to_string_pretty(&file).expect("transforms serialize");
    std::fs::write(&path, text).map_err(|e| CerfError::io(&path, e))
}
