use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{CerfError, Result};

/// Decoded 8-bit PNG with values scaled to `[0, 1]` by `v / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct PngImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

fn image_err(path: &Path, e: impl ToString) -> CerfError {
    CerfError::Image {
        path: path.into(),
        message: e.to_string(),
    }
}

pub fn read_png(path: impl AsRef<Path>) -> Result<PngImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(CerfError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "image not found"),
        ));
    }
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
        DynamicImage::ImageLuma8(_) => (3, img.to_rgb8().into_raw()),
        DynamicImage::ImageLumaA8(_) => (4, img.to_rgba8().into_raw()),
        other => {
            return Err(image_err(
                path,
                format!("unsupported pixel format {:?}; expected 8-bit RGB or RGBA", other.color()),
            ))
        }
    };
    Ok(PngImage {
        width,
        height,
        channels,
        data: raw.into_iter().map(|v| v as f32 / 255.0).collect(),
    })
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png_rgb(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[f32]) -> Result<()> {
    let path = path.as_ref();
    if rgb.len() != width * height * 3 {
        return Err(CerfError::Shape(format!("{} values for a {width}x{height} RGB image", rgb.len())));
    }
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, rgb.iter().map(|&v| quantize(v)).collect())
            .expect("size checked");
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Linear mapping used to store a depth map in 16 bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthScale {
    pub min: f64,
    pub max: f64,
}

impl DepthScale {
    fn sidecar(path: &Path) -> PathBuf {
        path.with_extension("txt")
    }

    fn write(&self, path: &Path) -> Result<()> {
        let side = Self::sidecar(path);
        std::fs::write(&side, format!("min {}\nmax {}\n", self.min, self.max)).map_err(|e| CerfError::io(&side, e))
    }

    fn read(path: &Path) -> Result<DepthScale> {
        let side = Self::sidecar(path);
        let text = std::fs::read_to_string(&side).map_err(|e| CerfError::io(&side, e))?;
        let mut min = None;
        let mut max = None;
        for line in text.lines() {
            let mut parts = line.split_whitespace();
            let (key, val) = (parts.next(), parts.next().and_then(|v| v.parse::<f64>().ok()));
            match key {
                Some("min") => min = val,
                Some("max") => max = val,
                _ => {}
            }
        }
        match (min, max) {
            (Some(min), Some(max)) => Ok(DepthScale { min, max }),
            _ => Err(CerfError::Parse {
                path: side,
                message: "expected `min <v>` and `max <v>` lines".into(),
            }),
        }
    }
}

/// 16-bit grayscale depth map; the `(min, max)` scale goes to a `.txt` sidecar.
pub fn write_depth_png16(path: impl AsRef<Path>, width: usize, height: usize, depth: &[f64]) -> Result<DepthScale> {
    let path = path.as_ref();
    if depth.len() != width * height {
        return Err(CerfError::Shape(format!("{} depths for a {width}x{height} map", depth.len())));
    }
    let finite = depth.iter().copied().filter(|d| d.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    let scale = if min.is_finite() {
        DepthScale { min, max }
    } else {
        DepthScale { min: 0.0, max: 0.0 }
    };
    let span = scale.max - scale.min;
    let pixels: Vec<u16> = depth
        .iter()
        .map(|d| {
            if span > 0.0 && d.is_finite() {
                (((d - scale.min) / span).clamp(0.0, 1.0) * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, pixels).expect("size checked");
    buf.save(path).map_err(|e| image_err(path, e))?;
    scale.write(path)?;
    Ok(scale)
}

pub fn read_depth_png16(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let buf = match img {
        DynamicImage::ImageLuma16(b) => b,
        other => return Err(image_err(path, format!("expected 16-bit grayscale, got {:?}", other.color()))),
    };
    let scale = DepthScale::read(path)?;
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let span = scale.max - scale.min;
    let depth = buf
        .into_raw()
        .into_iter()
        .map(|v| scale.min + span * v as f64 / 65535.0)
        .collect();
    Ok((w, h, depth))
}

/// Raw little-endian `f32` array.
pub fn write_depth_raw(path: impl AsRef<Path>, depth: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = depth.iter().flat_map(|d| (*d as f32).to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| CerfError::io(path, e))
}
