//! Analytic sphere scenes: exact first-hit color and depth for any ray.
//!
//! Shading is Lambertian under one directional light, without shadows.

use serde::{Deserialize, Serialize};

use super::blender::{Dataset, Split};
use super::CameraFrame;
use crate::error::{CerfError, Result};
use crate::math::{Pose, Vec3};
use crate::raygen::{camera_direction, Ray};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticScene {
    pub spheres: Vec<Sphere>,
    pub light_dir: Vec3,
    pub background: [f64; 3],
}

impl Default for SyntheticScene {
    /// A unit sphere at the origin lit from the upper right, on white.
    fn default() -> Self {
        SyntheticScene {
            spheres: vec![Sphere {
                center: Vec3::ZERO,
                radius: 1.0,
                albedo: [0.9, 0.45, 0.2],
            }],
            light_dir: Vec3::new(0.48, -0.36, 0.8),
            background: [1.0; 3],
        }
    }
}

fn in_unit(v: &[f64; 3]) -> bool {
    v.iter().all(|c| (0.0..=1.0).contains(c))
}

impl SyntheticScene {
    pub fn new(spheres: Vec<Sphere>, light_dir: Vec3, background: [f64; 3]) -> Result<Self> {
        let scene = SyntheticScene {
            spheres,
            light_dir,
            background,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn empty() -> Self {
        SyntheticScene {
            spheres: Vec::new(),
            ..SyntheticScene::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(CerfError::Validation(format!("sphere {i}: radius must be positive")));
            }
            if !in_unit(&s.albedo) {
                return Err(CerfError::Validation(format!("sphere {i}: albedo outside [0, 1]")));
            }
        }
        if !in_unit(&self.background) {
            return Err(CerfError::Validation("background outside [0, 1]".into()));
        }
        if (self.light_dir.norm() - 1.0).abs() > 1e-6 {
            return Err(CerfError::Validation(format!(
                "light_dir must be unit length, got norm {}",
                self.light_dir.norm()
            )));
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        if self.spheres.is_empty() {
            return Vec3::ZERO;
        }
        let sum = self.spheres.iter().fold(Vec3::ZERO, |a, s| a + s.center);
        sum * (1.0 / self.spheres.len() as f64)
    }

    /// Radius of a sphere around the centroid enclosing every sphere (1 when empty).
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.spheres
            .iter()
            .map(|s| (s.center - c).norm() + s.radius)
            .fold(0.0, f64::max)
            .max(if self.spheres.is_empty() { 1.0 } else { 0.0 })
    }
}

/// Smallest positive distance at which the ray meets the sphere.
pub fn ray_sphere_distance(sphere: &Sphere, origin: Vec3, direction: Vec3) -> Option<f64> {
    let oc = origin - sphere.center;
    let b = oc.dot(direction);
    let c = oc.dot(oc) - sphere.radius * sphere.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // t² + 2bt + c = 0; pick the cancellation-free root, get the other from the product
    let q = if b > 0.0 { -(b + sq) } else { -b + sq };
    let (r1, r2) = if q != 0.0 { (q, c / q) } else { (0.0, 0.0) };
    let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    if lo > 0.0 {
        Some(lo)
    } else if hi > 0.0 {
        Some(hi)
    } else {
        None
    }
}

/// Color and depth of the nearest hit, or the background and `None` on a miss.
pub fn analytic_ray_color(scene: &SyntheticScene, ray: &Ray) -> ([f64; 3], Option<f64>) {
    let mut best: Option<(f64, &Sphere)> = None;
    for s in &scene.spheres {
        if let Some(t) = ray_sphere_distance(s, ray.origin, ray.direction) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, s));
            }
        }
    }
    match best {
        None => (scene.background, None),
        Some((t, s)) => {
            let normal = (ray.at(t) - s.center).normalized();
            let shade = normal.dot(scene.light_dir).max(0.0);
            (s.albedo.map(|a| a * shade), Some(t))
        }
    }
}

/// Cameras on a sphere around the scene centroid, spread by a golden-angle spiral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Orbit {
    pub radius: f64,
    pub camera_angle_x: f64,
    pub min_elevation: f64,
    pub max_elevation: f64,
    /// Azimuth offset as a fraction of a turn; different splits use different phases.
    pub phase: f64,
}

impl Orbit {
    pub fn for_scene(scene: &SyntheticScene) -> Orbit {
        Orbit {
            radius: 4.0 * scene.bounding_radius(),
            camera_angle_x: 0.691_111_207_008_361_8,
            min_elevation: 15f64.to_radians(),
            max_elevation: 55f64.to_radians(),
            phase: 0.0,
        }
    }

    pub fn with_phase(self, phase: f64) -> Orbit {
        Orbit { phase, ..self }
    }

    pub fn poses(&self, centroid: Vec3, n: usize) -> Vec<Pose> {
        const GOLDEN: f64 = 0.618_033_988_749_894_9;
        (0..n)
            .map(|i| {
                let frac = (i as f64 + 0.5) / n as f64;
                let el = self.min_elevation + frac * (self.max_elevation - self.min_elevation);
                let az = 2.0 * std::f64::consts::PI * (i as f64 * GOLDEN + self.phase).fract();
                let eye = centroid
                    + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * self.radius;
                Pose::look_at(eye, centroid, Vec3::new(0.0, 0.0, 1.0))
            })
            .collect()
    }

    /// Sampling bounds that bracket the bounding sphere from any camera on the orbit.
    pub fn near_far(&self, scene: &SyntheticScene) -> (f64, f64) {
        let r = scene.bounding_radius();
        ((self.radius - 1.5 * r).max(0.05 * self.radius), self.radius + 1.5 * r)
    }
}

/// Renders one frame per pose with the pinhole model used for training rays.
pub fn render_frame(scene: &SyntheticScene, pose: Pose, width: usize, height: usize, focal: f64) -> Result<CameraFrame> {
    let mut image = Vec::with_capacity(width * height * 3);
    for v in 0..height {
        for u in 0..width {
            let dir = pose.rotate(camera_direction(width, height, focal, u as f64, v as f64)).normalized();
            let ray = Ray {
                origin: pose.translation(),
                direction: dir,
                near: 0.0,
                far: f64::INFINITY,
            };
            let (c, _) = analytic_ray_color(scene, &ray);
            image.extend(c.iter().map(|&x| x as f32));
        }
    }
    CameraFrame::new(image, width, height, pose, focal)
}

pub fn render_with_orbit(
    scene: &SyntheticScene,
    orbit: &Orbit,
    n_views: usize,
    height: usize,
    width: usize,
) -> Result<Vec<CameraFrame>> {
    if n_views == 0 {
        return Err(CerfError::Validation("need at least one view".into()));
    }
    scene.validate()?;
    let focal = 0.5 * width as f64 / (0.5 * orbit.camera_angle_x).tan();
    orbit
        .poses(scene.centroid(), n_views)
        .into_iter()
        .map(|pose| render_frame(scene, pose, width, height, focal))
        .collect()
}

pub fn render_synthetic_views(scene: &SyntheticScene, n_views: usize, height: usize, width: usize) -> Result<Vec<CameraFrame>> {
    render_with_orbit(scene, &Orbit::for_scene(scene), n_views, height, width)
}

/// Per-pixel analytic depth; misses get `miss_depth`.
pub fn render_synthetic_depth(scene: &SyntheticScene, frame: &CameraFrame, miss_depth: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(frame.width() * frame.height());
    for v in 0..frame.height() {
        for u in 0..frame.width() {
            let local = camera_direction(frame.width(), frame.height(), frame.focal, u as f64, v as f64);
            let ray = Ray {
                origin: frame.pose.translation(),
                direction: frame.pose.rotate(local).normalized(),
                near: 0.0,
                far: f64::INFINITY,
            };
            out.push(analytic_ray_color(scene, &ray).1.unwrap_or(miss_depth));
        }
    }
    out
}

fn split_phase(split: Split) -> f64 {
    match split {
        Split::Train => 0.0,
        Split::Val => 0.37,
        Split::Test => 0.71,
    }
}

/// One split of a synthetic dataset; each split sits at its own orbit phase.
pub fn synthetic_dataset(
    scene: &SyntheticScene,
    split: Split,
    n_views: usize,
    height: usize,
    width: usize,
) -> Result<Dataset> {
    let orbit = Orbit::for_scene(scene).with_phase(split_phase(split));
    let frames = render_with_orbit(scene, &orbit, n_views, height, width)?;
    let (near, far) = orbit.near_far(scene);
    Ok(Dataset {
        frames,
        near,
        far,
        camera_angle_x: orbit.camera_angle_x,
    })
}
