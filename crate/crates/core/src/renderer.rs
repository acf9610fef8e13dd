//! Turning per-sample coefficients and colors into a pixel.
//!
//! The raw coefficients of the `D` samples plus the epipolar slot are scaled by
//! `θ_α` and pushed through a softmax; the pixel is the expectation of the sample
//! colors (and the epipolar color) under those weights. The classical
//! alpha-compositing quadrature and the exact single-surface indicator are kept here
//! as comparison oracles.

use serde::{Deserialize, Serialize};

use crate::config::EpipolarConfig;
use crate::error::{CerfError, Result};
use crate::linalg::Real;
use crate::raygen::Ray;
use crate::scene_io::{analytic_ray_color, SyntheticScene};

/// How raw coefficients become weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalizer {
    /// `softmax(θ·s)`.
    Softmax,
    /// `s / Σs`, used by the ablation without the surface constraint.
    Ratio,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSpec<T> {
    pub theta: T,
    /// `None` drops the epipolar slot.
    pub s_e: Option<T>,
    pub normalizer: Normalizer,
}

/// Normalized weights: one per sample, then the epipolar slot when present.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderWeights<T> {
    pub w: Vec<T>,
    pub has_epipolar: bool,
}

impl<T: Real> RenderWeights<T> {
    pub fn samples(&self) -> &[T] {
        if self.has_epipolar {
            &self.w[..self.w.len() - 1]
        } else {
            &self.w
        }
    }

    pub fn epipolar(&self) -> Option<T> {
        self.has_epipolar.then(|| *self.w.last().expect("non-empty"))
    }

    /// Index of the largest weight; ties resolve to the lower index.
    pub fn argmax(&self) -> usize {
        argmax(&self.w)
    }
}

pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Writes the weights for raw coefficients `s` into `out` (length `D` or `D+1`).
pub fn weights_into<T: Real>(s: &[T], spec: &WeightSpec<T>, out: &mut [T]) {
    let d = s.len();
    debug_assert_eq!(out.len(), d + spec.s_e.is_some() as usize);
    match spec.normalizer {
        Normalizer::Softmax => {
            for (o, v) in out.iter_mut().zip(s) {
                *o = spec.theta * *v;
            }
            if let Some(se) = spec.s_e {
                out[d] = spec.theta * se;
            }
            let m = out.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut sum = T::zero();
            for o in out.iter_mut() {
                *o = (*o - m).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        Normalizer::Ratio => {
            let total = s.iter().copied().sum::<T>() + spec.s_e.unwrap_or_else(T::zero);
            for (o, v) in out.iter_mut().zip(s) {
                *o = *v / total;
            }
            if let Some(se) = spec.s_e {
                out[d] = se / total;
            }
        }
    }
}

/// Backpropagates `dL/dw` to `dL/ds` (written to `ds`); returns `dL/dθ`.
pub fn weights_backward<T: Real>(s: &[T], w: &[T], dw: &[T], spec: &WeightSpec<T>, ds: &mut [T]) -> T {
    let dot: T = w.iter().zip(dw).map(|(a, b)| *a * *b).sum();
    match spec.normalizer {
        Normalizer::Softmax => {
            let mut dtheta = T::zero();
            for j in 0..w.len() {
                let dz = w[j] * (dw[j] - dot);
                let raw = if j < s.len() { s[j] } else { spec.s_e.expect("slot exists") };
                dtheta += dz * raw;
                if j < s.len() {
                    ds[j] = spec.theta * dz;
                }
            }
            dtheta
        }
        Normalizer::Ratio => {
            let total = s.iter().copied().sum::<T>() + spec.s_e.unwrap_or_else(T::zero);
            for j in 0..s.len() {
                ds[j] = (dw[j] - dot) / total;
            }
            T::zero()
        }
    }
}

/// Tempered softmax over the raw coefficients with the epipolar slot appended.
pub fn unique_surface_constraint(s: &[f64], ep: &EpipolarConfig) -> Result<RenderWeights<f64>> {
    if s.is_empty() {
        return Err(CerfError::Shape("no samples".into()));
    }
    if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
        return Err(CerfError::NonFinite(format!("raw coefficient {bad}")));
    }
    let spec = WeightSpec {
        theta: ep.theta_alpha,
        s_e: Some(ep.s_e.resolve(s.len())),
        normalizer: Normalizer::Softmax,
    };
    let mut w = vec![0.0; s.len() + 1];
    weights_into(s, &spec, &mut w);
    Ok(RenderWeights { w, has_epipolar: true })
}

/// `Σ w_i·c_i + w_e·c_e`.
pub fn render_color<T: Real>(weights: &RenderWeights<T>, colors: &[[T; 3]], c_e: [T; 3]) -> Result<[T; 3]> {
    let ws = weights.samples();
    if ws.len() != colors.len() {
        return Err(CerfError::Shape(format!(
            "{} weights for {} colors",
            ws.len(),
            colors.len()
        )));
    }
    let mut out = [T::zero(); 3];
    for (w, c) in ws.iter().zip(colors) {
        for k in 0..3 {
            out[k] += *w * c[k];
        }
    }
    if let Some(we) = weights.epipolar() {
        for k in 0..3 {
            out[k] += we * c_e[k];
        }
    }
    Ok(out)
}

/// `Σ w_i·t_i + w_e·t_e`.
pub fn render_depth<T: Real>(weights: &RenderWeights<T>, t: &[T], t_e: T) -> Result<T> {
    let ws = weights.samples();
    if ws.len() != t.len() {
        return Err(CerfError::Shape(format!("{} weights for {} distances", ws.len(), t.len())));
    }
    let mut depth: T = ws.iter().zip(t).map(|(w, ti)| *w * *ti).sum();
    if let Some(we) = weights.epipolar() {
        depth += we * t_e;
    }
    Ok(depth)
}

pub fn entropy(w: &[f64]) -> f64 {
    -w.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Compositing weights `T_i·(1 − exp(−σ_i·δ_i))` with `T_i = exp(−Σ_{j<i} σ_j·δ_j)`.
pub fn volume_weights(sigma: &[f64], delta: &[f64]) -> Vec<f64> {
    let mut optical = 0.0f64;
    sigma
        .iter()
        .zip(delta)
        .map(|(s, d)| {
            let trans = (-optical).exp();
            optical += s * d;
            trans * (1.0 - (-s * d).exp())
        })
        .collect()
}

/// Classical volume-rendering quadrature.
pub fn volume_render_oracle(sigma: &[f64], colors: &[[f64; 3]], delta: &[f64]) -> Result<[f64; 3]> {
    if sigma.len() != colors.len() || sigma.len() != delta.len() {
        return Err(CerfError::Shape("sigma, colors and delta lengths differ".into()));
    }
    let mut out = [0.0; 3];
    for (w, c) in volume_weights(sigma, delta).iter().zip(colors) {
        for k in 0..3 {
            out[k] += w * c[k];
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndicatorTarget {
    Sample(usize),
    Epipolar,
}

/// Exact single-surface target for a ray through an analytic scene: the sample closest
/// to the first intersection (ties go to the lower index), or the epipolar slot on a miss.
pub fn indicator_oracle(scene: &SyntheticScene, ray: &Ray, t: &[f64]) -> (IndicatorTarget, [f64; 3]) {
    let (color, depth) = analytic_ray_color(scene, ray);
    match depth {
        None => (IndicatorTarget::Epipolar, color),
        Some(depth) => {
            let mut best = 0;
            for (i, ti) in t.iter().enumerate() {
                if (ti - depth).abs() < (t[best] - depth).abs() {
                    best = i;
                }
            }
            (IndicatorTarget::Sample(best), color)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EpipolarCoeff;
    use crate::math::Vec3;
    use crate::scene_io::Sphere;

    fn ep(theta: f64, s_e: f64) -> EpipolarConfig {
        EpipolarConfig {
            theta_alpha: theta,
            s_e: EpipolarCoeff::Fixed(s_e),
            ..EpipolarConfig::default()
        }
    }

    #[test]
    fn uniform_inputs_give_uniform_weights() {
        let w = unique_surface_constraint(&[0.0; 7], &ep(10.0, 0.0)).unwrap();
        for v in &w.w {
            assert!((v - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_sample_example() {
        let w = unique_surface_constraint(&[0.9, 0.1], &ep(10.0, 0.5)).unwrap();
        let e = [9.0_f64.exp(), 1.0_f64.exp(), 5.0_f64.exp()];
        let z: f64 = e.iter().sum();
        for (got, want) in w.w.iter().zip(e.iter().map(|v| v / z)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(unique_surface_constraint(&[0.1, f64::NAN], &ep(10.0, 0.1)).is_err());
    }

    #[test]
    fn one_hot_weights_select_color_and_depth() {
        let colors = [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
        let w = RenderWeights {
            w: vec![0.0, 1.0, 0.0],
            has_epipolar: true,
        };
        assert_eq!(render_color(&w, &colors, [1.0; 3]).unwrap(), colors[1]);
        assert_eq!(render_depth(&w, &[2.0, 3.0], 120.0).unwrap(), 3.0);
        let e = RenderWeights {
            w: vec![0.0, 0.0, 1.0],
            has_epipolar: true,
        };
        assert_eq!(render_color(&e, &colors, [1.0; 3]).unwrap(), [1.0; 3]);
        assert_eq!(render_depth(&e, &[2.0, 3.0], 120.0).unwrap(), 120.0);
    }

    #[test]
    fn volume_oracle_limits() {
        let c = [[0.2, 0.4, 0.6], [0.9, 0.1, 0.5]];
        assert_eq!(volume_render_oracle(&[0.0, 0.0], &c, &[0.5, 0.5]).unwrap(), [0.0; 3]);
        let opaque = volume_render_oracle(&[1e6, 3.0], &c, &[0.5, 0.5]).unwrap();
        for k in 0..3 {
            assert!((opaque[k] - c[0][k]).abs() < 1e-6);
        }
    }

    #[test]
    fn indicator_tie_goes_to_lower_index() {
        // sphere surface at distance exactly 3 along −z
        let scene = SyntheticScene::new(
            vec![Sphere {
                center: Vec3::new(0.0, 0.0, -4.0),
                radius: 1.0,
                albedo: [0.5; 3],
            }],
            Vec3::new(0.0, 0.0, 1.0),
            [1.0; 3],
        )
        .unwrap();
        let ray = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0), 2.0, 6.0).unwrap();
        let (target, color) = indicator_oracle(&scene, &ray, &[2.5, 3.5, 4.5, 5.5]);
        assert_eq!(target, IndicatorTarget::Sample(0));
        assert_eq!(color, [0.5; 3]);
        let miss = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 2.0, 6.0).unwrap();
        assert_eq!(indicator_oracle(&scene, &miss, &[2.5, 3.5]), (IndicatorTarget::Epipolar, [1.0; 3]));
    }
}
