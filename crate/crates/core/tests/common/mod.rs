#![allow(dead_code)]

use cerf::config::{CerfConfig, EpipolarConfig};
use cerf::encoder::Encoder;
use cerf::heads::{GeometryHead, RadianceHead};
use cerf::math::Vec3;
use cerf::model::Model;
use cerf::nn::Linear;
use cerf::raygen::Ray;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// D = 8 samples per pass, width-8 encoder with one down/up pair and a learnable temperature.
pub fn tiny_config() -> CerfConfig {
    let mut c = CerfConfig::default();
    c.encoder = "W8U2K3D4".into();
    c.sampling.coarse_samples = 8;
    c.sampling.fine_samples = 8;
    c.sampling.pos_freqs = 2;
    c.sampling.dir_freqs = 1;
    c.heads.gru_hidden = 8;
    c.heads.geometry_hidden = vec![8, 8];
    c.epipolar.learnable_theta_alpha = true;
    c.epipolar.theta_alpha = 3.0;
    c.loss.lambda_w = 0.1;
    c
}

pub fn uniform_params(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

pub fn random_rays(n: usize, seed: u64) -> (Vec<Ray>, Vec<[f64; 3]>) {
    let mut r = rng(seed);
    let mut rays = Vec::new();
    let mut colors = Vec::new();
    for _ in 0..n {
        let origin = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 3.0);
        let d = Vec3::new(r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), -1.0);
        rays.push(Ray::new(origin, d.normalized(), 1.0, 5.0).unwrap());
        colors.push([r.gen(), r.gen(), r.gen()]);
    }
    (rays, colors)
}

pub struct GradReport {
    pub checked: usize,
    pub failures: Vec<(usize, f64, f64)>,
    pub max_rel: f64,
}

/// Central differences of the full two-pass loss against the analytic gradient on
/// `count` parameters chosen at random. Fine distances are resampled once at `params`
/// and then held fixed, as the training step does.
pub fn gradient_check(model: &Model, params: &[f64], rays: &[Ray], target: &[[f64; 3]], count: usize, seed: u64) -> GradReport {
    gradient_check_step(model, params, rays, target, count, seed, 1e-4)
}

pub fn gradient_check_step(
    model: &Model,
    params: &[f64],
    rays: &[Ray],
    target: &[[f64; 3]],
    count: usize,
    seed: u64,
    h: f64,
) -> GradReport {
    let coarse_t = model.coarse_samples::<ChaCha8Rng>(rays, None);
    let s = &model.config.sampling;
    let coarse = model
        .pass_forward(params, false, rays, coarse_t.clone(), s.coarse_samples)
        .unwrap();
    let fine_t = model.fine_samples::<f64, ChaCha8Rng>(rays, &coarse, None);
    let mut grads = vec![0.0; params.len()];
    model
        .loss_at(params, rays, target, coarse_t.clone(), fine_t.clone(), Some(&mut grads))
        .unwrap();
    let loss = |p: &[f64]| {
        model
            .loss_at(p, rays, target, coarse_t.clone(), fine_t.clone(), None)
            .unwrap()
            .total
    };
    let mut r = rng(seed);
    let mut idx: Vec<usize> = (0..params.len()).collect();
    for i in 0..idx.len() {
        let j = r.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(count.min(params.len()));
    let mut p = params.to_vec();
    let mut report = GradReport {
        checked: idx.len(),
        failures: Vec::new(),
        max_rel: 0.0,
    };
    for &i in &idx {
        p[i] = params[i] + h;
        let up = loss(&p);
        p[i] = params[i] - h;
        let down = loss(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-8);
        report.max_rel = report.max_rel.max(rel);
        if rel >= 1e-3 {
            report.failures.push((i, grads[i], fd));
        }
    }
    report
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x·W + b` for one row, reading the weights straight out of the parameter buffer.
pub fn affine(layer: &Linear, params: &[f64], x: &[f64]) -> Vec<f64> {
    let w = &params[layer.weight.offset..layer.weight.offset + layer.weight.len];
    let b = &params[layer.bias.offset..layer.bias.offset + layer.bias.len];
    (0..layer.output)
        .map(|j| b[j] + (0..layer.input).map(|i| x[i] * w[i * layer.output + j]).sum::<f64>())
        .collect()
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

/// Direct evaluation of an encoder with at most one down/up pair, one ray, loops only.
pub fn encoder_oracle(enc: &Encoder, params: &[f64], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut h: Vec<Vec<f64>> = x.to_vec();
    for layer in &enc.point {
        h = h.iter().map(|row| relu(affine(layer, params, row))).collect();
    }
    if enc.down.is_empty() {
        return h;
    }
    assert_eq!(enc.down.len(), 1, "oracle covers one down/up pair");
    let conv = &enc.down[0];
    let (k, cin, cout) = (conv.kernel, conv.input, conv.output);
    let pad = (k - 1) as isize / 2;
    let w = &params[conv.weight.offset..conv.weight.offset + conv.weight.len];
    let b = &params[conv.bias.offset..conv.bias.offset + conv.bias.len];
    let half = d / 2;
    let mut low = vec![vec![0.0; cout]; half];
    for (j, out) in low.iter_mut().enumerate() {
        for o in 0..cout {
            let mut acc = b[o];
            for q in 0..k {
                let src = 2 * j as isize + q as isize - pad;
                if src < 0 || src >= d as isize {
                    continue;
                }
                for c in 0..cin {
                    acc += h[src as usize][c] * w[(q * cin + c) * cout + o];
                }
            }
            out[o] = acc.max(0.0);
        }
    }
    let up_layer = &enc.up[0];
    (0..d)
        .map(|i| {
            let pos = if half == 1 { 0.0 } else { i as f64 * (half - 1) as f64 / (d - 1) as f64 };
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(half - 1);
            let f = pos - lo as f64;
            let mut cat: Vec<f64> = (0..cout).map(|c| (1.0 - f) * low[lo][c] + f * low[hi][c]).collect();
            cat.extend_from_slice(&h[i]);
            relu(affine(up_layer, params, &cat))
        })
        .collect()
}

/// Step-by-step gated recurrence followed by the fully connected head.
pub fn geometry_oracle(head: &GeometryHead, params: &[f64], v: &[Vec<f64>]) -> Vec<f64> {
    let GeometryHead::Recurrent { gru, layers, reverse } = head else {
        panic!("recurrent head expected");
    };
    assert!(!reverse);
    let hs = gru.hidden;
    let mut h = vec![0.0; hs];
    let mut out = Vec::new();
    for row in v {
        let gi = affine(&gru.w_input, params, row);
        let gh = affine(&gru.w_hidden, params, &h);
        let mut next = vec![0.0; hs];
        for j in 0..hs {
            let r = sigmoid(gi[j] + gh[j]);
            let z = sigmoid(gi[hs + j] + gh[hs + j]);
            let n = (gi[2 * hs + j] + r * gh[2 * hs + j]).tanh();
            next[j] = (1.0 - z) * n + z * h[j];
        }
        h = next;
        let mut a = h.clone();
        for (i, layer) in layers.iter().enumerate() {
            a = affine(layer, params, &a);
            if i + 1 < layers.len() {
                a = relu(a);
            }
        }
        out.push(sigmoid(a[0]));
    }
    out
}

pub fn radiance_oracle(head: &RadianceHead, params: &[f64], v: &[Vec<f64>]) -> Vec<[f64; 3]> {
    v.iter()
        .map(|row| {
            let hidden = relu(affine(&head.hidden, params, row));
            let o = affine(&head.output, params, &hidden);
            [sigmoid(o[0]), sigmoid(o[1]), sigmoid(o[2])]
        })
        .collect()
}

/// `exp(θ·s_i) / (Σ_j exp(θ·s_j) + exp(θ·s_e))`, epipolar slot last.
pub fn softmax_oracle(s: &[f64], ep: &EpipolarConfig) -> Vec<f64> {
    let s_e = ep.s_e.resolve(s.len());
    let mut e: Vec<f64> = s.iter().map(|v| (ep.theta_alpha * v).exp()).collect();
    e.push((ep.theta_alpha * s_e).exp());
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}
