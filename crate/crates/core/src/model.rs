//! The full network: ray encoder, geometry and radiance heads, and the weight
//! normalization, run as a coarse pass followed by a resampled fine pass.

use rand::Rng;

use crate::config::CerfConfig;
use crate::encoder::{Encoder, EncoderTrace};
use crate::error::{CerfError, Result};
use crate::heads::{GeometryHead, GeometryTrace, RadianceHead, RadianceTrace};
use crate::linalg::{Mat, Real};
use crate::nn::{ParamAlloc, Slot};
use crate::raygen::{encode_into, encoding_dim, hierarchical_resample, stratified_sample, Ray};
use crate::renderer::{weights_backward, weights_into, Normalizer, WeightSpec};

/// One encoder plus its two heads.
#[derive(Clone, Debug)]
pub struct Net {
    pub encoder: Encoder,
    pub geometry: GeometryHead,
    pub radiance: RadianceHead,
}

impl Net {
    fn new(cfg: &CerfConfig, input_dim: usize, alloc: &mut ParamAlloc) -> Result<Net> {
        let ab = cfg.train.ablation;
        let mut enc_cfg = cfg.encoder_config()?;
        if ab.no_rho_f {
            enc_cfg = enc_cfg.without_updown();
        }
        let width = enc_cfg.width;
        let encoder = Encoder::new(enc_cfg, input_dim, alloc)?;
        let geometry = if ab.no_rho_g {
            GeometryHead::per_sample(alloc, width)
        } else {
            GeometryHead::recurrent(
                alloc,
                width,
                cfg.heads.gru_hidden,
                &cfg.heads.geometry_hidden,
                cfg.heads.reverse_scan,
            )
        };
        let radiance = RadianceHead::new(alloc, width, cfg.heads.radiance_hidden.unwrap_or((width / 2).max(1)));
        Ok(Net {
            encoder,
            geometry,
            radiance,
        })
    }

    fn init<T: Real, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        self.encoder.init(params, rng);
        self.geometry.init(params, rng);
        self.radiance.init(params, rng);
    }
}

/// Activations of one pass over a batch of rays.
#[derive(Debug)]
pub struct PassTrace<T> {
    pub batch: usize,
    pub len: usize,
    /// Sample distances, ray-major.
    pub t: Vec<f64>,
    /// Weights per ray: `len` samples then the epipolar slot when present.
    pub weights: Vec<T>,
    pub slots: usize,
    pub rgb: Vec<[T; 3]>,
    spec: WeightSpec<T>,
    encoder: EncoderTrace<T>,
    geometry: GeometryTrace<T>,
    radiance: RadianceTrace<T>,
}

impl<T: Real> PassTrace<T> {
    pub fn ray_weights(&self, r: usize) -> &[T] {
        &self.weights[r * self.slots..(r + 1) * self.slots]
    }

    pub fn sample_weights(&self, r: usize) -> &[T] {
        &self.ray_weights(r)[..self.len]
    }

    pub fn epipolar_weight(&self, r: usize) -> Option<T> {
        (self.slots > self.len).then(|| self.ray_weights(r)[self.len])
    }

    /// Raw geometry coefficients of ray `r`.
    pub fn coeffs(&self, r: usize) -> &[T] {
        &self.geometry.s[r * self.len..(r + 1) * self.len]
    }

    pub fn ray_t(&self, r: usize) -> &[f64] {
        &self.t[r * self.len..(r + 1) * self.len]
    }

    /// `Σ w_i t_i + w_e t_e`.
    pub fn depth(&self, r: usize, t_e: f64) -> f64 {
        let w = self.ray_weights(r);
        let mut d: f64 = w[..self.len].iter().zip(self.ray_t(r)).map(|(w, t)| w.to_f64().unwrap() * t).sum();
        if let Some(we) = self.epipolar_weight(r) {
            d += we.to_f64().unwrap() * t_e;
        }
        d
    }

    pub fn color(&self, r: usize) -> [f64; 3] {
        self.rgb[r].map(|c| c.to_f64().unwrap())
    }
}

/// Per-term batch losses (means over rays).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub coarse_mse: f64,
    pub fine_mse: f64,
    /// Mean over rays of the summed sample weights of both passes.
    pub weight_l1: f64,
}

/// Rendered output for one ray (fine pass).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayOutput {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub epipolar_weight: Option<f64>,
}

/// Rays per forward/backward chunk inside one optimization step.
pub const GRAD_CHUNK: usize = 32;

#[derive(Clone, Debug)]
pub struct Model {
    pub config: CerfConfig,
    /// One net when coarse and fine share parameters, otherwise `[coarse, fine]`.
    pub nets: Vec<Net>,
    /// Slot of the learnable softmax temperature.
    pub theta: Option<Slot>,
    pub embed_dim: usize,
    n_params: usize,
}

impl Model {
    pub fn new(config: &CerfConfig) -> Result<Model> {
        config.validate()?;
        let s = &config.sampling;
        let embed_dim = encoding_dim(3, s.pos_freqs) + encoding_dim(3, s.dir_freqs);
        let mut alloc = ParamAlloc::new();
        let count = if config.train.share_coarse_fine { 1 } else { 2 };
        let nets = (0..count)
            .map(|_| Net::new(config, embed_dim, &mut alloc))
            .collect::<Result<Vec<_>>>()?;
        let theta = config.epipolar.learnable_theta_alpha.then(|| alloc.take(1));
        Ok(Model {
            config: config.clone(),
            nets,
            theta,
            embed_dim,
            n_params: alloc.len(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    /// Fan-in scaled uniform weights, zero biases, `θ_α` at its configured start value.
    pub fn init<T: Real>(&self, seed: u64) -> Vec<T> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); self.n_params];
        for net in &self.nets {
            net.init(&mut params, &mut rng);
        }
        if let Some(slot) = self.theta {
            params[slot.offset] = T::c(self.config.epipolar.theta_alpha);
        }
        params
    }

    pub fn check_params<T: Real>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(CerfError::Shape(format!(
                "model {} expects {} parameters, got {}",
                self.config.encoder,
                self.n_params,
                params.len()
            )));
        }
        Ok(())
    }

    fn net(&self, fine: bool) -> &Net {
        &self.nets[if fine { self.nets.len() - 1 } else { 0 }]
    }

    pub fn theta<T: Real>(&self, params: &[T]) -> T {
        match self.theta {
            Some(slot) => params[slot.offset],
            None => T::c(self.config.epipolar.theta_alpha),
        }
    }

    pub fn weight_spec<T: Real>(&self, params: &[T], samples: usize) -> WeightSpec<T> {
        let ab = self.config.train.ablation;
        WeightSpec {
            theta: self.theta(params),
            s_e: (!ab.no_beta).then(|| T::c(self.config.epipolar.s_e.resolve(samples))),
            normalizer: if ab.no_alpha {
                Normalizer::Ratio
            } else {
                Normalizer::Softmax
            },
        }
    }

    /// Per-sample embeddings `[PE(position), PE(direction)]`, one row per sample.
    pub fn embed<T: Real>(&self, rays: &[Ray], t: &[f64], len: usize) -> Mat<T> {
        let s = &self.config.sampling;
        let pe = encoding_dim(3, s.pos_freqs);
        let mut x = Mat::zeros(rays.len() * len, self.embed_dim);
        let mut dir = vec![T::zero(); self.embed_dim - pe];
        for (b, ray) in rays.iter().enumerate() {
            encode_into(&ray.direction.0, s.dir_freqs, &mut dir);
            for i in 0..len {
                let row = x.row_mut(b * len + i);
                encode_into(&ray.at(t[b * len + i]).0, s.pos_freqs, &mut row[..pe]);
                row[pe..].copy_from_slice(&dir);
            }
        }
        x
    }

    /// Runs one pass over `rays` at the given ray-major sample distances.
    pub fn pass_forward<T: Real>(
        &self,
        params: &[T],
        fine: bool,
        rays: &[Ray],
        t: Vec<f64>,
        len: usize,
    ) -> Result<PassTrace<T>> {
        let batch = rays.len();
        if t.len() != batch * len {
            return Err(CerfError::Shape(format!("{} distances for {batch} rays of {len}", t.len())));
        }
        let net = self.net(fine);
        let x = self.embed(rays, &t, len);
        let encoder = net.encoder.forward(params, x, batch, len)?;
        let v = encoder.features();
        let geometry = net.geometry.forward(params, v, batch, len)?;
        let radiance = net.radiance.forward(params, v);
        let spec = self.weight_spec(params, len);
        let slots = len + spec.s_e.is_some() as usize;
        let c_e = self.config.epipolar.c_e.map(T::c);
        let mut weights = vec![T::zero(); batch * slots];
        let mut rgb = vec![[T::zero(); 3]; batch];
        for b in 0..batch {
            let w = &mut weights[b * slots..(b + 1) * slots];
            weights_into(&geometry.s[b * len..(b + 1) * len], &spec, w);
            let mut c = [T::zero(); 3];
            for i in 0..len {
                let col = radiance.colors.row(b * len + i);
                for k in 0..3 {
                    c[k] += w[i] * col[k];
                }
            }
            if slots > len {
                for k in 0..3 {
                    c[k] += w[len] * c_e[k];
                }
            }
            rgb[b] = c;
        }
        Ok(PassTrace {
            batch,
            len,
            t,
            weights,
            slots,
            rgb,
            spec,
            encoder,
            geometry,
            radiance,
        })
    }

    /// Backpropagates `dL/dC` per ray plus a constant `dL/dw_i` on every sample weight.
    pub fn pass_backward<T: Real>(
        &self,
        params: &[T],
        fine: bool,
        trace: &PassTrace<T>,
        d_rgb: &[[T; 3]],
        d_sample_weight: T,
        grads: &mut [T],
    ) {
        let (batch, len, slots) = (trace.batch, trace.len, trace.slots);
        let net = self.net(fine);
        let c_e = self.config.epipolar.c_e.map(T::c);
        let mut ds = vec![T::zero(); batch * len];
        let mut dc = Mat::zeros(batch * len, 3);
        let mut dw = vec![T::zero(); slots];
        let mut dtheta = T::zero();
        for b in 0..batch {
            let w = trace.ray_weights(b);
            let g = d_rgb[b];
            for i in 0..len {
                let row = b * len + i;
                let col = trace.radiance.colors.row(row);
                dw[i] = g[0] * col[0] + g[1] * col[1] + g[2] * col[2] + d_sample_weight;
                let out = dc.row_mut(row);
                for k in 0..3 {
                    out[k] = w[i] * g[k];
                }
            }
            if slots > len {
                dw[len] = g[0] * c_e[0] + g[1] * c_e[1] + g[2] * c_e[2];
            }
            dtheta += weights_backward(trace.coeffs(b), w, &dw, &trace.spec, &mut ds[b * len..(b + 1) * len]);
        }
        let v = trace.encoder.features();
        let mut dv = net.geometry.backward(params, v, &trace.geometry, &ds, grads);
        let dv_rad = net.radiance.backward(params, v, &trace.radiance, &dc, grads);
        for (a, b) in dv.data.iter_mut().zip(&dv_rad.data) {
            *a += *b;
        }
        net.encoder.backward(params, &trace.encoder, dv, grads);
        if let Some(slot) = self.theta {
            grads[slot.offset] += dtheta;
        }
    }

    /// Stratified coarse distances, ray-major. `None` places them at bin midpoints.
    pub fn coarse_samples<R: Rng + ?Sized>(&self, rays: &[Ray], rng: Option<&mut R>) -> Vec<f64> {
        let n = self.config.sampling.coarse_samples;
        let mut t = Vec::with_capacity(rays.len() * n);
        match rng {
            Some(rng) => {
                let jitter = self.config.sampling.jitter;
                for ray in rays {
                    t.extend(stratified_sample(ray, n, jitter, rng).t);
                }
            }
            None => {
                let mut unused = rand::rngs::mock::StepRng::new(0, 0);
                for ray in rays {
                    t.extend(stratified_sample(ray, n, false, &mut unused).t);
                }
            }
        }
        t
    }

    /// Fine distances resampled from the coarse sample weights (no gradient flows
    /// through this choice). Adds the coarse distances back when `fine_union` is set.
    pub fn fine_samples<T: Real, R: Rng + ?Sized>(
        &self,
        rays: &[Ray],
        coarse: &PassTrace<T>,
        mut rng: Option<&mut R>,
    ) -> Vec<f64> {
        let s = &self.config.sampling;
        let mut out = Vec::with_capacity(rays.len() * s.fine_pass_samples());
        for (b, ray) in rays.iter().enumerate() {
            let w: Vec<f64> = coarse.sample_weights(b).iter().map(|v| v.to_f64().unwrap()).collect();
            let mut t = hierarchical_resample(ray, coarse.ray_t(b), &w, s.fine_samples, rng.as_deref_mut()).t;
            if s.fine_union {
                t.extend_from_slice(coarse.ray_t(b));
                t.sort_by(|a, b| a.total_cmp(b));
            }
            out.extend(t);
        }
        out
    }

    /// Coarse and fine passes; `None` makes every sampling choice deterministic.
    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        params: &[T],
        rays: &[Ray],
        mut rng: Option<&mut R>,
    ) -> Result<(PassTrace<T>, PassTrace<T>)> {
        let s = &self.config.sampling;
        let t = self.coarse_samples(rays, rng.as_deref_mut());
        let coarse = self.pass_forward(params, false, rays, t, s.coarse_samples)?;
        let tf = self.fine_samples(rays, &coarse, rng);
        let fine = self.pass_forward(params, true, rays, tf, s.fine_pass_samples())?;
        Ok((coarse, fine))
    }

    /// Batch loss at fixed sample distances; accumulates `dL/dparams` into `grads` when given.
    pub fn loss_at<T: Real>(
        &self,
        params: &[T],
        rays: &[Ray],
        target: &[[f64; 3]],
        coarse_t: Vec<f64>,
        fine_t: Vec<f64>,
        grads: Option<&mut [T]>,
    ) -> Result<LossParts> {
        let s = &self.config.sampling;
        let coarse = self.pass_forward(params, false, rays, coarse_t, s.coarse_samples)?;
        let fine = self.pass_forward(params, true, rays, fine_t, s.fine_pass_samples())?;
        if target.len() != rays.len() {
            return Err(CerfError::Shape(format!("{} targets for {} rays", target.len(), rays.len())));
        }
        self.loss_backward(params, target, rays.len(), &coarse, &fine, grads)
    }

    /// Samples, runs both passes and (optionally) backpropagates the loss. Rays are
    /// processed [`GRAD_CHUNK`] at a time; the result is still the mean over all rays.
    pub fn loss_and_grad<T: Real, R: Rng + ?Sized>(
        &self,
        params: &[T],
        rays: &[Ray],
        target: &[[f64; 3]],
        mut rng: Option<&mut R>,
        mut grads: Option<&mut [T]>,
    ) -> Result<LossParts> {
        if target.len() != rays.len() {
            return Err(CerfError::Shape(format!("{} targets for {} rays", target.len(), rays.len())));
        }
        let mut total = LossParts::default();
        for (r, t) in rays.chunks(GRAD_CHUNK).zip(target.chunks(GRAD_CHUNK)) {
            let (coarse, fine) = self.forward(params, r, rng.as_deref_mut())?;
            let part = self.loss_backward(params, t, rays.len(), &coarse, &fine, grads.as_deref_mut())?;
            total.coarse_mse += part.coarse_mse;
            total.fine_mse += part.fine_mse;
            total.weight_l1 += part.weight_l1;
            total.total += part.total;
        }
        Ok(total)
    }

    /// Loss terms of one chunk of rays, each divided by the full batch size `batch`.
    fn loss_backward<T: Real>(
        &self,
        params: &[T],
        target: &[[f64; 3]],
        batch: usize,
        coarse: &PassTrace<T>,
        fine: &PassTrace<T>,
        grads: Option<&mut [T]>,
    ) -> Result<LossParts> {
        let lw = self.config.effective_loss();
        let n = batch as f64;
        let mut parts = LossParts::default();
        for (b, gt) in target.iter().enumerate() {
            let (cc, cf) = (coarse.color(b), fine.color(b));
            parts.coarse_mse += (0..3).map(|k| (cc[k] - gt[k]).powi(2)).sum::<f64>();
            parts.fine_mse += (0..3).map(|k| (cf[k] - gt[k]).powi(2)).sum::<f64>();
            let sum = |p: &PassTrace<T>| p.sample_weights(b).iter().map(|w| w.to_f64().unwrap()).sum::<f64>();
            parts.weight_l1 += sum(coarse) + sum(fine);
        }
        parts.coarse_mse /= n;
        parts.fine_mse /= n;
        parts.weight_l1 /= n;
        parts.total = lw.lambda_coarse * parts.coarse_mse + lw.lambda_fine * parts.fine_mse + lw.lambda_w * parts.weight_l1;

        if let Some(grads) = grads {
            let d_rgb = |p: &PassTrace<T>, lambda: f64| -> Vec<[T; 3]> {
                target
                    .iter()
                    .enumerate()
                    .map(|(b, gt)| {
                        let c = p.color(b);
                        [0, 1, 2].map(|k| T::c(2.0 * lambda * (c[k] - gt[k]) / n))
                    })
                    .collect()
            };
            let dw = T::c(lw.lambda_w / n);
            self.pass_backward(params, false, coarse, &d_rgb(coarse, lw.lambda_coarse), dw, grads);
            self.pass_backward(params, true, fine, &d_rgb(fine, lw.lambda_fine), dw, grads);
        }
        Ok(parts)
    }

    /// Deterministic fine-pass color, depth and epipolar weight for every ray,
    /// evaluated `chunk` rays at a time.
    pub fn render_rays<T: Real>(&self, params: &[T], rays: &[Ray], chunk: usize) -> Result<Vec<RayOutput>> {
        self.check_params(params)?;
        let t_e = self.config.epipolar.t_e;
        let mut out = Vec::with_capacity(rays.len());
        for part in rays.chunks(chunk.max(1)) {
            let (_, fine) = self.forward::<T, rand::rngs::mock::StepRng>(params, part, None)?;
            for b in 0..part.len() {
                out.push(RayOutput {
                    rgb: fine.color(b),
                    depth: fine.depth(b, t_e),
                    epipolar_weight: fine.epipolar_weight(b).map(|w| w.to_f64().unwrap()),
                });
            }
        }
        Ok(out)
    }
}
