//! Geometry and radiance heads on top of the ray features.
//!
//! The geometry head scans the samples of each ray with a gated recurrent unit and maps
//! every hidden state to a raw coefficient in (0, 1). The radiance head is a per-sample
//! two-layer map to RGB.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CerfError, Result};
use crate::linalg::{gemm_into, Mat, Real, View};
use crate::nn::{relu_backward_inplace, relu_inplace, sigmoid, sigmoid_inplace, Linear, ParamAlloc};

/// Single-layer gated recurrent unit; gate blocks are ordered `[reset, update, new]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub input: usize,
    pub hidden: usize,
    pub w_input: Linear,
    pub w_hidden: Linear,
}

impl Gru {
    pub fn new(alloc: &mut ParamAlloc, input: usize, hidden: usize) -> Self {
        Gru {
            input,
            hidden,
            w_input: Linear::new(alloc, input, 3 * hidden),
            w_hidden: Linear::new(alloc, hidden, 3 * hidden),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        self.w_input.init(params, rng);
        self.w_hidden.init(params, rng);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GeometryHead {
    Recurrent {
        gru: Gru,
        layers: Vec<Linear>,
        reverse: bool,
    },
    /// One affine map per sample, no recurrence.
    PerSample { layer: Linear },
}

#[derive(Debug)]
pub struct GeometryTrace<T> {
    pub batch: usize,
    pub len: usize,
    /// Raw coefficients, `batch·len`, ray-major.
    pub s: Vec<T>,
    reset: Mat<T>,
    update: Mat<T>,
    candidate: Mat<T>,
    hidden_n: Mat<T>,
    hidden: Mat<T>,
    layer_out: Vec<Mat<T>>,
}

impl GeometryHead {
    pub fn recurrent(alloc: &mut ParamAlloc, input: usize, hidden: usize, widths: &[usize], reverse: bool) -> Self {
        let gru = Gru::new(alloc, input, hidden);
        let mut layers = Vec::new();
        let mut prev = hidden;
        for &w in widths {
            layers.push(Linear::new(alloc, prev, w));
            prev = w;
        }
        layers.push(Linear::new(alloc, prev, 1));
        GeometryHead::Recurrent { gru, layers, reverse }
    }

    pub fn per_sample(alloc: &mut ParamAlloc, input: usize) -> Self {
        GeometryHead::PerSample {
            layer: Linear::new(alloc, input, 1),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        match self {
            GeometryHead::Recurrent { gru, layers, .. } => {
                gru.init(params, rng);
                for l in layers {
                    l.init(params, rng);
                }
            }
            GeometryHead::PerSample { layer } => layer.init(params, rng),
        }
    }

    fn scan_order(reverse: bool, len: usize) -> Vec<usize> {
        if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        }
    }

    /// `v` holds `batch·len` feature rows ordered front to back along each ray.
    pub fn forward<T: Real>(&self, params: &[T], v: &Mat<T>, batch: usize, len: usize) -> Result<GeometryTrace<T>> {
        if len == 0 || batch == 0 {
            return Err(CerfError::Shape("geometry head needs a non-empty sequence".into()));
        }
        if v.rows != batch * len {
            return Err(CerfError::Shape(format!(
                "geometry head got {} rows for {batch} rays of {len} samples",
                v.rows
            )));
        }
        let empty = || Mat::zeros(0, 0);
        match self {
            GeometryHead::PerSample { layer } => {
                let mut out = layer.forward(params, v.view());
                sigmoid_inplace(&mut out);
                Ok(GeometryTrace {
                    batch,
                    len,
                    s: out.data,
                    reset: empty(),
                    update: empty(),
                    candidate: empty(),
                    hidden_n: empty(),
                    hidden: empty(),
                    layer_out: Vec::new(),
                })
            }
            GeometryHead::Recurrent { gru, layers, reverse } => {
                let hsz = gru.hidden;
                let rows = batch * len;
                let gi = gru.w_input.forward(params, v.view());
                let mut reset = Mat::zeros(rows, hsz);
                let mut update = Mat::zeros(rows, hsz);
                let mut candidate = Mat::zeros(rows, hsz);
                let mut hidden_n = Mat::zeros(rows, hsz);
                let mut hidden = Mat::zeros(rows, hsz);
                let mut h_prev = Mat::<T>::zeros(batch, hsz);
                let mut gh = Mat::<T>::zeros(batch, 3 * hsz);
                let wh = gru.w_hidden.weight_view(params);
                let bh = gru.w_hidden.bias.of(params);
                let order = Self::scan_order(*reverse, len);
                for (step, &i) in order.iter().enumerate() {
                    for row in gh.data.chunks_exact_mut(3 * hsz) {
                        row.copy_from_slice(bh);
                    }
                    if step > 0 {
                        gemm_into(h_prev.view(), wh, &mut gh.data, 3 * hsz, true);
                    }
                    for b in 0..batch {
                        let r_idx = b * len + i;
                        let gi_row = gi.row(r_idx);
                        let gh_row = gh.row(b);
                        let hp = h_prev.row_mut(b);
                        let span = r_idx * hsz..(r_idx + 1) * hsz;
                        let (gi_r, rest) = gi_row.split_at(hsz);
                        let (gi_z, gi_n) = rest.split_at(hsz);
                        let (gh_r, rest) = gh_row.split_at(hsz);
                        let (gh_z, gh_n) = rest.split_at(hsz);
                        let out_r = &mut reset.data[span.clone()];
                        let out_z = &mut update.data[span.clone()];
                        let out_n = &mut candidate.data[span.clone()];
                        let out_ghn = &mut hidden_n.data[span.clone()];
                        let out_h = &mut hidden.data[span];
                        for j in 0..hsz {
                            let r = sigmoid(gi_r[j] + gh_r[j]);
                            let z = sigmoid(gi_z[j] + gh_z[j]);
                            let ghn = gh_n[j];
                            let n = (gi_n[j] + r * ghn).tanh_fast();
                            let h = (T::one() - z) * n + z * hp[j];
                            out_r[j] = r;
                            out_z[j] = z;
                            out_n[j] = n;
                            out_ghn[j] = ghn;
                            out_h[j] = h;
                            hp[j] = h;
                        }
                    }
                }
                let mut layer_out: Vec<Mat<T>> = Vec::with_capacity(layers.len());
                for (k, layer) in layers.iter().enumerate() {
                    let src = if k == 0 { &hidden } else { &layer_out[k - 1] };
                    let mut y = layer.forward(params, src.view());
                    if k + 1 < layers.len() {
                        relu_inplace(&mut y);
                    } else {
                        sigmoid_inplace(&mut y);
                    }
                    layer_out.push(y);
                }
                let s = layer_out.last().expect("output layer").data.clone();
                Ok(GeometryTrace {
                    batch,
                    len,
                    s,
                    reset,
                    update,
                    candidate,
                    hidden_n,
                    hidden,
                    layer_out,
                })
            }
        }
    }

    /// Accumulates parameter gradients from `dL/ds`; returns `dL/dV`.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        v: &Mat<T>,
        trace: &GeometryTrace<T>,
        ds: &[T],
        grads: &mut [T],
    ) -> Mat<T> {
        let (batch, len) = (trace.batch, trace.len);
        let rows = batch * len;
        let mut dpre = Mat::from_vec(
            rows,
            1,
            ds.iter().zip(&trace.s).map(|(&g, &s)| g * s * (T::one() - s)).collect(),
        );
        match self {
            GeometryHead::PerSample { layer } => layer
                .backward(params, v.view(), &dpre, grads, true)
                .expect("dx requested"),
            GeometryHead::Recurrent { gru, layers, reverse } => {
                for k in (0..layers.len()).rev() {
                    if k + 1 < layers.len() {
                        relu_backward_inplace(&trace.layer_out[k], &mut dpre);
                    }
                    let src = if k == 0 { &trace.hidden } else { &trace.layer_out[k - 1] };
                    dpre = layers[k]
                        .backward(params, src.view(), &dpre, grads, true)
                        .expect("dx requested");
                }
                let dhidden = dpre;
                let hsz = gru.hidden;
                let mut dgi = Mat::<T>::zeros(rows, 3 * hsz);
                let mut dgh_all = Mat::<T>::zeros(rows, 3 * hsz);
                let mut h_prev_all = Mat::<T>::zeros(rows, hsz);
                let mut carry = Mat::<T>::zeros(batch, hsz);
                let mut dgh = Mat::<T>::zeros(batch, 3 * hsz);
                let wh_t = gru.w_hidden.weight_view(params).t().to_mat();
                let order = Self::scan_order(*reverse, len);
                for step in (0..len).rev() {
                    let i = order[step];
                    let prev = (step > 0).then(|| order[step - 1]);
                    for b in 0..batch {
                        let r_idx = b * len + i;
                        let base = r_idx * hsz;
                        let dgi_row = &mut dgi.data[r_idx * 3 * hsz..(r_idx + 1) * 3 * hsz];
                        let dgh_row = &mut dgh.data[b * 3 * hsz..(b + 1) * 3 * hsz];
                        let carry_row = &mut carry.data[b * hsz..(b + 1) * hsz];
                        for j in 0..hsz {
                            let hp = match prev {
                                Some(p) => trace.hidden.data[(b * len + p) * hsz + j],
                                None => T::zero(),
                            };
                            let r = trace.reset.data[base + j];
                            let z = trace.update.data[base + j];
                            let n = trace.candidate.data[base + j];
                            let ghn = trace.hidden_n.data[base + j];
                            let dh = dhidden.data[base + j] + carry_row[j];
                            let dn = dh * (T::one() - z) * (T::one() - n * n);
                            let dz = dh * (hp - n) * z * (T::one() - z);
                            let dr = dn * ghn * r * (T::one() - r);
                            dgi_row[j] = dr;
                            dgi_row[hsz + j] = dz;
                            dgi_row[2 * hsz + j] = dn;
                            dgh_row[j] = dr;
                            dgh_row[hsz + j] = dz;
                            dgh_row[2 * hsz + j] = dn * r;
                            carry_row[j] = dh * z;
                            h_prev_all.data[base + j] = hp;
                        }
                    }
                    for b in 0..batch {
                        dgh_all.row_mut(b * len + i).copy_from_slice(dgh.row(b));
                    }
                    if prev.is_some() {
                        gemm_into(dgh.view(), wh_t.view(), &mut carry.data, hsz, true);
                    }
                }
                // the first scanned step saw h = 0, so its rows in h_prev_all stay zero
                gemm_into(
                    h_prev_all.t(),
                    dgh_all.view(),
                    gru.w_hidden.weight.of_mut(grads),
                    3 * hsz,
                    true,
                );
                let dbh = gru.w_hidden.bias.of_mut(grads);
                for row in dgh_all.data.chunks_exact(3 * hsz) {
                    for (g, v) in dbh.iter_mut().zip(row) {
                        *g += *v;
                    }
                }
                gru.w_input
                    .backward(params, v.view(), &dgi, grads, true)
                    .expect("dx requested")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadianceHead {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug)]
pub struct RadianceTrace<T> {
    hidden: Mat<T>,
    /// Per-sample RGB, `batch·len × 3`.
    pub colors: Mat<T>,
}

impl RadianceHead {
    pub fn new(alloc: &mut ParamAlloc, input: usize, hidden: usize) -> Self {
        RadianceHead {
            hidden: Linear::new(alloc, input, hidden),
            output: Linear::new(alloc, hidden, 3),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        self.hidden.init(params, rng);
        self.output.init(params, rng);
    }

    pub fn forward<T: Real>(&self, params: &[T], v: &Mat<T>) -> RadianceTrace<T> {
        let mut hidden = self.hidden.forward(params, v.view());
        relu_inplace(&mut hidden);
        let mut colors = self.output.forward(params, hidden.view());
        sigmoid_inplace(&mut colors);
        RadianceTrace { hidden, colors }
    }

    /// `dc` is `dL/dcolors`; returns `dL/dV`.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        v: &Mat<T>,
        trace: &RadianceTrace<T>,
        dc: &Mat<T>,
        grads: &mut [T],
    ) -> Mat<T> {
        let dpre = Mat::from_vec(
            dc.rows,
            3,
            dc.data
                .iter()
                .zip(&trace.colors.data)
                .map(|(&g, &c)| g * c * (T::one() - c))
                .collect(),
        );
        let mut dh = self
            .output
            .backward(params, trace.hidden.view(), &dpre, grads, true)
            .expect("dx requested");
        relu_backward_inplace(&trace.hidden, &mut dh);
        self.hidden
            .backward(params, View::dense(&v.data, v.rows, v.cols), &dh, grads, true)
            .expect("dx requested")
    }
}

/// Raw geometry coefficients of a single ray.
pub fn geometry_coeffs<T: Real>(head: &GeometryHead, params: &[T], v: &Mat<T>) -> Result<Vec<T>> {
    Ok(head.forward(params, v, 1, v.rows)?.s)
}

/// Per-sample colors of a single ray.
pub fn radiance_colors<T: Real>(head: &RadianceHead, params: &[T], v: &Mat<T>) -> Mat<T> {
    head.forward(params, v).colors
}
