//! Layer primitives shared by the encoder and the heads.
//!
//! Every layer owns only [`Slot`]s into one flat parameter buffer, so optimizers,
//! checkpoints and gradient checks all work on a single `&[T]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{gemm_into, matmul, Mat, Real, View};

/// A contiguous range inside the flat parameter buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn of<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a, T>(&self, params: &'a mut [T]) -> &'a mut [T] {
        &mut params[self.offset..self.offset + self.len]
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Hands out consecutive slots.
#[derive(Debug, Default)]
pub struct ParamAlloc {
    len: usize,
}

impl ParamAlloc {
    pub fn new() -> Self {
        ParamAlloc::default()
    }

    pub fn take(&mut self, len: usize) -> Slot {
        let slot = Slot {
            offset: self.len,
            len,
        };
        self.len += len;
        slot
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Fan-in scaled uniform weights, zero bias.
pub fn init_uniform<T: Real, R: Rng>(weights: &mut [T], fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for w in weights {
        *w = T::c(rng.gen_range(-bound..bound));
    }
}

/// Affine map `y = x·W + b` applied row-wise (a kernel-1 convolution over samples).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub weight: Slot,
    pub bias: Slot,
}

impl Linear {
    pub fn new(alloc: &mut ParamAlloc, input: usize, output: usize) -> Self {
        Linear {
            input,
            output,
            weight: alloc.take(input * output),
            bias: alloc.take(output),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        init_uniform(self.weight.of_mut(params), self.input, rng);
        self.bias.of_mut(params).fill(T::zero());
    }

    pub fn weight_view<'a, T: Real>(&self, params: &'a [T]) -> View<'a, T> {
        View::dense(self.weight.of(params), self.input, self.output)
    }

    pub fn forward<T: Real>(&self, params: &[T], x: View<'_, T>) -> Mat<T> {
        debug_assert_eq!(x.cols, self.input);
        let mut y = Mat::zeros(x.rows, self.output);
        let bias = self.bias.of(params);
        for row in y.data.chunks_exact_mut(self.output) {
            row.copy_from_slice(bias);
        }
        gemm_into(x, self.weight_view(params), &mut y.data, self.output, true);
        y
    }

    /// Accumulates parameter gradients; returns `dL/dx` when requested.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        x: View<'_, T>,
        dy: &Mat<T>,
        grads: &mut [T],
        need_dx: bool,
    ) -> Option<Mat<T>> {
        let dw = self.weight.of_mut(grads);
        gemm_into(x.t(), dy.view(), dw, self.output, true);
        let db = self.bias.of_mut(grads);
        for row in dy.data.chunks_exact(self.output) {
            for (g, v) in db.iter_mut().zip(row) {
                *g += *v;
            }
        }
        need_dx.then(|| matmul(dy.view(), self.weight_view(params).t()))
    }
}

/// Strided 1D convolution along the samples of each ray, zero padded by `(K−1)/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvDown {
    pub input: usize,
    pub output: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Laid out as `(kernel·input) × output`, tap-major.
    pub weight: Slot,
    pub bias: Slot,
}

impl ConvDown {
    pub fn new(alloc: &mut ParamAlloc, input: usize, output: usize, kernel: usize) -> Self {
        ConvDown {
            input,
            output,
            kernel,
            stride: 2,
            weight: alloc.take(kernel * input * output),
            bias: alloc.take(output),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        init_uniform(self.weight.of_mut(params), self.kernel * self.input, rng);
        self.bias.of_mut(params).fill(T::zero());
    }

    pub fn out_len(&self, len: usize) -> usize {
        let pad = (self.kernel - 1) / 2;
        (len + 2 * pad - self.kernel) / self.stride + 1
    }

    fn as_linear(&self) -> Linear {
        Linear {
            input: self.kernel * self.input,
            output: self.output,
            weight: self.weight,
            bias: self.bias,
        }
    }

    /// Gathers the receptive windows of every output position into rows.
    pub fn im2col<T: Real>(&self, x: &Mat<T>, batch: usize, len: usize) -> Mat<T> {
        let out_len = self.out_len(len);
        let pad = (self.kernel - 1) / 2;
        let width = self.kernel * self.input;
        let mut cols = Mat::zeros(batch * out_len, width);
        for b in 0..batch {
            for j in 0..out_len {
                let dst = cols.row_mut(b * out_len + j);
                for q in 0..self.kernel {
                    let src = (j * self.stride + q) as isize - pad as isize;
                    if src >= 0 && (src as usize) < len {
                        dst[q * self.input..(q + 1) * self.input]
                            .copy_from_slice(x.row(b * len + src as usize));
                    }
                }
            }
        }
        cols
    }

    /// Returns `(im2col buffer, pre-activation output)`.
    pub fn forward<T: Real>(&self, params: &[T], x: &Mat<T>, batch: usize, len: usize) -> (Mat<T>, Mat<T>) {
        let cols = self.im2col(x, batch, len);
        let y = self.as_linear().forward(params, cols.view());
        (cols, y)
    }

    pub fn backward<T: Real>(
        &self,
        params: &[T],
        cols: &Mat<T>,
        dy: &Mat<T>,
        batch: usize,
        len: usize,
        grads: &mut [T],
    ) -> Mat<T> {
        let dcols = self
            .as_linear()
            .backward(params, cols.view(), dy, grads, true)
            .expect("dx requested");
        let out_len = self.out_len(len);
        let pad = (self.kernel - 1) / 2;
        let mut dx = Mat::zeros(batch * len, self.input);
        for b in 0..batch {
            for j in 0..out_len {
                let src_row = dcols.row(b * out_len + j);
                for q in 0..self.kernel {
                    let src = (j * self.stride + q) as isize - pad as isize;
                    if src >= 0 && (src as usize) < len {
                        let dst = dx.row_mut(b * len + src as usize);
                        for (d, v) in dst.iter_mut().zip(&src_row[q * self.input..(q + 1) * self.input]) {
                            *d += *v;
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Interpolation taps for endpoint-aligned linear upsampling `len → 2·len`.
///
/// Output `i` sits at source coordinate `i·(len−1)/(2·len−1)`, so both endpoints
/// coincide with the input endpoints.
pub fn upsample_taps(len: usize) -> Vec<(usize, usize, f64)> {
    let out = 2 * len;
    (0..out)
        .map(|i| {
            if len == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (len - 1) as f64 / (out - 1) as f64;
            let lo = (pos.floor() as usize).min(len - 1);
            let hi = (lo + 1).min(len - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

pub fn upsample_linear<T: Real>(x: &Mat<T>, batch: usize, len: usize) -> Mat<T> {
    let taps = upsample_taps(len);
    let c = x.cols;
    let mut y = Mat::zeros(batch * 2 * len, c);
    for b in 0..batch {
        for (i, &(lo, hi, f)) in taps.iter().enumerate() {
            let f = T::c(f);
            let g = T::one() - f;
            let (xl, xh) = (x.row(b * len + lo), x.row(b * len + hi));
            let dst = y.row_mut(b * 2 * len + i);
            for ch in 0..c {
                dst[ch] = g * xl[ch] + f * xh[ch];
            }
        }
    }
    y
}

pub fn upsample_linear_backward<T: Real>(dy: &Mat<T>, batch: usize, len: usize) -> Mat<T> {
    let taps = upsample_taps(len);
    let c = dy.cols;
    let mut dx = Mat::zeros(batch * len, c);
    for b in 0..batch {
        for (i, &(lo, hi, f)) in taps.iter().enumerate() {
            let f = T::c(f);
            let g = T::one() - f;
            let src = dy.row(b * 2 * len + i);
            for ch in 0..c {
                dx.data[(b * len + lo) * c + ch] += g * src[ch];
                dx.data[(b * len + hi) * c + ch] += f * src[ch];
            }
        }
    }
    dx
}

pub fn concat_cols<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    assert_eq!(a.rows, b.rows, "concat_cols rows");
    let mut out = Mat::zeros(a.rows, a.cols + b.cols);
    for i in 0..a.rows {
        let row = out.row_mut(i);
        row[..a.cols].copy_from_slice(a.row(i));
        row[a.cols..].copy_from_slice(b.row(i));
    }
    out
}

pub fn split_cols<T: Real>(m: &Mat<T>, left: usize) -> (Mat<T>, Mat<T>) {
    let right = m.cols - left;
    let mut a = Mat::zeros(m.rows, left);
    let mut b = Mat::zeros(m.rows, right);
    for i in 0..m.rows {
        let row = m.row(i);
        a.row_mut(i).copy_from_slice(&row[..left]);
        b.row_mut(i).copy_from_slice(&row[left..]);
    }
    (a, b)
}

#[inline]
pub fn relu_inplace<T: Real>(x: &mut Mat<T>) {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `dy` by the positive entries of the rectifier output `y`.
#[inline]
pub fn relu_backward_inplace<T: Real>(y: &Mat<T>, dy: &mut Mat<T>) {
    for (d, v) in dy.data.iter_mut().zip(&y.data) {
        if *v <= T::zero() {
            *d = T::zero();
        }
    }
}

/// `1/(1 + e^{−x})`; saturates cleanly to 0 and 1 because `e^{±∞}` is handled by IEEE.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp_fast())
}

pub fn sigmoid_inplace<T: Real>(x: &mut Mat<T>) {
    for v in &mut x.data {
        *v = sigmoid(*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn upsample_doubles_length_and_keeps_endpoints() {
        let x = Mat::from_vec(3, 1, vec![1.0_f64, 4.0, 7.0]);
        let y = upsample_linear(&x, 1, 3);
        assert_eq!(y.rows, 6);
        assert_eq!(y.data[0], 1.0);
        assert_eq!(y.data[5], 7.0);
        // a ramp stays a ramp
        for w in y.data.windows(2) {
            assert!((w[1] - w[0] - 6.0 / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_backward_is_the_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_vec(8, 2, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        let dy = Mat::from_vec(16, 2, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        let y = upsample_linear(&x, 2, 4);
        let dx = upsample_linear_backward(&dy, 2, 4);
        let lhs: f64 = y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn conv_output_length_halves_for_odd_kernels() {
        let mut alloc = ParamAlloc::new();
        for k in [1, 3, 5, 7] {
            let conv = ConvDown::new(&mut alloc, 1, 1, k);
            for len in [2, 4, 8, 32] {
                assert_eq!(conv.out_len(len), len / 2);
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(1000.0_f64), 1.0);
        assert_eq!(sigmoid(-1000.0_f64), 0.0);
        assert!((sigmoid(0.0_f64) - 0.5).abs() < 1e-15);
    }
}
