//! Dense row-major matrices and the GEMM entry point every layer goes through.
//!
//! Single precision dispatches to an AVX-512 microkernel when the CPU has it and to
//! `matrixmultiply` otherwise; double precision always uses `matrixmultiply`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Tag written into checkpoints.
    const DTYPE: &'static str;
    const BYTES: usize;

    /// `C = A·B` (or `C += A·B` when `accumulate`). `B` and `C` must have unit column
    /// stride; strides of `A` are arbitrary.
    ///
    /// # Safety
    /// All pointers must be valid for the extents implied by the dimensions and strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        c: *mut Self,
        rsc: isize,
        accumulate: bool,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    /// `exp`, allowed to trade the last ulp for a branch-free, vectorizable body.
    #[inline]
    fn exp_fast(self) -> Self {
        self.exp()
    }

    #[inline]
    fn tanh_fast(self) -> Self {
        self.tanh()
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        c: *mut f64,
        rsc: isize,
        accumulate: bool,
    ) {
        let beta = if accumulate { 1.0 } else { 0.0 };
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, 1, beta, c, rsc, 1);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        c: *mut f32,
        rsc: isize,
        accumulate: bool,
    ) {
        #[cfg(target_arch = "x86_64")]
        {
            if avx512::available() {
                avx512::sgemm(m, k, n, a, rsa, csa, b, rsb, c, rsc, accumulate);
                return;
            }
        }
        let beta = if accumulate { 1.0 } else { 0.0 };
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, 1, beta, c, rsc, 1);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }

    /// Cody–Waite reduction and a degree-6 polynomial, about 1 ulp on the normal range.
    #[inline]
    fn exp_fast(self) -> f32 {
        const LOG2E: f32 = std::f32::consts::LOG2_E;
        const LN2_HI: f32 = 0.693_359_4;
        const LN2_LO: f32 = -2.121_944_4e-4;
        const ROUND: f32 = 12_582_912.0;
        let x = self.clamp(-87.3, 88.3);
        let n = (x * LOG2E + ROUND) - ROUND;
        let r = x - n * LN2_HI - n * LN2_LO;
        let mut p = 1.987_569_1e-4_f32;
        p = p * r + 1.398_199_9e-3;
        p = p * r + 8.333_452e-3;
        p = p * r + 4.166_579_6e-2;
        p = p * r + 1.666_666_5e-1;
        p = p * r + 5.000_000_1e-1;
        let poly = p * r * r + r + 1.0;
        let scale = f32::from_bits(((n as i32 + 127) as u32) << 23);
        let y = poly * scale;
        if self.is_nan() {
            self
        } else {
            y
        }
    }

    #[inline]
    fn tanh_fast(self) -> f32 {
        1.0 - 2.0 / ((2.0 * self).exp_fast() + 1.0)
    }
}

/// Owned row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec length");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn view(&self) -> View<'_, T> {
        View {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            rs: self.cols,
            cs: 1,
        }
    }

    /// Transposed view without copying.
    pub fn t(&self) -> View<'_, T> {
        self.view().t()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Borrowed strided matrix.
#[derive(Clone, Copy, Debug)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T: Real> View<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        View {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    /// Row-major view of a contiguous slice.
    pub fn dense(data: &'a [T], rows: usize, cols: usize) -> Self {
        View::new(data, rows, cols, cols, 1)
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn check_extent(&self, what: &str) {
        if self.rows == 0 || self.cols == 0 {
            return;
        }
        let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
        assert!(last < self.data.len(), "{what}: view exceeds its buffer");
    }

    pub fn to_mat(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[i * self.cols + j] = self.data[i * self.rs + j * self.cs];
            }
        }
        out
    }
}

/// `c = a·b`, or `c += a·b` when `accumulate`. `c` is row-major with leading dimension `ldc`.
pub fn gemm_into<T: Real>(a: View<'_, T>, b: View<'_, T>, c: &mut [T], ldc: usize, accumulate: bool) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(ldc >= n, "gemm ldc");
    assert!((m - 1) * ldc + n <= c.len(), "gemm output buffer too small");
    if k == 0 {
        if !accumulate {
            for i in 0..m {
                c[i * ldc..i * ldc + n].fill(T::zero());
            }
        }
        return;
    }
    a.check_extent("gemm lhs");
    b.check_extent("gemm rhs");
    let packed;
    let b = if b.cs == 1 {
        b
    } else {
        packed = b.to_mat();
        packed.view()
    };
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            c.as_mut_ptr(),
            ldc as isize,
            accumulate,
        );
    }
}

pub fn matmul<T: Real>(a: View<'_, T>, b: View<'_, T>) -> Mat<T> {
    let mut out = Mat::zeros(a.rows, b.cols);
    gemm_into(a, b, &mut out.data, b.cols, false);
    out
}

pub fn matmul_acc<T: Real>(a: View<'_, T>, b: View<'_, T>, out: &mut Mat<T>) {
    assert_eq!((out.rows, out.cols), (a.rows, b.cols), "matmul_acc shape");
    let ldc = out.cols;
    gemm_into(a, b, &mut out.data, ldc, true);
}

#[cfg(target_arch = "x86_64")]
mod avx512 {
    use std::arch::x86_64::*;
    use std::sync::OnceLock;

    const MR: usize = 6;
    const KC: usize = 256;
    const NB: usize = 64;

    pub fn available() -> bool {
        static FLAG: OnceLock<bool> = OnceLock::new();
        *FLAG.get_or_init(|| {
            std::is_x86_feature_detected!("avx512f")
                && std::env::var_os("CERF_NO_AVX512").is_none()
        })
    }

    #[allow(clippy::too_many_arguments)]
    #[target_feature(enable = "avx512f")]
    pub unsafe fn sgemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        c: *mut f32,
        rsc: isize,
        accumulate: bool,
    ) {
        if !accumulate {
            for i in 0..m {
                std::ptr::write_bytes(c.offset(i as isize * rsc), 0, n);
            }
        }
        let mut p0 = 0;
        while p0 < k {
            let kc = KC.min(k - p0);
            let mut j0 = 0;
            while j0 < n {
                let nb = NB.min(n - j0);
                let nv = nb.div_ceil(16);
                let mut masks = [0u16; 4];
                for (v, mask) in masks.iter_mut().enumerate().take(nv) {
                    let lanes = (nb - 16 * v).min(16);
                    *mask = if lanes == 16 { 0xffff } else { (1u16 << lanes) - 1 };
                }
                let bp = b.offset(p0 as isize * rsb + j0 as isize);
                let mut i0 = 0;
                while i0 < m {
                    let rows = MR.min(m - i0);
                    let ap = a.offset(i0 as isize * rsa + p0 as isize * csa);
                    let cp = c.offset(i0 as isize * rsc + j0 as isize);
                    dispatch(rows, nv, kc, ap, rsa, csa, bp, rsb, cp, rsc, &masks);
                    i0 += rows;
                }
                j0 += nb;
            }
            p0 += kc;
        }
    }

    macro_rules! dispatch_nv {
        ($r:literal, $nv:expr, $($args:expr),*) => {
            match $nv {
                1 => micro::<$r, 1>($($args),*),
                2 => micro::<$r, 2>($($args),*),
                3 => micro::<$r, 3>($($args),*),
                _ => micro::<$r, 4>($($args),*),
            }
        };
    }

    #[allow(clippy::too_many_arguments)]
    #[target_feature(enable = "avx512f")]
    unsafe fn dispatch(
        rows: usize,
        nv: usize,
        kc: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        c: *mut f32,
        rsc: isize,
        masks: &[u16; 4],
    ) {
        match rows {
            1 => dispatch_nv!(1, nv, kc, a, rsa, csa, b, rsb, c, rsc, masks),
            2 => dispatch_nv!(2, nv, kc, a, rsa, csa, b, rsb, c, rsc, masks),
            3 => dispatch_nv!(3, nv, kc, a, rsa, csa, b, rsb, c, rsc, masks),
            4 => dispatch_nv!(4, nv, kc, a, rsa, csa, b, rsb, c, rsc, masks),
            5 => dispatch_nv!(5, nv, kc, a, rsa, csa, b, rsb, c, rsc, masks),
            _ => dispatch_nv!(6, nv, kc, a, rsa, csa, b, rsb, c, rsc, masks),
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    #[target_feature(enable = "avx512f")]
    unsafe fn micro<const R: usize, const NV: usize>(
        kc: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        c: *mut f32,
        rsc: isize,
        masks: &[u16; 4],
    ) {
        let mut acc = [[_mm512_setzero_ps(); NV]; R];
        for p in 0..kc {
            let brow = b.offset(p as isize * rsb);
            let mut bv = [_mm512_setzero_ps(); NV];
            for v in 0..NV {
                bv[v] = _mm512_maskz_loadu_ps(masks[v], brow.add(16 * v));
            }
            let acol = a.offset(p as isize * csa);
            for r in 0..R {
                let av = _mm512_set1_ps(*acol.offset(r as isize * rsa));
                for v in 0..NV {
                    acc[r][v] = _mm512_fmadd_ps(av, bv[v], acc[r][v]);
                }
            }
        }
        for r in 0..R {
            let crow = c.offset(r as isize * rsc);
            for v in 0..NV {
                let ptr = crow.add(16 * v);
                let old = _mm512_maskz_loadu_ps(masks[v], ptr);
                _mm512_mask_storeu_ps(ptr, masks[v], _mm512_add_ps(old, acc[r][v]));
            }
        }
    }
}
