use crate::error::{CerfError, Result};

/// Value reported for identical images (printed as `inf`).
pub const PSNR_CAP: f64 = 100.0;

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(img: &[f64], reference: &[f64]) -> Result<f64> {
    if img.len() != reference.len() || img.is_empty() {
        return Err(CerfError::Shape(format!(
            "psnr of images with {} and {} values",
            img.len(),
            reference.len()
        )));
    }
    let mse = img.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / img.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - half;
        *t = (-0.5 * x * x / (SIGMA * SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Separable "valid" Gaussian filter of one `h × w` plane.
fn blur(plane: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| taps[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity of two `h × w × 3` images in `[0, 1]`, 11×11 Gaussian
/// window (σ = 1.5), `k1 = 0.01`, `k2 = 0.03`, averaged over valid positions and channels.
pub fn ssim(img: &[f64], reference: &[f64], h: usize, w: usize) -> Result<f64> {
    if img.len() != h * w * 3 || reference.len() != h * w * 3 {
        return Err(CerfError::Shape(format!("ssim expects {h}x{w}x3 images")));
    }
    if h < WINDOW || w < WINDOW {
        return Err(CerfError::Shape(format!("ssim needs at least {WINDOW}x{WINDOW} pixels, got {h}x{w}")));
    }
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let taps = gaussian_taps();
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let a: Vec<f64> = (0..h * w).map(|i| img[3 * i + ch]).collect();
        let b: Vec<f64> = (0..h * w).map(|i| reference[3 * i + ch]).collect();
        let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
        let mu_a = blur(&a, h, w, &taps);
        let mu_b = blur(&b, h, w, &taps);
        let aa = blur(&prod(&a, &a), h, w, &taps);
        let bb = blur(&prod(&b, &b), h, w, &taps);
        let ab = blur(&prod(&a, &b), h, w, &taps);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_reference_values() {
        let zeros = vec![0.0; 48];
        assert_eq!(psnr(&zeros, &zeros).unwrap(), PSNR_CAP);
        assert!((psnr(&zeros, &vec![1.0; 48]).unwrap()).abs() < 1e-12);
        assert!((psnr(&zeros, &vec![0.5; 48]).unwrap() - 6.0206).abs() < 1e-3);
        assert!(psnr(&zeros, &[0.0; 3]).is_err());
    }

    #[test]
    fn ssim_identity_and_constants() {
        let (h, w) = (16, 13);
        let img: Vec<f64> = (0..h * w * 3).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        assert!((ssim(&img, &img, h, w).unwrap() - 1.0).abs() < 1e-9);
        let (m1, m2) = (0.2, 0.7);
        let c1 = 1e-4;
        let expect = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        let got = ssim(&vec![m1; h * w * 3], &vec![m2; h * w * 3], h, w).unwrap();
        assert!((got - expect).abs() < 1e-9);
        assert!(ssim(&vec![0.0; 10 * 10 * 3], &vec![0.0; 10 * 10 * 3], 10, 10).is_err());
    }
}
