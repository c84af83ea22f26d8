use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{gaussian_kernel_radius, Image};

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.70;

/// Window and stabilizing constants of the structural similarity index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Window side length (odd).
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

/// Filters with the window and keeps only positions where it fits fully.
fn filter_valid(w: usize, h: usize, data: &[f64], kernel: &[f64]) -> (usize, usize, Vec<f64>) {
    let n = kernel.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = kernel.iter().zip(&row[x..x + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, kv) in kernel.iter().enumerate() {
            let src = &tmp[(y + k) * ow..(y + k + 1) * ow];
            for (d, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    (ow, oh, out)
}

/// Mean structural similarity over every window position that fits inside
/// the images.
pub fn ssim_with(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let (w, h) = a.dims();
    if w < params.window || h < params.window {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: params.window,
        });
    }
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);

    let (la, ha) = a.min_max();
    let (lb, hb) = b.min_max();
    if ha == la && hb == lb {
        if la == lb {
            return Ok(1.0);
        }
        return Ok((2.0 * la * lb + c1) / (la * la + lb * lb + c1));
    }

    let kernel = gaussian_kernel_radius(params.sigma, params.window / 2);
    let (da, db) = (a.data(), b.data());
    let aa: Vec<f64> = da.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = db.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = da.iter().zip(db).map(|(x, y)| x * y).collect();
    let (_, _, mu_a) = filter_valid(w, h, da, &kernel);
    let (_, _, mu_b) = filter_valid(w, h, db, &kernel);
    let (_, _, s_aa) = filter_valid(w, h, &aa, &kernel);
    let (_, _, s_bb) = filter_valid(w, h, &bb, &kernel);
    let (_, _, s_ab) = filter_valid(w, h, &ab, &kernel);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = s_aa[i] - ma * ma;
        let vb = s_bb[i] - mb * mb;
        let cov = s_ab[i] - ma * mb;
        total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Structural similarity with the standard 11x11 Gaussian window.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

/// Outcome of the pair-admission test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    /// Similarity clipped into `[0, 1]`.
    pub ssim: f64,
    pub admitted: bool,
    pub threshold: f64,
}

/// Admits a pair iff its similarity is strictly above `threshold`.
pub fn gate(a: &Image, b: &Image, threshold: f64) -> Result<GateDecision> {
    let s = ssim(a, b)?.clamp(0.0, 1.0);
    Ok(GateDecision {
        ssim: s,
        admitted: s > threshold,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::texture::checkerboard;
    use crate::testutil::{blob_image, noise_image};
    use proptest::prelude::*;

    #[test]
    fn self_similarity_is_exactly_one() {
        let x = blob_image(64, 48, 3);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let d = gate(&x, &x, DEFAULT_GATE_THRESHOLD).unwrap();
        assert!(d.admitted);
        assert_eq!(d.ssim, 1.0);
    }

    #[test]
    fn inverted_checkerboard_is_anticorrelated() {
        let x = checkerboard(64, 64, 8);
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv).unwrap() < 0.0);
    }

    #[test]
    fn independent_noise_is_rejected() {
        let a = noise_image(64, 64, 1);
        let b = noise_image(64, 64, 2);
        let d = gate(&a, &b, DEFAULT_GATE_THRESHOLD).unwrap();
        assert!(!d.admitted);
        assert!(d.ssim < 0.1);
    }

    #[test]
    fn constant_images() {
        let a = Image::filled(16, 16, 0.5).unwrap();
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let b = Image::filled(16, 16, 0.25).unwrap();
        let c1 = 1e-4;
        let lum = (2.0 * 0.5 * 0.25 + c1) / (0.25 + 0.0625 + c1);
        assert!((ssim(&a, &b).unwrap() - lum).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::filled(16, 16, 0.5).unwrap();
        let b = Image::filled(16, 17, 0.5).unwrap();
        assert!(matches!(ssim(&a, &b), Err(Error::DimensionMismatch(..))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn symmetric_and_threshold_monotone(s1 in 0u64..1000, s2 in 0u64..1000, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let a = blob_image(32, 32, s1);
            let b = blob_image(32, 32, s2);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let d_lo = gate(&a, &b, lo).unwrap();
            let d_hi = gate(&a, &b, hi).unwrap();
            prop_assert!(!d_hi.admitted || d_lo.admitted);
            prop_assert_eq!(d_lo.admitted, d_lo.ssim > lo);
        }
    }
}
