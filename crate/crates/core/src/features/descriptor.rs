use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::image::Image;

use super::detect::{DetectorParams, Keypoint, ScaleSpace};

pub const SIFT_LEN: usize = 128;
const CELLS: usize = 4;
const ORI_BINS: usize = 8;
const CELL_WIDTH: f64 = 3.0;
const MAG_CLAMP: f64 = 0.2;

/// Unit-length feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
}

impl Descriptor {
    /// Normalizes `values` to unit length.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(Error::DegenerateDescriptor);
        }
        values.iter_mut().for_each(|v| *v /= n);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.distance_sq(other).sqrt()
    }

    #[inline]
    pub(crate) fn distance_sq(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// 4x4 grid of 8-bin orientation histograms around `kp`, computed on the
/// scale-space level matching the keypoint.
pub fn describe_sift_in(space: &ScaleSpace, kp: &Keypoint) -> Result<Descriptor> {
    let img = space.level_image(kp);
    let f = (1usize << kp.octave) as f64;
    let (cx, cy) = (kp.x / f, kp.y / f);
    let sigma = kp.octave_scale(space.sigma, space.intervals);
    let hist_width = CELL_WIDTH * sigma;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (CELLS as f64 + 1.0) * 0.5).round() as isize;
    let (sin, cos) = kp.orientation.sin_cos();
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (ix, iy) = (cx.round() as isize, cy.round() as isize);
    let weight_sigma = 0.5 * CELLS as f64;
    let mut hist = [0.0f64; SIFT_LEN];
    let mut inside = 0usize;

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = (ix + dx, iy + dy);
            if x <= 0 || y <= 0 || x >= w - 1 || y >= h - 1 {
                continue;
            }
            // Offset from the exact keypoint centre, rotated into the
            // keypoint frame and measured in cells.
            let (ox, oy) = (x as f64 - cx, y as f64 - cy);
            let rx = (cos * ox + sin * oy) / hist_width;
            let ry = (-sin * ox + cos * oy) / hist_width;
            let cbin = rx + CELLS as f64 / 2.0 - 0.5;
            let rbin = ry + CELLS as f64 / 2.0 - 0.5;
            if cbin <= -1.0 || rbin <= -1.0 || cbin >= CELLS as f64 || rbin >= CELLS as f64 {
                continue;
            }
            inside += 1;
            let (xu, yu) = (x as usize, y as usize);
            let gx = img.get(xu + 1, yu) - img.get(xu - 1, yu);
            let gy = img.get(xu, yu + 1) - img.get(xu, yu - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let ang = (gy.atan2(gx) - kp.orientation).rem_euclid(TAU);
            let obin = ang / TAU * ORI_BINS as f64;
            let wgt = (-(rx * rx + ry * ry) / (2.0 * weight_sigma * weight_sigma)).exp() * mag;
            trilinear(&mut hist, rbin, cbin, obin, wgt);
        }
    }
    if inside == 0 {
        return Err(Error::SupportOutsideImage);
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        return Err(Error::DegenerateDescriptor);
    }
    let clamp = MAG_CLAMP * norm;
    let values = hist.iter().map(|v| v.min(clamp)).collect();
    Descriptor::new(values)
}

fn trilinear(hist: &mut [f64; SIFT_LEN], rbin: f64, cbin: f64, obin: f64, v: f64) {
    let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
    let (dr, dc, dor) = (rbin - r0, cbin - c0, obin - o0);
    for (ri, wr) in [(r0 as isize, 1.0 - dr), (r0 as isize + 1, dr)] {
        if ri < 0 || ri >= CELLS as isize {
            continue;
        }
        for (ci, wc) in [(c0 as isize, 1.0 - dc), (c0 as isize + 1, dc)] {
            if ci < 0 || ci >= CELLS as isize {
                continue;
            }
            for (oi, wo) in [(o0 as usize, 1.0 - dor), (o0 as usize + 1, dor)] {
                let o = oi % ORI_BINS;
                hist[(ri as usize * CELLS + ci as usize) * ORI_BINS + o] += v * wr * wc * wo;
            }
        }
    }
}

/// SIFT descriptor of `kp`, building the scale space of `img` on the fly.
pub fn describe_sift(img: &Image, kp: &Keypoint) -> Result<Descriptor> {
    let space = ScaleSpace::build(img, &DetectorParams::default())?;
    if kp.octave >= space.octaves() {
        return Err(Error::SupportOutsideImage);
    }
    describe_sift_in(&space, kp)
}
