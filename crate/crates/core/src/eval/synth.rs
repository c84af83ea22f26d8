//! Synthetic image pairs with a known relating homography.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homography::{Homography, Point2};
use crate::image::Image;

use super::texture::add_noise;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    /// Rotation drawn from `[-rotation, rotation]` radians.
    pub rotation: f64,
    /// Isotropic scale drawn from `[scale.0, scale.1]`.
    pub scale: (f64, f64),
    /// Translation per axis drawn from `[-shift, shift]` pixels.
    pub shift: f64,
    pub shear: f64,
    /// Projective terms drawn from `[-projective, projective]`.
    pub projective: f64,
    /// Minimum fraction of the first frame that must land in the second.
    pub min_overlap: f64,
    /// Independent Gaussian sensor noise added to each frame.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            rotation: 15f64.to_radians(),
            scale: (0.9, 1.1),
            shift: 20.0,
            shear: 0.05,
            projective: 1e-4,
            min_overlap: 0.5,
            noise: 0.04,
            seed: 0,
        }
    }
}

impl SynthParams {
    /// No motion and no noise: the second frame equals the first.
    pub fn still(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rotation: 0.0,
            scale: (1.0, 1.0),
            shift: 0.0,
            shear: 0.0,
            projective: 0.0,
            min_overlap: 0.5,
            noise: 0.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.rotation, self.scale.0, self.scale.1, self.shift, self.shear, self.projective, self.noise]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.scale.0 <= 0.0 || self.scale.0 > self.scale.1 {
            return Err(Error::InvalidArgument("synthetic ranges must be finite with 0 < scale.0 <= scale.1".into()));
        }
        if !(self.min_overlap > 0.2 && self.min_overlap < 0.95) {
            return Err(Error::InvalidArgument(format!(
                "overlap target {} outside (0.2, 0.95)",
                self.min_overlap
            )));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidArgument("frames must be at least 16x16".into()));
        }
        Ok(())
    }
}

/// `b(h_gt(p)) ~ a(p)` for every pixel `p` of `a` that lands inside `b`.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub a: Image,
    pub b: Image,
    pub h_gt: Homography,
}

fn symmetric(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    if r > 0.0 {
        rng.random_range(-r..=r)
    } else {
        0.0
    }
}

/// Random homography about the frame centre.
fn draw_homography(p: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Homography> {
    let theta = symmetric(rng, p.rotation);
    let s = if p.scale.1 > p.scale.0 {
        rng.random_range(p.scale.0..=p.scale.1)
    } else {
        p.scale.0
    };
    let sh = symmetric(rng, p.shear);
    let (tx, ty) = (symmetric(rng, p.shift), symmetric(rng, p.shift));
    let (px, py) = (symmetric(rng, p.projective), symmetric(rng, p.projective));
    let (cx, cy) = (p.width as f64 / 2.0, p.height as f64 / 2.0);
    let (sn, cs) = theta.sin_cos();
    let linear = nalgebra::Matrix3::new(
        s * cs,
        s * (cs * sh - sn),
        0.0,
        s * sn,
        s * (sn * sh + cs),
        0.0,
        px,
        py,
        1.0,
    );
    let to_center = Homography::translation(-cx, -cy);
    let back = Homography::translation(cx + tx, cy + ty);
    back.compose(&Homography::new(linear)?)?.compose(&to_center)
}

/// Fraction of `a`'s pixels (on a 4-px grid) that `h` maps inside `b`.
pub fn overlap_fraction(h: &Homography, width: usize, height: usize) -> f64 {
    let mut inside = 0usize;
    let mut total = 0usize;
    for y in (0..height).step_by(4) {
        for x in (0..width).step_by(4) {
            total += 1;
            let (u, v, w) = h.apply_raw(x as f64, y as f64);
            if w > 0.0 && u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64 {
                inside += 1;
            }
        }
    }
    inside as f64 / total.max(1) as f64
}

/// Crops `a` from `src` and renders `b` as the same crop seen through a
/// random homography. Deterministic in `params.seed`.
pub fn synth_pair(src: &Image, params: &SynthParams) -> Result<SynthPair> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    if src.width() < w || src.height() < h {
        return Err(Error::InfeasibleCrop);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..200 {
        let h_gt = draw_homography(params, &mut rng)?;
        if overlap_fraction(&h_gt, w, h) < params.min_overlap {
            continue;
        }
        let inv = h_gt.invert()?;
        // Bounding box of b's preimage in crop coordinates.
        let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, (w - 1) as f64, (h - 1) as f64);
        let mut finite = true;
        for (x, y) in [(0.0, 0.0), ((w - 1) as f64, 0.0), (0.0, (h - 1) as f64), ((w - 1) as f64, (h - 1) as f64)] {
            match inv.apply_point(Point2::new(x, y)) {
                Ok(q) => {
                    x0 = x0.min(q.x);
                    y0 = y0.min(q.y);
                    x1 = x1.max(q.x);
                    y1 = y1.max(q.y);
                }
                Err(_) => finite = false,
            }
        }
        if !finite {
            continue;
        }
        let lo_x = (-x0).ceil().max(0.0);
        let hi_x = (src.width() - 1) as f64 - x1.ceil();
        let lo_y = (-y0).ceil().max(0.0);
        let hi_y = (src.height() - 1) as f64 - y1.ceil();
        if lo_x > hi_x || lo_y > hi_y {
            continue;
        }
        let ox = (if hi_x > lo_x { rng.random_range(lo_x..=hi_x) } else { lo_x }).floor() as usize;
        let oy = (if hi_y > lo_y { rng.random_range(lo_y..=hi_y) } else { lo_y }).floor() as usize;
        let a = src.crop(ox, oy, w, h)?;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy, _) = inv.apply_raw(x as f64, y as f64);
                let v = src
                    .sample(sx + ox as f64, sy + oy as f64)
                    .ok_or(Error::InfeasibleCrop)?;
                data.push(v);
            }
        }
        let b = Image::from_clamped(w, h, data)?;
        let noise_seed = rng.random::<u64>();
        let a = add_noise(&a, params.noise, noise_seed);
        let b = add_noise(&b, params.noise, noise_seed ^ 0x9e37_79b9_7f4a_7c15);
        return Ok(SynthPair { a, b, h_gt });
    }
    Err(Error::InfeasibleCrop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::texture::{mucosa_texture, TextureParams};

    fn source() -> Image {
        mucosa_texture(400, 400, 3, &TextureParams::default())
    }

    #[test]
    fn still_params_copy_the_crop() {
        let p = synth_pair(&source(), &SynthParams::still(128, 128)).unwrap();
        assert_eq!(p.h_gt, Homography::identity());
        assert_eq!(p.a, p.b);
    }

    #[test]
    fn pure_shift() {
        let params = SynthParams {
            shift: 0.0,
            ..SynthParams::still(128, 128)
        };
        let mut h = draw_homography(&params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(h, Homography::identity());
        h = Homography::translation(10.0, 0.0);
        assert!((crate::eval::med(&Homography::identity(), &h, 128, 128) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn generator_is_self_consistent_and_deterministic() {
        let src = source();
        for seed in 0..5 {
            let params = SynthParams {
                noise: 0.0,
                seed,
                ..SynthParams::default()
            };
            let p = synth_pair(&src, &params).unwrap();
            let q = synth_pair(&src, &params).unwrap();
            assert_eq!(p.a, q.a);
            assert_eq!(p.b, q.b);
            assert!(overlap_fraction(&p.h_gt, 256, 256) >= 0.5);
            let (mut sum, mut n) = (0.0, 0usize);
            for y in 0..256 {
                for x in 0..256 {
                    let (u, v, _) = p.h_gt.apply_raw(x as f64, y as f64);
                    if let Some(bv) = p.b.sample(u, v) {
                        sum += (bv - p.a.get(x, y)).abs();
                        n += 1;
                    }
                }
            }
            assert!(sum / n as f64 > 0.0 || p.h_gt == Homography::identity());
            assert!(sum / (n as f64) < 0.02, "seed {seed}: {}", sum / n as f64);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        let bad = SynthParams {
            min_overlap: 0.99,
            ..SynthParams::default()
        };
        assert!(synth_pair(&source(), &bad).is_err());
        assert!(matches!(
            synth_pair(&Image::filled(100, 100, 0.5).unwrap(), &SynthParams::default()),
            Err(Error::InfeasibleCrop)
        ));
    }
}
