//! Synthetic frame sequences with known global motion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::homography::{Homography, Point2};
use crate::image::Image;

use super::texture::{add_noise, mucosa_texture, TextureParams};

/// Camera path drifting along +x over a large source texture.
#[derive(Debug, Clone, PartialEq)]
pub struct StripParams {
    pub frames: usize,
    pub size: usize,
    /// Mean advance per frame along x, in pixels.
    pub step: f64,
    /// Per-frame jitter: translation (px), rotation (rad), scale.
    pub jitter_shift: f64,
    pub jitter_rotation: f64,
    pub jitter_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for StripParams {
    fn default() -> Self {
        Self {
            frames: 152,
            size: 480,
            step: 3.0,
            jitter_shift: 0.5,
            jitter_rotation: 0.3f64.to_radians(),
            jitter_scale: 0.003,
            noise: 0.01,
            seed: 0,
        }
    }
}

/// Texture used for sequences: smoother than the benchmark corpus so that
/// consecutive raw frames stay structurally similar.
pub fn sequence_texture() -> TextureParams {
    TextureParams {
        bands: vec![(3.0, 0.3), (6.0, 0.8), (12.0, 1.0), (24.0, 1.2)],
        blob_radius: (6.0, 18.0),
        ..TextureParams::default()
    }
}

/// Frames plus the ground-truth map from each frame into frame 0.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<Image>,
    pub globals: Vec<Homography>,
}

fn jitter(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    if r > 0.0 {
        rng.random_range(-r..=r)
    } else {
        0.0
    }
}

/// Renders `frame` as the view of `src` through `to_src` (frame pixels to
/// source pixels).
fn render_view(src: &Image, to_src: &Homography, size: usize) -> Result<Image> {
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (u, v, _) = to_src.apply_raw(x as f64, y as f64);
            data.push(src.sample(u, v).ok_or(Error::InfeasibleCrop)?);
        }
    }
    Image::from_clamped(size, size, data)
}

pub fn synth_strip(params: &StripParams) -> Result<SyntheticSequence> {
    if params.frames == 0 || params.size < 32 || !(params.step >= 0.0) {
        return Err(Error::InvalidArgument("strip needs frames, size >= 32 and a non-negative step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.size as f64;
    let margin = (0.2 * n).ceil() as usize;
    let length = (params.step + params.jitter_shift) * params.frames as f64;
    let (sw, sh) = (params.size + 2 * margin + length.ceil() as usize, params.size + 2 * margin);
    let src = mucosa_texture(sw, sh, params.seed ^ 0x5eed, &sequence_texture());

    let c = Point2::new(n / 2.0, n / 2.0);
    let (mut tx, mut ty) = (margin as f64, margin as f64);
    let (mut theta, mut scale) = (0.0f64, 1.0f64);
    let mut to_src = Vec::with_capacity(params.frames);
    for k in 0..params.frames {
        if k > 0 {
            tx += params.step + jitter(&mut rng, params.jitter_shift);
            // Pull the vertical drift back towards the middle row.
            ty += jitter(&mut rng, params.jitter_shift) - 0.05 * (ty - margin as f64);
            theta = 0.9 * theta + jitter(&mut rng, params.jitter_rotation);
            scale = 1.0 + 0.9 * (scale - 1.0) + jitter(&mut rng, params.jitter_scale);
        }
        let local = Homography::rotation_about(theta, c).compose(&scale_about(scale, c))?;
        to_src.push(Homography::translation(tx, ty).compose(&local)?);
    }
    let base_inv = to_src[0].invert()?;
    let mut frames = Vec::with_capacity(params.frames);
    let mut globals = Vec::with_capacity(params.frames);
    for (k, h) in to_src.iter().enumerate() {
        let view = render_view(&src, h, params.size)?;
        frames.push(add_noise(&view, params.noise, params.seed.wrapping_mul(7919).wrapping_add(k as u64)));
        globals.push(base_inv.compose(h)?);
    }
    Ok(SyntheticSequence { frames, globals })
}

fn scale_about(s: f64, c: Point2) -> Homography {
    Homography::translation(c.x, c.y)
        .compose(&Homography::scaling(s))
        .and_then(|h| h.compose(&Homography::translation(-c.x, -c.y)))
        .expect("finite similarity")
}

/// `count` views of one region differing by sub-pixel jitter and sensor
/// noise.
pub fn near_duplicates(count: usize, size: usize, seed: u64) -> Result<SyntheticSequence> {
    let params = StripParams {
        frames: count,
        size,
        step: 0.0,
        jitter_shift: 0.4,
        jitter_rotation: 0.1f64.to_radians(),
        jitter_scale: 0.001,
        noise: 0.01,
        seed,
    };
    synth_strip(&params)
}
