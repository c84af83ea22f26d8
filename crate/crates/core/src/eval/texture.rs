//! Procedural source textures for synthetic benchmarks.
//!
//! The default texture imitates small-bowel mucosa as seen by a capsule
//! camera: smooth, low contrast, with a few soft blob-like structures and a
//! little sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::{convolve_separable, gaussian_kernel, Image};

/// Octave weights and intensity window of the generated texture.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureParams {
    /// `(blur sigma, relative amplitude)` per band.
    pub bands: Vec<(f64, f64)>,
    /// Number of soft Gaussian blobs per 256x256 area.
    pub blobs_per_tile: f64,
    /// Blob radius range in pixels.
    pub blob_radius: (f64, f64),
    /// Blob amplitude relative to the band mixture.
    pub blob_amplitude: f64,
    /// Output occupies `[center - span/2, center + span/2]`.
    pub center: f64,
    pub span: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            bands: vec![(1.5, 0.25), (3.0, 0.6), (6.0, 1.0), (14.0, 1.2)],
            blobs_per_tile: 14.0,
            blob_radius: (4.0, 14.0),
            blob_amplitude: 1.4,
            center: 0.5,
            span: 0.6,
        }
    }
}

impl TextureParams {
    /// Half the default contrast: the regime where keypoints become
    /// noise-limited, used for the benchmark corpus.
    pub fn low_contrast() -> Self {
        Self {
            span: 0.3,
            ..Self::default()
        }
    }
}

/// `count` independent low-contrast source textures of `size x size`.
pub fn benchmark_corpus(count: usize, size: usize, seed: u64) -> Vec<Image> {
    let params = TextureParams::low_contrast();
    (0..count as u64)
        .map(|i| mucosa_texture(size, size, seed.wrapping_add(i), &params))
        .collect()
}

fn white_noise(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    (0..width * height).map(|_| n.sample(rng)).collect()
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

/// Deterministic low-texture image.
pub fn mucosa_texture(width: usize, height: usize, seed: u64, params: &TextureParams) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; width * height];
    for &(sigma, amp) in &params.bands {
        let noise = white_noise(width, height, &mut rng);
        let mut band = convolve_separable(width, height, &noise, &gaussian_kernel(sigma));
        standardize(&mut band);
        for (a, b) in acc.iter_mut().zip(&band) {
            *a += amp * b;
        }
    }
    let n_blobs = (params.blobs_per_tile * (width * height) as f64 / 65536.0).round() as usize;
    for _ in 0..n_blobs {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let r = rng.random_range(params.blob_radius.0..params.blob_radius.1);
        let sign = if rng.random_bool(0.6) { 1.0 } else { -1.0 };
        let amp = sign * params.blob_amplitude * rng.random_range(0.6..1.4);
        let ext = (3.0 * r).ceil() as isize;
        let (x0, x1) = ((cx as isize - ext).max(0), (cx as isize + ext).min(width as isize - 1));
        let (y0, y1) = ((cy as isize - ext).max(0), (cy as isize + ext).min(height as isize - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                acc[y as usize * width + x as usize] += amp * (-d2 / (2.0 * r * r)).exp();
            }
        }
    }
    standardize(&mut acc);
    // Map +-3 sd onto the target window.
    let lo = params.center - params.span / 2.0;
    let data = acc
        .iter()
        .map(|v| lo + params.span * (v / 6.0 + 0.5))
        .collect();
    Image::from_clamped(width, height, data).expect("non-empty texture")
}

/// Uniform white noise in `[0, 1]`.
pub fn noise_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height).map(|_| rng.random::<f64>()).collect();
    Image::new(width, height, data).expect("non-empty")
}

/// Adds zero-mean Gaussian noise, clamping into `[0, 1]`.
pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).expect("valid normal");
    let data = img.data().iter().map(|v| v + n.sample(&mut rng)).collect();
    Image::from_clamped(img.width(), img.height(), data).expect("same dims")
}

/// Fronto-parallel checkerboard chart with `cell`-pixel squares.
pub fn checkerboard(width: usize, height: usize, cell: usize) -> Image {
    Image::from_fn(width, height, |x, y| {
        if ((x / cell) + (y / cell)) % 2 == 0 {
            0.8
        } else {
            0.2
        }
    })
    .expect("non-empty")
}
