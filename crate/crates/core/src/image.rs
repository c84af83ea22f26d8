//! Single-channel intensity rasters, validity masks, file I/O and pyramids.
//!
//! Pixel centres sit at integer coordinates: sample `(x, y)` of an image is
//! the value at `data[y * width + x]`, and bilinear sampling is defined on
//! `[0, width - 1] x [0, height - 1]`.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major intensity raster with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, rejecting out-of-range or non-finite samples.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from arbitrary values, clamping each into `[0, 1]`.
    /// NaN becomes 0.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_clamped(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Clamped access for convolution borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// True when `(x, y)` lies in the bilinear sampling domain.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear sample; `None` outside the sampling domain.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if self.width < 2 || self.height < 2 {
            if !self.contains(x, y) {
                return None;
            }
            return Some(self.get_clamped(x.round() as isize, y.round() as isize));
        }
        self.sample_with_gradient(x, y).map(|(v, _, _)| v)
    }

    /// Bilinear sample together with the gradient of the bilinear interpolant
    /// inside the containing cell.
    #[inline]
    pub fn sample_with_gradient(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        if !self.contains(x, y) || self.width < 2 || self.height < 2 {
            return None;
        }
        let (x0, tx) = cell(x, self.width);
        let (y0, ty) = cell(y, self.height);
        let i = y0 * self.width + x0;
        let w = self.width;
        let f00 = self.data[i];
        let f10 = self.data[i + 1];
        let f01 = self.data[i + w];
        let f11 = self.data[i + w + 1];
        let v = (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11);
        let gx = (1.0 - ty) * (f10 - f00) + ty * (f11 - f01);
        let gy = (1.0 - tx) * (f01 - f00) + tx * (f11 - f10);
        Some((v, gx, gy))
    }

    /// Bilinear sample, gradient and the (cell-constant) mixed derivative
    /// `d2f/dxdy` of the interpolant.
    #[inline]
    pub fn sample_with_derivatives(&self, x: f64, y: f64) -> Option<(f64, f64, f64, f64)> {
        if !self.contains(x, y) || self.width < 2 || self.height < 2 {
            return None;
        }
        let (x0, tx) = cell(x, self.width);
        let (y0, ty) = cell(y, self.height);
        let i = y0 * self.width + x0;
        let w = self.width;
        let f00 = self.data[i];
        let f10 = self.data[i + 1];
        let f01 = self.data[i + w];
        let f11 = self.data[i + w + 1];
        let v = (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11);
        let gx = (1.0 - ty) * (f10 - f00) + ty * (f11 - f01);
        let gy = (1.0 - tx) * (f01 - f00) + tx * (f11 - f10);
        Some((v, gx, gy, f11 - f10 - f01 + f00))
    }

    /// Separable Gaussian blur with clamp-to-edge borders.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let data = convolve_separable(self.width, self.height, &self.data, &gaussian_kernel(sigma));
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Floor-half decimation: coarse pixel `(i, j)` takes fine pixel `(2i, 2j)`,
    /// so coarse coordinates are exactly half the fine ones.
    pub fn decimate(&self) -> Image {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.get(2 * x, 2 * y));
            }
        }
        Image {
            width: w.max(1),
            height: h.max(1),
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Sub-image with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Image::new(width, height, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        let buf = self
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
    }

    pub fn from_luma8(img: &image::GrayImage) -> Result<Image> {
        let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        Image::new(img.width() as usize, img.height() as usize, data)
    }
}

#[inline]
fn cell(v: f64, len: usize) -> (usize, f64) {
    if len < 2 {
        return (0, 0.0);
    }
    let i = (v.floor() as usize).min(len - 2);
    (i, v - i as f64)
}

/// Normalized Gaussian taps with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    gaussian_kernel_radius(sigma, (3.0 * sigma).ceil().max(1.0) as usize)
}

pub(crate) fn gaussian_kernel_radius(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Convolves a raw row-major buffer with `kernel` along both axes,
/// clamping coordinates at the borders.
pub(crate) fn convolve_separable(width: usize, height: usize, data: &[f64], kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xx = (x as isize + k as isize - r).clamp(0, width as isize - 1) as usize;
                acc += kv * row[xx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for (k, kv) in kernel.iter().enumerate() {
            let yy = (y as isize + k as isize - r).clamp(0, height as isize - 1) as usize;
            let src = &tmp[yy * width..(yy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Per-pixel validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "mask length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    /// True when all four bilinear neighbours of `(x, y)` are valid.
    #[inline]
    pub fn valid_at(&self, x: f64, y: f64) -> bool {
        if x < 0.0 || y < 0.0 || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return false;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        self.get(x0, y0) && self.get(x1, y0) && self.get(x0, y1) && self.get(x1, y1)
    }

    /// Morphological erosion with a square structuring element of radius `r`.
    pub fn erode(&self, r: usize) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        // Horizontal pass then vertical pass.
        let mut tmp = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                tmp[y * w + x] = x >= r && x + r < w && (lo..=hi).all(|xx| self.data[y * w + xx]);
            }
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = y.saturating_sub(r);
                let hi = (y + r).min(h - 1);
                out[y * w + x] = y >= r && y + r < h && (lo..=hi).all(|yy| tmp[yy * w + x]);
            }
        }
        Mask {
            width: w,
            height: h,
            data: out,
        }
    }

    pub fn decimate(&self) -> Mask {
        let (w, h) = ((self.width / 2).max(1), (self.height / 2).max(1));
        Mask::from_fn(w, h, |x, y| {
            let (fx, fy) = (2 * x, 2 * y);
            self.get(fx, fy)
                && self.get((fx + 1).min(self.width - 1), fy)
                && self.get(fx, (fy + 1).min(self.height - 1))
        })
    }
}

/// Loads a PNG or JPEG file as luminance in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decode { message, .. } => Error::Decode {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Decodes in-memory PNG/JPEG bytes. Colour is converted to luminance.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let dynimg = image::load_from_memory(bytes).map_err(|e| Error::Decode {
        path: Default::default(),
        message: e.to_string(),
    })?;
    if dynimg.width() == 0 || dynimg.height() == 0 {
        return Err(Error::EmptyImage {
            width: dynimg.width() as usize,
            height: dynimg.height() as usize,
        });
    }
    Image::from_luma8(&dynimg.to_luma8())
}

/// Writes an 8-bit grayscale PNG.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.to_luma8()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Decode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

/// Gaussian prefilter applied before each halving.
pub const PYRAMID_SIGMA: f64 = 0.85;

/// Coarse-to-fine image pyramid; `levels[0]` is the coarsest.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<Image>,
}

impl Pyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &Image {
        self.levels.last().expect("pyramid has at least one level")
    }

    pub fn coarsest(&self) -> &Image {
        &self.levels[0]
    }
}

/// Number of levels such that the coarsest minimum dimension is the
/// smallest repeated floor-half that stays `>= min_dim`.
pub fn pyramid_depth(width: usize, height: usize, min_dim: usize) -> usize {
    let mut levels = 1;
    let (mut w, mut h) = (width, height);
    while (w / 2).min(h / 2) >= min_dim {
        w /= 2;
        h /= 2;
        levels += 1;
    }
    levels
}

pub fn build_pyramid(img: &Image, min_dim: usize) -> Result<Pyramid> {
    if min_dim < 8 {
        return Err(Error::InvalidArgument(format!("min_dim {min_dim} < 8")));
    }
    if img.width.min(img.height) < min_dim {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            min: min_dim,
        });
    }
    let depth = pyramid_depth(img.width, img.height, min_dim);
    let mut levels = vec![img.clone()];
    for _ in 1..depth {
        let next = levels
            .last()
            .expect("non-empty")
            .gaussian_blur(PYRAMID_SIGMA)
            .decimate();
        levels.push(next);
    }
    levels.reverse();
    Ok(Pyramid { levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| (x + y) as f64 / (w + h) as f64).unwrap()
    }

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(Image::new(2, 1, vec![0.5, 1.5]).is_err());
        assert!(Image::new(2, 1, vec![0.5]).is_err());
        assert!(Image::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn pyramid_sizes() {
        let sizes = |w, m| {
            build_pyramid(&Image::filled(w, w, 0.5).unwrap(), m)
                .unwrap()
                .levels
                .iter()
                .map(|l| l.width())
                .collect::<Vec<_>>()
        };
        assert_eq!(sizes(256, 32), vec![32, 64, 128, 256]);
        assert_eq!(sizes(32, 32), vec![32]);
        assert_eq!(sizes(480, 32), vec![60, 120, 240, 480]);
    }

    #[test]
    fn pyramid_halving_is_floor() {
        let img = Image::filled(101, 67, 0.3).unwrap();
        let p = build_pyramid(&img, 8).unwrap();
        for pair in p.levels.windows(2) {
            assert_eq!(pair[0].width(), pair[1].width() / 2);
            assert_eq!(pair[0].height(), pair[1].height() / 2);
        }
        assert_eq!(p.finest(), &img);
    }

    #[test]
    fn pyramid_too_small() {
        let img = Image::filled(20, 40, 0.3).unwrap();
        assert!(matches!(
            build_pyramid(&img, 32),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn bilinear_matches_pixels_and_gradient() {
        let img = ramp(16, 9);
        assert_eq!(img.sample(3.0, 4.0), Some(img.get(3, 4)));
        assert_eq!(img.sample(15.0, 8.0), Some(img.get(15, 8)));
        assert!(img.sample(15.01, 2.0).is_none());
        let (v, gx, gy) = img.sample_with_gradient(2.5, 3.25).unwrap();
        let step = 1.0 / 25.0;
        assert!((v - 5.75 * step).abs() < 1e-12);
        assert!((gx - step).abs() < 1e-12 && (gy - step).abs() < 1e-12);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = Image::filled(12, 12, 0.4).unwrap();
        let b = img.gaussian_blur(2.0);
        assert!(b.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn png_round_trip_and_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let white = dir.path().join("w.png");
        let black = dir.path().join("b.png");
        save_png(&Image::filled(4, 3, 1.0).unwrap(), &white).unwrap();
        save_png(&Image::filled(4, 3, 0.0).unwrap(), &black).unwrap();
        let w = load_image(&white).unwrap();
        assert_eq!(w.dims(), (4, 3));
        assert!(w.data().iter().all(|&v| v == 1.0));
        assert!(load_image(&black).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jpeg_colour_frame_decodes_to_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.jpg");
        let rgb = image::RgbImage::from_fn(256, 256, |x, y| image::Rgb([x as u8, y as u8, 128]));
        rgb.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (256, 256));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::Io { .. })
        ));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(load_image(&junk), Err(Error::Decode { .. })));
    }

    #[test]
    fn erosion_shrinks_by_radius() {
        let m = Mask::full(10, 10).erode(2);
        assert!(!m.get(1, 5) && m.get(2, 5) && m.get(7, 7) && !m.get(8, 7));
    }
}
