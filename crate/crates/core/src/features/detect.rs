use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Detected scale-space extremum in input-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Blur scale in input pixels.
    pub scale: f64,
    /// Dominant gradient direction in `[0, 2 pi)`, y axis pointing down.
    pub orientation: f64,
    /// Interpolated difference-of-Gaussians value.
    pub response: f64,
    pub(crate) octave: usize,
    /// Fractional level inside the octave.
    pub(crate) level: f64,
}

impl Keypoint {
    /// Blur scale in the pixel units of the keypoint's octave.
    pub(crate) fn octave_scale(&self, sigma0: f64, intervals: usize) -> f64 {
        sigma0 * 2f64.powf(self.level / intervals as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Scales sampled per octave.
    pub intervals: usize,
    /// Blur of the first level of each octave.
    pub sigma: f64,
    /// Minimum absolute interpolated DoG response (intensities in `[0, 1]`).
    pub contrast_threshold: f64,
    /// Maximum ratio of principal curvatures.
    pub edge_ratio: f64,
    /// Blur assumed to be present in the input.
    pub input_blur: f64,
    /// Octaves stop once the smaller side would fall below this.
    pub min_octave_size: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            intervals: 3,
            sigma: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            input_blur: 0.5,
            min_octave_size: 16,
        }
    }
}

/// Unclamped single-channel plane.
#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Plane {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }
}

/// Gaussian and difference-of-Gaussian stacks for every octave.
#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub(crate) gauss: Vec<Vec<Image>>,
    pub(crate) dog: Vec<Vec<Plane>>,
    pub(crate) sigma: f64,
    pub(crate) intervals: usize,
}

const BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f64 = 0.8;
const ORI_SIGMA_FACTOR: f64 = 1.5;

impl ScaleSpace {
    pub fn build(img: &Image, params: &DetectorParams) -> Result<Self> {
        let min = params.min_octave_size.max(16);
        if img.width().min(img.height()) < min {
            return Err(Error::ImageTooSmall {
                width: img.width(),
                height: img.height(),
                min,
            });
        }
        let s = params.intervals.max(1);
        let k = 2f64.powf(1.0 / s as f64);
        let sig = |i: usize| params.sigma * k.powi(i as i32);
        let first = (params.sigma.powi(2) - params.input_blur.powi(2)).max(0.01).sqrt();
        let mut base = img.gaussian_blur(first);
        let mut gauss = Vec::new();
        let mut dog = Vec::new();
        loop {
            let mut levels = vec![base.clone()];
            for i in 1..s + 3 {
                let inc = (sig(i).powi(2) - sig(i - 1).powi(2)).sqrt();
                let next = levels[i - 1].gaussian_blur(inc);
                levels.push(next);
            }
            let d: Vec<Plane> = levels
                .windows(2)
                .map(|p| Plane {
                    w: p[0].width(),
                    h: p[0].height(),
                    data: p[1].data().iter().zip(p[0].data()).map(|(b, a)| b - a).collect(),
                })
                .collect();
            let next_base = levels[s].decimate();
            gauss.push(levels);
            dog.push(d);
            if next_base.width().min(next_base.height()) < min {
                break;
            }
            base = next_base;
        }
        Ok(Self {
            gauss,
            dog,
            sigma: params.sigma,
            intervals: s,
        })
    }

    pub fn octaves(&self) -> usize {
        self.gauss.len()
    }

    /// Gaussian level closest to a keypoint's scale.
    pub(crate) fn level_image(&self, kp: &Keypoint) -> &Image {
        let levels = &self.gauss[kp.octave];
        let i = (kp.level.round().max(0.0) as usize).min(levels.len() - 1);
        &levels[i]
    }

    /// Extrema of the DoG stack, refined, filtered and oriented.
    pub fn detect(&self, params: &DetectorParams) -> Vec<Keypoint> {
        let s = self.intervals;
        let pre = 0.5 * params.contrast_threshold;
        let mut out = Vec::new();
        for (o, dogs) in self.dog.iter().enumerate() {
            let (w, h) = (dogs[0].w, dogs[0].h);
            if w <= 2 * BORDER || h <= 2 * BORDER {
                continue;
            }
            for i in 1..=s {
                for y in BORDER..h - BORDER {
                    for x in BORDER..w - BORDER {
                        let v = dogs[i].at(x, y);
                        if v.abs() <= pre || !is_extremum(dogs, i, x, y) {
                            continue;
                        }
                        if let Some(kp) = self.refine(o, i, x, y, params) {
                            self.orient(kp, &mut out);
                        }
                    }
                }
            }
        }
        out
    }

    fn refine(&self, o: usize, i0: usize, x0: usize, y0: usize, params: &DetectorParams) -> Option<Keypoint> {
        let dogs = &self.dog[o];
        let s = self.intervals;
        let (w, h) = (dogs[0].w, dogs[0].h);
        let (mut i, mut x, mut y) = (i0, x0, y0);
        let mut offset = [0.0; 3];
        let mut converged = false;
        for _ in 0..MAX_REFINE_STEPS {
            let (g, hm) = derivatives(dogs, i, x, y);
            offset = solve3(&hm, &g)?.map(|v| -v);
            if offset.iter().all(|v| v.abs() < 0.5) {
                converged = true;
                break;
            }
            if offset.iter().any(|v| v.abs() > (w.max(h)) as f64) {
                return None;
            }
            let nx = x as isize + offset[0].round() as isize;
            let ny = y as isize + offset[1].round() as isize;
            let ni = i as isize + offset[2].round() as isize;
            if ni < 1
                || ni > s as isize
                || nx < BORDER as isize
                || ny < BORDER as isize
                || nx >= (w - BORDER) as isize
                || ny >= (h - BORDER) as isize
            {
                return None;
            }
            (x, y, i) = (nx as usize, ny as usize, ni as usize);
        }
        if !converged {
            return None;
        }
        let (g, _) = derivatives(dogs, i, x, y);
        let response = dogs[i].at(x, y) + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
        if response.abs() < params.contrast_threshold {
            return None;
        }
        // Principal curvature ratio from the 2x2 spatial Hessian.
        let d = &dogs[i];
        let c = d.at(x, y);
        let dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * c;
        let dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * c;
        let dxy = (d.at(x + 1, y + 1) - d.at(x - 1, y + 1) - d.at(x + 1, y - 1) + d.at(x - 1, y - 1)) / 4.0;
        let tr = dxx + dyy;
        let det = dxx * dyy - dxy * dxy;
        let r = params.edge_ratio;
        if det <= 0.0 || tr * tr * r >= (r + 1.0).powi(2) * det {
            return None;
        }
        let f = (1usize << o) as f64;
        let level = i as f64 + offset[2];
        let kx = (x as f64 + offset[0]) * f;
        let ky = (y as f64 + offset[1]) * f;
        Some(Keypoint {
            x: kx,
            y: ky,
            scale: self.sigma * 2f64.powf(level / s as f64) * f,
            orientation: 0.0,
            response,
            octave: o,
            level,
        })
    }

    /// Pushes one keypoint per dominant orientation.
    fn orient(&self, kp: Keypoint, out: &mut Vec<Keypoint>) {
        let img = self.level_image(&kp);
        let f = (1usize << kp.octave) as f64;
        let (cx, cy) = ((kp.x / f).round() as isize, (kp.y / f).round() as isize);
        let sigma_w = ORI_SIGMA_FACTOR * kp.octave_scale(self.sigma, self.intervals);
        let radius = (3.0 * sigma_w).round() as isize;
        let (w, h) = (img.width() as isize, img.height() as isize);
        let mut hist = [0.0f64; ORI_BINS];
        for dy in -radius..=radius {
            let y = cy + dy;
            if y <= 0 || y >= h - 1 {
                continue;
            }
            for dx in -radius..=radius {
                let x = cx + dx;
                if x <= 0 || x >= w - 1 {
                    continue;
                }
                let (xu, yu) = (x as usize, y as usize);
                let gx = img.get(xu + 1, yu) - img.get(xu - 1, yu);
                let gy = img.get(xu, yu + 1) - img.get(xu, yu - 1);
                let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_w * sigma_w)).exp();
                let ang = gy.atan2(gx).rem_euclid(TAU);
                let bin = ((ang / TAU * ORI_BINS as f64).round() as usize) % ORI_BINS;
                hist[bin] += wgt * gx.hypot(gy);
            }
        }
        let mut smooth = [0.0; ORI_BINS];
        for b in 0..ORI_BINS {
            let at = |d: isize| hist[(b as isize + d).rem_euclid(ORI_BINS as isize) as usize];
            smooth[b] = (at(-2) + at(2)) / 16.0 + 4.0 * (at(-1) + at(1)) / 16.0 + 6.0 * at(0) / 16.0;
        }
        let max = smooth.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return;
        }
        for b in 0..ORI_BINS {
            let l = smooth[(b + ORI_BINS - 1) % ORI_BINS];
            let r = smooth[(b + 1) % ORI_BINS];
            let c = smooth[b];
            if c > l && c > r && c >= ORI_PEAK_RATIO * max {
                let off = 0.5 * (l - r) / (l - 2.0 * c + r);
                let ang = ((b as f64 + off) / ORI_BINS as f64 * TAU).rem_euclid(TAU);
                // rem_euclid may round up to exactly TAU.
                let ang = if ang >= TAU { 0.0 } else { ang };
                out.push(Keypoint {
                    orientation: ang,
                    ..kp
                });
            }
        }
    }
}

fn is_extremum(dogs: &[Plane], i: usize, x: usize, y: usize) -> bool {
    let v = dogs[i].at(x, y);
    let is_max = v > 0.0;
    for d in &dogs[i - 1..=i + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = d.at(xx, yy);
                if std::ptr::eq(d, &dogs[i]) && xx == x && yy == y {
                    continue;
                }
                if (is_max && n >= v) || (!is_max && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

/// Gradient and Hessian of the DoG stack in `(x, y, level)` by central
/// differences.
fn derivatives(dogs: &[Plane], i: usize, x: usize, y: usize) -> ([f64; 3], [[f64; 3]; 3]) {
    let (p, c, n) = (&dogs[i - 1], &dogs[i], &dogs[i + 1]);
    let v = c.at(x, y);
    let dx = (c.at(x + 1, y) - c.at(x - 1, y)) / 2.0;
    let dy = (c.at(x, y + 1) - c.at(x, y - 1)) / 2.0;
    let ds = (n.at(x, y) - p.at(x, y)) / 2.0;
    let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
    let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
    let dss = n.at(x, y) + p.at(x, y) - 2.0 * v;
    let dxy = (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1)) / 4.0;
    let dxs = (n.at(x + 1, y) - n.at(x - 1, y) - p.at(x + 1, y) + p.at(x - 1, y)) / 4.0;
    let dys = (n.at(x, y + 1) - n.at(x, y - 1) - p.at(x, y + 1) + p.at(x, y - 1)) / 4.0;
    ([dx, dy, ds], [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::from_fn(|r, c| a[r][c]);
    let x = m.lu().solve(&nalgebra::Vector3::new(b[0], b[1], b[2]))?;
    Some([x[0], x[1], x[2]])
}

/// Keypoints of `img` with the default detector settings.
pub fn detect_keypoints(img: &Image) -> Result<Vec<Keypoint>> {
    detect_keypoints_with(img, &DetectorParams::default())
}

pub fn detect_keypoints_with(img: &Image, params: &DetectorParams) -> Result<Vec<Keypoint>> {
    Ok(ScaleSpace::build(img, params)?.detect(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homography::{Homography, Point2};
    use crate::quality::enhance;
    use crate::testutil::blob_image;
    use crate::warp::{warp, Extent};

    #[test]
    fn constant_image_has_no_keypoints() {
        let c = Image::filled(64, 64, 0.4).unwrap();
        assert!(detect_keypoints(&c).unwrap().is_empty());
    }

    #[test]
    fn too_small() {
        let c = Image::filled(12, 40, 0.4).unwrap();
        assert!(matches!(detect_keypoints(&c), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn keypoints_are_valid_and_deterministic() {
        let img = enhance(&blob_image(128, 128, 9));
        let a = detect_keypoints(&img).unwrap();
        let b = detect_keypoints(&img).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        for k in &a {
            assert!(k.x >= 0.0 && k.x < 128.0 && k.y >= 0.0 && k.y < 128.0);
            assert!(k.scale > 0.0);
            assert!((0.0..TAU).contains(&k.orientation));
        }
    }

    /// Fraction of keypoints of `a` that reappear in `b` at `h(p)` within
    /// `tol` pixels and with scale ratio `scale` +-20%.
    fn repeatability(a: &[Keypoint], b: &[Keypoint], h: &Homography, scale: f64, tol: f64, extent: (f64, f64)) -> f64 {
        let mut visible = 0;
        let mut hit = 0;
        for k in a {
            let p = h.apply_point(Point2::new(k.x, k.y)).unwrap();
            if p.x < 8.0 || p.y < 8.0 || p.x > extent.0 - 8.0 || p.y > extent.1 - 8.0 {
                continue;
            }
            visible += 1;
            if b.iter().any(|q| {
                Point2::new(q.x, q.y).dist(p) <= tol && (q.scale / k.scale / scale - 1.0).abs() <= 0.2
            }) {
                hit += 1;
            }
        }
        hit as f64 / visible.max(1) as f64
    }

    #[test]
    fn repeatable_under_scaling_and_rotation() {
        let img = enhance(&blob_image(160, 160, 21));
        let a = detect_keypoints(&img).unwrap();

        let up = Homography::scaling(2.0);
        let (big, _) = warp(&img, &up, Extent::new(320, 320), 0.0).unwrap();
        let b = detect_keypoints(&big).unwrap();
        let r = repeatability(&a, &b, &up, 2.0, 2.0, (320.0, 320.0));
        assert!(r >= 0.5, "scale repeatability {r}");

        let rot = Homography::rotation_about(30f64.to_radians(), Point2::new(79.5, 79.5));
        let (turned, _) = warp(&img, &rot, Extent::new(160, 160), 0.0).unwrap();
        let c = detect_keypoints(&turned).unwrap();
        let r = repeatability(&a, &c, &rot, 1.0, 2.0, (160.0, 160.0));
        assert!(r >= 0.5, "rotation repeatability {r}");
    }
}
