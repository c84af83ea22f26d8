//! Seam extraction and inverse-distance exposure correction.

use serde::Serialize;

use crate::error::{Error, Result};

/// Most seam points kept per blend.
pub const MAX_SEAM_POINTS: usize = 256;
/// Width (px) of the band on the old-canvas side of the junction where
/// the corrected source is feathered in.
pub const FEATHER_BAND: f64 = 16.0;

/// Boolean raster used for canvas and footprint masks.
#[derive(Debug, Clone, Copy)]
pub struct MaskView<'a> {
    pub width: usize,
    pub height: usize,
    pub data: &'a [bool],
}

impl MaskView<'_> {
    #[inline]
    fn at(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seam {
    /// Pixel coordinates `(x, y)` in the raster shared by both masks.
    pub points: Vec<(usize, usize)>,
    /// `canvas - source` at each point.
    pub diffs: Vec<f64>,
}

/// Boundary pixels of `incoming` (inside, with a 4-neighbour outside or on
/// the raster edge) that lie inside `canvas`, thinned by a uniform stride
/// to at most [`MAX_SEAM_POINTS`]. When the incoming frame covers the
/// whole canvas, the canvas rim inside it is used instead.
pub fn seam_points(canvas: MaskView<'_>, incoming: MaskView<'_>) -> Result<Vec<(usize, usize)>> {
    if canvas.width != incoming.width || canvas.height != incoming.height {
        return Err(Error::DimensionMismatch(canvas.width, canvas.height, incoming.width, incoming.height));
    }
    let mut overlap = false;
    let mut boundary = Vec::new();
    for y in 0..incoming.height as isize {
        for x in 0..incoming.width as isize {
            if !incoming.at(x, y) || !canvas.at(x, y) {
                continue;
            }
            overlap = true;
            let edge = !incoming.at(x - 1, y) || !incoming.at(x + 1, y) || !incoming.at(x, y - 1) || !incoming.at(x, y + 1);
            if edge {
                boundary.push((x as usize, y as usize));
            }
        }
    }
    if !overlap {
        return Err(Error::DisjointMasks);
    }
    if boundary.is_empty() {
        // The incoming frame covers the whole canvas: use the canvas rim.
        for y in 0..canvas.height as isize {
            for x in 0..canvas.width as isize {
                if canvas.at(x, y)
                    && incoming.at(x, y)
                    && (!canvas.at(x - 1, y) || !canvas.at(x + 1, y) || !canvas.at(x, y - 1) || !canvas.at(x, y + 1))
                {
                    boundary.push((x as usize, y as usize));
                }
            }
        }
    }
    Ok(thin(boundary))
}

/// Keeps every k-th point (raster order) so that at most
/// [`MAX_SEAM_POINTS`] remain.
fn thin(points: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let stride = points.len().div_ceil(MAX_SEAM_POINTS).max(1);
    points.into_iter().step_by(stride).collect()
}

/// Half-width of the window averaged into each seam difference.
pub const SEAM_DIFF_RADIUS: usize = 2;

/// `canvas - source` at each seam point, averaged over the pixels of a
/// `(2r+1)^2` window where both layers are valid, so sensor noise does not
/// leak into the offset field.
pub fn seam_diffs(canvas: LayerRef<'_>, source: LayerRef<'_>, points: &[(usize, usize)]) -> Vec<f64> {
    let r = SEAM_DIFF_RADIUS;
    points
        .iter()
        .map(|&(px, py)| {
            let (mut sum, mut n) = (0.0, 0usize);
            for y in py.saturating_sub(r)..(py + r + 1).min(canvas.height) {
                for x in px.saturating_sub(r)..(px + r + 1).min(canvas.width) {
                    let i = y * canvas.width + x;
                    if canvas.valid[i] && source.valid[i] {
                        sum += canvas.values[i] - source.values[i];
                        n += 1;
                    }
                }
            }
            if n > 0 {
                sum / n as f64
            } else {
                0.0
            }
        })
        .collect()
}

/// Inverse-distance weights of `points` seen from `b`; a coincident
/// point takes all the weight.
pub fn idw_weights(b: (f64, f64), points: &[(usize, usize)]) -> Vec<f64> {
    let mut w = Vec::with_capacity(points.len());
    for (i, &(x, y)) in points.iter().enumerate() {
        let d = (x as f64 - b.0).hypot(y as f64 - b.1);
        if d == 0.0 {
            let mut ind = vec![0.0; points.len()];
            ind[i] = 1.0;
            return ind;
        }
        w.push(1.0 / d);
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Offset `sum_i w_i(b) D_i` at `b`.
pub fn seam_offset(b: (f64, f64), seam: &Seam) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&(x, y), &d) in seam.points.iter().zip(&seam.diffs) {
        let r = (x as f64 - b.0).hypot(y as f64 - b.1);
        if r == 0.0 {
            return d;
        }
        num += d / r;
        den += 1.0 / r;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Read-only raster with validity (the warped source).
#[derive(Debug, Clone, Copy)]
pub struct LayerRef<'a> {
    pub width: usize,
    pub height: usize,
    pub values: &'a [f64],
    pub valid: &'a [bool],
}

/// Mutable raster with validity (the canvas).
pub struct Layer<'a> {
    pub width: usize,
    pub height: usize,
    pub values: &'a mut [f64],
    pub valid: &'a mut [bool],
}

/// Largest step between 4-neighbours across the old/new junction that the
/// source itself does not have: `|(v_i - v_j) - (s_i - s_j)|` for an old
/// pixel `i` next to a new pixel `j`. Texture gradients cancel, so only
/// the discontinuity introduced by stitching remains.
pub fn junction_jump(
    values: &[f64],
    source: &[f64],
    old: &[bool],
    new: &[bool],
    width: usize,
    height: usize,
) -> f64 {
    let mut worst: f64 = 0.0;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !old[i] {
                continue;
            }
            let mut check = |j: usize| {
                if new[j] {
                    let step = (values[i] - values[j]) - (source[i] - source[j]);
                    worst = worst.max(step.abs());
                }
            };
            if x > 0 {
                check(i - 1);
            }
            if x + 1 < width {
                check(i + 1);
            }
            if y > 0 {
                check(i - width);
            }
            if y + 1 < height {
                check(i + width);
            }
        }
    }
    worst
}

/// Two-pass chamfer distance (unit and sqrt(2) steps), in pixels, from every pixel to the nearest
/// pixel where `seed` is set.
fn distance_to(seed: &[bool], width: usize, height: usize) -> Vec<f64> {
    const INF: f64 = 1e18;
    let mut d: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { INF }).collect();
    let (a, b) = (1.0, std::f64::consts::SQRT_2);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let mut v = d[i];
            if x > 0 {
                v = v.min(d[i - 1] + a);
            }
            if y > 0 {
                v = v.min(d[i - width] + a);
                if x > 0 {
                    v = v.min(d[i - width - 1] + b);
                }
                if x + 1 < width {
                    v = v.min(d[i - width + 1] + b);
                }
            }
            d[i] = v;
        }
    }
    for y in (0..height).rev() {
        for x in (0..width).rev() {
            let i = y * width + x;
            let mut v = d[i];
            if x + 1 < width {
                v = v.min(d[i + 1] + a);
            }
            if y + 1 < height {
                v = v.min(d[i + width] + a);
                if x + 1 < width {
                    v = v.min(d[i + width + 1] + b);
                }
                if x > 0 {
                    v = v.min(d[i + width - 1] + b);
                }
            }
            d[i] = v;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlendReport {
    pub seam_points: usize,
    /// Junction jump if the raw source had been pasted in.
    pub jump_before: f64,
    /// Junction jump after correction and feathering.
    pub jump_after: f64,
}

/// Blends `source` into `canvas` (same raster). New pixels receive the
/// seam-corrected source. Old canvas pixels keep their value, except in a
/// band of [`FEATHER_BAND`] px next to the new pixels where they ramp
/// towards the corrected source.
pub fn blend(source: LayerRef<'_>, canvas: &mut Layer<'_>, seam: &Seam) -> Result<BlendReport> {
    let (w, h) = (canvas.width, canvas.height);
    if source.width != w || source.height != h {
        return Err(Error::DimensionMismatch(source.width, source.height, w, h));
    }
    if seam.points.is_empty() {
        return Err(Error::InvalidArgument("seam has no points".into()));
    }
    let n = w * h;
    let old: Vec<bool> = (0..n).map(|i| canvas.valid[i] && source.valid[i]).collect();
    let new: Vec<bool> = (0..n).map(|i| source.valid[i] && !canvas.valid[i]).collect();

    let mut pasted = canvas.values.to_vec();
    for i in 0..n {
        if new[i] {
            pasted[i] = source.values[i];
        }
    }
    let jump_before = junction_jump(&pasted, source.values, &old, &new, w, h);

    let dist = distance_to(&new, w, h);
    let mut corrected = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if new[i] || (old[i] && dist[i] < FEATHER_BAND) {
                corrected[i] = source.values[i] + seam_offset((x as f64, y as f64), seam);
            }
        }
    }
    for i in 0..n {
        if new[i] {
            canvas.values[i] = corrected[i].clamp(0.0, 1.0);
            canvas.valid[i] = true;
        } else if old[i] && dist[i] < FEATHER_BAND {
            let t = dist[i] / FEATHER_BAND;
            canvas.values[i] = (t * canvas.values[i] + (1.0 - t) * corrected[i]).clamp(0.0, 1.0);
        }
    }
    let jump_after = junction_jump(canvas.values, source.values, &old, &new, w, h);
    Ok(BlendReport {
        seam_points: seam.points.len(),
        jump_before,
        jump_after,
    })
}
