use crate::image::Image;

/// Pluggable enhancement step applied to every frame before gating and
/// registration.
pub trait Enhancer: Send + Sync {
    fn enhance(&self, img: &Image) -> Image;
}

/// Leaves frames untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEnhancement;

impl Enhancer for NoEnhancement {
    fn enhance(&self, img: &Image) -> Image {
        img.clone()
    }
}

/// Percentile contrast stretch, contrast-limited adaptive histogram
/// equalization, then an unsharp mask whose smoother is a bilateral filter
/// (so strong edges do not overshoot).
#[derive(Debug, Clone, PartialEq)]
pub struct ClaheSharpen {
    /// Fraction of samples clipped at each end by the global stretch.
    pub stretch_percentile: f64,
    /// Tiles per axis.
    pub tiles: usize,
    /// Histogram clip limit as a multiple of the mean bin count.
    pub clip_limit: f64,
    /// Mix between the equalized (1) and the merely stretched (0) image.
    pub equalize_strength: f64,
    pub range_sigma: f64,
    pub spatial_sigma: f64,
    /// Weight of the detail layer added back.
    pub amount: f64,
}

impl Default for ClaheSharpen {
    fn default() -> Self {
        Self {
            stretch_percentile: 0.005,
            tiles: 8,
            clip_limit: 2.0,
            equalize_strength: 0.4,
            range_sigma: 0.1,
            spatial_sigma: 3.0,
            amount: 0.3,
        }
    }
}

const LEVELS: usize = 256;

#[inline]
fn level(v: f64) -> usize {
    ((v * (LEVELS - 1) as f64).round() as usize).min(LEVELS - 1)
}

impl ClaheSharpen {
    fn stretch(&self, img: &Image) -> Image {
        let mut sorted = img.data().to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len();
        let k = ((n as f64 * self.stretch_percentile) as usize).min(n - 1);
        let (lo, hi) = (sorted[k], sorted[n - 1 - k]);
        if hi - lo < 1e-6 {
            return img.clone();
        }
        img.map(|v| (v - lo) / (hi - lo))
    }

    /// Per-tile equalization lookup tables, row-major over the tile grid.
    fn tile_luts(&self, img: &Image, tw: usize, th: usize) -> Vec<[f64; LEVELS]> {
        let (w, h) = img.dims();
        let (nx, ny) = (w.div_ceil(tw), h.div_ceil(th));
        let mut luts = Vec::with_capacity(nx * ny);
        for ty in 0..ny {
            for tx in 0..nx {
                let mut hist = [0.0f64; LEVELS];
                let (x0, y0) = (tx * tw, ty * th);
                let (x1, y1) = ((x0 + tw).min(w), (y0 + th).min(h));
                for y in y0..y1 {
                    for x in x0..x1 {
                        hist[level(img.get(x, y))] += 1.0;
                    }
                }
                let count = ((x1 - x0) * (y1 - y0)) as f64;
                let limit = (self.clip_limit * count / LEVELS as f64).max(1.0);
                let mut excess = 0.0;
                for b in hist.iter_mut() {
                    if *b > limit {
                        excess += *b - limit;
                        *b = limit;
                    }
                }
                let bonus = excess / LEVELS as f64;
                let mut lut = [0.0; LEVELS];
                let mut acc = 0.0;
                for (l, b) in lut.iter_mut().zip(&hist) {
                    acc += b + bonus;
                    *l = acc / count;
                }
                luts.push(lut);
            }
        }
        luts
    }

    fn clahe(&self, img: &Image) -> Image {
        let (w, h) = img.dims();
        let tiles = self.tiles.max(1);
        let (tw, th) = (w.div_ceil(tiles).max(1), h.div_ceil(tiles).max(1));
        let (nx, ny) = (w.div_ceil(tw), h.div_ceil(th));
        let luts = self.tile_luts(img, tw, th);
        // Tile centre coordinates and bilinear weights between the four
        // surrounding tiles.
        let locate = |p: usize, size: usize, n: usize| {
            let f = ((p as f64 + 0.5) / size as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (f.floor() as usize).min(n.saturating_sub(2));
            (i, (i + 1).min(n - 1), f - i as f64)
        };
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let (y0, y1, fy) = locate(y, th, ny);
            for x in 0..w {
                let (x0, x1, fx) = locate(x, tw, nx);
                let l = level(img.get(x, y));
                let v00 = luts[y0 * nx + x0][l];
                let v10 = luts[y0 * nx + x1][l];
                let v01 = luts[y1 * nx + x0][l];
                let v11 = luts[y1 * nx + x1][l];
                out.push((1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11));
            }
        }
        Image::from_clamped(w, h, out).expect("same dimensions")
    }

    fn bilateral(&self, img: &Image) -> Vec<f64> {
        let (w, h) = img.dims();
        let r = (2.0 * self.spatial_sigma).ceil() as isize;
        let side = (2 * r + 1) as usize;
        let mut spatial = vec![0.0; side * side];
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dx * dx + dy * dy) as f64;
                spatial[(dy + r) as usize * side + (dx + r) as usize] =
                    (-d2 / (2.0 * self.spatial_sigma * self.spatial_sigma)).exp();
            }
        }
        const STEPS: usize = 1024;
        let range: Vec<f64> = (0..=STEPS)
            .map(|i| {
                let d = i as f64 / STEPS as f64;
                (-d * d / (2.0 * self.range_sigma * self.range_sigma)).exp()
            })
            .collect();
        let data = img.data();
        let mut out = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let c = data[y as usize * w + x as usize];
                let (mut num, mut den) = (0.0, 0.0);
                for dy in -r..=r {
                    let yy = y + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let srow = (dy + r) as usize * side;
                    for dx in -r..=r {
                        let xx = x + dx;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let v = data[yy as usize * w + xx as usize];
                        let wr = range[((v - c).abs() * STEPS as f64) as usize];
                        let wt = spatial[srow + (dx + r) as usize] * wr;
                        num += wt * v;
                        den += wt;
                    }
                }
                out[y as usize * w + x as usize] = num / den;
            }
        }
        out
    }
}

impl Enhancer for ClaheSharpen {
    fn enhance(&self, img: &Image) -> Image {
        let (lo, hi) = img.min_max();
        if hi - lo < 1e-9 {
            return img.clone();
        }
        let stretched = self.stretch(img);
        let mut eq = self.clahe(&stretched);
        if self.equalize_strength < 1.0 {
            let s = self.equalize_strength;
            let mixed = eq.data().iter().zip(stretched.data()).map(|(e, t)| s * e + (1.0 - s) * t).collect();
            eq = Image::from_clamped(eq.width(), eq.height(), mixed).expect("same dimensions");
        }
        let smooth = self.bilateral(&eq);
        let data = eq
            .data()
            .iter()
            .zip(&smooth)
            .map(|(v, s)| v + self.amount * (v - s))
            .collect();
        Image::from_clamped(eq.width(), eq.height(), data).expect("same dimensions")
    }
}

/// Enhances with the default [`ClaheSharpen`] settings.
pub fn enhance(img: &Image) -> Image {
    ClaheSharpen::default().enhance(img)
}
