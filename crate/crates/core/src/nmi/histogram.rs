//! Parzen-windowed joint intensity histogram and its parameter derivatives.

use crate::error::{Error, Result};
use crate::homography::Homography;
use crate::image::{Image, Mask};

use super::bspline::cubic_weights;

/// Number of parameters of the projective model.
pub const N_PARAMS: usize = 8;

/// Minimum number of overlap samples for a pair to be scorable.
pub const MIN_OVERLAP: usize = 256;

/// Bins kept free at each end of the intensity axis so that the cubic
/// window of every intensity in `[0, 1]` lies fully inside the histogram.
pub const PARZEN_PAD: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramConfig {
    pub bins_a: usize,
    pub bins_b: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bins_a: 64,
            bins_b: 64,
        }
    }
}

impl HistogramConfig {
    pub fn new(bins_a: usize, bins_b: usize) -> Result<Self> {
        if bins_a < 8 || bins_b < 8 {
            return Err(Error::InvalidArgument(format!(
                "histogram needs at least 8 bins per axis, got {bins_a}x{bins_b}"
            )));
        }
        Ok(Self { bins_a, bins_b })
    }

    pub fn square(bins: usize) -> Result<Self> {
        Self::new(bins, bins)
    }

    /// Window scaling factor: intensity width of one bin.
    pub fn eps_a(&self) -> f64 {
        1.0 / (self.bins_a - 1 - 2 * PARZEN_PAD) as f64
    }

    pub fn eps_b(&self) -> f64 {
        1.0 / (self.bins_b - 1 - 2 * PARZEN_PAD) as f64
    }

    pub fn spline_order(&self) -> u32 {
        3
    }
}

/// A fixed image and a moving image, each with an optional validity mask.
///
/// The transform `mu` maps fixed-image coordinates into the moving image:
/// a fixed pixel `x` is compared with `moving(T_mu(x))`.
#[derive(Debug, Clone, Copy)]
pub struct PairView<'a> {
    pub fixed: &'a Image,
    pub fixed_mask: Option<&'a Mask>,
    pub moving: &'a Image,
    pub moving_mask: Option<&'a Mask>,
}

impl<'a> PairView<'a> {
    pub fn new(fixed: &'a Image, moving: &'a Image) -> Self {
        Self {
            fixed,
            fixed_mask: None,
            moving,
            moving_mask: None,
        }
    }

    pub fn with_masks(mut self, fixed_mask: Option<&'a Mask>, moving_mask: Option<&'a Mask>) -> Self {
        self.fixed_mask = fixed_mask;
        self.moving_mask = moving_mask;
        self
    }
}

/// How many derivative orders of `p` to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DerivativeOrder {
    None,
    First,
    Second,
}

/// Number of distinct entries of a symmetric 8x8 matrix.
pub const N_PAIRS: usize = N_PARAMS * (N_PARAMS + 1) / 2;

/// Index of `(k, l)`, `k <= l`, in packed upper-triangular storage.
#[inline]
pub const fn pair_index(k: usize, l: usize) -> usize {
    k * N_PARAMS - k * (k + 1) / 2 + l
}

/// Normalized joint distribution `p(a, b)` (row-major, `a` along rows) with
/// marginals and optionally `dp/dmu_k` stored cell-major as `[cell][k]`
/// and `d2p/dmu_k dmu_l` as `[cell][pair_index(k, l)]`.
#[derive(Debug, Clone)]
pub struct JointHistogram {
    pub bins_a: usize,
    pub bins_b: usize,
    pub p: Vec<f64>,
    pub p_a: Vec<f64>,
    pub p_b: Vec<f64>,
    pub dp: Option<Vec<f64>>,
    pub d2p: Option<Vec<f64>>,
    pub sample_count: usize,
}

impl JointHistogram {
    #[inline]
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.p[a * self.bins_b + b]
    }

    /// `dp(a, b)/dmu_k`.
    pub fn dp_at(&self, a: usize, b: usize, k: usize) -> Option<f64> {
        self.dp
            .as_ref()
            .map(|d| d[(a * self.bins_b + b) * N_PARAMS + k])
    }

    /// Builds a histogram directly from a probability table (for tests and
    /// analysis); marginals are derived.
    pub fn from_probabilities(bins_a: usize, bins_b: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != bins_a * bins_b {
            return Err(Error::InvalidArgument("probability table size".into()));
        }
        let total: f64 = p.iter().sum();
        if p.iter().any(|&v| v < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "probabilities must be non-negative and sum to 1".into(),
            ));
        }
        let (p_a, p_b) = marginals(bins_a, bins_b, &p);
        Ok(Self {
            bins_a,
            bins_b,
            p,
            p_a,
            p_b,
            dp: None,
            d2p: None,
            sample_count: 0,
        })
    }
}

fn marginals(bins_a: usize, bins_b: usize, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut p_a = vec![0.0; bins_a];
    let mut p_b = vec![0.0; bins_b];
    for a in 0..bins_a {
        let row = &p[a * bins_b..(a + 1) * bins_b];
        p_a[a] = row.iter().sum();
        for (pb, v) in p_b.iter_mut().zip(row) {
            *pb += v;
        }
    }
    (p_a, p_b)
}

/// Partial derivatives of the mapped point `(x', y')` with respect to the
/// eight parameters, at fixed-image position `(x, y)`.
#[inline]
pub fn point_jacobian(x: f64, y: f64, xp: f64, yp: f64, w: f64) -> ([f64; N_PARAMS], [f64; N_PARAMS]) {
    let iw = 1.0 / w;
    (
        [x * iw, y * iw, iw, 0.0, 0.0, 0.0, -x * xp * iw, -y * xp * iw],
        [0.0, 0.0, 0.0, x * iw, y * iw, iw, -x * yp * iw, -y * yp * iw],
    )
}

/// Second partial derivatives of the mapped point, packed as
/// `[pair_index(k, l)]` for `(x', y')`.
#[inline]
fn point_hessian(x: f64, y: f64, xp: f64, yp: f64, w: f64) -> ([f64; N_PAIRS], [f64; N_PAIRS]) {
    let mut hx = [0.0; N_PAIRS];
    let mut hy = [0.0; N_PAIRS];
    let iw2 = 1.0 / (w * w);
    let xs = [x, y, 1.0];
    let ps = [x, y];
    for (j, &pj) in ps.iter().enumerate() {
        for (i, &xi) in xs.iter().enumerate() {
            // d2x'/da1i da3j and d2y'/da2i da3j
            hx[pair_index(i, 6 + j)] = -xi * pj * iw2;
            hy[pair_index(3 + i, 6 + j)] = -xi * pj * iw2;
        }
        for (i, &pi) in ps.iter().enumerate().skip(j) {
            let _ = i;
            let k = pair_index(6 + j, 6 + i);
            hx[k] = 2.0 * pj * pi * xp * iw2;
            hy[k] = 2.0 * pj * pi * yp * iw2;
        }
    }
    (hx, hy)
}

/// Accumulates the joint Parzen histogram over the overlap of the fixed
/// image with the moving image under `mu`, with derivatives up to `order`.
///
/// The fixed axis uses the static intensities, so only the moving-axis
/// window contributes to the derivatives. Second derivatives include the
/// window curvature, the curvature of the projective map and the mixed
/// derivative of the bilinear interpolant.
pub fn joint_histogram(
    pair: PairView<'_>,
    mu: &Homography,
    cfg: &HistogramConfig,
    order: DerivativeOrder,
) -> Result<JointHistogram> {
    let (ba, bb) = (cfg.bins_a, cfg.bins_b);
    let cells = ba * bb;
    let sa = 1.0 / cfg.eps_a();
    let sb = 1.0 / cfg.eps_b();
    let pad = PARZEN_PAD as f64;
    let first = order >= DerivativeOrder::First;
    let second = order >= DerivativeOrder::Second;
    let mut h = vec![0.0; cells];
    let mut dh = if first { vec![0.0; cells * N_PARAMS] } else { Vec::new() };
    let mut d2h = if second { vec![0.0; cells * N_PAIRS] } else { Vec::new() };
    let fixed = pair.fixed;
    let moving = pair.moving;
    let (fw, fh) = fixed.dims();
    let mut count = 0usize;

    for y in 0..fh {
        for x in 0..fw {
            if let Some(m) = pair.fixed_mask {
                if !m.get(x, y) {
                    continue;
                }
            }
            let (xf, yf) = (x as f64, y as f64);
            let (xp, yp, w) = mu.apply_raw(xf, yf);
            if w <= 0.0 || !moving.contains(xp, yp) {
                continue;
            }
            if let Some(m) = pair.moving_mask {
                if !m.valid_at(xp, yp) {
                    continue;
                }
            }
            let Some((vb, gx, gy, gxy)) = moving.sample_with_derivatives(xp, yp) else {
                continue;
            };
            count += 1;
            let ua = pad + fixed.get(x, y) * sa;
            let ub = pad + vb * sb;
            let (a0, wa, _) = cubic_weights(ua);
            let (b0, wb, dwb) = cubic_weights(ub);

            if !first {
                for (i, &wai) in wa.iter().enumerate() {
                    if wai == 0.0 {
                        continue;
                    }
                    let row = (a0 + i as isize) as usize * bb;
                    for j in 0..4 {
                        h[row + (b0 + j as isize) as usize] += wai * wb[j];
                    }
                }
                continue;
            }

            let (jx, jy) = point_jacobian(xf, yf, xp, yp, w);
            let mut dub = [0.0; N_PARAMS];
            for k in 0..N_PARAMS {
                dub[k] = sb * (gx * jx[k] + gy * jy[k]);
            }
            // Second-order pieces: outer product of dub and d2ub.
            let mut uu = [0.0; N_PAIRS];
            let mut d2ub = [0.0; N_PAIRS];
            let mut d2wb = [0.0; 4];
            if second {
                let (hx, hy) = point_hessian(xf, yf, xp, yp, w);
                for k in 0..N_PARAMS {
                    for l in k..N_PARAMS {
                        let q = pair_index(k, l);
                        uu[q] = dub[k] * dub[l];
                        d2ub[q] = sb
                            * (gxy * (jx[k] * jy[l] + jy[k] * jx[l]) + gx * hx[q] + gy * hy[q]);
                    }
                }
                for (j, d) in d2wb.iter_mut().enumerate() {
                    *d = super::bspline::cubic_second_derivative((b0 + j as isize) as f64 - ub);
                }
            }

            for (i, &wai) in wa.iter().enumerate() {
                if wai == 0.0 {
                    continue;
                }
                let row = (a0 + i as isize) as usize * bb;
                for j in 0..4 {
                    let c = row + (b0 + j as isize) as usize;
                    h[c] += wai * wb[j];
                    // d/dmu of beta(j - ub) is -beta'(j - ub) dub.
                    let t = -wai * dwb[j];
                    let d = &mut dh[c * N_PARAMS..(c + 1) * N_PARAMS];
                    for k in 0..N_PARAMS {
                        d[k] += t * dub[k];
                    }
                    if second {
                        // beta''(j - ub) dub_k dub_l - beta'(j - ub) d2ub_kl
                        let s = wai * d2wb[j];
                        let d2 = &mut d2h[c * N_PAIRS..(c + 1) * N_PAIRS];
                        for q in 0..N_PAIRS {
                            d2[q] += s * uu[q] + t * d2ub[q];
                        }
                    }
                }
            }
        }
    }

    if count < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap(count));
    }
    let total: f64 = h.iter().sum();
    let inv = 1.0 / total;
    h.iter_mut().for_each(|v| *v *= inv);
    let scale = |mut v: Vec<f64>, on: bool| {
        on.then(|| {
            v.iter_mut().for_each(|x| *x *= inv);
            v
        })
    };
    let dp = scale(dh, first);
    let d2p = scale(d2h, second);
    let (p_a, p_b) = marginals(ba, bb, &h);
    Ok(JointHistogram {
        bins_a: ba,
        bins_b: bb,
        p: h,
        p_a,
        p_b,
        dp,
        d2p,
        sample_count: count,
    })
}
