//! Damped Newton (Marquardt-Levenberg) maximization of NMI over the eight
//! homography parameters, run coarse to fine over an image pyramid.

use nalgebra::{SMatrix, SVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::homography::{parameter_scale, Homography};
use crate::image::{build_pyramid, Image, Mask};
use crate::nmi::{evaluate, joint_histogram, nmi, nmi_value, DerivativeOrder, HistogramConfig, PairView, N_PARAMS};

type Vec8 = SVector<f64, N_PARAMS>;
type Mat8 = SMatrix<f64, N_PARAMS, N_PARAMS>;

pub const DEFAULT_MAX_ITERATIONS: usize = 110;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const LAMBDA_FACTOR: f64 = 10.0;
pub const LAMBDA_MAX: f64 = 1e8;
/// Coarsest pyramid level keeps its smaller side in `[MIN_LEVEL_DIM, 2 * MIN_LEVEL_DIM)`.
pub const MIN_LEVEL_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSchedule {
    /// Pyramid depth; `None` picks the depth from the image size.
    pub levels: Option<usize>,
    pub max_iter_per_level: usize,
    /// Step norm, in normalized parameter units, below which a level stops.
    pub convergence_tol: f64,
    pub lambda0: f64,
    /// Steps that shrink the overlap below this fraction of the fixed
    /// image are rejected.
    pub min_overlap_fraction: f64,
    /// Reduce the bin count on small levels to keep about four samples
    /// per histogram cell.
    pub adaptive_bins: bool,
    #[serde(skip)]
    pub histogram: HistogramConfig,
}

impl Default for LevelSchedule {
    fn default() -> Self {
        Self {
            levels: None,
            max_iter_per_level: DEFAULT_MAX_ITERATIONS,
            convergence_tol: DEFAULT_TOLERANCE,
            lambda0: DEFAULT_LAMBDA,
            min_overlap_fraction: 0.5,
            adaptive_bins: true,
            histogram: HistogramConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub value: f64,
    pub step_norm: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerState {
    pub mu: Homography,
    pub lambda: f64,
    pub iteration: usize,
    pub best_value: f64,
    pub trace: Vec<TraceRecord>,
    /// Damping hit its cap without finding an improving step.
    pub stalled: bool,
    pub converged: bool,
}

impl OptimizerState {
    pub fn new(mu: Homography, value: f64, lambda: f64) -> Self {
        Self {
            mu,
            lambda,
            iteration: 0,
            best_value: value,
            trace: Vec::new(),
            stalled: false,
            converged: false,
        }
    }
}

/// Damped system matrix. Off-diagonal entries are copied unchanged; each
/// diagonal entry moves by `lambda * |h_ii|` towards negative values, which
/// equals `h_ii * (1 + lambda)` wherever the curvature already has the
/// sign of a maximum.
pub fn damped_hessian(hess: &Mat8, lambda: f64) -> Mat8 {
    let mut d = *hess;
    for i in 0..N_PARAMS {
        d[(i, i)] = hess[(i, i)] - lambda * hess[(i, i)].abs();
    }
    d
}

/// Candidate step `-H'^-1 g` in the coordinates of `grad` and `hess`, or
/// `None` when the damped matrix cannot be solved or the step does not
/// point uphill.
pub fn ml_step(grad: &Vec8, hess: &Mat8, lambda: f64) -> Option<Vec8> {
    let h = damped_hessian(hess, lambda);
    let step = -(h.lu().solve(grad)?);
    if !step.iter().all(|v| v.is_finite()) {
        return None;
    }
    if grad.dot(&step) <= 0.0 && grad.norm() > 0.0 {
        return None;
    }
    Some(step)
}

fn apply_step(mu: &Homography, step: &Vec8, scale: &[f64; 8]) -> Result<Homography> {
    let mut p = mu.params();
    for k in 0..N_PARAMS {
        p[k] += step[k] * scale[k];
    }
    Homography::from_params(&p)
}

/// Histogram used on a level with `pixels` fixed samples.
pub fn level_histogram(schedule: &LevelSchedule, pixels: usize) -> HistogramConfig {
    let cfg = schedule.histogram;
    if !schedule.adaptive_bins {
        return cfg;
    }
    let cap = ((pixels as f64 / 4.0).sqrt().floor() as usize).max(16);
    HistogramConfig {
        bins_a: cfg.bins_a.min(cap),
        bins_b: cfg.bins_b.min(cap),
    }
}

fn fixed_pixels(pair: &PairView<'_>) -> usize {
    match pair.fixed_mask {
        Some(m) => m.count(),
        None => pair.fixed.width() * pair.fixed.height(),
    }
}

/// NMI at `mu`, or `None` if the pair cannot be scored there or the
/// overlap falls below `min_samples`.
fn score_at(pair: PairView<'_>, mu: &Homography, cfg: &HistogramConfig, min_samples: usize) -> Option<f64> {
    let jh = joint_histogram(pair, mu, cfg, DerivativeOrder::None).ok()?;
    if jh.sample_count < min_samples {
        return None;
    }
    nmi(&jh).ok()
}

/// Iterates damped Newton steps on one resolution until the step drops
/// below tolerance, the iteration cap is reached or damping saturates.
pub fn optimize_level(pair: PairView<'_>, mu0: &Homography, schedule: &LevelSchedule) -> Result<OptimizerState> {
    let pixels = fixed_pixels(&pair);
    let cfg = &level_histogram(schedule, pixels);
    let min_samples = (schedule.min_overlap_fraction * pixels as f64) as usize;
    let scale = parameter_scale(pair.fixed.width(), pair.fixed.height());
    let s = Vec8::from_column_slice(&scale);
    let mut ev = evaluate(pair, mu0, cfg)?;
    let mut state = OptimizerState::new(*mu0, ev.value, schedule.lambda0);
    while state.iteration < schedule.max_iter_per_level {
        state.iteration += 1;
        // Normalized coordinates: d/dnu = s * d/dmu.
        let g = ev.gradient.component_mul(&s);
        let h = Mat8::from_fn(|i, j| ev.hessian[(i, j)] * s[i] * s[j]);
        let mut accepted = None;
        loop {
            let Some(step) = ml_step(&g, &h, state.lambda) else {
                state.lambda *= LAMBDA_FACTOR;
                if state.lambda > LAMBDA_MAX {
                    break;
                }
                continue;
            };
            let norm = step.norm();
            if norm < schedule.convergence_tol {
                state.converged = true;
                break;
            }
            let candidate = apply_step(&state.mu, &step, &scale);
            let value = candidate
                .as_ref()
                .ok()
                .and_then(|c| score_at(pair, c, cfg, min_samples));
            match value {
                Some(v) if v > state.best_value => {
                    accepted = Some((candidate.expect("checked"), v, norm));
                    break;
                }
                _ => {
                    state.lambda *= LAMBDA_FACTOR;
                    if state.lambda > LAMBDA_MAX {
                        break;
                    }
                }
            }
        }
        let Some((mu, value, norm)) = accepted else {
            if !state.converged {
                state.stalled = true;
                state.lambda = state.lambda.min(LAMBDA_MAX);
            }
            break;
        };
        state.mu = mu;
        state.best_value = value;
        state.trace.push(TraceRecord {
            value,
            step_norm: norm,
            lambda: state.lambda,
        });
        state.lambda = (state.lambda / LAMBDA_FACTOR).max(1e-12);
        if norm < schedule.convergence_tol {
            state.converged = true;
            break;
        }
        ev = match evaluate(pair, &state.mu, cfg) {
            Ok(ev) => ev,
            Err(_) => break,
        };
    }
    Ok(state)
}

/// The same motion expressed on a pyramid level `scale_factor` times finer.
pub fn propagate_mu(mu: &Homography, scale_factor: f64) -> Homography {
    mu.rescale(scale_factor)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub width: usize,
    pub height: usize,
    pub initial_value: Option<f64>,
    pub final_value: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    /// Set when the level could not be scored.
    pub error: Option<String>,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationReport {
    /// Coarsest first.
    pub levels: Vec<LevelReport>,
    /// No level produced an accepted step or a converged state.
    pub failed: bool,
    /// NMI at the returned transform on the finest level.
    pub final_nmi: Option<f64>,
}

impl RegistrationReport {
    pub fn total_iterations(&self) -> usize {
        self.levels.iter().map(|l| l.iterations).sum()
    }
}

/// Coarse-to-fine registration seeded with `mu_init` (finest-level
/// coordinates). Returns the refined transform mapping `fixed` pixels into
/// `moving`.
pub fn multiscale_register(
    fixed: &Image,
    moving: &Image,
    mu_init: &Homography,
    schedule: &LevelSchedule,
) -> Result<(Homography, RegistrationReport)> {
    multiscale_register_masked(fixed, None, moving, None, mu_init, schedule)
}

pub fn multiscale_register_masked(
    fixed: &Image,
    fixed_mask: Option<&Mask>,
    moving: &Image,
    moving_mask: Option<&Mask>,
    mu_init: &Homography,
    schedule: &LevelSchedule,
) -> Result<(Homography, RegistrationReport)> {
    let min_side = fixed.width().min(fixed.height()).min(moving.width()).min(moving.height());
    let min_dim = MIN_LEVEL_DIM.min(min_side);
    if min_dim < 8 {
        return Err(Error::ImageTooSmall {
            width: fixed.width(),
            height: fixed.height(),
            min: 8,
        });
    }
    let mut pa = build_pyramid(fixed, min_dim)?.levels;
    let mut pb = build_pyramid(moving, min_dim)?.levels;
    let depth = pa.len().min(pb.len()).min(schedule.levels.unwrap_or(usize::MAX)).max(1);
    pa.drain(..pa.len() - depth);
    pb.drain(..pb.len() - depth);
    let masks_a = mask_pyramid(fixed_mask, depth);
    let masks_b = mask_pyramid(moving_mask, depth);

    let mut mu = mu_init.rescale(0.5f64.powi(depth as i32 - 1));
    let mut levels = Vec::with_capacity(depth);
    let mut any_ok = false;
    for l in 0..depth {
        if l > 0 {
            mu = propagate_mu(&mu, 2.0);
        }
        let pair = PairView::new(&pa[l], &pb[l]).with_masks(masks_a[l].as_ref(), masks_b[l].as_ref());
        let initial_value = nmi_value(pair, &mu, &level_histogram(schedule, fixed_pixels(&pair))).ok();
        match optimize_level(pair, &mu, schedule) {
            Ok(st) => {
                any_ok |= st.converged || !st.trace.is_empty();
                levels.push(LevelReport {
                    width: pa[l].width(),
                    height: pa[l].height(),
                    initial_value,
                    final_value: Some(st.best_value),
                    iterations: st.iteration,
                    converged: st.converged,
                    stalled: st.stalled,
                    error: None,
                    trace: st.trace,
                });
                mu = st.mu;
            }
            Err(e) => levels.push(LevelReport {
                width: pa[l].width(),
                height: pa[l].height(),
                initial_value,
                final_value: None,
                iterations: 0,
                converged: false,
                stalled: false,
                error: Some(e.to_string()),
                trace: Vec::new(),
            }),
        }
    }
    if !any_ok {
        let final_nmi = nmi_value(
            PairView::new(fixed, moving).with_masks(fixed_mask, moving_mask),
            mu_init,
            &schedule.histogram,
        )
        .ok();
        return Ok((
            *mu_init,
            RegistrationReport {
                levels,
                failed: true,
                final_nmi,
            },
        ));
    }
    let final_nmi = levels.last().and_then(|l| l.final_value);
    Ok((
        mu,
        RegistrationReport {
            levels,
            failed: false,
            final_nmi,
        },
    ))
}

/// Masks matching a pyramid of `depth` levels, coarsest first.
fn mask_pyramid(mask: Option<&Mask>, depth: usize) -> Vec<Option<Mask>> {
    let Some(m) = mask else {
        return vec![None; depth];
    };
    let mut out = vec![m.clone()];
    for _ in 1..depth {
        let next = out.last().expect("non-empty").decimate();
        out.push(next);
    }
    out.reverse();
    out.into_iter().map(Some).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homography::Point2;
    use crate::testutil::blob_image;
    use crate::warp::{warp, Extent};

    fn random_spd(seed: u64) -> Mat8 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Mat8::from_fn(|_, _| rng.random_range(-1.0..1.0));
        a * a.transpose() + Mat8::identity() * 0.5
    }

    #[test]
    fn newton_step_is_exact_on_quadratics() {
        // f(x) = -(x - x*)^T A (x - x*) / 2 has gradient -A (x - x*) and Hessian -A.
        let a = random_spd(1);
        let target = Vec8::from_fn(|i, _| 0.1 * i as f64 - 0.3);
        let x0 = Vec8::zeros();
        let g = -a * (x0 - target);
        let step = ml_step(&g, &(-a), 1e-15).unwrap();
        assert!((x0 + step - target).norm() < 1e-9);
    }

    #[test]
    fn heavy_damping_approaches_scaled_ascent() {
        let a = random_spd(2);
        let g = Vec8::from_fn(|i, _| (i as f64 + 1.0) * 0.01);
        let lambda = 1e9;
        let step = ml_step(&g, &(-a), lambda).unwrap();
        for i in 0..N_PARAMS {
            let expect = g[i] / (lambda * a[(i, i)]);
            assert!((step[i] - expect).abs() < 1e-6 * expect.abs(), "{i}");
        }
    }

    #[test]
    fn damping_keeps_off_diagonals() {
        let h = -random_spd(3);
        let d = damped_hessian(&h, 7.0);
        for i in 0..N_PARAMS {
            for j in 0..N_PARAMS {
                if i == j {
                    assert!((d[(i, i)] - h[(i, i)] * 8.0).abs() < 1e-12);
                } else {
                    assert_eq!(d[(i, j)], h[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn propagation_conjugates() {
        assert_eq!(propagate_mu(&Homography::identity(), 2.0), Homography::identity());
        let t = propagate_mu(&Homography::translation(3.0, -1.5), 2.0);
        assert_eq!(t, Homography::translation(6.0, -3.0));
        let mu = Homography::from_params(&[1.02, 0.03, 4.0, -0.01, 0.99, -2.0, 2e-4, 1e-4]).unwrap();
        let fine = propagate_mu(&mu, 2.0);
        for (x, y) in [(3.0, 7.0), (40.0, 11.0), (63.0, 60.0)] {
            let p = mu.apply_point(Point2::new(x, y)).unwrap();
            let q = fine.apply_point(Point2::new(2.0 * x, 2.0 * y)).unwrap();
            assert!((2.0 * p.x - q.x).abs() < 1e-9 && (2.0 * p.y - q.y).abs() < 1e-9);
        }
    }

    fn shifted_pair(dx: f64, dy: f64) -> (Image, Image, Homography) {
        let src = blob_image(256, 256, 41);
        // moving(T(x)) = fixed(x) with T = translation(dx, dy)
        let truth = Homography::translation(dx, dy);
        let (moving, _) = warp(&src, &truth, Extent::of(&src), 0.5).unwrap();
        (src, moving, truth)
    }

    #[test]
    fn ground_truth_start_converges_quickly() {
        let (a, b, truth) = shifted_pair(3.0, -2.0);
        let pair = PairView::new(&a, &b);
        let st = optimize_level(pair, &truth, &LevelSchedule::default()).unwrap();
        assert!(st.iteration <= 5, "{}", st.iteration);
        assert!(st.mu.frobenius_distance(&truth) < 0.05);
    }

    #[test]
    fn recovers_displaced_start() {
        let (a, b, truth) = shifted_pair(3.0, -2.0);
        let start = Homography::translation(6.0, 1.0);
        let (mu, report) = multiscale_register(&a, &b, &start, &LevelSchedule::default()).unwrap();
        assert!(!report.failed);
        for l in &report.levels {
            assert!(l.iterations <= DEFAULT_MAX_ITERATIONS);
            for w in l.trace.windows(2) {
                assert!(w[1].value >= w[0].value);
            }
        }
        let p = mu.apply_point(Point2::new(128.0, 128.0)).unwrap();
        let q = truth.apply_point(Point2::new(128.0, 128.0)).unwrap();
        assert!(p.dist(q) < 0.5, "{mu:?}");
    }

    #[test]
    fn identical_images_stay_at_identity() {
        let a = blob_image(128, 128, 5);
        let (mu, report) = multiscale_register(&a, &a, &Homography::identity(), &LevelSchedule::default()).unwrap();
        assert!(!report.failed);
        for (x, y) in mu.to_array().iter().zip(Homography::identity().to_array()) {
            assert!((x - y).abs() < 1e-3);
        }
        let coarse = &report.levels[0];
        assert!(coarse.final_value.unwrap() >= coarse.initial_value.unwrap());
    }
}
