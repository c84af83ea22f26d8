//! Hypothesize-and-verify search shared by RANSAC, MSAC and MLESAC.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::homography::{Homography, Point2};

use super::dlt::{fit_homography, has_collinear_triple, transfer_error};
use super::{OutlierMethod, RobustConfig};

/// Squared transfer errors, infinite where a point leaves the plane.
fn squared_errors(h: &Homography, pa: &[Point2], pb: &[Point2]) -> Option<Vec<f64>> {
    let hi = h.invert().ok()?;
    Some(
        pa.iter()
            .zip(pb)
            .map(|(&a, &b)| transfer_error(h, &hi, a, b).powi(2))
            .collect(),
    )
}

pub(super) fn msac_loss(h: &Homography, pa: &[Point2], pb: &[Point2], t: f64) -> f64 {
    let t2 = t * t;
    match squared_errors(h, pa, pb) {
        Some(e2) => e2.iter().map(|&e| e.min(t2)).sum(),
        None => f64::INFINITY,
    }
}

/// Mixture NLL with the mixing weight fitted by EM from 1/2.
fn mlesac_nll(e2: &[f64], cfg: &RobustConfig) -> f64 {
    let s2 = cfg.sigma * cfg.sigma;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s2);
    let v = 1.0 / (cfg.diag() * cfg.diag());
    let p_in: Vec<f64> = e2.iter().map(|&e| norm * (-e / (2.0 * s2)).exp()).collect();
    let mut gamma = 0.5;
    for _ in 0..cfg.em_iterations {
        let z: f64 = p_in
            .iter()
            .map(|&p| {
                let num = gamma * p;
                num / (num + (1.0 - gamma) * v)
            })
            .sum();
        gamma = z / p_in.len() as f64;
    }
    -p_in
        .iter()
        .map(|&p| (gamma * p + (1.0 - gamma) * v).ln())
        .sum::<f64>()
}

/// Negative log-likelihood of `h` under the Gaussian-inlier (sigma) plus
/// uniform-outlier (density `1/diag^2`) mixture.
pub fn mlesac_negative_log_likelihood(h: &Homography, pa: &[Point2], pb: &[Point2], cfg: &RobustConfig) -> f64 {
    match squared_errors(h, pa, pb) {
        Some(e2) => mlesac_nll(&e2, cfg),
        None => f64::INFINITY,
    }
}

/// Lower is better for every method (RANSAC scores the negated count).
fn score(method: OutlierMethod, e2: &[f64], cfg: &RobustConfig) -> f64 {
    let t2 = cfg.inlier_threshold * cfg.inlier_threshold;
    match method {
        OutlierMethod::Ransac => -(e2.iter().filter(|&&e| e <= t2).count() as f64),
        OutlierMethod::Msac => e2.iter().map(|&e| e.min(t2)).sum(),
        OutlierMethod::Mlesac => mlesac_nll(e2, cfg),
        OutlierMethod::Ht => unreachable!("Hough voting does not sample"),
    }
}

/// Best of `cfg.hypotheses` minimal-sample models; ties keep the earliest
/// hypothesis. Returns the model and the number of hypotheses scored.
pub(super) fn best_hypothesis(
    pa: &[Point2],
    pb: &[Point2],
    method: OutlierMethod,
    cfg: &RobustConfig,
) -> Result<(Homography, usize)> {
    let n = pa.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let diag = cfg.diag();
    let mut best: Option<(f64, Homography)> = None;
    let mut scored = 0;
    let max_draws = cfg.hypotheses * 10;
    let mut draws = 0;
    while scored < cfg.hypotheses && draws < max_draws {
        draws += 1;
        let idx = rand::seq::index::sample(&mut rng, n, 4);
        let sa = [pa[idx.index(0)], pa[idx.index(1)], pa[idx.index(2)], pa[idx.index(3)]];
        let sb = [pb[idx.index(0)], pb[idx.index(1)], pb[idx.index(2)], pb[idx.index(3)]];
        if has_collinear_triple(&sa, diag) || has_collinear_triple(&sb, diag) {
            continue;
        }
        let Ok(h) = fit_homography(&sa, &sb) else {
            continue;
        };
        let Some(e2) = squared_errors(&h, pa, pb) else {
            continue;
        };
        scored += 1;
        let s = score(method, &e2, cfg);
        if best.as_ref().is_none_or(|(bs, _)| s < *bs) {
            best = Some((s, h));
        }
    }
    best.map(|(_, h)| (h, scored)).ok_or(Error::NoModel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::tests::planted;

    #[test]
    fn nll_is_lowest_near_truth() {
        let p = planted(100, 30, 0.5, 2);
        let pa: Vec<Point2> = p.a.iter().map(|f| f.pos).collect();
        let pb: Vec<Point2> = p.b.iter().map(|f| f.pos).collect();
        let cfg = RobustConfig::default();
        let at_truth = mlesac_negative_log_likelihood(&p.truth, &pa, &pb, &cfg);
        let shifted = Homography::translation(3.0, 0.0).compose(&p.truth).unwrap();
        assert!(at_truth < mlesac_negative_log_likelihood(&shifted, &pa, &pb, &cfg));
    }

    #[test]
    fn em_weight_tracks_inlier_fraction() {
        // All errors zero: the mixture should put nearly all weight on inliers,
        // which makes the NLL close to -n ln(1 / (2 pi sigma^2)).
        let cfg = RobustConfig::default();
        let nll = mlesac_nll(&[0.0; 50], &cfg);
        let ideal = -50.0 * (1.0 / (2.0 * std::f64::consts::PI)).ln();
        assert!((nll - ideal).abs() / ideal.abs() < 0.05);
    }

    #[test]
    fn mlesac_likelihood_not_worse_than_ransac() {
        let cfg = RobustConfig::default();
        let (mut ml, mut rs) = (0.0, 0.0);
        for seed in 0..100 {
            let p = planted(100, 30, 0.5, 1000 + seed);
            let pa: Vec<Point2> = p.a.iter().map(|f| f.pos).collect();
            let pb: Vec<Point2> = p.b.iter().map(|f| f.pos).collect();
            let (hm, _) = best_hypothesis(&pa, &pb, OutlierMethod::Mlesac, &cfg).unwrap();
            let (hr, _) = best_hypothesis(&pa, &pb, OutlierMethod::Ransac, &cfg).unwrap();
            let nm = mlesac_negative_log_likelihood(&hm, &pa, &pb, &cfg);
            let nr = mlesac_negative_log_likelihood(&hr, &pa, &pb, &cfg);
            // Same seed, same hypotheses: MLESAC picks the NLL minimizer.
            assert!(nm <= nr + 1e-9);
            ml += nm;
            rs += nr;
        }
        assert!(ml <= rs);
    }
}
