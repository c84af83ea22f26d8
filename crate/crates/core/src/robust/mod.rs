//! Outlier rejection over candidate matches and homography estimation.
//!
//! Four interchangeable filters are provided: sample consensus with an
//! inlier count (RANSAC), a truncated quadratic loss (MSAC) or a
//! Gaussian/uniform mixture likelihood (MLESAC), and Hough voting over
//! similarity poses. Every filter finishes with a least-squares DLT refit
//! on its inliers.

mod consensus;
mod dlt;
mod hough;
mod init;

pub use consensus::mlesac_negative_log_likelihood;
pub use dlt::{fit_homography, has_collinear_triple, transfer_error, COLLINEAR_AREA};
pub use init::{initial_transform, InitConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Keypoint, Match};
use crate::homography::{Homography, Point2};

pub const DEFAULT_INLIER_THRESHOLD: f64 = 2.0;
pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_HYPOTHESES: usize = 500;
/// Below this many candidates the filters return everything unfiltered.
pub const MIN_CANDIDATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierMethod {
    Ht,
    Ransac,
    Msac,
    Mlesac,
}

impl OutlierMethod {
    pub const ALL: [OutlierMethod; 4] = [
        OutlierMethod::Ht,
        OutlierMethod::Ransac,
        OutlierMethod::Msac,
        OutlierMethod::Mlesac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutlierMethod::Ht => "ht",
            OutlierMethod::Ransac => "ransac",
            OutlierMethod::Msac => "msac",
            OutlierMethod::Mlesac => "mlesac",
        }
    }
}

impl fmt::Display for OutlierMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutlierMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ht" | "hough" => Ok(OutlierMethod::Ht),
            "ransac" => Ok(OutlierMethod::Ransac),
            "msac" => Ok(OutlierMethod::Msac),
            "mlesac" => Ok(OutlierMethod::Mlesac),
            other => Err(Error::InvalidArgument(format!("unknown outlier method '{other}'"))),
        }
    }
}

/// Position plus the scale and orientation of the detection it came from.
/// Only the Hough filter looks at scale and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFeature {
    pub pos: Point2,
    pub scale: f64,
    pub orientation: f64,
}

impl PointFeature {
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            pos: Point2::new(x, y),
            scale: 1.0,
            orientation: 0.0,
        }
    }
}

impl From<&Keypoint> for PointFeature {
    fn from(k: &Keypoint) -> Self {
        Self {
            pos: Point2::new(k.x, k.y),
            scale: k.scale,
            orientation: k.orientation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustConfig {
    /// Symmetric transfer error (px) up to which a match is an inlier.
    pub inlier_threshold: f64,
    /// Inlier noise level of the MLESAC mixture (px).
    pub sigma: f64,
    /// Hypotheses drawn by the sample-consensus methods.
    pub hypotheses: usize,
    /// Expectation-maximization rounds for the MLESAC mixing weight.
    pub em_iterations: usize,
    pub seed: u64,
    /// Image extent: sets the outlier density, the collinearity scale and
    /// the Hough translation bins.
    pub width: usize,
    pub height: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: DEFAULT_INLIER_THRESHOLD,
            sigma: DEFAULT_SIGMA,
            hypotheses: DEFAULT_HYPOTHESES,
            em_iterations: 5,
            seed: 0,
            width: 256,
            height: 256,
        }
    }
}

impl RobustConfig {
    pub fn for_image(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    pub fn diag(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustResult {
    pub inliers: Vec<Match>,
    pub model: Homography,
    /// RANSAC: inlier count. MSAC: truncated loss. MLESAC: negative
    /// log-likelihood. HT: votes in the winning bin.
    pub score: f64,
    pub iterations_used: usize,
    /// True when the input was too small to filter.
    pub unfiltered: bool,
}

/// `((c - f) / a) * 100`.
pub fn correct_rate(correct: usize, to_false: usize, all_correct: usize) -> Result<f64> {
    if all_correct == 0 {
        return Err(Error::InvalidArgument("correct rate needs a > 0".into()));
    }
    Ok((correct as f64 - to_false as f64) / all_correct as f64 * 100.0)
}

/// Positions of the matched points, in match order.
fn matched_points(matches: &[Match], a: &[PointFeature], b: &[PointFeature]) -> Result<(Vec<Point2>, Vec<Point2>)> {
    let mut pa = Vec::with_capacity(matches.len());
    let mut pb = Vec::with_capacity(matches.len());
    for m in matches {
        let (Some(fa), Some(fb)) = (a.get(m.index_a), b.get(m.index_b)) else {
            return Err(Error::InvalidArgument(format!(
                "match ({}, {}) indexes past the point lists",
                m.index_a, m.index_b
            )));
        };
        pa.push(fa.pos);
        pb.push(fb.pos);
    }
    Ok((pa, pb))
}

/// DLT homography over the matched points.
pub fn estimate_homography_dlt(matches: &[Match], a: &[PointFeature], b: &[PointFeature]) -> Result<Homography> {
    let (pa, pb) = matched_points(matches, a, b)?;
    fit_homography(&pa, &pb)
}

/// Indices whose transfer error under `h` is within the threshold.
fn inliers_under(h: &Homography, pa: &[Point2], pb: &[Point2], t: f64) -> Vec<usize> {
    let Ok(hi) = h.invert() else {
        return Vec::new();
    };
    (0..pa.len())
        .filter(|&i| transfer_error(h, &hi, pa[i], pb[i]) <= t)
        .collect()
}

/// Alternates DLT refits and inlier re-selection until the set settles.
/// The returned inliers always satisfy the threshold under the returned
/// model.
fn refine(model: Homography, pa: &[Point2], pb: &[Point2], t: f64) -> Result<(Homography, Vec<usize>)> {
    let mut model = model;
    let mut inl = inliers_under(&model, pa, pb, t);
    if inl.len() < 4 {
        return Err(Error::NoModel);
    }
    for _ in 0..5 {
        let sa: Vec<Point2> = inl.iter().map(|&i| pa[i]).collect();
        let sb: Vec<Point2> = inl.iter().map(|&i| pb[i]).collect();
        let Ok(refit) = fit_homography(&sa, &sb) else {
            break;
        };
        let next = inliers_under(&refit, pa, pb, t);
        if next.len() < 4 || next.len() < inl.len() {
            break;
        }
        let settled = next == inl;
        model = refit;
        inl = next;
        if settled {
            break;
        }
    }
    Ok((model, inl))
}

/// Filters `matches` (indices into `a` and `b`) with the chosen method.
pub fn filter_outliers(
    matches: &[Match],
    a: &[PointFeature],
    b: &[PointFeature],
    method: OutlierMethod,
    cfg: &RobustConfig,
) -> Result<RobustResult> {
    let (pa, pb) = matched_points(matches, a, b)?;
    if matches.len() < MIN_CANDIDATES {
        log::warn!(
            "only {} candidate matches; returning them unfiltered",
            matches.len()
        );
        let model = fit_homography(&pa, &pb).map_err(|_| Error::NoModel)?;
        return Ok(RobustResult {
            inliers: matches.to_vec(),
            model,
            score: 0.0,
            iterations_used: 0,
            unfiltered: true,
        });
    }
    let t = cfg.inlier_threshold;
    let (seed_model, iterations) = match method {
        OutlierMethod::Ht => {
            let kept = hough::densest_bin(matches, a, b, cfg);
            let sa: Vec<Point2> = kept.iter().map(|&i| pa[i]).collect();
            let sb: Vec<Point2> = kept.iter().map(|&i| pb[i]).collect();
            if kept.len() < 4 {
                return Err(Error::NoModel);
            }
            (fit_homography(&sa, &sb).map_err(|_| Error::NoModel)?, matches.len())
        }
        _ => consensus::best_hypothesis(&pa, &pb, method, cfg)?,
    };
    let (model, inl) = refine(seed_model, &pa, &pb, t)?;
    let score = match method {
        OutlierMethod::Ht => hough::densest_bin(matches, a, b, cfg).len() as f64,
        OutlierMethod::Ransac => inl.len() as f64,
        OutlierMethod::Msac => consensus::msac_loss(&model, &pa, &pb, t),
        OutlierMethod::Mlesac => mlesac_negative_log_likelihood(&model, &pa, &pb, cfg),
    };
    Ok(RobustResult {
        inliers: inl.iter().map(|&i| matches[i]).collect(),
        model,
        score,
        iterations_used: iterations,
        unfiltered: false,
    })
}
