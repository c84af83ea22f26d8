//! Feature-based preregistration of a frame pair.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::{extract_features, match_descriptors_with, DescriptorKind, DetectorParams, MatchParams, PcaBasis};
use crate::homography::Homography;
use crate::image::Image;

use super::{filter_outliers, OutlierMethod, PointFeature, RobustConfig, RobustResult, MIN_CANDIDATES};

#[derive(Debug, Clone)]
pub struct InitConfig {
    pub descriptor: DescriptorKind,
    pub detector: DetectorParams,
    pub matching: MatchParams,
    pub method: OutlierMethod,
    pub robust: RobustConfig,
    /// PCA basis; the bundled one when absent.
    pub basis: Option<Arc<PcaBasis>>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            descriptor: DescriptorKind::PcaSift,
            detector: DetectorParams::default(),
            matching: MatchParams::default(),
            method: OutlierMethod::Mlesac,
            robust: RobustConfig::default(),
            basis: None,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> Error {
    Error::FeatureInitFailed(e.to_string())
}

/// Detect, describe, ratio-match and filter; the returned homography maps
/// `img_a` pixel coordinates into `img_b`.
pub fn initial_transform(img_a: &Image, img_b: &Image, cfg: &InitConfig) -> Result<(Homography, RobustResult)> {
    let basis = cfg.basis.as_deref();
    let fa = extract_features(img_a, cfg.descriptor, &cfg.detector, basis).map_err(failed)?;
    let fb = extract_features(img_b, cfg.descriptor, &cfg.detector, basis).map_err(failed)?;
    let matches = match_descriptors_with(&fa.descriptors, &fb.descriptors, &cfg.matching).map_err(failed)?;
    if matches.len() < MIN_CANDIDATES {
        return Err(failed(format!("{} matches after the ratio test", matches.len())));
    }
    let pa: Vec<PointFeature> = fa.keypoints.iter().map(PointFeature::from).collect();
    let pb: Vec<PointFeature> = fb.keypoints.iter().map(PointFeature::from).collect();
    let robust = RobustConfig {
        width: img_a.width(),
        height: img_a.height(),
        ..cfg.robust.clone()
    };
    let res = filter_outliers(&matches, &pa, &pb, cfg.method, &robust).map_err(failed)?;
    if res.inliers.len() < MIN_CANDIDATES {
        return Err(failed(format!("{} inliers retained", res.inliers.len())));
    }
    Ok((res.model, res))
}
