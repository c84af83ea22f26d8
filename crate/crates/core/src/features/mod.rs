//! Scale-invariant keypoints, SIFT and PCA-SIFT descriptors, and
//! ratio-tested nearest-neighbour matching.

mod descriptor;
mod detect;
mod matching;
mod pca;

pub use descriptor::{describe_sift, describe_sift_in, Descriptor, SIFT_LEN};
pub use detect::{detect_keypoints, detect_keypoints_with, DetectorParams, Keypoint, ScaleSpace};
pub use matching::{match_descriptors, match_descriptors_with, Match, MatchParams, DEFAULT_RATIO};
pub use pca::{
    describe_pca_sift, describe_pca_sift_in, extract_patch, train_pca_basis, PcaBasis, DEFAULT_PCA_DIM,
    PATCH_DIM, PATCH_SIDE,
};

use crate::error::Result;
use crate::image::Image;

/// Which descriptor to compute for each keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptorKind {
    Sift,
    PcaSift,
}

impl DescriptorKind {
    pub fn name(self) -> &'static str {
        match self {
            DescriptorKind::Sift => "sift",
            DescriptorKind::PcaSift => "pca-sift",
        }
    }
}

/// Keypoints with their descriptors; keypoints whose support leaves the
/// image or whose descriptor degenerates are dropped.
#[derive(Debug, Clone, Default)]
pub struct Features {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Detects and describes keypoints in one pass over a shared scale space.
pub fn extract_features(
    img: &Image,
    kind: DescriptorKind,
    params: &DetectorParams,
    basis: Option<&PcaBasis>,
) -> Result<Features> {
    let space = ScaleSpace::build(img, params)?;
    let keypoints = space.detect(params);
    let mut out = Features::default();
    for kp in keypoints {
        let d = match kind {
            DescriptorKind::Sift => describe_sift_in(&space, &kp),
            DescriptorKind::PcaSift => {
                let basis = match basis {
                    Some(b) => b,
                    None => PcaBasis::builtin(),
                };
                describe_pca_sift_in(&space, &kp, basis)
            }
        };
        if let Ok(d) = d {
            out.keypoints.push(kp);
            out.descriptors.push(d);
        }
    }
    Ok(out)
}
