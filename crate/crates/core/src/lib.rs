//! Registration and stitching of low-texture image sequences.
//!
//! Consecutive frames are admitted by a structural-similarity gate, seeded
//! with a feature-based homography (PCA-SIFT keypoints filtered by MLESAC)
//! and refined by maximizing normalized mutual information with a damped
//! Newton search over an image pyramid. Registered frames are accumulated
//! into a panoramic map with inverse-distance seam blending.

pub mod error;
pub mod eval;
pub mod features;
pub mod homography;
pub mod image;
pub mod nmi;
pub mod optimizer;
pub mod quality;
pub mod rectify;
pub mod robust;
pub mod stitch;
pub mod warp;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use homography::{parameter_scale, Homography, Point2};
pub use image::{Image, Mask};
