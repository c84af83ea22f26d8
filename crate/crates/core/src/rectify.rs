//! Attitude-based perspective correction for multi-camera capsule frames.
//!
//! Frames are related by coordinate transforms
//! `x_c = T1 x_M`, `x_M = R x_r`, `x_r = T2 x_i` and `x_i = T3 x_s`, where
//! `c` is the camera, `M` the capsule body, `r` the attitude reference, `i`
//! the intestine and `s` the plane the frame should be viewed from. The
//! rectified image is what a camera aligned with `s` (same centre and focal
//! length) would have captured.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::homography::Homography;
use crate::image::{Image, Mask};
use crate::warp::{warp, Extent};

/// Largest tilt accepted before the view is treated as grazing.
pub const MAX_TILT: f64 = 85.0 * std::f64::consts::PI / 180.0;

const ORTHO_TOL: f64 = 1e-9;

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if err > tol || (det - 1.0).abs() > tol {
        return Err(Error::Attitude(format!(
            "not a rotation (orthogonality error {err:.2e}, det {det:.6})"
        )));
    }
    Ok(())
}

/// Closest rotation in the Frobenius sense.
fn nearest_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut q = u * vt;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * vt;
    }
    q
}

/// Roll, pitch, yaw and focal length of a capture, with the rotation
/// `R` from the attitude reference frame to the capsule body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudePose {
    pub theta: f64,
    pub phi: f64,
    pub alpha: f64,
    /// Focal length in pixels.
    pub focal: f64,
    r: Matrix3<f64>,
}

impl AttitudePose {
    /// Pose with `R = Rz(alpha) Ry(phi) Rx(theta)`.
    pub fn from_angles(theta: f64, phi: f64, alpha: f64, focal: f64) -> Result<Self> {
        Self::new(theta, phi, alpha, focal, rot_z(alpha) * rot_y(phi) * rot_x(theta))
    }

    /// Pose with an explicit rotation, which must be orthonormal.
    pub fn new(theta: f64, phi: f64, alpha: f64, focal: f64, r: Matrix3<f64>) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::Attitude(format!("focal length {focal} must be positive")));
        }
        check_rotation(&r, ORTHO_TOL)?;
        Ok(Self {
            theta,
            phi,
            alpha,
            focal,
            r,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }
}

/// Fixed transforms linking one camera of the capsule to the plane it
/// should be rectified onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrameChain {
    pub t1: Matrix3<f64>,
    pub t2: Matrix3<f64>,
    pub t3: Matrix3<f64>,
    camera_index: usize,
}

impl CameraFrameChain {
    pub fn new(camera_index: usize, t1: Matrix3<f64>, t2: Matrix3<f64>, t3: Matrix3<f64>) -> Result<Self> {
        if !(1..=6).contains(&camera_index) {
            return Err(Error::InvalidCameraIndex(camera_index));
        }
        for t in [&t1, &t2, &t3] {
            if !(t.determinant().abs() > 1e-12) {
                return Err(Error::Singular);
            }
        }
        Ok(Self {
            t1,
            t2,
            t3,
            camera_index,
        })
    }

    pub fn identity(camera_index: usize) -> Result<Self> {
        let i = Matrix3::identity();
        Self::new(camera_index, i, i, i)
    }

    /// Chain whose plane transform is derived from the camera's shooting
    /// direction in the intestine frame.
    pub fn from_attitude(camera_index: usize, pose: &AttitudePose, t1: Matrix3<f64>, t2: Matrix3<f64>) -> Result<Self> {
        let k = camera_axis(camera_index, pose.rotation(), &t2)?;
        Self::new(camera_index, t1, t2, tilt_matrix(tilt_angle(&k)))
    }

    pub fn camera_index(&self) -> usize {
        self.camera_index
    }
}

/// Shooting direction of camera `n` in the capsule body frame.
fn body_axis(n: usize) -> Result<Vector3<f64>> {
    Ok(match n {
        1 => Vector3::new(0.0, 0.0, -1.0),
        2 => Vector3::new(0.0, 0.0, 1.0),
        3 => Vector3::new(1.0, 0.0, 0.0),
        4 => Vector3::new(0.0, -1.0, 0.0),
        5 => Vector3::new(-1.0, 0.0, 0.0),
        6 => Vector3::new(0.0, 1.0, 0.0),
        _ => return Err(Error::InvalidCameraIndex(n)),
    })
}

/// Shooting direction of camera `n` expressed in the intestine frame,
/// `T2^-1 R^-1 k_n`, normalized to unit length.
pub fn camera_axis(camera_index: usize, r: &Matrix3<f64>, t2: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let k = body_axis(camera_index)?;
    let t2_inv = t2.try_inverse().ok_or(Error::Singular)?;
    let v = t2_inv * r.transpose() * k;
    let n = v.norm();
    if n < 1e-12 {
        return Err(Error::Singular);
    }
    Ok(v / n)
}

/// Tilt of the shooting direction about the intestine x axis, measured
/// from the `-z` viewing direction and clamped to `+-MAX_TILT`.
pub fn tilt_angle(axis: &Vector3<f64>) -> f64 {
    axis.y.atan2(-axis.z).clamp(-MAX_TILT, MAX_TILT)
}

/// Transpose of the rotation by `beta` about the x axis.
pub fn tilt_matrix(beta: f64) -> Matrix3<f64> {
    rot_x(beta).transpose()
}

/// Pinhole intrinsics with the principal point at the image centre.
pub fn intrinsics(focal: f64, width: usize, height: usize) -> Matrix3<f64> {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0)
}

/// Homography from captured pixel coordinates to rectified ones for an
/// image of the given size: `K (T1 R T2 T3)^-1 K^-1`.
pub fn rectify_homography(pose: &AttitudePose, chain: &CameraFrameChain, width: usize, height: usize) -> Result<Homography> {
    let m = chain.t1 * pose.rotation() * chain.t2 * chain.t3;
    let m_inv = m.try_inverse().ok_or(Error::Singular)?;
    let k = intrinsics(pose.focal, width, height);
    let k_inv = k.try_inverse().ok_or(Error::Singular)?;
    Homography::new(k * m_inv * k_inv)
}

/// Warps `img` to the rectified view; pixels without a preimage are
/// flagged false in the mask.
pub fn rectify_image(img: &Image, pose: &AttitudePose, chain: &CameraFrameChain) -> Result<(Image, Mask)> {
    let h = rectify_homography(pose, chain, img.width(), img.height())?;
    warp(img, &h, Extent::of(img), 0.0)
}

/// One row of the attitude sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeRecord {
    pub frame_id: String,
    pub pose: AttitudePose,
    pub chain: CameraFrameChain,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    frame_id: String,
    camera_index: usize,
    theta: f64,
    phi: f64,
    alpha: f64,
    focal: f64,
    r11: f64,
    r12: f64,
    r13: f64,
    r21: f64,
    r22: f64,
    r23: f64,
    r31: f64,
    r32: f64,
    r33: f64,
    t2_11: f64,
    t2_12: f64,
    t2_13: f64,
    t2_21: f64,
    t2_22: f64,
    t2_23: f64,
    t2_31: f64,
    t2_32: f64,
    t2_33: f64,
    t1_11: f64,
    t1_12: f64,
    t1_13: f64,
    t1_21: f64,
    t1_22: f64,
    t1_23: f64,
    t1_31: f64,
    t1_32: f64,
    t1_33: f64,
}

impl RawRecord {
    fn into_record(self) -> Result<AttitudeRecord> {
        let r = Matrix3::new(
            self.r11, self.r12, self.r13, self.r21, self.r22, self.r23, self.r31, self.r32, self.r33,
        );
        // Sidecars are usually written with a handful of digits.
        check_rotation(&r, 1e-4)?;
        let pose = AttitudePose::new(self.theta, self.phi, self.alpha, self.focal, nearest_rotation(&r))?;
        let t2 = Matrix3::new(
            self.t2_11, self.t2_12, self.t2_13, self.t2_21, self.t2_22, self.t2_23, self.t2_31, self.t2_32,
            self.t2_33,
        );
        let t1 = Matrix3::new(
            self.t1_11, self.t1_12, self.t1_13, self.t1_21, self.t1_22, self.t1_23, self.t1_31, self.t1_32,
            self.t1_33,
        );
        let chain = CameraFrameChain::from_attitude(self.camera_index, &pose, t1, t2)?;
        Ok(AttitudeRecord {
            frame_id: self.frame_id,
            pose,
            chain,
        })
    }
}

/// Parses attitude records from CSV text with a header row.
pub fn parse_attitude_csv(text: &str) -> Result<Vec<AttitudeRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        let raw = row.map_err(|e| Error::Attitude(format!("row {}: {e}", i + 1)))?;
        out.push(raw.into_record()?);
    }
    Ok(out)
}

pub fn load_attitude_csv(path: impl AsRef<Path>) -> Result<Vec<AttitudeRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_attitude_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homography::Point2;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn camera_axes() {
        let i = Matrix3::identity();
        assert_eq!(camera_axis(1, &i, &i).unwrap(), Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(camera_axis(6, &i, &i).unwrap(), Vector3::new(0.0, 1.0, 0.0));
        let k = camera_axis(3, &rot_z(FRAC_PI_2), &i).unwrap();
        assert!((k - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!(matches!(camera_axis(7, &i, &i), Err(Error::InvalidCameraIndex(7))));
        assert!(matches!(camera_axis(0, &i, &i), Err(Error::InvalidCameraIndex(0))));
    }

    #[test]
    fn tilt_matrix_cases() {
        assert_eq!(tilt_matrix(0.0), Matrix3::identity());
        for b in [-1.2, 0.3, 0.9] {
            assert!((tilt_matrix(b) * tilt_matrix(-b) - Matrix3::identity()).abs().max() < 1e-12);
        }
        let t = tilt_matrix(FRAC_PI_2);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
        assert!((t - expected).abs().max() < 1e-15);
    }

    #[test]
    fn tilt_angle_is_clamped() {
        let grazing = Vector3::new(0.0, 1.0, -1e-6);
        assert!((tilt_angle(&grazing) - MAX_TILT).abs() < 1e-15);
        assert_eq!(tilt_angle(&Vector3::new(0.0, 0.0, -1.0)), 0.0);
    }

    #[test]
    fn identity_chain_gives_identity() {
        let pose = AttitudePose::from_angles(0.0, 0.0, 0.0, 300.0).unwrap();
        let chain = CameraFrameChain::identity(1).unwrap();
        let h = rectify_homography(&pose, &chain, 256, 256).unwrap();
        assert_eq!(h, Homography::identity());
    }

    #[test]
    fn yaw_only_is_a_rotation_about_the_centre() {
        let alpha = 0.4;
        let pose = AttitudePose::from_angles(0.0, 0.0, alpha, 250.0).unwrap();
        let chain = CameraFrameChain::identity(1).unwrap();
        let h = rectify_homography(&pose, &chain, 201, 201).unwrap();
        let rot = Homography::rotation_about(-alpha, Point2::new(100.0, 100.0));
        for p in [(0.0, 0.0), (200.0, 0.0), (0.0, 200.0), (200.0, 200.0)] {
            let p = Point2::new(p.0, p.1);
            let d = h.apply_point(p).unwrap().dist(rot.apply_point(p).unwrap());
            assert!(d < 1e-9, "{d}");
        }
    }

    #[test]
    fn rejects_bad_rotation_and_chain() {
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(AttitudePose::new(0.0, 0.0, 0.0, 100.0, skew).is_err());
        assert!(AttitudePose::from_angles(0.0, 0.0, 0.0, 0.0).is_err());
        let i = Matrix3::identity();
        assert!(matches!(CameraFrameChain::new(9, i, i, i), Err(Error::InvalidCameraIndex(9))));
        assert!(CameraFrameChain::new(1, Matrix3::zeros(), i, i).is_err());
    }

    #[test]
    fn pose_rotation_is_orthonormal() {
        let p = AttitudePose::from_angles(0.3, -0.7, 1.9, 200.0).unwrap();
        let r = p.rotation();
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parses_sidecar() {
        let r = rot_x(0.2);
        let mut header = vec!["frame_id".to_string(), "camera_index".into()];
        header.extend(["theta", "phi", "alpha", "focal"].map(String::from));
        for p in ["r", "t2_", "t1_"] {
            for i in 1..=3 {
                for j in 1..=3 {
                    header.push(format!("{p}{i}{j}"));
                }
            }
        }
        let mut row = vec!["f001".to_string(), "1".into(), "0.2".into(), "0".into(), "0".into(), "300".into()];
        row.extend(r.transpose().iter().map(|v| format!("{v:.6}")));
        for _ in 0..2 {
            row.extend(Matrix3::<f64>::identity().iter().map(|v| v.to_string()));
        }
        let text = format!("{}\n{}\n", header.join(","), row.join(", "));
        let recs = parse_attitude_csv(&text).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].frame_id, "f001");
        assert!((recs[0].pose.rotation() - r).abs().max() < 1e-6);
        assert!(parse_attitude_csv("frame_id,camera_index\nx,1\n").is_err());
    }
}
