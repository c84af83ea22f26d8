//! Planar projective transforms with the bottom-right entry fixed to one.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SINGULAR_EPS: f64 = 1e-12;

/// 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// 3x3 homography `[[a11 a12 a13] [a21 a22 a23] [a31 a32 1]]`.
///
/// The eight free entries are the registration parameters, ordered
/// `(a11, a12, a13, a21, a22, a23, a31, a32)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Normalizes `m` so that `m[(2, 2)] == 1`, rejecting singular input.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < SINGULAR_EPS {
            return Err(Error::Singular);
        }
        let mut m = m / s;
        m[(2, 2)] = 1.0;
        if !m.iter().all(|v| v.is_finite()) || m.determinant().abs() <= SINGULAR_EPS {
            return Err(Error::Singular);
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        let mut m = Matrix3::identity();
        m[(0, 2)] = tx;
        m[(1, 2)] = ty;
        Self { m }
    }

    pub fn scaling(s: f64) -> Self {
        Self {
            m: Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0),
        }
    }

    /// Rotation by `angle` (radians, counter-clockwise in a y-up frame) about `center`.
    pub fn rotation_about(angle: f64, center: Point2) -> Self {
        let (s, c) = angle.sin_cos();
        let (cx, cy) = (center.x, center.y);
        Self {
            m: Matrix3::new(
                c,
                -s,
                cx - c * cx + s * cy,
                s,
                c,
                cy - s * cx - c * cy,
                0.0,
                0.0,
                1.0,
            ),
        }
    }

    pub fn from_params(p: &[f64; 8]) -> Result<Self> {
        Self::new(Matrix3::new(
            p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 1.0,
        ))
    }

    pub fn params(&self) -> [f64; 8] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
        ]
    }

    /// Row-major nine entries.
    pub fn to_array(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_array(a: &[f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(a))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Maps `p`; fails when `p` lands on the line at infinity.
    pub fn apply_point(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + 1.0;
        if w.abs() <= SINGULAR_EPS {
            return Err(Error::PointAtInfinity);
        }
        Ok(Point2::new(
            (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
            (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
        ))
    }

    /// Unchecked variant for inner loops: returns `(x', y', w)`.
    #[inline]
    pub fn apply_raw(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let m = &self.m;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + 1.0;
        (
            (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w,
            (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w,
            w,
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::new(self.m * other.m)
    }

    pub fn invert(&self) -> Result<Homography> {
        let inv = self.m.try_inverse().ok_or(Error::Singular)?;
        Homography::new(inv)
    }

    /// Conjugation by `diag(s, s, 1)`: the same motion expressed in a frame
    /// whose pixel coordinates are scaled by `s`.
    pub fn rescale(&self, s: f64) -> Homography {
        let mut m = self.m;
        m[(0, 2)] *= s;
        m[(1, 2)] *= s;
        m[(2, 0)] /= s;
        m[(2, 1)] /= s;
        Homography { m }
    }

    pub fn frobenius_distance(&self, other: &Homography) -> f64 {
        (self.m - other.m).norm()
    }

    pub fn homogeneous(&self, p: Point2) -> Vector3<f64> {
        self.m * Vector3::new(p.x, p.y, 1.0)
    }
}

/// Per-parameter scale that makes the eight parameters dimensionless for an
/// image of the given size: translations are measured in diagonals and the
/// projective terms in inverse diagonals. A normalized step `t` in
/// parameter `k` is a raw step `t * scale[k]`.
pub fn parameter_scale(width: usize, height: usize) -> [f64; 8] {
    let d = ((width * width + height * height) as f64).sqrt();
    [1.0, 1.0, d, 1.0, 1.0, d, 1.0 / d, 1.0 / d]
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; 9]>::deserialize(d)?;
        Homography::from_array(&a).map_err(serde::de::Error::custom)
    }
}
