//! Normalized direct linear transform for homographies.

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::homography::{Homography, Point2};

/// Relative area below which three points count as collinear.
pub const COLLINEAR_AREA: f64 = 1e-6;

/// Twice the signed area of the triangle `p q r`.
fn area2(p: Point2, q: Point2, r: Point2) -> f64 {
    (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
}

/// True when any three of the four points are collinear, measured against
/// `diag^2` (`|area| < COLLINEAR_AREA * diag^2`).
pub fn has_collinear_triple(pts: &[Point2; 4], diag: f64) -> bool {
    let lim = COLLINEAR_AREA * diag * diag;
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES
        .iter()
        .any(|t| 0.5 * area2(pts[t[0]], pts[t[1]], pts[t[2]]).abs() < lim)
}

fn bbox_diag(pts: &[Point2]) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    (x1 - x0).hypot(y1 - y0)
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(pts: &[Point2]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let md = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(md > 1e-12) || !md.is_finite() {
        return Err(Error::DegenerateConfiguration);
    }
    let s = std::f64::consts::SQRT_2 / md;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, p: Point2) -> (f64, f64) {
    (t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Least-squares homography with `b ~ H a` from at least four
/// correspondences.
pub fn fit_homography(a: &[Point2], b: &[Point2]) -> Result<Homography> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "{} source points vs {} target points",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("need 4 correspondences, got {n}")));
    }
    if n == 4 {
        let qa = [a[0], a[1], a[2], a[3]];
        let qb = [b[0], b[1], b[2], b[3]];
        if has_collinear_triple(&qa, bbox_diag(a)) || has_collinear_triple(&qb, bbox_diag(b)) {
            return Err(Error::DegenerateConfiguration);
        }
    }
    let ta = normalizer(a)?;
    let tb = normalizer(b)?;

    // Pad with zero rows so the SVD always yields all nine right vectors.
    let rows = (2 * n).max(9);
    let mut m = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let (x, y) = transform(&ta, a[i]);
        let (u, v) = transform(&tb, b[i]);
        let r = 2 * i;
        m.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        m.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let s_max = svd.singular_values[order[8]];
    // A second (near) null direction means the solution is not unique.
    if svd.singular_values[order[1]] <= 1e-10 * s_max {
        return Err(Error::DegenerateConfiguration);
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tb_inv = tb.try_inverse().ok_or(Error::DegenerateConfiguration)?;
    Homography::new(tb_inv * hn * ta).map_err(|_| Error::DegenerateConfiguration)
}

/// Symmetric transfer error: the root mean square of the forward distance
/// `|H a - b|` and the backward distance `|H^-1 b - a|`. Infinite when a
/// point maps to infinity.
pub fn transfer_error(h: &Homography, h_inv: &Homography, a: Point2, b: Point2) -> f64 {
    let fwd = h.apply_point(a).map(|p| p.dist(b));
    let bwd = h_inv.apply_point(b).map(|p| p.dist(a));
    match (fwd, bwd) {
        (Ok(f), Ok(g)) => ((f * f + g * g) / 2.0).sqrt(),
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> Homography {
        Homography::from_params(&[1.05, 0.08, 12.0, -0.06, 0.97, -7.5, 2e-4, -1.5e-4]).unwrap()
    }

    fn normalized_distance(a: &Homography, b: &Homography) -> f64 {
        let (ma, mb) = (a.matrix() / a.matrix().norm(), b.matrix() / b.matrix().norm());
        (ma - mb).norm().min((ma + mb).norm())
    }

    #[test]
    fn minimal_sample_is_exact() {
        let h = reference();
        let a = [
            Point2::new(10.0, 12.0),
            Point2::new(240.0, 20.0),
            Point2::new(230.0, 220.0),
            Point2::new(15.0, 250.0),
        ];
        let b: Vec<Point2> = a.iter().map(|&p| h.apply_point(p).unwrap()).collect();
        let est = fit_homography(&a, &b).unwrap();
        assert!(normalized_distance(&est, &h) < 1e-8);
        let hi = h.invert().unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!(transfer_error(&est, &est.invert().unwrap(), *p, *q) < 1e-8);
            assert!(transfer_error(&h, &hi, *p, *q) < 1e-9);
        }
    }

    #[test]
    fn identity_correspondences() {
        let a = [
            Point2::new(0.0, 0.0),
            Point2::new(50.0, 3.0),
            Point2::new(47.0, 61.0),
            Point2::new(-4.0, 40.0),
            Point2::new(20.0, 25.0),
        ];
        let est = fit_homography(&a, &a).unwrap();
        assert!(est.frobenius_distance(&Homography::identity()) < 1e-10);
    }

    #[test]
    fn collinear_sample_is_rejected() {
        let a = [
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 10.0),
            Point2::new(20.0, 20.0),
            Point2::new(0.0, 30.0),
        ];
        let b = [
            Point2::new(1.0, 0.0),
            Point2::new(11.0, 10.0),
            Point2::new(21.0, 20.0),
            Point2::new(1.0, 30.0),
        ];
        assert!(matches!(fit_homography(&a, &b), Err(Error::DegenerateConfiguration)));
        let all_on_line: Vec<Point2> = (0..8).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(
            fit_homography(&all_on_line, &all_on_line),
            Err(Error::DegenerateConfiguration)
        ));
    }

    #[test]
    fn too_few_points() {
        let a = [Point2::new(0.0, 0.0); 3];
        assert!(fit_homography(&a, &a).is_err());
    }

    proptest! {
        #[test]
        fn noiseless_samples_recover_generator(
            p in prop::array::uniform8(-1.0f64..1.0),
            corners in prop::array::uniform8(-20.0f64..20.0),
        ) {
            let h = Homography::from_params(&[
                1.0 + 0.2 * p[0], 0.2 * p[1], 30.0 * p[2],
                0.2 * p[3], 1.0 + 0.2 * p[4], 30.0 * p[5],
                5e-4 * p[6], 5e-4 * p[7],
            ]).unwrap();
            let base = [(0.0, 0.0), (256.0, 0.0), (256.0, 256.0), (0.0, 256.0)];
            let a: Vec<Point2> = base
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Point2::new(x + corners[2 * i], y + corners[2 * i + 1]))
                .collect();
            let b: Vec<Point2> = a.iter().map(|&q| h.apply_point(q).unwrap()).collect();
            let est = fit_homography(&a, &b).unwrap();
            prop_assert!(normalized_distance(&est, &h) < 1e-8);
        }
    }
}
