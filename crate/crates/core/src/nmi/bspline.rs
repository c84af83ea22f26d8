//! Centred polynomial B-splines of degree 0 to 3, used as Parzen windows.

/// B-spline of degree `n` (0..=3) at `x`.
///
/// Degree 0 is the unit pulse on `[-0.5, 0.5)`; higher degrees are its
/// repeated self-convolutions, written out in closed form.
pub fn bspline(n: u32, x: f64) -> f64 {
    let a = x.abs();
    match n {
        0 => {
            if (-0.5..0.5).contains(&x) {
                1.0
            } else {
                0.0
            }
        }
        1 => (1.0 - a).max(0.0),
        2 => {
            if a < 0.5 {
                0.75 - a * a
            } else if a < 1.5 {
                let t = a - 1.5;
                0.5 * t * t
            } else {
                0.0
            }
        }
        3 => cubic(x),
        _ => panic!("bspline degree {n} not supported (0..=3)"),
    }
}

/// Derivative of the degree-`n` B-spline, from
/// `d/dx β^n(x) = β^(n-1)(x + 1/2) - β^(n-1)(x - 1/2)`.
/// The pulse (degree 0) has zero derivative almost everywhere.
pub fn bspline_derivative(n: u32, x: f64) -> f64 {
    match n {
        0 => 0.0,
        3 => cubic_derivative(x),
        1..=2 => bspline(n - 1, x + 0.5) - bspline(n - 1, x - 0.5),
        _ => panic!("bspline degree {n} not supported (0..=3)"),
    }
}

/// Second derivative of the cubic B-spline.
pub fn cubic_second_derivative(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        3.0 * a - 2.0
    } else if a < 2.0 {
        2.0 - a
    } else {
        0.0
    }
}

#[inline]
pub fn cubic(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        let t = 2.0 - a;
        t * t * t / 6.0
    } else {
        0.0
    }
}

#[inline]
pub fn cubic_derivative(x: f64) -> f64 {
    let a = x.abs();
    let d = if a < 1.0 {
        -2.0 * a + 1.5 * a * a
    } else if a < 2.0 {
        let t = 2.0 - a;
        -0.5 * t * t
    } else {
        0.0
    };
    d * x.signum()
}

/// Weights of the four cubic windows that overlap position `u`:
/// returns the first integer index and the weights for `first..first + 4`.
#[inline]
pub(crate) fn cubic_weights(u: f64) -> (isize, [f64; 4], [f64; 4]) {
    let first = u.floor() as isize - 1;
    let mut w = [0.0; 4];
    let mut d = [0.0; 4];
    for j in 0..4 {
        let t = (first + j as isize) as f64 - u;
        w[j] = cubic(t);
        d[j] = cubic_derivative(t);
    }
    (first, w, d)
}
