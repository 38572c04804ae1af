//! Finite-difference backends shared by fields, connections, and
//! transformations.
//!
//! State steps follow `h_i = max(1e-6, 1e-6 |x_i|)`, time steps
//! `h = 1e-6 max(1, |t|)`. Curves use a 4th-order central stencil with step
//! `1e-4` times the caller's time scale.

use crate::{Mat, ScalarMap, StateVec, VectorMap};

pub(crate) fn state_step(xi: f64) -> f64 {
    (1e-6 * xi.abs()).max(1e-6)
}

pub(crate) fn time_step(t: f64) -> f64 {
    1e-6 * t.abs().max(1.0)
}

/// Central difference of a scalar field with respect to each state coordinate.
pub(crate) fn fd_state_gradient(f: &ScalarMap, t: f64, x: &StateVec) -> StateVec {
    let n = x.len();
    let mut grad = StateVec::zeros(n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for i in 0..n {
        let h = state_step(x[i]);
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        grad[i] = (f(t, &xp) - f(t, &xm)) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    grad
}

/// Central difference of a scalar field with respect to time.
pub(crate) fn fd_time_partial(f: &ScalarMap, t: f64, x: &StateVec) -> f64 {
    let h = time_step(t);
    (f(t + h, x) - f(t - h, x)) / (2.0 * h)
}

/// Central-difference Jacobian of a vector field with respect to the state,
/// entry `(alpha, beta) = d f^alpha / d x^beta`.
pub(crate) fn fd_state_jacobian(f: &VectorMap, t: f64, x: &StateVec) -> Mat {
    let n = x.len();
    let rows = f(t, x).len();
    let mut jac = Mat::zeros(rows, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        let h = state_step(x[j]);
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let col = (f(t, &xp) - f(t, &xm)) / (2.0 * h);
        jac.set_column(j, &col);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    jac
}

/// Central difference of a vector field with respect to time.
pub(crate) fn fd_vector_time_partial(f: &VectorMap, t: f64, x: &StateVec) -> StateVec {
    let h = time_step(t);
    (f(t + h, x) - f(t - h, x)) / (2.0 * h)
}

/// 4th-order central difference of a curve, step `1e-4 * time_scale`.
pub(crate) fn fd_curve_derivative<F>(f: &F, t: f64, time_scale: f64) -> StateVec
where
    F: Fn(f64) -> StateVec + ?Sized,
{
    let h = 1e-4 * time_scale;
    (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
}

/// Relative deviation with a unit floor: `|a - b| / max(|a|, |b|, 1)`.
pub(crate) fn rel_deviation(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn gradient_of_quadratic() {
        let f: ScalarMap = Arc::new(|_t, x: &StateVec| 0.5 * x.dot(x));
        let x = StateVec::from_vec(vec![1.0, -2.0, 3.0]);
        let g = fd_state_gradient(&f, 0.0, &x);
        assert!((g - x).norm() < 1e-8);
    }

    #[test]
    fn curve_derivative_fourth_order() {
        let f = |t: f64| StateVec::from_vec(vec![t.sin()]);
        let d = fd_curve_derivative(&f, 0.3, 1.0);
        assert!((d[0] - 0.3f64.cos()).abs() < 1e-12);
    }
}
