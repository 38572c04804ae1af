//! Charts, connections, tangent/cotangent splitting, and the covariant
//! derivative.
//!
//! A connection with coefficients `Gamma0^a(t, x)` singles out the horizontal
//! direction `w0H = d/dt + Gamma0^a d/dx^a` and the vertical cotangent basis
//! `wV^a = dx^a - Gamma0^a dt`. Splitting against these bases and the
//! derivative `∂0 s - Gamma0 ∘ s` are the coordinate-level tools every other
//! module builds on.

use std::sync::Arc;

use crate::diff;
use crate::transform::StateTransformation;
use crate::{Error, Mat, MatrixMap, Result, StateVec, TimeMap, VectorMap};

/// Coordinate chart on the extended state space: one time coordinate plus
/// `n` state coordinates.
#[derive(Debug, Clone)]
pub struct BundleChart {
    state_labels: Vec<String>,
    time_label: String,
}

impl BundleChart {
    /// Chart with auto-generated labels `x_1 .. x_n`.
    pub fn new(state_dim: usize) -> Result<Self> {
        let labels = (1..=state_dim).map(|i| format!("x_{i}")).collect();
        Self::with_labels(labels)
    }

    /// Chart with explicit state labels (must be pairwise distinct).
    pub fn with_labels(state_labels: Vec<String>) -> Result<Self> {
        if state_labels.is_empty() {
            return Err(Error::EmptyChart);
        }
        for (i, a) in state_labels.iter().enumerate() {
            if state_labels[..i].contains(a) {
                return Err(Error::DuplicateLabel(a.clone()));
            }
        }
        Ok(Self {
            state_labels,
            time_label: "t0".to_string(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_labels.len()
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn time_label(&self) -> &str {
        &self.time_label
    }

    pub(crate) fn check_dim(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.state_dim(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Connection on the state bundle, given by its coefficient field
/// `Gamma0^a(t, x)` together with the state Jacobian `d Gamma0^a / d x^b`.
///
/// The Jacobian is either supplied analytically or backed by central finite
/// differences of the coefficients.
#[derive(Clone)]
pub struct Connection {
    chart: BundleChart,
    coeffs: VectorMap,
    jacobian: MatrixMap,
    analytic_jacobian: bool,
}

impl Connection {
    /// Connection from a coefficient field; the Jacobian is finite-differenced.
    pub fn new<F>(chart: BundleChart, coeffs: F) -> Self
    where
        F: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
    {
        let coeffs: VectorMap = Arc::new(coeffs);
        let c = coeffs.clone();
        let jacobian: MatrixMap = Arc::new(move |t, x| diff::fd_state_jacobian(&c, t, x));
        Self {
            chart,
            coeffs,
            jacobian,
            analytic_jacobian: false,
        }
    }

    /// Connection with an analytic Jacobian.
    pub fn with_jacobian<F, J>(chart: BundleChart, coeffs: F, jacobian: J) -> Self
    where
        F: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
        J: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
    {
        Self {
            chart,
            coeffs: Arc::new(coeffs),
            jacobian: Arc::new(jacobian),
            analytic_jacobian: true,
        }
    }

    /// The trivial connection `Gamma0 = 0` (an inertial frame).
    pub fn trivial(chart: BundleChart) -> Self {
        let n = chart.state_dim();
        Self::with_jacobian(
            chart,
            move |_t, _x| StateVec::zeros(n),
            move |_t, _x| Mat::zeros(n, n),
        )
    }

    pub fn chart(&self) -> &BundleChart {
        &self.chart
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.analytic_jacobian
    }

    /// Evaluate `Gamma0(t, x)`.
    pub fn coeffs(&self, t: f64, x: &StateVec) -> Result<StateVec> {
        self.chart.check_dim(x.len(), "Connection::coeffs input")?;
        let v = (self.coeffs)(t, x);
        self.chart.check_dim(v.len(), "Connection::coeffs output")?;
        Ok(v)
    }

    /// Evaluate the state Jacobian of the coefficients, entry
    /// `(a, b) = d Gamma0^a / d x^b`.
    pub fn coeff_jacobian(&self, t: f64, x: &StateVec) -> Result<Mat> {
        self.chart.check_dim(x.len(), "Connection::coeff_jacobian")?;
        let m = (self.jacobian)(t, x);
        if m.nrows() != self.chart.state_dim() || m.ncols() != self.chart.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "Connection::coeff_jacobian output",
                expected: self.chart.state_dim(),
                actual: m.nrows().max(m.ncols()),
            });
        }
        Ok(m)
    }

    /// Max relative deviation between the stored Jacobian and a central
    /// finite difference of the coefficients at `(t, x)`.
    pub fn jacobian_deviation(&self, t: f64, x: &StateVec) -> Result<f64> {
        let analytic = self.coeff_jacobian(t, x)?;
        let fd = diff::fd_state_jacobian(&self.coeffs, t, x);
        let mut worst = 0.0f64;
        for (a, b) in analytic.iter().zip(fd.iter()) {
            worst = worst.max(diff::rel_deviation(*a, *b));
        }
        Ok(worst)
    }

    pub(crate) fn coeffs_map(&self) -> VectorMap {
        self.coeffs.clone()
    }
}

/// Tangent vector at a base point `(t, x)` of the extended state space.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub time: f64,
    pub state: StateVec,
    pub t_dot: f64,
    pub x_dot: StateVec,
}

/// Cotangent vector at a base point `(t, x)`.
#[derive(Debug, Clone)]
pub struct CotangentVector {
    pub time: f64,
    pub state: StateVec,
    pub t_cov: f64,
    pub x_cov: StateVec,
}

/// Tangent vector in the adapted basis: `horizontal_coeff * w0H + vertical^a d_a`.
#[derive(Debug, Clone)]
pub struct SplitTangent {
    pub time: f64,
    pub state: StateVec,
    pub horizontal_coeff: f64,
    pub vertical: StateVec,
}

/// Cotangent vector in the adapted basis: `horizontal_coeff * dt + vertical_a wV^a`.
#[derive(Debug, Clone)]
pub struct SplitCotangent {
    pub time: f64,
    pub state: StateVec,
    pub horizontal_coeff: f64,
    pub vertical: StateVec,
}

/// Natural pairing `<w, v>` of a cotangent and a tangent vector.
pub fn pair(w: &CotangentVector, v: &TangentVector) -> f64 {
    w.t_cov * v.t_dot + w.x_cov.dot(&v.x_dot)
}

/// Pairing in the adapted bases; equals [`pair`] of the merged vectors.
pub fn split_pair(w: &SplitCotangent, v: &SplitTangent) -> f64 {
    w.horizontal_coeff * v.horizontal_coeff + w.vertical.dot(&v.vertical)
}

/// Split a tangent vector against the connection's horizontal basis.
pub fn split_tangent(conn: &Connection, v: &TangentVector) -> Result<SplitTangent> {
    conn.chart.check_dim(v.x_dot.len(), "split_tangent")?;
    let gamma = conn.coeffs(v.time, &v.state)?;
    Ok(SplitTangent {
        time: v.time,
        state: v.state.clone(),
        horizontal_coeff: v.t_dot,
        vertical: &v.x_dot - gamma * v.t_dot,
    })
}

/// Reassemble a split tangent vector into holonomic coordinates.
pub fn merge_tangent(conn: &Connection, s: &SplitTangent) -> Result<TangentVector> {
    let gamma = conn.coeffs(s.time, &s.state)?;
    Ok(TangentVector {
        time: s.time,
        state: s.state.clone(),
        t_dot: s.horizontal_coeff,
        x_dot: gamma * s.horizontal_coeff + &s.vertical,
    })
}

/// Split a cotangent vector against the vertical basis `wV^a`.
pub fn split_cotangent(conn: &Connection, w: &CotangentVector) -> Result<SplitCotangent> {
    conn.chart.check_dim(w.x_cov.len(), "split_cotangent")?;
    let gamma = conn.coeffs(w.time, &w.state)?;
    Ok(SplitCotangent {
        time: w.time,
        state: w.state.clone(),
        horizontal_coeff: w.t_cov + w.x_cov.dot(&gamma),
        vertical: w.x_cov.clone(),
    })
}

/// Reassemble a split cotangent vector into holonomic coordinates.
pub fn merge_cotangent(conn: &Connection, s: &SplitCotangent) -> Result<CotangentVector> {
    let gamma = conn.coeffs(s.time, &s.state)?;
    Ok(CotangentVector {
        time: s.time,
        state: s.state.clone(),
        t_cov: s.horizontal_coeff - s.vertical.dot(&gamma),
        x_cov: s.vertical.clone(),
    })
}

/// Push a connection through a time-variant change of coordinates:
/// `Gamma0bar(t, xbar) = (d0 phi + (d phi) Gamma0) ∘ (t, phihat(t, xbar))`.
///
/// No time reparametrization is representable; the transformed coefficients
/// are finite-difference backed.
pub fn transform_connection(conn: &Connection, phi: &StateTransformation) -> Connection {
    let inner = conn.clone();
    let phi = phi.clone();
    Connection::new(conn.chart().clone(), move |t, x_bar| {
        let x = phi.invert_point(t, x_bar);
        let gamma = (inner.coeffs_map())(t, &x);
        phi.time_partial_at(t, &x) + phi.jacobian_at(t, &x) * gamma
    })
}

/// Time-parametrized state curve with its derivative.
#[derive(Clone)]
pub struct Curve {
    value: TimeMap,
    derivative: TimeMap,
}

impl Curve {
    pub fn analytic<F, D>(value: F, derivative: D) -> Self
    where
        F: Fn(f64) -> StateVec + Send + Sync + 'static,
        D: Fn(f64) -> StateVec + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    /// Value-only curve; the derivative is a 4th-order central difference
    /// with step `1e-4 * time_scale`.
    pub fn from_values<F>(value: F, time_scale: f64) -> Self
    where
        F: Fn(f64) -> StateVec + Send + Sync + 'static,
    {
        let value: TimeMap = Arc::new(value);
        let v = value.clone();
        Self {
            value,
            derivative: Arc::new(move |t| diff::fd_curve_derivative(v.as_ref(), t, time_scale)),
        }
    }

    pub fn value(&self, t: f64) -> StateVec {
        (self.value)(t)
    }

    pub fn derivative(&self, t: f64) -> StateVec {
        (self.derivative)(t)
    }
}

/// Covariant derivative of a curve along the time direction:
/// `∂0 s(t) − Gamma0(t, s(t))`.
///
/// Reduces to the classical time derivative for the trivial connection.
pub fn covariant_derivative(conn: &Connection, s: &Curve, t: f64) -> Result<StateVec> {
    let value = s.value(t);
    conn.chart.check_dim(value.len(), "covariant_derivative")?;
    let ds = s.derivative(t);
    if !ds.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("curve derivative"));
    }
    let gamma = conn.coeffs(t, &value)?;
    Ok(ds - gamma)
}
