//! Scalar and tensor fields on the extended state space: the Hamiltonian with
//! its differential decomposition, and the structure maps J, R, G with their
//! algebraic invariants.

use std::sync::Arc;

use crate::diff;
use crate::geometry::Connection;
use crate::{Error, Mat, MatrixMap, Result, ScalarMap, StateVec, VectorMap};

/// How a field's derivatives are obtained. Recorded so check reports can
/// distinguish modeling error from differencing error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// All derivatives supplied in closed form.
    Analytic,
    /// All derivatives by central finite differences of the value.
    FiniteDifference,
    /// Analytic state gradient, finite-differenced time partial.
    Mixed,
}

/// Smooth scalar field `H(t, x)` with time partial and state gradient.
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarMap,
    time_partial: ScalarMap,
    state_gradient: VectorMap,
    mode: DerivativeMode,
}

impl ScalarField {
    pub fn analytic<V, T, G>(value: V, time_partial: T, state_gradient: G) -> Self
    where
        V: Fn(f64, &StateVec) -> f64 + Send + Sync + 'static,
        T: Fn(f64, &StateVec) -> f64 + Send + Sync + 'static,
        G: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            time_partial: Arc::new(time_partial),
            state_gradient: Arc::new(state_gradient),
            mode: DerivativeMode::Analytic,
        }
    }

    /// Value-only field; derivatives are central finite differences.
    pub fn from_value<V>(value: V) -> Self
    where
        V: Fn(f64, &StateVec) -> f64 + Send + Sync + 'static,
    {
        let value: ScalarMap = Arc::new(value);
        let v_t = value.clone();
        let v_g = value.clone();
        Self {
            value,
            time_partial: Arc::new(move |t, x| diff::fd_time_partial(&v_t, t, x)),
            state_gradient: Arc::new(move |t, x| diff::fd_state_gradient(&v_g, t, x)),
            mode: DerivativeMode::FiniteDifference,
        }
    }

    /// Analytic state gradient with a finite-differenced time partial.
    pub fn with_gradient<V, G>(value: V, state_gradient: G) -> Self
    where
        V: Fn(f64, &StateVec) -> f64 + Send + Sync + 'static,
        G: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
    {
        let value: ScalarMap = Arc::new(value);
        let v_t = value.clone();
        Self {
            value,
            time_partial: Arc::new(move |t, x| diff::fd_time_partial(&v_t, t, x)),
            state_gradient: Arc::new(state_gradient),
            mode: DerivativeMode::Mixed,
        }
    }

    /// Time-invariant quadratic Hamiltonian `H = x^T Q x / 2 + b . x`.
    pub fn quadratic(q: Mat, b: StateVec) -> Result<Self> {
        let n = b.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "ScalarField::quadratic",
                expected: n,
                actual: q.nrows().max(q.ncols()),
            });
        }
        let q_sym = (&q + q.transpose()) * 0.5;
        let qv = q_sym.clone();
        let bv = b.clone();
        Ok(Self::analytic(
            move |_t, x: &StateVec| 0.5 * (x.transpose() * &qv * x)[(0, 0)] + bv.dot(x),
            |_t, _x| 0.0,
            move |_t, x: &StateVec| &q_sym * x + &b,
        ))
    }

    pub fn value(&self, t: f64, x: &StateVec) -> f64 {
        (self.value)(t, x)
    }

    pub fn time_partial(&self, t: f64, x: &StateVec) -> f64 {
        (self.time_partial)(t, x)
    }

    pub fn gradient(&self, t: f64, x: &StateVec) -> StateVec {
        (self.state_gradient)(t, x)
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub(crate) fn value_map(&self) -> ScalarMap {
        self.value.clone()
    }
}

/// Skew-symmetric interconnection field `J(t, x)`.
#[derive(Clone)]
pub struct StructureField {
    j: MatrixMap,
}

impl StructureField {
    pub fn new<F>(j: F) -> Self
    where
        F: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
    {
        Self { j: Arc::new(j) }
    }

    pub fn constant(j: Mat) -> Self {
        Self::new(move |_t, _x| j.clone())
    }

    pub fn eval(&self, t: f64, x: &StateVec) -> Result<Mat> {
        let m = (self.j)(t, x);
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "StructureField::eval (non-square)",
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        Ok(m)
    }

    pub(crate) fn map(&self) -> MatrixMap {
        self.j.clone()
    }
}

/// Symmetric positive-semidefinite dissipation field `R(t, x)`.
#[derive(Clone)]
pub struct DissipationField {
    r: MatrixMap,
}

impl DissipationField {
    pub fn new<F>(r: F) -> Self
    where
        F: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
    {
        Self { r: Arc::new(r) }
    }

    pub fn constant(r: Mat) -> Self {
        Self::new(move |_t, _x| r.clone())
    }

    pub fn zero(n: usize) -> Self {
        Self::new(move |_t, _x| Mat::zeros(n, n))
    }

    pub fn eval(&self, t: f64, x: &StateVec) -> Result<Mat> {
        let m = (self.r)(t, x);
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "DissipationField::eval (non-square)",
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        Ok(m)
    }

    pub(crate) fn map(&self) -> MatrixMap {
        self.r.clone()
    }
}

/// Input map `G(t, x)`, an `n x m` matrix field.
#[derive(Clone)]
pub struct InputField {
    g: MatrixMap,
    input_dim: usize,
}

impl InputField {
    pub fn new<F>(input_dim: usize, g: F) -> Self
    where
        F: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
    {
        Self {
            g: Arc::new(g),
            input_dim,
        }
    }

    pub fn constant(g: Mat) -> Self {
        let m = g.ncols();
        Self::new(m, move |_t, _x| g.clone())
    }

    /// Input-less map (`m = 0`, autonomous system).
    pub fn none(state_dim: usize) -> Self {
        Self::new(0, move |_t, _x| Mat::zeros(state_dim, 0))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn eval(&self, t: f64, x: &StateVec) -> Result<Mat> {
        let m = (self.g)(t, x);
        if m.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "InputField::eval (columns)",
                expected: self.input_dim,
                actual: m.ncols(),
            });
        }
        Ok(m)
    }

    pub(crate) fn map(&self) -> MatrixMap {
        self.g.clone()
    }
}

/// Decompose `dH` against the connection's adapted bases:
/// vertical coefficients `dH/dx^b` and the horizontal coefficient
/// `w0H(H) = d0 H + Gamma0^a dH/dx^a`.
pub fn decompose_dh(
    conn: &Connection,
    h: &ScalarField,
    t: f64,
    x: &StateVec,
) -> Result<(StateVec, f64)> {
    let grad = h.gradient(t, x);
    conn.chart().check_dim(grad.len(), "decompose_dh gradient")?;
    let gamma = conn.coeffs(t, x)?;
    let horizontal = h.time_partial(t, x) + gamma.dot(&grad);
    Ok((grad, horizontal))
}

/// One point of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub time: f64,
    pub state: StateVec,
    pub rel_error: f64,
    pub finite: bool,
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub mode: DerivativeMode,
    pub passed: bool,
}

/// Compare a field's analytic derivatives against central differences with
/// step `h` at the given points. Evaluation failures (non-finite values) are
/// reported per point, never fatal.
pub fn grad_check(
    h: &ScalarField,
    points: &[(f64, StateVec)],
    step: f64,
    tol: f64,
) -> GradCheckReport {
    let value = h.value_map();
    let mut entries = Vec::with_capacity(points.len());
    let mut worst = 0.0f64;
    for (t, x) in points {
        let mut rel = 0.0f64;
        let mut finite = true;

        let fd_t = (value(*t + step, x) - value(*t - step, x)) / (2.0 * step);
        let an_t = h.time_partial(*t, x);
        if fd_t.is_finite() && an_t.is_finite() {
            rel = rel.max(diff::rel_deviation(an_t, fd_t));
        } else {
            finite = false;
        }

        let an_g = h.gradient(*t, x);
        let mut xp = x.clone();
        let mut xm = x.clone();
        for i in 0..x.len() {
            xp[i] = x[i] + step;
            xm[i] = x[i] - step;
            let fd = (value(*t, &xp) - value(*t, &xm)) / (2.0 * step);
            xp[i] = x[i];
            xm[i] = x[i];
            if fd.is_finite() && an_g[i].is_finite() {
                rel = rel.max(diff::rel_deviation(an_g[i], fd));
            } else {
                finite = false;
            }
        }

        if finite {
            worst = worst.max(rel);
        }
        entries.push(GradCheckEntry {
            time: *t,
            state: x.clone(),
            rel_error: rel,
            finite,
        });
    }
    let all_finite = entries.iter().all(|e| e.finite);
    GradCheckReport {
        entries,
        max_rel_error: worst,
        tolerance: tol,
        mode: h.mode(),
        passed: all_finite && worst <= tol,
    }
}

/// Eigenvalues below this floor fail the positive-semidefiniteness check;
/// the slack absorbs rounding on rank-deficient `R` (R = 0 is the norm).
pub const PSD_FLOOR: f64 = -1e-10;

/// Outcome of [`check_structure`].
#[derive(Debug, Clone)]
pub struct StructureReport {
    pub max_skew_residual: f64,
    pub max_symmetry_residual: f64,
    pub min_eigenvalue: f64,
    pub skew_ok: bool,
    pub symmetric_ok: bool,
    pub psd_ok: bool,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.skew_ok && self.symmetric_ok && self.psd_ok
    }
}

/// Verify `J = -J^T`, `R = R^T`, and `R >= 0` (after symmetrization) over the
/// sample points. Skew/symmetry residuals are compared against `tol`; the
/// minimum eigenvalue against [`PSD_FLOOR`].
pub fn check_structure(
    j: &StructureField,
    r: &DissipationField,
    samples: &[(f64, StateVec)],
    tol: f64,
) -> Result<StructureReport> {
    let mut max_skew = 0.0f64;
    let mut max_sym = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for (t, x) in samples {
        let jm = j.eval(*t, x)?;
        let skew = &jm + jm.transpose();
        max_skew = max_skew.max(skew.amax());

        let rm = r.eval(*t, x)?;
        let asym = &rm - rm.transpose();
        max_sym = max_sym.max(asym.amax());

        let sym = (&rm + rm.transpose()) * 0.5;
        let eigs = sym.symmetric_eigenvalues();
        min_eig = min_eig.min(eigs.min());
    }
    if samples.is_empty() {
        min_eig = 0.0;
    }
    Ok(StructureReport {
        max_skew_residual: max_skew,
        max_symmetry_residual: max_sym,
        min_eigenvalue: min_eig,
        skew_ok: max_skew <= tol,
        symmetric_ok: max_sym <= tol,
        psd_ok: min_eig >= PSD_FLOOR,
    })
}
