//! Time-variant state diffeomorphisms and affine input transformations;
//! pushforward of a port-Hamiltonian system; the matching PDE as a pointwise
//! residual check plus a closed-form solver for the linear-quadratic case.

use std::sync::Arc;

use crate::diff;
use crate::fields::{DissipationField, InputField, ScalarField, StructureField};
use crate::geometry::{transform_connection, Curve};
use crate::systems::PortHamiltonianSystem;
use crate::{Error, Mat, MatrixMap, Result, StateVec, VectorMap};

/// Fiber-preserving change of state coordinates `xbar = phi(t, x)` (no time
/// reparametrization), with inverse, state Jacobian `d phi / d x`, and time
/// partial `d0 phi`.
#[derive(Clone)]
pub struct StateTransformation {
    forward: VectorMap,
    inverse: VectorMap,
    jacobian: MatrixMap,
    time_partial: VectorMap,
}

impl StateTransformation {
    pub fn new<F, I, J, T>(forward: F, inverse: I, jacobian: J, time_partial: T) -> Self
    where
        F: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
        I: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
        J: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
        T: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
    {
        Self {
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            jacobian: Arc::new(jacobian),
            time_partial: Arc::new(time_partial),
        }
    }

    /// Forward/inverse maps only; Jacobian and time partial are
    /// finite-differenced from the forward map.
    pub fn from_maps<F, I>(forward: F, inverse: I) -> Self
    where
        F: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
        I: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
    {
        let fwd: VectorMap = Arc::new(forward);
        let f_j = fwd.clone();
        let f_t = fwd.clone();
        Self {
            forward: fwd,
            inverse: Arc::new(inverse),
            jacobian: Arc::new(move |t, x| diff::fd_state_jacobian(&f_j, t, x)),
            time_partial: Arc::new(move |t, x| diff::fd_vector_time_partial(&f_t, t, x)),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(
            |_t, x: &StateVec| x.clone(),
            |_t, x: &StateVec| x.clone(),
            move |_t, _x| Mat::identity(n, n),
            move |_t, _x| StateVec::zeros(n),
        )
    }

    /// Constant linear map `xbar = Q x` with invertible `Q`.
    pub fn linear(q: Mat) -> Result<Self> {
        let n = q.nrows();
        let q_inv = q
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("StateTransformation::linear"))?;
        let qf = q.clone();
        Ok(Self::new(
            move |_t, x: &StateVec| &qf * x,
            move |_t, xb: &StateVec| &q_inv * xb,
            move |_t, _x| q.clone(),
            move |_t, _x| StateVec::zeros(n),
        ))
    }

    /// Time-variant shift `xbar = x - c(t)` along a reference curve.
    pub fn shift(c: Curve) -> Self {
        let c_fwd = c.clone();
        let c_inv = c.clone();
        let c_dot = c.clone();
        Self::new(
            move |t, x: &StateVec| x - c_fwd.value(t),
            move |t, xb: &StateVec| xb + c_inv.value(t),
            move |t, x: &StateVec| {
                let _ = t;
                Mat::identity(x.len(), x.len())
            },
            move |t, _x| -c_dot.derivative(t),
        )
    }

    /// Composition `(outer ∘ inner)(t, x) = outer(t, inner(t, x))`.
    pub fn compose(outer: &Self, inner: &Self) -> Self {
        let of = outer.forward.clone();
        let oi = outer.inverse.clone();
        let oj = outer.jacobian.clone();
        let oj_t = outer.jacobian.clone();
        let ot = outer.time_partial.clone();
        let inf = inner.forward.clone();
        let ini = inner.inverse.clone();
        let inj = inner.jacobian.clone();
        let int = inner.time_partial.clone();
        let f_mid = inner.forward.clone();
        let f_mid_t = inner.forward.clone();
        Self::new(
            move |t, x| of(t, &inf(t, x)),
            move |t, z| ini(t, &oi(t, z)),
            move |t, x| {
                let mid = f_mid(t, x);
                oj(t, &mid) * inj(t, x)
            },
            move |t, x| {
                let mid = f_mid_t(t, x);
                ot(t, &mid) + oj_t(t, &mid) * int(t, x)
            },
        )
    }

    /// The inverse transformation as a `StateTransformation` of its own;
    /// its Jacobian and time partial are derived from this one's.
    pub fn inverted(&self) -> Self {
        let fwd = self.inverse.clone();
        let inv = self.forward.clone();
        let jac = self.jacobian.clone();
        let jac2 = self.jacobian.clone();
        let tp = self.time_partial.clone();
        let point_inv = self.inverse.clone();
        let point_inv2 = self.inverse.clone();
        Self::new(
            move |t, xb| fwd(t, xb),
            move |t, x| inv(t, x),
            move |t, xb| {
                let x = point_inv(t, xb);
                match jac(t, &x).try_inverse() {
                    Some(m) => m,
                    None => Mat::from_element(xb.len(), xb.len(), f64::NAN),
                }
            },
            move |t, xb| {
                let x = point_inv2(t, xb);
                let a = jac2(t, &x);
                let d0 = tp(t, &x);
                match a.lu().solve(&d0) {
                    Some(v) => -v,
                    None => StateVec::from_element(xb.len(), f64::NAN),
                }
            },
        )
    }

    pub fn apply(&self, t: f64, x: &StateVec) -> StateVec {
        (self.forward)(t, x)
    }

    pub fn invert_point(&self, t: f64, x_bar: &StateVec) -> StateVec {
        (self.inverse)(t, x_bar)
    }

    pub fn jacobian_at(&self, t: f64, x: &StateVec) -> Mat {
        (self.jacobian)(t, x)
    }

    pub fn time_partial_at(&self, t: f64, x: &StateVec) -> StateVec {
        (self.time_partial)(t, x)
    }

    /// Check inverse consistency, Jacobian invertibility, and
    /// finite-difference agreement of the derivative data at sample points.
    pub fn validate(&self, samples: &[(f64, StateVec)]) -> TransformReport {
        let mut max_roundtrip = 0.0f64;
        let mut max_fd = 0.0f64;
        let mut invertible = true;
        for (t, x) in samples {
            let xb = self.apply(*t, x);
            let back = self.invert_point(*t, &xb);
            max_roundtrip = max_roundtrip.max((back - x).norm() / x.norm().max(1.0));

            let a = self.jacobian_at(*t, x);
            if a.clone().try_inverse().is_none() {
                invertible = false;
            }
            let fd_j = diff::fd_state_jacobian(&self.forward, *t, x);
            for (p, q) in a.iter().zip(fd_j.iter()) {
                max_fd = max_fd.max(diff::rel_deviation(*p, *q));
            }
            let tp = self.time_partial_at(*t, x);
            let fd_t = diff::fd_vector_time_partial(&self.forward, *t, x);
            for (p, q) in tp.iter().zip(fd_t.iter()) {
                max_fd = max_fd.max(diff::rel_deviation(*p, *q));
            }
        }
        TransformReport {
            max_roundtrip_error: max_roundtrip,
            max_derivative_deviation: max_fd,
            jacobian_invertible: invertible,
            passed: invertible && max_roundtrip <= 1e-10 && max_fd <= 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformReport {
    pub max_roundtrip_error: f64,
    pub max_derivative_deviation: f64,
    pub jacobian_invertible: bool,
    pub passed: bool,
}

/// Affine input transformation `ubar = M(t, x) u + g(t, x)` with the stored
/// inverse `Mhat = M^{-1}`.
///
/// In the matching operations the offset `g` is evaluated in the transformed
/// chart, where residuals are reported.
#[derive(Clone)]
pub struct InputTransformation {
    m: MatrixMap,
    g: VectorMap,
    m_inverse: MatrixMap,
    input_dim: usize,
}

impl InputTransformation {
    pub fn new<M, G, I>(input_dim: usize, m: M, g: G, m_inverse: I) -> Self
    where
        M: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
        G: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
        I: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
    {
        Self {
            m: Arc::new(m),
            g: Arc::new(g),
            m_inverse: Arc::new(m_inverse),
            input_dim,
        }
    }

    pub fn identity(m: usize) -> Self {
        Self::new(
            m,
            move |_t, _x| Mat::identity(m, m),
            move |_t, _x| StateVec::zeros(m),
            move |_t, _x| Mat::identity(m, m),
        )
    }

    /// Constant regular `M` with a constant offset.
    pub fn constant(m: Mat, g: StateVec) -> Result<Self> {
        let dim = m.nrows();
        if g.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "InputTransformation::constant",
                expected: dim,
                actual: g.len(),
            });
        }
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("InputTransformation::constant"))?;
        Ok(Self::new(
            dim,
            move |_t, _x| m.clone(),
            move |_t, _x| g.clone(),
            move |_t, _x| m_inv.clone(),
        ))
    }

    /// Constant `M` with a time-dependent offset `g(t)`.
    pub fn constant_m_with_offset<G>(m: Mat, g: G) -> Result<Self>
    where
        G: Fn(f64) -> StateVec + Send + Sync + 'static,
    {
        let dim = m.nrows();
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("InputTransformation::constant_m_with_offset"))?;
        Ok(Self::new(
            dim,
            move |_t, _x| m.clone(),
            move |t, _x| g(t),
            move |_t, _x| m_inv.clone(),
        ))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn m_at(&self, t: f64, x: &StateVec) -> Mat {
        (self.m)(t, x)
    }

    pub fn offset_at(&self, t: f64, x: &StateVec) -> StateVec {
        (self.g)(t, x)
    }

    pub fn m_inverse_at(&self, t: f64, x: &StateVec) -> Mat {
        (self.m_inverse)(t, x)
    }

    /// Apply `ubar = M u + g` at a point.
    pub fn apply(&self, t: f64, x: &StateVec, u: &StateVec) -> StateVec {
        self.m_at(t, x) * u + self.offset_at(t, x)
    }

    /// Max deviation of `M Mhat` from the identity over the samples.
    pub fn regularity_deviation(&self, samples: &[(f64, StateVec)]) -> f64 {
        let mut worst = 0.0f64;
        for (t, x) in samples {
            let p = self.m_at(*t, x) * self.m_inverse_at(*t, x);
            let dev = &p - Mat::identity(self.input_dim, self.input_dim);
            worst = worst.max(dev.amax());
        }
        worst
    }
}

/// Candidate solution of the matching PDE: a modified Hamiltonian on the
/// transformed chart.
#[derive(Clone)]
pub struct MatchingCandidate {
    pub h_breve: ScalarField,
}

impl MatchingCandidate {
    pub fn new(h_breve: ScalarField) -> Self {
        Self { h_breve }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(ScalarField::analytic(
            |_t, _x| 0.0,
            |_t, _x| 0.0,
            move |_t, _x| StateVec::zeros(n),
        ))
    }
}

const STRUCTURE_PROBE_TOL: f64 = 1e-10;

/// Push a system through a state diffeomorphism and (optionally) a regular
/// input transformation.
///
/// `Jbar = (A J A^T) ∘ phihat` and likewise `Rbar` (contravariant rule with
/// `A = d phi / d x`), `Gbar = (A G Mhat) ∘ phihat`, `Hbar = H ∘ phihat`, and
/// the connection follows the transition law. The affine offset `g` is not
/// absorbed here; it feeds the matching operations.
pub fn push_system(
    sys: &PortHamiltonianSystem,
    phi: &StateTransformation,
    inp: Option<&InputTransformation>,
) -> Result<PortHamiltonianSystem> {
    let n = sys.state_dim();
    if let Some(it) = inp {
        if it.input_dim() != sys.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "push_system input transformation",
                expected: sys.input_dim(),
                actual: it.input_dim(),
            });
        }
    }

    let j_map = sys.structure().map();
    let r_map = sys.dissipation().map();
    let g_map = sys.input_field().map();
    let h = sys.hamiltonian().clone();
    let m = sys.input_dim();

    let phi_j = phi.clone();
    let j_bar = StructureField::new(move |t, x_bar: &StateVec| {
        let x = phi_j.invert_point(t, x_bar);
        let a = phi_j.jacobian_at(t, &x);
        &a * j_map(t, &x) * a.transpose()
    });

    let phi_r = phi.clone();
    let r_bar = DissipationField::new(move |t, x_bar: &StateVec| {
        let x = phi_r.invert_point(t, x_bar);
        let a = phi_r.jacobian_at(t, &x);
        &a * r_map(t, &x) * a.transpose()
    });

    let phi_g = phi.clone();
    let inp_g = inp.cloned();
    let g_bar = InputField::new(m, move |t, x_bar: &StateVec| {
        let x = phi_g.invert_point(t, x_bar);
        let a = phi_g.jacobian_at(t, &x);
        let g = g_map(t, &x);
        match &inp_g {
            Some(it) => a * g * it.m_inverse_at(t, &x),
            None => a * g,
        }
    });

    // Hbar = H ∘ phihat; gradient and time partial by the chain rule,
    // d H bar = A^{-T} dH and d0 Hbar = d0 H - dH . (A^{-1} d0 phi).
    let phi_hv = phi.clone();
    let h_value = h.clone();
    let phi_hg = phi.clone();
    let h_grad = h.clone();
    let phi_ht = phi.clone();
    let h_time = h;
    let h_bar = ScalarField::analytic(
        move |t, x_bar: &StateVec| {
            let x = phi_hv.invert_point(t, x_bar);
            h_value.value(t, &x)
        },
        move |t, x_bar: &StateVec| {
            let x = phi_ht.invert_point(t, x_bar);
            let a = phi_ht.jacobian_at(t, &x);
            let grad = h_time.gradient(t, &x);
            match a.lu().solve(&phi_ht.time_partial_at(t, &x)) {
                Some(v) => h_time.time_partial(t, &x) - grad.dot(&v),
                None => f64::NAN,
            }
        },
        move |t, x_bar: &StateVec| {
            let x = phi_hg.invert_point(t, x_bar);
            let a = phi_hg.jacobian_at(t, &x);
            let grad = h_grad.gradient(t, &x);
            match a.transpose().lu().solve(&grad) {
                Some(v) => v,
                None => StateVec::from_element(x_bar.len(), f64::NAN),
            }
        },
    );

    let conn_bar = transform_connection(sys.connection(), phi);

    let pushed = PortHamiltonianSystem::new(
        sys.chart().clone(),
        j_bar,
        r_bar,
        g_bar,
        h_bar,
        conn_bar,
    )?;

    // Post-construction probe: skew/symmetry must survive the congruence and
    // the Jacobian must be regular where we probed.
    let probe = StateVec::zeros(n);
    let x0 = phi.invert_point(0.0, &probe);
    if phi.jacobian_at(0.0, &x0).try_inverse().is_none() {
        return Err(Error::Singular("push_system: jacobian at probe point"));
    }
    let jm = pushed.structure().eval(0.0, &probe)?;
    let scale = jm.amax().max(1.0);
    if (&jm + jm.transpose()).amax() > STRUCTURE_PROBE_TOL * scale {
        return Err(Error::InvalidConfig(
            "pushed J lost skew-symmetry at the probe point".into(),
        ));
    }
    let rm = pushed.dissipation().eval(0.0, &probe)?;
    let scale = rm.amax().max(1.0);
    if (&rm - rm.transpose()).amax() > STRUCTURE_PROBE_TOL * scale {
        return Err(Error::InvalidConfig(
            "pushed R lost symmetry at the probe point".into(),
        ));
    }
    Ok(pushed)
}

/// Pointwise residual of the matching PDE:
/// `(Jbar - Rbar) dHbreve - Gbar g` at `(t, xbar)`. All-zeros means the
/// candidate solves the PDE at that point. The offset `g` is evaluated in
/// the transformed chart.
pub fn matching_residual(
    sys_bar: &PortHamiltonianSystem,
    inp: &InputTransformation,
    cand: &MatchingCandidate,
    t: f64,
    x_bar: &StateVec,
) -> Result<StateVec> {
    let n = sys_bar.state_dim();
    if x_bar.len() != n {
        return Err(Error::DimensionMismatch {
            context: "matching_residual",
            expected: n,
            actual: x_bar.len(),
        });
    }
    let grad = cand.h_breve.gradient(t, x_bar);
    if grad.len() != n {
        return Err(Error::DimensionMismatch {
            context: "matching_residual candidate gradient",
            expected: n,
            actual: grad.len(),
        });
    }
    let jm = sys_bar.structure().eval(t, x_bar)?;
    let rm = sys_bar.dissipation().eval(t, x_bar)?;
    let gm = sys_bar.input_field().eval(t, x_bar)?;
    let offset = inp.offset_at(t, x_bar);
    Ok((jm - rm) * grad - gm * offset)
}

/// Rectangular verification region in `(t, xbar)`.
#[derive(Debug, Clone)]
pub struct Region {
    pub t_span: (f64, f64),
    pub lower: StateVec,
    pub upper: StateVec,
}

impl Region {
    pub fn new(t_span: (f64, f64), lower: StateVec, upper: StateVec) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "Region bounds",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        Ok(Self {
            t_span,
            lower,
            upper,
        })
    }

    /// Centered unit box `[-1, 1]^n` over the time span.
    pub fn unit_box(t_span: (f64, f64), n: usize) -> Self {
        Self {
            t_span,
            lower: StateVec::from_element(n, -1.0),
            upper: StateVec::from_element(n, 1.0),
        }
    }
}

fn xorshift64(state: &mut u64) -> f64 {
    let mut x = *state;
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    *state = x;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn region_state_samples(region: &Region, count: usize) -> Vec<StateVec> {
    let n = region.lower.len();
    let mut seed = 0x9e37_79b9_7f4a_7c15u64;
    (0..count)
        .map(|_| {
            StateVec::from_iterator(
                n,
                (0..n).map(|i| {
                    let f = xorshift64(&mut seed);
                    region.lower[i] + f * (region.upper[i] - region.lower[i])
                }),
            )
        })
        .collect()
}

fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![a];
    }
    (0..count)
        .map(|k| a + (b - a) * k as f64 / (count - 1) as f64)
        .collect()
}

/// Result of the per-point linear-quadratic solve behind the candidate.
struct LqSolveAt {
    linear: StateVec,
    hessian: Mat,
    residual: f64,
}

fn lq_solve_at(a: &Mat, rhs_at: &dyn Fn(&StateVec) -> StateVec, n: usize) -> LqSolveAt {
    let x0 = StateVec::zeros(n);
    let b0 = rhs_at(&x0);
    // Affine decomposition of the right-hand side: b(x) = b0 + B x.
    let mut b_mat = Mat::zeros(n, n);
    for k in 0..n {
        let mut e = StateVec::zeros(n);
        e[k] = 1.0;
        b_mat.set_column(k, &(rhs_at(&e) - &b0));
    }

    let svd = a.clone().svd(true, true);
    let sigma_max = if svd.singular_values.is_empty() {
        0.0
    } else {
        svd.singular_values.max()
    };
    let eps = 1e-12 * sigma_max;
    let pinv = match svd.pseudo_inverse(eps) {
        Ok(p) => p,
        Err(_) => Mat::zeros(n, n),
    };

    let linear = &pinv * &b0;
    let coeff = &pinv * &b_mat;
    let hessian = (&coeff + coeff.transpose()) * 0.5;
    let residual = (a * &linear - &b0)
        .norm()
        .max((a * &coeff - &b_mat).norm());
    LqSolveAt {
        linear,
        hessian,
        residual,
    }
}

/// Solve `(Jbar - Rbar) dHbreve = rhs(t, xbar)` for a Hamiltonian that is
/// quadratic plus linear in `xbar` with time-varying coefficients, assuming
/// `Jbar - Rbar` constant in `xbar` and `rhs` affine in `xbar`. Each
/// evaluation performs a least-squares solve; infeasibility (right side
/// outside the range) is detected on a probe grid over the region.
pub(crate) fn solve_affine_matching(
    sys_bar: &PortHamiltonianSystem,
    rhs: VectorMap,
    region: &Region,
) -> Result<MatchingCandidate> {
    let n = sys_bar.state_dim();
    if region.lower.len() != n {
        return Err(Error::DimensionMismatch {
            context: "solve_matching region",
            expected: n,
            actual: region.lower.len(),
        });
    }
    let j = sys_bar.structure().clone();
    let r = sys_bar.dissipation().clone();
    let a_at = move |t: f64| -> Result<Mat> {
        let x0 = StateVec::zeros(n);
        Ok(j.eval(t, &x0)? - r.eval(t, &x0)?)
    };

    // Feasibility probe: the least-squares residual must already be
    // negligible, otherwise the right side leaves the range of (J - R).
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for t in linspace(region.t_span.0, region.t_span.1, 5) {
        let a = a_at(t)?;
        let rhs_t = |x: &StateVec| rhs(t, x);
        let solved = lq_solve_at(&a, &rhs_t, n);
        worst = worst.max(solved.residual);
        scale = scale.max(rhs(t, &StateVec::zeros(n)).norm());
    }
    let tolerance = 1e-8 * scale;
    if worst > tolerance {
        return Err(Error::MatchingInfeasible {
            residual: worst,
            tolerance,
        });
    }

    let j = sys_bar.structure().clone();
    let r = sys_bar.dissipation().clone();
    let rhs_v = rhs.clone();
    let value = move |t: f64, x: &StateVec| -> f64 {
        let x0 = StateVec::zeros(n);
        let a = match (j.eval(t, &x0), r.eval(t, &x0)) {
            (Ok(jm), Ok(rm)) => jm - rm,
            _ => return f64::NAN,
        };
        let rhs_t = |xx: &StateVec| rhs_v(t, xx);
        let s = lq_solve_at(&a, &rhs_t, n);
        s.linear.dot(x) + 0.5 * (x.transpose() * &s.hessian * x)[(0, 0)]
    };

    let j = sys_bar.structure().clone();
    let r = sys_bar.dissipation().clone();
    let rhs_g = rhs;
    let gradient = move |t: f64, x: &StateVec| -> StateVec {
        let x0 = StateVec::zeros(n);
        let a = match (j.eval(t, &x0), r.eval(t, &x0)) {
            (Ok(jm), Ok(rm)) => jm - rm,
            _ => return StateVec::from_element(n, f64::NAN),
        };
        let rhs_t = |xx: &StateVec| rhs_g(t, xx);
        let s = lq_solve_at(&a, &rhs_t, n);
        &s.linear + &s.hessian * x
    };

    Ok(MatchingCandidate::new(ScalarField::with_gradient(
        value, gradient,
    )))
}

/// Closed-form solver for the matching PDE in the linear-quadratic setting:
/// right-hand side `Gbar g` per the affine-input matching condition.
pub fn solve_matching_lq(
    sys_bar: &PortHamiltonianSystem,
    inp: &InputTransformation,
    region: &Region,
) -> Result<MatchingCandidate> {
    let g_field = sys_bar.input_field().clone();
    let inp = inp.clone();
    let rhs: VectorMap = Arc::new(move |t, x_bar: &StateVec| {
        match g_field.eval(t, x_bar) {
            Ok(gm) => gm * inp.offset_at(t, x_bar),
            Err(_) => StateVec::from_element(x_bar.len(), f64::NAN),
        }
    });
    solve_affine_matching(sys_bar, rhs, region)
}

/// Max matching residual over an `nt x nx` verification grid: `nt` uniform
/// time samples crossed with `nx` deterministic state samples in the box.
pub fn verify_matching(
    sys_bar: &PortHamiltonianSystem,
    inp: &InputTransformation,
    cand: &MatchingCandidate,
    region: &Region,
    nt: usize,
    nx: usize,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let states = region_state_samples(region, nx);
    for t in linspace(region.t_span.0, region.t_span.1, nt) {
        for x in &states {
            let res = matching_residual(sys_bar, inp, cand, t, x)?;
            worst = worst.max(res.norm());
        }
    }
    Ok(worst)
}

/// Transformed collocated output per the affine matching construction:
/// `ybar = Mhat^T (y - G^T (dphi)^T dHbreve)` evaluated at `(t, x)` in the
/// original chart.
pub fn transformed_output(
    sys: &PortHamiltonianSystem,
    phi: &StateTransformation,
    inp: &InputTransformation,
    cand: &MatchingCandidate,
    t: f64,
    x: &StateVec,
) -> Result<StateVec> {
    let y = sys.collocated_output(t, x)?;
    let x_bar = phi.apply(t, x);
    let grad_breve = cand.h_breve.gradient(t, &x_bar);
    let a = phi.jacobian_at(t, x);
    let pulled = a.transpose() * grad_breve;
    let gm = sys.input_field().eval(t, x)?;
    let correction = gm.transpose() * pulled;
    Ok(inp.m_inverse_at(t, x).transpose() * (y - correction))
}

/// Side-by-side supplied power in both charts; the paper's point is that
/// `u . y` and `ubar . ybar` differ in general under affine transformations.
#[derive(Debug, Clone)]
pub struct SuppliedPowerReport {
    pub y: StateVec,
    pub y_bar: StateVec,
    pub u_bar: StateVec,
    pub supplied_original: f64,
    pub supplied_transformed: f64,
}

pub fn supplied_power_report(
    sys: &PortHamiltonianSystem,
    phi: &StateTransformation,
    inp: &InputTransformation,
    cand: &MatchingCandidate,
    t: f64,
    x: &StateVec,
    u: &StateVec,
) -> Result<SuppliedPowerReport> {
    let y = sys.collocated_output(t, x)?;
    let y_bar = transformed_output(sys, phi, inp, cand, t, x)?;
    let u_bar = inp.apply(t, x, u);
    Ok(SuppliedPowerReport {
        supplied_original: u.dot(&y),
        supplied_transformed: u_bar.dot(&y_bar),
        y,
        y_bar,
        u_bar,
    })
}
