//! Mechanical systems on a position/momentum chart with a space connection:
//! the covertical connection, the Hamiltonian vector field, its
//! vertical/horizontal splitting, and the power balance with collocated
//! outputs.

use std::sync::Arc;

use crate::diff;
use crate::fields::{DissipationField, InputField, ScalarField, StructureField};
use crate::geometry::{BundleChart, Connection};
use crate::systems::{InputSignal, PortHamiltonianSystem};
use crate::{Error, Mat, MatrixMap, Result, StateVec, VectorMap};

/// Chart with `nq` positions and `nq` conjugate momenta; the combined state
/// is `x = (q, p)` of dimension `2 nq`.
#[derive(Debug, Clone, Copy)]
pub struct MechChart {
    q_dim: usize,
}

impl MechChart {
    pub fn new(q_dim: usize) -> Result<Self> {
        if q_dim == 0 {
            return Err(Error::EmptyChart);
        }
        Ok(Self { q_dim })
    }

    pub fn q_dim(&self) -> usize {
        self.q_dim
    }

    pub fn state_dim(&self) -> usize {
        2 * self.q_dim
    }

    /// Bundle chart with labels `q_1.., p_1..`.
    pub fn bundle_chart(&self) -> BundleChart {
        let labels = (1..=self.q_dim)
            .map(|i| format!("q_{i}"))
            .chain((1..=self.q_dim).map(|i| format!("p_{i}")))
            .collect();
        BundleChart::with_labels(labels).expect("labels are distinct")
    }

    pub fn split(&self, x: &StateVec) -> (StateVec, StateVec) {
        (
            x.rows(0, self.q_dim).into_owned(),
            x.rows(self.q_dim, self.q_dim).into_owned(),
        )
    }

    pub fn join(&self, q: &StateVec, p: &StateVec) -> StateVec {
        let mut x = StateVec::zeros(self.state_dim());
        x.rows_mut(0, self.q_dim).copy_from(q);
        x.rows_mut(self.q_dim, self.q_dim).copy_from(p);
        x
    }
}

/// Connection on the position bundle: `gamma0^a(t, q)` selects a spatial
/// frame of reference.
#[derive(Clone)]
pub struct SpaceConnection {
    q_dim: usize,
    gamma: VectorMap,
    jacobian: MatrixMap,
    analytic_jacobian: bool,
}

impl SpaceConnection {
    pub fn new<F>(q_dim: usize, gamma: F) -> Self
    where
        F: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
    {
        let gamma: VectorMap = Arc::new(gamma);
        let g = gamma.clone();
        Self {
            q_dim,
            gamma,
            jacobian: Arc::new(move |t, q| diff::fd_state_jacobian(&g, t, q)),
            analytic_jacobian: false,
        }
    }

    pub fn with_jacobian<F, J>(q_dim: usize, gamma: F, jacobian: J) -> Self
    where
        F: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
        J: Fn(f64, &StateVec) -> Mat + Send + Sync + 'static,
    {
        Self {
            q_dim,
            gamma: Arc::new(gamma),
            jacobian: Arc::new(jacobian),
            analytic_jacobian: true,
        }
    }

    pub fn trivial(q_dim: usize) -> Self {
        Self::with_jacobian(
            q_dim,
            move |_t, _q| StateVec::zeros(q_dim),
            move |_t, _q| Mat::zeros(q_dim, q_dim),
        )
    }

    pub fn q_dim(&self) -> usize {
        self.q_dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.analytic_jacobian
    }

    pub fn gamma(&self, t: f64, q: &StateVec) -> Result<StateVec> {
        if q.len() != self.q_dim {
            return Err(Error::DimensionMismatch {
                context: "SpaceConnection::gamma",
                expected: self.q_dim,
                actual: q.len(),
            });
        }
        Ok((self.gamma)(t, q))
    }

    /// Entry `(b, r) = d gamma0^b / d q^r`.
    pub fn gamma_jacobian(&self, t: f64, q: &StateVec) -> Result<Mat> {
        if q.len() != self.q_dim {
            return Err(Error::DimensionMismatch {
                context: "SpaceConnection::gamma_jacobian",
                expected: self.q_dim,
                actual: q.len(),
            });
        }
        Ok((self.jacobian)(t, q))
    }

    /// Max relative deviation of the stored Jacobian from central differences.
    pub fn jacobian_deviation(&self, t: f64, q: &StateVec) -> Result<f64> {
        let analytic = self.gamma_jacobian(t, q)?;
        let fd = diff::fd_state_jacobian(&self.gamma, t, q);
        let mut worst = 0.0f64;
        for (a, b) in analytic.iter().zip(fd.iter()) {
            worst = worst.max(diff::rel_deviation(*a, *b));
        }
        Ok(worst)
    }
}

/// Extended Hamiltonian `H = H0 - H_{c,r} u^r` of a controlled mechanical
/// system: free part, port Hamiltonians, and the input signal.
#[derive(Clone)]
pub struct ControlledHamiltonian {
    pub h0: ScalarField,
    pub hc: Vec<ScalarField>,
    pub u: InputSignal,
}

impl ControlledHamiltonian {
    pub fn new(h0: ScalarField, hc: Vec<ScalarField>, u: InputSignal) -> Result<Self> {
        if u.dim() != hc.len() {
            return Err(Error::DimensionMismatch {
                context: "ControlledHamiltonian inputs",
                expected: hc.len(),
                actual: u.dim(),
            });
        }
        Ok(Self { h0, hc, u })
    }

    /// Gradient of the controlled Hamiltonian at `(t, x)` with input `u`.
    fn controlled_gradient(&self, t: f64, x: &StateVec, u: &StateVec) -> StateVec {
        let mut grad = self.h0.gradient(t, x);
        for (rho, hc) in self.hc.iter().enumerate() {
            grad -= hc.gradient(t, x) * u[rho];
        }
        grad
    }
}

/// Power-flow terms of the controlled mechanical balance: the change of the
/// free Hamiltonian along solutions splits into the frame (horizontal) term
/// and the collocated supply `y_r u^r`.
///
/// `outputs` uses the vertical field generated by the full controlled
/// Hamiltonian; `outputs_free` reports the free-field alternative, which
/// differs only when some port Hamiltonian depends on the momenta.
#[derive(Debug, Clone)]
pub struct MechPowerTerms {
    pub horizontal: f64,
    pub supplied: f64,
    pub outputs: StateVec,
    pub total: f64,
    pub outputs_free: StateVec,
}

fn split_gradient(grad: &StateVec, nq: usize) -> (StateVec, StateVec) {
    (
        grad.rows(0, nq).into_owned(),
        grad.rows(nq, nq).into_owned(),
    )
}

/// Coefficients of the covertical connection induced on the momentum phase
/// space: position part `gamma0^a`, momentum part `-(d_r gamma0^b) p_b`.
pub fn covertical_connection(
    sc: &SpaceConnection,
    t: f64,
    q: &StateVec,
    p: &StateVec,
) -> Result<StateVec> {
    let nq = sc.q_dim();
    if p.len() != nq {
        return Err(Error::DimensionMismatch {
            context: "covertical_connection momenta",
            expected: nq,
            actual: p.len(),
        });
    }
    let gamma = sc.gamma(t, q)?;
    let jac = sc.gamma_jacobian(t, q)?;
    let momentum_part = -(jac.transpose() * p);
    let chart = MechChart::new(nq)?;
    Ok(chart.join(&gamma, &momentum_part))
}

/// Hamiltonian vector field on the momentum phase space: with
/// `H_gamma = H + p_b gamma0^b`, the state part is
/// `(dH_gamma/dp, -dH_gamma/dq)`.
pub fn mech_vector_field(
    sc: &SpaceConnection,
    h: &ScalarField,
    t: f64,
    q: &StateVec,
    p: &StateVec,
) -> Result<StateVec> {
    let nq = sc.q_dim();
    let chart = MechChart::new(nq)?;
    let x = chart.join(q, p);
    let grad = h.gradient(t, &x);
    if grad.len() != 2 * nq {
        return Err(Error::DimensionMismatch {
            context: "mech_vector_field gradient",
            expected: 2 * nq,
            actual: grad.len(),
        });
    }
    let (gq, gp) = split_gradient(&grad, nq);
    let gamma = sc.gamma(t, q)?;
    let jac = sc.gamma_jacobian(t, q)?;
    let q_dot = gp + gamma;
    let p_dot = -gq - jac.transpose() * p;
    Ok(chart.join(&q_dot, &p_dot))
}

/// Vertical/horizontal splitting of the Hamiltonian vector field: the
/// vertical part is the canonical field of `H` itself, the horizontal part
/// is the covertical connection vector. They reassemble the full field.
pub fn split_mech_field(
    sc: &SpaceConnection,
    h: &ScalarField,
    t: f64,
    q: &StateVec,
    p: &StateVec,
) -> Result<(StateVec, StateVec)> {
    let nq = sc.q_dim();
    let chart = MechChart::new(nq)?;
    let x = chart.join(q, p);
    let grad = h.gradient(t, &x);
    let (gq, gp) = split_gradient(&grad, nq);
    let vertical = chart.join(&gp, &(-gq));
    let horizontal = covertical_connection(sc, t, q, p)?;
    Ok((vertical, horizontal))
}

/// Power balance of Theorem-style form: the change of the free Hamiltonian
/// along solutions equals its horizontal change plus the collocated supply.
pub fn mech_power_balance(
    sc: &SpaceConnection,
    ch: &ControlledHamiltonian,
    t: f64,
    q: &StateVec,
    p: &StateVec,
) -> Result<MechPowerTerms> {
    let nq = sc.q_dim();
    let chart = MechChart::new(nq)?;
    let x = chart.join(q, p);
    let u = ch.u.eval(t);

    let grad0 = ch.h0.gradient(t, &x);
    let d0_h0 = ch.h0.time_partial(t, &x);
    let grad_ctrl = ch.controlled_gradient(t, &x, &u);
    let (gq_c, gp_c) = split_gradient(&grad_ctrl, nq);
    let (gq_0, gp_0) = split_gradient(&grad0, nq);

    // Vertical fields of the controlled and the free Hamiltonian.
    let vertical_ctrl = chart.join(&gp_c, &(-gq_c));
    let vertical_free = chart.join(&gp_0, &(-gq_0));
    let horizontal_vec = covertical_connection(sc, t, q, p)?;

    let outputs = StateVec::from_iterator(
        ch.hc.len(),
        ch.hc.iter().map(|hc| vertical_ctrl.dot(&hc.gradient(t, &x))),
    );
    let outputs_free = StateVec::from_iterator(
        ch.hc.len(),
        ch.hc.iter().map(|hc| vertical_free.dot(&hc.gradient(t, &x))),
    );
    let supplied = outputs.dot(&u);
    let horizontal = d0_h0 + horizontal_vec.dot(&grad0);

    // Total change of H0 along the full controlled field (which carries the
    // d/dt direction with unit coefficient).
    let full_state_part = &vertical_ctrl + &horizontal_vec;
    let total = d0_h0 + full_state_part.dot(&grad0);

    Ok(MechPowerTerms {
        horizontal,
        supplied,
        outputs,
        total,
        outputs_free,
    })
}

/// Embed a controlled mechanical system as a covariant port-Hamiltonian
/// system on the `(q, p)` chart: canonical symplectic `J`, `R = 0`, input
/// columns `-J dH_c`, Hamiltonian `H0`, and the covertical connection.
pub fn embed_controlled(
    sc: &SpaceConnection,
    h0: &ScalarField,
    hc: &[ScalarField],
) -> Result<PortHamiltonianSystem> {
    let nq = sc.q_dim();
    let chart = MechChart::new(nq)?;
    let n = chart.state_dim();
    let m = hc.len();

    let mut j = Mat::zeros(n, n);
    for i in 0..nq {
        j[(i, nq + i)] = 1.0;
        j[(nq + i, i)] = -1.0;
    }

    let hc_owned: Vec<ScalarField> = hc.to_vec();
    let g = InputField::new(m, move |t, x: &StateVec| {
        let nq = x.len() / 2;
        let mut cols = Mat::zeros(2 * nq, hc_owned.len());
        for (rho, hcf) in hc_owned.iter().enumerate() {
            let grad = hcf.gradient(t, x);
            // -J dHc = (-dHc/dp, +dHc/dq) for the canonical J.
            for a in 0..nq {
                cols[(a, rho)] = -grad[nq + a];
                cols[(nq + a, rho)] = grad[a];
            }
        }
        cols
    });

    let sc_conn = sc.clone();
    let conn = Connection::new(chart.bundle_chart(), move |t, x: &StateVec| {
        let nq = x.len() / 2;
        let q = x.rows(0, nq).into_owned();
        let p = x.rows(nq, nq).into_owned();
        match covertical_connection(&sc_conn, t, &q, &p) {
            Ok(v) => v,
            Err(_) => StateVec::from_element(x.len(), f64::NAN),
        }
    });

    PortHamiltonianSystem::new(
        chart.bundle_chart(),
        StructureField::constant(j),
        DissipationField::zero(n),
        g,
        h0.clone(),
        conn,
    )
}

/// Free (input-less) embedding.
pub fn embed_free(sc: &SpaceConnection, h: &ScalarField) -> Result<PortHamiltonianSystem> {
    embed_controlled(sc, h, &[])
}

/// Kinetic Hamiltonian `|p|^2 / (2 m)` on the `(q, p)` chart.
pub fn kinetic_hamiltonian(nq: usize, mass: f64) -> ScalarField {
    ScalarField::analytic(
        move |_t, x: &StateVec| {
            let p = x.rows(nq, nq);
            0.5 * p.dot(&p) / mass
        },
        |_t, _x| 0.0,
        move |_t, x: &StateVec| {
            let mut g = StateVec::zeros(2 * nq);
            for i in 0..nq {
                g[nq + i] = x[nq + i] / mass;
            }
            g
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rotation_generator(omega: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[0.0, -omega, omega, 0.0])
    }

    fn rotating_connection(omega: f64) -> SpaceConnection {
        let om = rotation_generator(omega);
        let om_j = om.clone();
        SpaceConnection::with_jacobian(2, move |_t, q| &om * q, move |_t, _q| om_j.clone())
    }

    fn kinetic(nq: usize, mass: f64) -> ScalarField {
        kinetic_hamiltonian(nq, mass)
    }

    #[test]
    fn covertical_trivial_is_zero() {
        let sc = SpaceConnection::trivial(2);
        let v = covertical_connection(
            &sc,
            0.0,
            &StateVec::from_vec(vec![1.0, 2.0]),
            &StateVec::from_vec(vec![3.0, 4.0]),
        )
        .unwrap();
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn covertical_rotating_hand_case() {
        // gamma = Omega q with Omega = [[0,-1],[1,0]], q=(1,0), p=(0,1):
        // position part (0,1), momentum part -Omega^T p = (-1, 0).
        let sc = rotating_connection(1.0);
        let v = covertical_connection(
            &sc,
            0.0,
            &StateVec::from_vec(vec![1.0, 0.0]),
            &StateVec::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[2], -1.0);
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn covertical_linear_in_momenta() {
        let sc = rotating_connection(0.7);
        let q = StateVec::from_vec(vec![0.3, -0.8]);
        let p = StateVec::from_vec(vec![1.1, 0.4]);
        let v1 = covertical_connection(&sc, 0.2, &q, &p).unwrap();
        let v2 = covertical_connection(&sc, 0.2, &q, &(&p * 2.0)).unwrap();
        // Position part unchanged, momentum part doubles.
        assert_eq!(v1.rows(0, 2), v2.rows(0, 2));
        assert!((v2.rows(2, 2) - v1.rows(2, 2) * 2.0).norm() < 1e-14);
    }

    #[test]
    fn mech_field_trivial_connection_is_classical() {
        // gamma = 0: classical Hamilton equations; momenta constant whenever
        // H depends on p alone.
        let sc = SpaceConnection::trivial(2);
        let h = kinetic(2, 1.0);
        let q = StateVec::from_vec(vec![0.5, -0.3]);
        let p = StateVec::from_vec(vec![2.0, 1.0]);
        let v = mech_vector_field(&sc, &h, 0.0, &q, &p).unwrap();
        assert!((v.rows(0, 2) - &p).norm() <= 1e-14 * p.norm());
        assert!(v.rows(2, 2).norm() <= 1e-14);
    }

    #[test]
    fn mech_field_rotating_free_particle() {
        // H = |p|^2/2, gamma = Omega q, omega = 1, at q = (1,0), p = (1,0):
        // qdot = p + Omega q = (1, 1); pdot = -Omega^T p = Omega p = (0, 1),
        // consistent with the closed-form momentum solution (cos t, sin t).
        let sc = rotating_connection(1.0);
        let h = kinetic(2, 1.0);
        let q = StateVec::from_vec(vec![1.0, 0.0]);
        let p = StateVec::from_vec(vec![1.0, 0.0]);
        let v = mech_vector_field(&sc, &h, 0.0, &q, &p).unwrap();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(v[2], 0.0, epsilon = 1e-14);
        assert_relative_eq!(v[3], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn split_reassembles_field() {
        let sc = rotating_connection(0.9);
        let h = ScalarField::analytic(
            |_t, x: &StateVec| 0.5 * x.rows(2, 2).dot(&x.rows(2, 2)) + x[0] * x[1],
            |_t, _x| 0.0,
            |_t, x: &StateVec| StateVec::from_vec(vec![x[1], x[0], x[2], x[3]]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let q = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let p = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let (vert, hor) = split_mech_field(&sc, &h, 0.3, &q, &p).unwrap();
            let full = mech_vector_field(&sc, &h, 0.3, &q, &p).unwrap();
            assert!((vert + hor - &full).norm() <= 1e-12 * full.norm().max(1.0));
        }

        // Trivial connection: horizontal part vanishes.
        let sc0 = SpaceConnection::trivial(2);
        let q = StateVec::from_vec(vec![0.2, 0.4]);
        let p = StateVec::from_vec(vec![-0.6, 1.0]);
        let (vert, hor) = split_mech_field(&sc0, &h, 0.0, &q, &p).unwrap();
        assert_eq!(hor.norm(), 0.0);
        let full = mech_vector_field(&sc0, &h, 0.0, &q, &p).unwrap();
        assert!((vert - full).norm() < 1e-14);
    }

    #[test]
    fn split_free_particle_hand_case() {
        let sc = rotating_connection(1.0);
        let h = kinetic(2, 1.0);
        let q = StateVec::from_vec(vec![1.0, 0.0]);
        let p = StateVec::from_vec(vec![1.0, 0.0]);
        let (vert, hor) = split_mech_field(&sc, &h, 0.0, &q, &p).unwrap();
        // vertical = (p, 0), horizontal = (Omega q, -Omega^T p).
        assert!((vert.rows(0, 2) - &p).norm() < 1e-14);
        assert!(vert.rows(2, 2).norm() < 1e-14);
        assert_eq!(hor[0], 0.0);
        assert_eq!(hor[1], 1.0);
        assert_eq!(hor[2], 0.0);
        assert_eq!(hor[3], 1.0);
    }

    #[test]
    fn power_balance_conservative_case() {
        let sc = SpaceConnection::trivial(2);
        let ch = ControlledHamiltonian::new(kinetic(2, 1.0), vec![], InputSignal::zero(0)).unwrap();
        let terms = mech_power_balance(
            &sc,
            &ch,
            0.0,
            &StateVec::from_vec(vec![1.0, 0.0]),
            &StateVec::from_vec(vec![0.0, 2.0]),
        )
        .unwrap();
        assert_eq!(terms.horizontal, 0.0);
        assert_eq!(terms.supplied, 0.0);
        assert_eq!(terms.total, 0.0);
    }

    #[test]
    fn power_balance_rotating_frame_conserves_hamiltonian() {
        // Free particle in the rotating frame: the horizontal change of H
        // vanishes, so H is conserved.
        let sc = rotating_connection(0.5);
        let ch = ControlledHamiltonian::new(kinetic(2, 1.0), vec![], InputSignal::zero(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..50 {
            let q = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let p = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let terms = mech_power_balance(&sc, &ch, 0.0, &q, &p).unwrap();
            assert!(terms.horizontal.abs() < 1e-12);
            assert!(terms.total.abs() < 1e-12);
        }
    }

    #[test]
    fn power_balance_controlled_particle() {
        // nq = 1, H0 = p^2/2, Hc = q, constant u: y = p, supplied = p u.
        let sc = SpaceConnection::trivial(1);
        let h0 = kinetic(1, 1.0);
        let hc = ScalarField::analytic(
            |_t, x: &StateVec| x[0],
            |_t, _x| 0.0,
            |_t, _x| StateVec::from_vec(vec![1.0, 0.0]),
        );
        let u_val = 0.4;
        let ch = ControlledHamiltonian::new(
            h0,
            vec![hc],
            InputSignal::constant(StateVec::from_vec(vec![u_val])),
        )
        .unwrap();
        let q = StateVec::from_vec(vec![0.3]);
        let p = StateVec::from_vec(vec![1.7]);
        let terms = mech_power_balance(&sc, &ch, 0.0, &q, &p).unwrap();
        assert_relative_eq!(terms.outputs[0], p[0], epsilon = 1e-14);
        assert_relative_eq!(terms.supplied, p[0] * u_val, epsilon = 1e-14);
        assert_relative_eq!(terms.total, terms.horizontal + terms.supplied, epsilon = 1e-14);
    }

    #[test]
    fn power_balance_identity_holds_pointwise() {
        let sc = rotating_connection(0.8);
        let h0 = kinetic(2, 2.0);
        let hc1 = ScalarField::analytic(
            |_t, x: &StateVec| x[0],
            |_t, _x| 0.0,
            |_t, _x| StateVec::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
        );
        // A momentum-dependent port: the two output readings differ here.
        let hc2 = ScalarField::analytic(
            |_t, x: &StateVec| x[2] * x[1],
            |_t, _x| 0.0,
            |_t, x: &StateVec| StateVec::from_vec(vec![0.0, x[2], x[1], 0.0]),
        );
        let ch = ControlledHamiltonian::new(
            h0,
            vec![hc1, hc2],
            InputSignal::constant(StateVec::from_vec(vec![0.6, -0.3])),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut saw_difference = false;
        for _ in 0..50 {
            let q = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let p = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let terms = mech_power_balance(&sc, &ch, 0.4, &q, &p).unwrap();
            let residual = (terms.total - terms.horizontal - terms.supplied).abs();
            assert!(residual <= 1e-12, "balance residual {residual}");
            if (terms.outputs.clone() - &terms.outputs_free).norm() > 1e-9 {
                saw_difference = true;
            }
        }
        assert!(saw_difference, "expected the two output readings to differ");
    }

    #[test]
    fn embedding_matches_mech_field() {
        let sc = rotating_connection(0.5);
        let h0 = kinetic(2, 1.0);
        let hc = ScalarField::analytic(
            |_t, x: &StateVec| x[0] + 0.5 * x[1],
            |_t, _x| 0.0,
            |_t, _x| StateVec::from_vec(vec![1.0, 0.5, 0.0, 0.0]),
        );
        let sys = embed_controlled(&sc, &h0, std::slice::from_ref(&hc)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..100 {
            let q = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let p = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let u = StateVec::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let chart = MechChart::new(2).unwrap();
            let x = chart.join(&q, &p);
            let embedded = sys.eval_dynamics(0.2, &x, &u).unwrap();

            // Controlled Hamiltonian H0 - u Hc, evaluated through the field.
            let u0 = u[0];
            let h0c = h0.clone();
            let hcc = hc.clone();
            let controlled = ScalarField::analytic(
                move |t, x: &StateVec| h0c.value(t, x) - u0 * hcc.value(t, x),
                |_t, _x| 0.0,
                {
                    let h0g = h0.clone();
                    let hcg = hc.clone();
                    move |t, x: &StateVec| h0g.gradient(t, x) - hcg.gradient(t, x) * u0
                },
            );
            let direct = mech_vector_field(&sc, &controlled, 0.2, &q, &p).unwrap();
            assert!(
                (embedded - &direct).norm() <= 1e-12 * direct.norm().max(1.0),
                "embedding disagrees with the mechanical field"
            );
        }
    }

    #[test]
    fn trivial_gamma_reduction_to_textbook_form() {
        let sc = SpaceConnection::trivial(2);
        let h = ScalarField::analytic(
            |_t, x: &StateVec| 0.5 * x.rows(2, 2).dot(&x.rows(2, 2)) + 0.5 * x.rows(0, 2).dot(&x.rows(0, 2)),
            |_t, _x| 0.0,
            |_t, x: &StateVec| x.clone(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..50 {
            let q = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let p = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let v = mech_vector_field(&sc, &h, 0.0, &q, &p).unwrap();
            // Textbook: qdot = dH/dp = p, pdot = -dH/dq = -q.
            assert!((v.rows(0, 2) - &p).norm() <= 1e-14 * p.norm().max(1.0));
            assert!((v.rows(2, 2) + &q).norm() <= 1e-14 * q.norm().max(1.0));
        }
    }
}
