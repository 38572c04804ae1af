//! The covariant port-Hamiltonian system: dynamics evaluation, collocated
//! output, and the power decomposition.
//!
//! Dynamics read `x0 = Gamma0 + (J - R) dH + G u`; with the trivial connection
//! this is exactly the time-invariant port-Hamiltonian form.

use std::sync::Arc;

use crate::fields::{
    check_structure, DissipationField, InputField, ScalarField, StructureField, StructureReport,
};
use crate::geometry::{BundleChart, Connection};
use crate::{Error, Result, StateVec};

/// Covariant port-Hamiltonian system on a bundle chart.
#[derive(Clone)]
pub struct PortHamiltonianSystem {
    chart: BundleChart,
    j: StructureField,
    r: DissipationField,
    g: InputField,
    h: ScalarField,
    conn: Connection,
}

impl PortHamiltonianSystem {
    /// Assemble a system. Component dimensions and the algebraic structure of
    /// `J` and `R` (skew / symmetric PSD, via [`check_structure`]) are probed
    /// at `(t, x) = (0, 0)`.
    pub fn new(
        chart: BundleChart,
        j: StructureField,
        r: DissipationField,
        g: InputField,
        h: ScalarField,
        conn: Connection,
    ) -> Result<Self> {
        let n = chart.state_dim();
        conn.chart().check_dim(n, "PortHamiltonianSystem chart/connection")?;
        let probe = StateVec::zeros(n);
        let jm = j.eval(0.0, &probe)?;
        if jm.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "PortHamiltonianSystem J",
                expected: n,
                actual: jm.nrows(),
            });
        }
        let rm = r.eval(0.0, &probe)?;
        if rm.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "PortHamiltonianSystem R",
                expected: n,
                actual: rm.nrows(),
            });
        }
        let scale = jm.amax().max(rm.amax()).max(1.0);
        if jm.iter().all(|v| v.is_finite()) && rm.iter().all(|v| v.is_finite()) {
            let report = check_structure(&j, &r, &[(0.0, probe.clone())], 1e-10 * scale)?;
            if !report.passed() {
                return Err(Error::InvalidConfig(format!(
                    "J/R structure violated at the probe point: skew residual {:.3e}, \
                     symmetry residual {:.3e}, min eigenvalue {:.3e}",
                    report.max_skew_residual,
                    report.max_symmetry_residual,
                    report.min_eigenvalue
                )));
            }
        }
        let gm = g.eval(0.0, &probe)?;
        if gm.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "PortHamiltonianSystem G",
                expected: n,
                actual: gm.nrows(),
            });
        }
        let grad = h.gradient(0.0, &probe);
        if grad.len() != n {
            return Err(Error::DimensionMismatch {
                context: "PortHamiltonianSystem H gradient",
                expected: n,
                actual: grad.len(),
            });
        }
        Ok(Self {
            chart,
            j,
            r,
            g,
            h,
            conn,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.chart.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.g.input_dim()
    }

    pub fn chart(&self) -> &BundleChart {
        &self.chart
    }

    pub fn structure(&self) -> &StructureField {
        &self.j
    }

    pub fn dissipation(&self) -> &DissipationField {
        &self.r
    }

    pub fn input_field(&self) -> &InputField {
        &self.g
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.h
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    /// Skew/symmetry/PSD checks of J and R at the given sample points.
    pub fn check_structure_at(
        &self,
        samples: &[(f64, StateVec)],
        tol: f64,
    ) -> Result<StructureReport> {
        check_structure(&self.j, &self.r, samples, tol)
    }

    fn check_input(&self, u: &StateVec) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input vector",
                expected: self.input_dim(),
                actual: u.len(),
            });
        }
        Ok(())
    }

    /// Vertical part of the Hamiltonian vector field:
    /// `v^a = (J - R) dH + G u` at `(t, x)`.
    pub fn vertical_field(&self, t: f64, x: &StateVec, u: &StateVec) -> Result<StateVec> {
        self.chart.check_dim(x.len(), "vertical_field state")?;
        self.check_input(u)?;
        let grad = self.h.gradient(t, x);
        let jm = self.j.eval(t, x)?;
        let rm = self.r.eval(t, x)?;
        let gm = self.g.eval(t, x)?;
        Ok((jm - rm) * grad + gm * u)
    }

    /// Full derivative coordinate `x0 = Gamma0 + (J - R) dH + G u`; the
    /// right-hand side to integrate.
    pub fn eval_dynamics(&self, t: f64, x: &StateVec, u: &StateVec) -> Result<StateVec> {
        let gamma = self.conn.coeffs(t, x)?;
        Ok(gamma + self.vertical_field(t, x, u)?)
    }

    /// Collocated output `y_i = G_i^a dH/dx^a`, so that `y . u` is the power
    /// supplied through the ports.
    pub fn collocated_output(&self, t: f64, x: &StateVec) -> Result<StateVec> {
        self.chart.check_dim(x.len(), "collocated_output state")?;
        let grad = self.h.gradient(t, x);
        let gm = self.g.eval(t, x)?;
        Ok(gm.transpose() * grad)
    }

    /// Decomposition of the total time change of the Hamiltonian along
    /// solutions. The J-term vanishes identically by skew-symmetry.
    pub fn power_decomposition(&self, t: f64, x: &StateVec, u: &StateVec) -> Result<PowerTerms> {
        self.chart.check_dim(x.len(), "power_decomposition state")?;
        self.check_input(u)?;
        let grad = self.h.gradient(t, x);
        let gamma = self.conn.coeffs(t, x)?;
        let horizontal = self.h.time_partial(t, x) + gamma.dot(&grad);
        let rm = self.r.eval(t, x)?;
        let dissipation = -grad.dot(&(&rm * &grad));
        let gm = self.g.eval(t, x)?;
        let supplied = grad.dot(&(gm * u));
        Ok(PowerTerms {
            horizontal,
            dissipation,
            supplied,
            total: horizontal + dissipation + supplied,
        })
    }
}

/// Time-dependent input signal `u(t)`.
#[derive(Clone)]
pub struct InputSignal {
    u: Arc<dyn Fn(f64) -> StateVec + Send + Sync>,
    dim: usize,
}

impl InputSignal {
    pub fn new<F>(dim: usize, u: F) -> Self
    where
        F: Fn(f64) -> StateVec + Send + Sync + 'static,
    {
        Self { u: Arc::new(u), dim }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, move |_t| StateVec::zeros(dim))
    }

    pub fn constant(value: StateVec) -> Self {
        let dim = value.len();
        Self::new(dim, move |_t| value.clone())
    }

    /// `u_i(t) = amplitude_i sin(2 pi frequency_i t + phase_i)`.
    pub fn sinusoid(amplitude: StateVec, frequency: StateVec, phase: StateVec) -> Result<Self> {
        let dim = amplitude.len();
        if frequency.len() != dim || phase.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "InputSignal::sinusoid",
                expected: dim,
                actual: frequency.len().min(phase.len()),
            });
        }
        Ok(Self::new(dim, move |t| {
            StateVec::from_iterator(
                dim,
                (0..dim).map(|i| {
                    amplitude[i] * (2.0 * std::f64::consts::PI * frequency[i] * t + phase[i]).sin()
                }),
            )
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, t: f64) -> StateVec {
        (self.u)(t)
    }
}

/// Power-flow terms of the covariant decomposition: `total` is the time
/// change of H along solutions, split into the frame (horizontal),
/// dissipative, and port (supplied) contributions.
#[derive(Debug, Clone, Copy)]
pub struct PowerTerms {
    pub horizontal: f64,
    pub dissipation: f64,
    pub supplied: f64,
    pub total: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Mat, StateVec};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn chart(n: usize) -> BundleChart {
        BundleChart::new(n).unwrap()
    }

    fn canonical_j() -> Mat {
        Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }

    fn quadratic_h() -> ScalarField {
        ScalarField::analytic(
            |_t, x: &StateVec| 0.5 * x.dot(x),
            |_t, _x| 0.0,
            |_t, x: &StateVec| x.clone(),
        )
    }

    fn oscillator(r22: f64, g: Mat) -> PortHamiltonianSystem {
        PortHamiltonianSystem::new(
            chart(2),
            StructureField::constant(canonical_j()),
            DissipationField::constant(Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, r22])),
            InputField::constant(g),
            quadratic_h(),
            Connection::trivial(chart(2)),
        )
        .unwrap()
    }

    /// Independently coded time-invariant form of the standard equations,
    /// used as the reduction oracle.
    struct TimeInvariantOracle {
        j: Mat,
        r: Mat,
        g: Mat,
    }

    impl TimeInvariantOracle {
        fn dynamics(&self, grad: &StateVec, u: &StateVec) -> StateVec {
            (&self.j - &self.r) * grad + &self.g * u
        }
        fn output(&self, grad: &StateVec) -> StateVec {
            self.g.transpose() * grad
        }
    }

    #[test]
    fn vertical_field_oscillator() {
        let sys = oscillator(0.0, Mat::zeros(2, 0));
        let x = StateVec::from_vec(vec![1.0, 0.0]);
        let v = sys.vertical_field(0.0, &x, &StateVec::zeros(0)).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], -1.0);
    }

    #[test]
    fn vertical_field_constant_h_is_zero() {
        let sys = PortHamiltonianSystem::new(
            chart(2),
            StructureField::constant(canonical_j()),
            DissipationField::zero(2),
            InputField::none(2),
            ScalarField::analytic(|_t, _x| 3.0, |_t, _x| 0.0, |_t, _x| StateVec::zeros(2)),
            Connection::trivial(chart(2)),
        )
        .unwrap();
        let v = sys
            .vertical_field(0.5, &StateVec::from_vec(vec![2.0, -1.0]), &StateVec::zeros(0))
            .unwrap();
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn vertical_field_with_dissipation() {
        let sys = oscillator(0.5, Mat::zeros(2, 0));
        let x = StateVec::from_vec(vec![0.0, 1.0]);
        let v = sys.vertical_field(0.0, &x, &StateVec::zeros(0)).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], -0.5);
    }

    #[test]
    fn eval_dynamics_pure_frame_drift() {
        // n=1, Gamma0 = -cos t, J=R=G=0: x0 = -cos t.
        let sys = PortHamiltonianSystem::new(
            chart(1),
            StructureField::constant(Mat::zeros(1, 1)),
            DissipationField::zero(1),
            InputField::none(1),
            ScalarField::analytic(|_t, _x| 0.0, |_t, _x| 0.0, |_t, _x| StateVec::zeros(1)),
            Connection::new(chart(1), |t, _x| StateVec::from_vec(vec![-t.cos()])),
        )
        .unwrap();
        for t in [0.0, 0.4, 2.0] {
            let x0 = sys
                .eval_dynamics(t, &StateVec::zeros(1), &StateVec::zeros(0))
                .unwrap();
            assert_relative_eq!(x0[0], -t.cos(), epsilon = 1e-15);
        }
    }

    #[test]
    fn trivial_connection_reduces_to_time_invariant_form() {
        let g = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = oscillator(0.5, g.clone());
        let oracle = TimeInvariantOracle {
            j: canonical_j(),
            r: Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.5]),
            g,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let u = StateVec::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let got = sys.eval_dynamics(0.7, &x, &u).unwrap();
            let want = oracle.dynamics(&x, &u);
            assert!((got - &want).norm() <= 1e-14 * want.norm().max(1.0));
            let y_got = sys.collocated_output(0.7, &x).unwrap();
            let y_want = oracle.output(&x);
            assert!((y_got - &y_want).norm() <= 1e-14 * y_want.norm().max(1.0));
        }
    }

    #[test]
    fn collocated_output_hand_case() {
        let g = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = oscillator(0.0, g);
        let y = sys
            .collocated_output(0.0, &StateVec::from_vec(vec![0.0, 2.0]))
            .unwrap();
        assert_eq!(y[0], 2.0);

        let sys0 = oscillator(0.0, Mat::zeros(2, 1));
        let y = sys0
            .collocated_output(0.0, &StateVec::from_vec(vec![1.0, 2.0]))
            .unwrap();
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn supplied_power_equals_output_times_input() {
        let g = Mat::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let sys = oscillator(0.1, g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let u = StateVec::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let y = sys.collocated_output(0.0, &x).unwrap();
            let p = sys.power_decomposition(0.0, &x, &u).unwrap();
            assert!((p.supplied - y.dot(&u)).abs() <= 1e-12 * y.dot(&u).abs().max(1.0));
        }
    }

    #[test]
    fn power_decomposition_cases() {
        // Conservative time-invariant case: everything zero.
        let sys = oscillator(0.0, Mat::zeros(2, 0));
        let p = sys
            .power_decomposition(0.0, &StateVec::from_vec(vec![1.0, 1.0]), &StateVec::zeros(0))
            .unwrap();
        assert_eq!(p.horizontal, 0.0);
        assert_eq!(p.dissipation, 0.0);
        assert_eq!(p.supplied, 0.0);
        assert_eq!(p.total, 0.0);

        // Damped oscillator at x = (0, 1): total = -0.5.
        let sys = oscillator(0.5, Mat::zeros(2, 0));
        let p = sys
            .power_decomposition(0.0, &StateVec::from_vec(vec![0.0, 1.0]), &StateVec::zeros(0))
            .unwrap();
        assert_relative_eq!(p.total, -0.5, epsilon = 1e-15);

        // With input: total = -dH R dH + u . y.
        let g = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = oscillator(0.5, g);
        let x = StateVec::from_vec(vec![0.3, -0.8]);
        let u = StateVec::from_vec(vec![0.7]);
        let p = sys.power_decomposition(0.2, &x, &u).unwrap();
        let y = sys.collocated_output(0.2, &x).unwrap();
        let expect = -0.5 * x[1] * x[1] + u.dot(&y);
        assert_relative_eq!(p.total, expect, epsilon = 1e-14);
    }

    #[test]
    fn passivity_inequality() {
        // Gamma0 = 0 and d0H = 0: total <= supplied since dissipation <= 0.
        let g = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = oscillator(0.5, g);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let x = StateVec::from_vec(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let u = StateVec::from_vec(vec![rng.gen_range(-2.0..2.0)]);
            let p = sys.power_decomposition(0.0, &x, &u).unwrap();
            assert!(p.total <= p.supplied + 1e-10);
        }
    }

    #[test]
    fn autonomous_system_has_empty_output() {
        let sys = oscillator(0.0, Mat::zeros(2, 0));
        assert_eq!(sys.input_dim(), 0);
        let y = sys
            .collocated_output(0.0, &StateVec::from_vec(vec![1.0, 2.0]))
            .unwrap();
        assert_eq!(y.len(), 0);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let sys = oscillator(0.0, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
        let bad_x = StateVec::zeros(3);
        assert!(sys.eval_dynamics(0.0, &bad_x, &StateVec::zeros(1)).is_err());
        let bad_u = StateVec::zeros(2);
        assert!(sys
            .eval_dynamics(0.0, &StateVec::zeros(2), &bad_u)
            .is_err());
    }

    #[test]
    fn input_signal_shapes() {
        let s = InputSignal::sinusoid(
            StateVec::from_vec(vec![2.0]),
            StateVec::from_vec(vec![0.5]),
            StateVec::from_vec(vec![0.0]),
        )
        .unwrap();
        assert_relative_eq!(s.eval(0.5)[0], 2.0 * (std::f64::consts::PI * 0.5).sin());
        let z = InputSignal::zero(3);
        assert_eq!(z.eval(1.0).len(), 3);
    }
}
