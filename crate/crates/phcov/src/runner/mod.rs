//! Numerical integration of covariant dynamics, trajectory and power-ledger
//! recording, the builtin rotating-frame and tracking scenarios, scenario-file
//! execution, and CSV emission.

mod csv;
mod scenario;

pub use csv::{write_ledger_csv, write_trajectory_csv};
pub use scenario::{
    builtin_scenarios, run_scenario, CheckResult, Overrides, ScenarioOutcome,
};

use crate::mechanics::{embed_free, kinetic_hamiltonian, SpaceConnection};
use crate::systems::{InputSignal, PortHamiltonianSystem, PowerTerms};
use crate::{Error, Mat, Result, StateVec};

/// Fixed-step integration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical explicit 4th-order Runge-Kutta.
    Rk4,
    /// Implicit midpoint (symplectic Gauss method with one stage); conserves
    /// quadratic first integrals up to the Newton tolerance.
    ImplicitMidpoint,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::ImplicitMidpoint => "midpoint",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "midpoint" => Ok(Method::ImplicitMidpoint),
            other => Err(Error::InvalidConfig(format!(
                "unknown method `{other}` (expected rk4 or midpoint)"
            ))),
        }
    }
}

/// Fixed-step integrator configuration.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub t_span: (f64, f64),
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl IntegratorConfig {
    pub fn new(method: Method, dt: f64, t0: f64, t1: f64) -> Result<Self> {
        let cfg = Self {
            method,
            dt,
            t_span: (t0, t1),
            newton_tol: 1e-12,
            newton_max_iter: 50,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.t_span;
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(t1 - t0).is_finite() || t1 <= t0 {
            return Err(Error::InvalidConfig("t1 must exceed t0".into()));
        }
        if self.dt > t1 - t0 {
            return Err(Error::InvalidConfig("dt exceeds the time span".into()));
        }
        if !self.newton_tol.is_finite() || self.newton_tol <= 0.0 || self.newton_max_iter == 0 {
            return Err(Error::InvalidConfig("Newton parameters must be positive".into()));
        }
        Ok(())
    }

    fn step_count(&self) -> usize {
        (((self.t_span.1 - self.t_span.0) / self.dt).round() as usize).max(1)
    }
}

/// Time-sampled states, inputs, collocated outputs, power-ledger entries,
/// and Hamiltonian values along an integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVec>,
    inputs: Vec<StateVec>,
    outputs: Vec<StateVec>,
    ledger: Vec<PowerTerms>,
    energies: Vec<f64>,
}

impl Trajectory {
    /// Assemble a trajectory from externally produced state samples, e.g. a
    /// closed-form solution on a grid. Inputs, outputs, ledger entries, and
    /// energies are filled with empty/zero placeholders; only `times` and
    /// `states` carry information.
    pub fn from_states(times: Vec<f64>, states: Vec<StateVec>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::DimensionMismatch {
                context: "Trajectory::from_states",
                expected: times.len(),
                actual: states.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::TrajectoryTooShort { needed: 1, have: 0 });
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        let len = times.len();
        Ok(Self {
            times,
            states,
            inputs: vec![StateVec::zeros(0); len],
            outputs: vec![StateVec::zeros(0); len],
            ledger: vec![
                PowerTerms {
                    horizontal: 0.0,
                    dissipation: 0.0,
                    supplied: 0.0,
                    total: 0.0,
                };
                len
            ],
            energies: vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVec] {
        &self.states
    }

    pub fn inputs(&self) -> &[StateVec] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[StateVec] {
        &self.outputs
    }

    pub fn ledger(&self) -> &[PowerTerms] {
        &self.ledger
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Finite-differenced `d/dt H` along the trajectory: centered on interior
    /// samples, 2nd-order one-sided at the ends.
    pub fn fd_total(&self) -> Vec<f64> {
        let n = self.len();
        let e = &self.energies;
        if n < 3 {
            return vec![f64::NAN; n];
        }
        let dt = self.times[1] - self.times[0];
        let mut out = Vec::with_capacity(n);
        out.push((-3.0 * e[0] + 4.0 * e[1] - e[2]) / (2.0 * dt));
        for k in 1..n - 1 {
            out.push((e[k + 1] - e[k - 1]) / (2.0 * dt));
        }
        out.push((3.0 * e[n - 1] - 4.0 * e[n - 2] + e[n - 3]) / (2.0 * dt));
        out
    }

    /// Per-sample `|fd_total - ledger.total|`.
    pub fn ledger_residuals(&self) -> Vec<f64> {
        self.fd_total()
            .iter()
            .zip(self.ledger.iter())
            .map(|(fd, p)| (fd - p.total).abs())
            .collect()
    }

    /// Max deviation of the Hamiltonian from its initial value.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.energies[0];
        self.energies
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
    }
}

fn all_finite(x: &StateVec) -> bool {
    x.iter().all(|v| v.is_finite())
}

fn rk4_step(
    sys: &PortHamiltonianSystem,
    input: &InputSignal,
    t: f64,
    x: &StateVec,
    dt: f64,
) -> Result<StateVec> {
    let half = 0.5 * dt;
    let k1 = sys.eval_dynamics(t, x, &input.eval(t))?;
    let u_mid = input.eval(t + half);
    let k2 = sys.eval_dynamics(t + half, &(x + &k1 * half), &u_mid)?;
    let k3 = sys.eval_dynamics(t + half, &(x + &k2 * half), &u_mid)?;
    let k4 = sys.eval_dynamics(t + dt, &(x + &k3 * dt), &input.eval(t + dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn midpoint_step(
    sys: &PortHamiltonianSystem,
    input: &InputSignal,
    t: f64,
    x: &StateVec,
    cfg: &IntegratorConfig,
    step_index: usize,
) -> Result<StateVec> {
    let n = x.len();
    let dt = cfg.dt;
    let tol = cfg.newton_tol;
    let max_iter = cfg.newton_max_iter;
    let t_mid = t + 0.5 * dt;
    let u_mid = input.eval(t_mid);
    let f = |s: &StateVec| -> Result<StateVec> { sys.eval_dynamics(t_mid, s, &u_mid) };
    let residual = |s: &StateVec| -> Result<StateVec> { Ok(s - x - f(s)? * (0.5 * dt)) };

    // Half-step explicit predictor.
    let mut s = x + f(x)? * (0.5 * dt);
    let mut r = residual(&s)?;
    let mut polished = false;
    for iter in 0..max_iter {
        let r_norm = r.amax();
        if !r_norm.is_finite() {
            return Err(Error::NonFiniteState { step: step_index });
        }
        if r_norm <= tol {
            if polished {
                return Ok(s * 2.0 - x);
            }
            // One extra iteration after meeting the tolerance keeps
            // quadratic-invariant drift at rounding level.
            polished = true;
        }

        // Forward-difference Jacobian of the stage residual.
        let mut jac = Mat::identity(n, n);
        let fs = f(&s)?;
        let mut sp = s.clone();
        for j in 0..n {
            let h = 1.5e-8 * s[j].abs().max(1.0);
            sp[j] = s[j] + h;
            let col = (f(&sp)? - &fs) * (-0.5 * dt / h);
            sp[j] = s[j];
            for i in 0..n {
                jac[(i, j)] += col[i];
            }
        }
        let delta = jac
            .lu()
            .solve(&(-&r))
            .ok_or(Error::Singular("implicit midpoint stage Jacobian"))?;

        // Damped update: backtrack until the residual shrinks.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &s + &delta * lambda;
            let r_trial = residual(&trial)?;
            if r_trial.amax() < r_norm || r_trial.amax() <= tol {
                s = trial;
                r = r_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence {
                step: step_index,
                iterations: iter + 1,
                residual: r_norm,
            });
        }
    }
    let r_norm = r.amax();
    if r_norm <= tol {
        return Ok(s * 2.0 - x);
    }
    Err(Error::NewtonDivergence {
        step: step_index,
        iterations: max_iter,
        residual: r_norm,
    })
}

/// Fixed-step integration of `x0 = Gamma0 + (J - R) dH + G u` from `x0` over
/// the configured span, recording state, input, collocated output, power
/// terms, and Hamiltonian value at every step.
pub fn integrate(
    sys: &PortHamiltonianSystem,
    input: &InputSignal,
    x0: &StateVec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "integrate initial state",
            expected: sys.state_dim(),
            actual: x0.len(),
        });
    }
    if input.dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "integrate input signal",
            expected: sys.input_dim(),
            actual: input.dim(),
        });
    }
    let steps = cfg.step_count();
    let (t0, _) = cfg.t_span;
    let dt = cfg.dt;

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps + 1);
    let mut ledger = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps + 1);

    let record = |t: f64,
                      x: &StateVec,
                      times: &mut Vec<f64>,
                      states: &mut Vec<StateVec>,
                      inputs: &mut Vec<StateVec>,
                      outputs: &mut Vec<StateVec>,
                      ledger: &mut Vec<PowerTerms>,
                      energies: &mut Vec<f64>|
     -> Result<()> {
        let u = input.eval(t);
        outputs.push(sys.collocated_output(t, x)?);
        ledger.push(sys.power_decomposition(t, x, &u)?);
        energies.push(sys.hamiltonian().value(t, x));
        times.push(t);
        states.push(x.clone());
        inputs.push(u);
        Ok(())
    };

    let mut x = x0.clone();
    record(
        t0, &x, &mut times, &mut states, &mut inputs, &mut outputs, &mut ledger, &mut energies,
    )?;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        x = match cfg.method {
            Method::Rk4 => rk4_step(sys, input, t, &x, dt)?,
            Method::ImplicitMidpoint => midpoint_step(sys, input, t, &x, cfg, k)?,
        };
        if !all_finite(&x) {
            return Err(Error::NonFiniteState { step: k });
        }
        record(
            t0 + (k + 1) as f64 * dt,
            &x,
            &mut times,
            &mut states,
            &mut inputs,
            &mut outputs,
            &mut ledger,
            &mut energies,
        )?;
    }

    Ok(Trajectory {
        times,
        states,
        inputs,
        outputs,
        ledger,
        energies,
    })
}

/// Parameters of the rotating free-particle scenario.
#[derive(Debug, Clone, Copy)]
pub struct RotatingFrameSpec {
    pub omega: f64,
    pub mass: f64,
    pub q0: [f64; 2],
    pub p0: [f64; 2],
}

impl Default for RotatingFrameSpec {
    fn default() -> Self {
        Self {
            omega: 0.5,
            mass: 1.0,
            q0: [0.0, 0.0],
            p0: [1.0, 0.0],
        }
    }
}

impl RotatingFrameSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.mass.is_finite() || self.mass <= 0.0 {
            return Err(Error::InvalidConfig("mass must be positive".into()));
        }
        Ok(())
    }
}

/// The free particle in both frames: inertial (trivial connection) and
/// rotating (`gamma = Omega qbar`), each available as mechanical data and as
/// an embedded port-Hamiltonian system.
pub struct RotatingFramePair {
    pub spec: RotatingFrameSpec,
    pub inertial: PortHamiltonianSystem,
    pub rotating: PortHamiltonianSystem,
    pub inertial_space: SpaceConnection,
    pub rotating_space: SpaceConnection,
}

impl RotatingFramePair {
    pub fn initial_state(&self) -> StateVec {
        StateVec::from_vec(vec![
            self.spec.q0[0],
            self.spec.q0[1],
            self.spec.p0[0],
            self.spec.p0[1],
        ])
    }

    /// Rotation matrix of the moving chart at time `t`.
    pub fn rotation(&self, t: f64) -> Mat {
        let a = self.spec.omega * t;
        Mat::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
    }

    /// Map an inertial state to the rotating chart: positions by `R(t)`,
    /// momenta by the inverse-transpose (covector) rule.
    pub fn map_to_rotating(&self, t: f64, x: &StateVec) -> Result<StateVec> {
        let r = self.rotation(t);
        let q = x.rows(0, 2).into_owned();
        let p = x.rows(2, 2).into_owned();
        let q_bar = &r * q;
        let p_bar = r
            .transpose()
            .lu()
            .solve(&p)
            .ok_or(Error::Singular("rotation matrix"))?;
        let mut out = StateVec::zeros(4);
        out.rows_mut(0, 2).copy_from(&q_bar);
        out.rows_mut(2, 2).copy_from(&p_bar);
        Ok(out)
    }
}

/// Build the inertial and rotating-frame representations of the free
/// particle.
pub fn rotating_frame_scenario(spec: &RotatingFrameSpec) -> Result<RotatingFramePair> {
    spec.validate()?;
    let h = kinetic_hamiltonian(2, spec.mass);

    let inertial_space = SpaceConnection::trivial(2);
    let inertial = embed_free(&inertial_space, &h)?;

    let omega = Mat::from_row_slice(2, 2, &[0.0, -spec.omega, spec.omega, 0.0]);
    let om = omega.clone();
    let rotating_space =
        SpaceConnection::with_jacobian(2, move |_t, q| &om * q, move |_t, _q| omega.clone());
    let rotating = embed_free(&rotating_space, &h)?;

    Ok(RotatingFramePair {
        spec: *spec,
        inertial,
        rotating,
        inertial_space,
        rotating_space,
    })
}

/// Residual of the second-order rotating-frame equation
/// `d00 s - 2 Omega d0 s + Omega^2 s = 0` (constant `Omega`) per interior
/// sample, with derivatives by central differences on the trajectory grid.
/// Small residuals certify that the covariant first-order equations
/// reproduce the classical Coriolis/centrifugal form.
pub fn coriolis_residual(traj: &Trajectory, omega: f64) -> Result<Vec<f64>> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::TrajectoryTooShort { needed: 3, have: n });
    }
    let dt = traj.times()[1] - traj.times()[0];
    let om = Mat::from_row_slice(2, 2, &[0.0, -omega, omega, 0.0]);
    let om2 = &om * &om;
    let pos = |k: usize| traj.states()[k].rows(0, 2).into_owned();
    let mut out = Vec::with_capacity(n - 2);
    for k in 1..n - 1 {
        let s = pos(k);
        let d1 = (pos(k + 1) - pos(k - 1)) / (2.0 * dt);
        let d2 = (pos(k + 1) - &s * 2.0 + pos(k - 1)) / (dt * dt);
        let lhs = d2 - &om * d1 * 2.0 + &om2 * s;
        out.push(lhs.norm());
    }
    Ok(out)
}

/// Outcome of the inertial-vs-rotating comparison.
#[derive(Debug, Clone)]
pub struct FrameEquivalenceReport {
    pub max_discrepancy: f64,
    pub per_sample: Vec<f64>,
}

/// Simulate both frames independently, map the inertial trajectory into the
/// rotating chart, and report the worst state discrepancy.
pub fn frame_equivalence_check(
    spec: &RotatingFrameSpec,
    cfg: &IntegratorConfig,
) -> Result<FrameEquivalenceReport> {
    let pair = rotating_frame_scenario(spec)?;
    let x0 = pair.initial_state();
    let input = InputSignal::zero(0);
    let traj_in = integrate(&pair.inertial, &input, &x0, cfg)?;
    let traj_rot = integrate(&pair.rotating, &input, &x0, cfg)?;
    let mut per_sample = Vec::with_capacity(traj_in.len());
    let mut worst = 0.0f64;
    for k in 0..traj_in.len() {
        let mapped = pair.map_to_rotating(traj_in.times()[k], &traj_in.states()[k])?;
        let d = (mapped - &traj_rot.states()[k]).amax();
        worst = worst.max(d);
        per_sample.push(d);
    }
    Ok(FrameEquivalenceReport {
        max_discrepancy: worst,
        per_sample,
    })
}
