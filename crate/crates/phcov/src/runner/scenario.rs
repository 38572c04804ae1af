//! Declarative scenario files (TOML) and the builtin scenarios.
//!
//! User-defined systems are restricted to constant `J`, `R`, `G`, a quadratic
//! Hamiltonian, and connection coefficients affine in `t`, so files stay
//! declarative; arbitrary systems are reachable through the library API.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    coriolis_residual, frame_equivalence_check, integrate, write_ledger_csv,
    write_trajectory_csv, IntegratorConfig, Method, RotatingFrameSpec, Trajectory,
};
use crate::fields::{grad_check, DissipationField, InputField, ScalarField, StructureField};
use crate::geometry::{BundleChart, Connection};
use crate::systems::{InputSignal, PortHamiltonianSystem};
use crate::tracking::{build_error_system, solve_error_matching_lq, verify_error_matching, ReferenceTrajectory};
use crate::transform::Region;
use crate::{Error, Mat, Result, StateVec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: Option<String>,
    system: Option<SystemBlock>,
    connection: Option<ConnectionBlock>,
    integrator: Option<IntegratorBlock>,
    initial: Option<InitialBlock>,
    input: Option<InputBlock>,
    #[serde(rename = "rotating-frame")]
    rotating_frame: Option<RotatingFrameBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemBlock {
    n: usize,
    m: usize,
    /// Row-major n x n constants.
    j: Vec<f64>,
    r: Vec<f64>,
    /// Row-major n x m.
    g: Vec<f64>,
    /// Quadratic Hamiltonian H = x^T q x / 2 + b . x; q row-major symmetric.
    q: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectionBlock {
    constant: Vec<f64>,
    slope: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorBlock {
    method: String,
    dt: f64,
    t0: f64,
    t1: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialBlock {
    state: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputBlock {
    kind: String,
    value: Option<Vec<f64>>,
    amplitude: Option<Vec<f64>>,
    frequency: Option<Vec<f64>>,
    phase: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RotatingFrameBlock {
    omega: Option<f64>,
    mass: Option<f64>,
    q0: Option<[f64; 2]>,
    p0: Option<[f64; 2]>,
}

/// CLI-level overrides; flags beat file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub method: Option<Method>,
}

/// One named invariant check with its measured value and threshold.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn upper(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

/// Outcome of one scenario run: checks plus written artifacts.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<PathBuf>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Builtin scenario names with one-line descriptions.
pub fn builtin_scenarios() -> &'static [(&'static str, &'static str)] {
    &[
        (
            "rotating-frame",
            "free particle in inertial vs rotating coordinates: frame equivalence, \
             energy conservation, Coriolis recovery",
        ),
        (
            "tracking-demo",
            "oscillator tracking a circular reference: error system, zero-error \
             invariance, matching Hamiltonian",
        ),
    ]
}

fn parse_file(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))
}

fn row_major(name: &str, data: &[f64], rows: usize, cols: usize) -> Result<Mat> {
    if data.len() != rows * cols {
        return Err(Error::Scenario(format!(
            "`{name}` must have {rows}x{cols} = {} entries, found {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(Mat::from_row_slice(rows, cols, data))
}

fn integrator_config(
    block: Option<&IntegratorBlock>,
    default: (Method, f64, f64, f64),
    overrides: &Overrides,
) -> Result<IntegratorConfig> {
    let (mut method, mut dt, mut t0, mut t1) = default;
    if let Some(b) = block {
        method = b.method.parse()?;
        dt = b.dt;
        t0 = b.t0;
        t1 = b.t1;
    }
    if let Some(d) = overrides.dt {
        dt = d;
    }
    if let Some(m) = overrides.method {
        method = m;
    }
    IntegratorConfig::new(method, dt, t0, t1)
}

fn input_signal(block: Option<&InputBlock>, m: usize) -> Result<InputSignal> {
    let Some(b) = block else {
        return Ok(InputSignal::zero(m));
    };
    let need = |field: Option<&Vec<f64>>, key: &str| -> Result<StateVec> {
        let v = field.ok_or_else(|| {
            Error::Scenario(format!("input kind `{}` requires key `{key}`", b.kind))
        })?;
        if v.len() != m {
            return Err(Error::Scenario(format!(
                "input `{key}` must have {m} entries, found {}",
                v.len()
            )));
        }
        Ok(StateVec::from_vec(v.clone()))
    };
    match b.kind.as_str() {
        "constant" => Ok(InputSignal::constant(need(b.value.as_ref(), "value")?)),
        "sinusoid" => {
            let amplitude = need(b.amplitude.as_ref(), "amplitude")?;
            let frequency = need(b.frequency.as_ref(), "frequency")?;
            let phase = match &b.phase {
                Some(_) => need(b.phase.as_ref(), "phase")?,
                None => StateVec::zeros(m),
            };
            InputSignal::sinusoid(amplitude, frequency, phase)
        }
        other => Err(Error::Scenario(format!(
            "unknown input kind `{other}` (expected constant or sinusoid)"
        ))),
    }
}

fn ledger_bound(traj: &Trajectory, dt: f64) -> (f64, f64) {
    let h_scale = traj
        .energies()
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(1.0);
    let worst = traj
        .ledger_residuals()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    (worst, 10.0 * dt * dt * h_scale)
}

fn write_outputs_for(
    name: &str,
    traj: &Trajectory,
    out_dir: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let traj_path = out_dir.join(format!("{name}_trajectory.csv"));
    write_trajectory_csv(&traj_path, traj)?;
    artifacts.push(traj_path);
    let ledger_path = out_dir.join(format!("{name}_ledger.csv"));
    write_ledger_csv(&ledger_path, traj)?;
    artifacts.push(ledger_path);
    Ok(())
}

/// Execute a scenario file: integrate, optionally write the trajectory and
/// ledger CSVs, and run the scenario's invariant checks.
pub fn run_scenario(
    path: &Path,
    overrides: &Overrides,
    out_dir: &Path,
    write_outputs: bool,
) -> Result<ScenarioOutcome> {
    let file = parse_file(path)?;
    match (&file.scenario, &file.system) {
        (Some(_), Some(_)) => Err(Error::Scenario(
            "specify either `scenario` or a [system] block, not both".into(),
        )),
        (None, None) => Err(Error::Scenario(
            "missing `scenario` name or [system] block".into(),
        )),
        (Some(name), None) => match name.as_str() {
            "rotating-frame" => run_rotating_frame(&file, overrides, out_dir, write_outputs),
            "tracking-demo" => run_tracking_demo(&file, overrides, out_dir, write_outputs),
            other => Err(Error::Scenario(format!(
                "unknown scenario `{other}`; available: rotating-frame, tracking-demo"
            ))),
        },
        (None, Some(_)) => run_user_system(&file, overrides, out_dir, write_outputs),
    }
}

fn run_rotating_frame(
    file: &ScenarioFile,
    overrides: &Overrides,
    out_dir: &Path,
    write_outputs: bool,
) -> Result<ScenarioOutcome> {
    let mut spec = RotatingFrameSpec::default();
    if let Some(b) = &file.rotating_frame {
        if let Some(w) = b.omega {
            spec.omega = w;
        }
        if let Some(m) = b.mass {
            spec.mass = m;
        }
        if let Some(q0) = b.q0 {
            spec.q0 = q0;
        }
        if let Some(p0) = b.p0 {
            spec.p0 = p0;
        }
    }
    spec.validate()?;

    let cfg = integrator_config(
        file.integrator.as_ref(),
        (Method::Rk4, 1e-3, 0.0, 2.0),
        overrides,
    )?;
    let pair = super::rotating_frame_scenario(&spec)?;
    let input = InputSignal::zero(0);
    let traj = integrate(&pair.rotating, &input, &pair.initial_state(), &cfg)?;

    let mut artifacts = Vec::new();
    if write_outputs {
        write_outputs_for("rotating-frame", &traj, out_dir, &mut artifacts)?;
    }

    let mut checks = Vec::new();

    // Frame equivalence at the pinned configuration.
    let eq_cfg = IntegratorConfig::new(Method::Rk4, 1e-3, 0.0, 2.0)?;
    let report = frame_equivalence_check(&spec, &eq_cfg)?;
    checks.push(CheckResult::upper(
        "frame-equivalence",
        report.max_discrepancy,
        1e-6,
    ));

    // RK4 order: discrepancy ratio under dt-halving, measured at a coarse dt
    // where truncation dominates rounding.
    let coarse = frame_equivalence_check(&spec, &IntegratorConfig::new(Method::Rk4, 0.05, 0.0, 2.0)?)?;
    let fine = frame_equivalence_check(&spec, &IntegratorConfig::new(Method::Rk4, 0.025, 0.0, 2.0)?)?;
    let (ratio, ratio_ok) = if coarse.max_discrepancy < 1e-12 {
        // Identical frames (omega = 0): nothing to measure.
        (f64::NAN, true)
    } else {
        let r = coarse.max_discrepancy / fine.max_discrepancy;
        (r, (12.0..=20.0).contains(&r))
    };
    checks.push(CheckResult {
        name: "rk4-order-ratio".into(),
        value: ratio,
        threshold: 16.0,
        passed: ratio_ok,
    });

    // Conservation of Hbar under the implicit midpoint rule.
    let cons_cfg = IntegratorConfig::new(Method::ImplicitMidpoint, 1e-3, 0.0, 10.0)?;
    let cons = integrate(&pair.rotating, &input, &pair.initial_state(), &cons_cfg)?;
    checks.push(CheckResult::upper(
        "conservation-drift",
        cons.max_energy_drift(),
        1e-8,
    ));

    // Coriolis/centrifugal second-order residual on an integrated trajectory.
    let cor_traj = integrate(&pair.rotating, &input, &pair.initial_state(), &eq_cfg)?;
    let residuals = coriolis_residual(&cor_traj, spec.omega)?;
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    checks.push(CheckResult::upper("coriolis-residual", worst, 1e-4));

    // Ledger consistency on the written trajectory.
    let (worst, bound) = ledger_bound(&traj, cfg.dt);
    checks.push(CheckResult::upper("power-balance", worst, bound));

    Ok(ScenarioOutcome {
        name: "rotating-frame".into(),
        checks,
        artifacts,
    })
}

fn tracking_plant() -> Result<PortHamiltonianSystem> {
    let chart = BundleChart::new(2)?;
    PortHamiltonianSystem::new(
        chart.clone(),
        StructureField::constant(Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
        DissipationField::zero(2),
        InputField::constant(Mat::from_row_slice(2, 1, &[0.0, 1.0])),
        ScalarField::quadratic(Mat::identity(2, 2), StateVec::zeros(2))?,
        Connection::trivial(chart),
    )
}

fn circle_reference() -> ReferenceTrajectory {
    ReferenceTrajectory::analytic(
        |t| StateVec::from_vec(vec![t.sin(), t.cos()]),
        |t| StateVec::from_vec(vec![t.cos(), -t.sin()]),
        |_t| StateVec::zeros(1),
    )
}

fn run_tracking_demo(
    file: &ScenarioFile,
    overrides: &Overrides,
    out_dir: &Path,
    write_outputs: bool,
) -> Result<ScenarioOutcome> {
    let period = 2.0 * std::f64::consts::PI;
    let cfg = integrator_config(
        file.integrator.as_ref(),
        (Method::Rk4, 1e-3, 0.0, period),
        overrides,
    )?;
    let plant = tracking_plant()?;
    let reference = circle_reference();
    let es = build_error_system(&plant, &reference, Mat::identity(1, 1))?;
    let flow = es.flow_system()?;
    let input = InputSignal::zero(1);

    let traj = integrate(&flow, &input, &StateVec::zeros(2), &cfg)?;
    let mut artifacts = Vec::new();
    if write_outputs {
        write_outputs_for("tracking-demo", &traj, out_dir, &mut artifacts)?;
    }

    let mut checks = Vec::new();

    // Starting on the reference with zero transformed input, the error stays
    // at zero.
    let max_err = traj
        .states()
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max);
    checks.push(CheckResult::upper("zero-error-invariance", max_err, 1e-6));

    // Original system simulated off-reference, then shifted, must match the
    // error-system trajectory.
    let offset = StateVec::from_vec(vec![0.1, -0.05]);
    let x0_orig = reference.state(cfg.t_span.0) + &offset;
    let eta_input = {
        let r = reference.clone();
        InputSignal::new(1, move |t| r.input(t))
    };
    let traj_orig = integrate(&plant, &eta_input, &x0_orig, &cfg)?;
    let traj_err = integrate(&flow, &input, &offset, &cfg)?;
    let mut worst = 0.0f64;
    for k in 0..traj_orig.len() {
        let t = traj_orig.times()[k];
        let mapped = &traj_orig.states()[k] - reference.state(t);
        worst = worst.max((mapped - &traj_err.states()[k]).norm());
    }
    checks.push(CheckResult::upper("transform-consistency", worst, 1e-6));

    // Matching Hamiltonian on a 20x20 verification grid.
    let region = Region::unit_box((0.0, period), 2);
    let cand = solve_error_matching_lq(&es, &region)?;
    let residual = verify_error_matching(&es, &cand, &region, 20, 20)?;
    checks.push(CheckResult::upper("matching-grid", residual, 1e-8));

    Ok(ScenarioOutcome {
        name: "tracking-demo".into(),
        checks,
        artifacts,
    })
}

fn run_user_system(
    file: &ScenarioFile,
    overrides: &Overrides,
    out_dir: &Path,
    write_outputs: bool,
) -> Result<ScenarioOutcome> {
    let sb = file.system.as_ref().expect("caller checked");
    let n = sb.n;
    let m = sb.m;
    if n == 0 {
        return Err(Error::Scenario("system `n` must be at least 1".into()));
    }
    let j = row_major("j", &sb.j, n, n)?;
    let r = row_major("r", &sb.r, n, n)?;
    let g = row_major("g", &sb.g, n, m)?;
    let q = row_major("q", &sb.q, n, n)?;
    if sb.b.len() != n {
        return Err(Error::Scenario(format!(
            "`b` must have {n} entries, found {}",
            sb.b.len()
        )));
    }
    let b = StateVec::from_vec(sb.b.clone());

    let chart = BundleChart::new(n)?;
    let conn = match &file.connection {
        Some(cb) => {
            if cb.constant.len() != n {
                return Err(Error::Scenario(format!(
                    "connection `constant` must have {n} entries, found {}",
                    cb.constant.len()
                )));
            }
            let c0 = StateVec::from_vec(cb.constant.clone());
            let c1 = match &cb.slope {
                Some(s) => {
                    if s.len() != n {
                        return Err(Error::Scenario(format!(
                            "connection `slope` must have {n} entries, found {}",
                            s.len()
                        )));
                    }
                    StateVec::from_vec(s.clone())
                }
                None => StateVec::zeros(n),
            };
            Connection::with_jacobian(
                chart.clone(),
                move |t, _x| &c0 + &c1 * t,
                move |_t, _x| Mat::zeros(n, n),
            )
        }
        None => Connection::trivial(chart.clone()),
    };

    let sys = PortHamiltonianSystem::new(
        chart,
        StructureField::constant(j),
        DissipationField::constant(r),
        InputField::constant(g),
        ScalarField::quadratic(q, b)?,
        conn,
    )?;

    let integrator = file.integrator.as_ref().ok_or_else(|| {
        Error::Scenario("user-defined systems require an [integrator] section".into())
    })?;
    let cfg = integrator_config(
        Some(integrator),
        (Method::Rk4, integrator.dt, integrator.t0, integrator.t1),
        overrides,
    )?;
    let initial = file.initial.as_ref().ok_or_else(|| {
        Error::Scenario("user-defined systems require an [initial] section".into())
    })?;
    if initial.state.len() != n {
        return Err(Error::Scenario(format!(
            "initial `state` must have {n} entries, found {}",
            initial.state.len()
        )));
    }
    let x0 = StateVec::from_vec(initial.state.clone());
    let input = input_signal(file.input.as_ref(), m)?;

    let traj = integrate(&sys, &input, &x0, &cfg)?;
    let mut artifacts = Vec::new();
    if write_outputs {
        write_outputs_for("system", &traj, out_dir, &mut artifacts)?;
    }

    let mut checks = Vec::new();

    // Structure and derivative oracles at trajectory samples.
    let stride = (traj.len() / 50).max(1);
    let samples: Vec<(f64, StateVec)> = traj
        .times()
        .iter()
        .zip(traj.states())
        .step_by(stride)
        .map(|(t, x)| (*t, x.clone()))
        .collect();
    let structure = sys.check_structure_at(&samples, 1e-10)?;
    checks.push(CheckResult {
        name: "structure".into(),
        value: structure
            .max_skew_residual
            .max(structure.max_symmetry_residual)
            .max((-structure.min_eigenvalue).max(0.0)),
        threshold: 1e-10,
        passed: structure.passed(),
    });

    let grad = grad_check(sys.hamiltonian(), &samples, 1e-5, 1e-5);
    checks.push(CheckResult {
        name: "gradient-oracle".into(),
        value: grad.max_rel_error,
        threshold: grad.tolerance,
        passed: grad.passed,
    });

    let mut conn_dev = 0.0f64;
    for (t, x) in &samples {
        conn_dev = conn_dev.max(sys.connection().jacobian_deviation(*t, x)?);
    }
    checks.push(CheckResult::upper("connection-jacobian", conn_dev, 1e-5));

    let (worst, bound) = ledger_bound(&traj, cfg.dt);
    checks.push(CheckResult::upper("power-balance", worst, bound));

    Ok(ScenarioOutcome {
        name: "system".into(),
        checks,
        artifacts,
    })
}
