//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (run with `--nocapture` to see them all).

use nalgebra::{DMatrix, DVector};

use phcov::fields::{
    grad_check, DissipationField, InputField, ScalarField, StructureField,
};
use phcov::geometry::{transform_connection, BundleChart, Connection};
use phcov::mechanics::{
    embed_controlled, kinetic_hamiltonian, mech_power_balance, ControlledHamiltonian,
    SpaceConnection,
};
use phcov::runner::{
    coriolis_residual, frame_equivalence_check, integrate, rotating_frame_scenario,
    IntegratorConfig, Method, RotatingFrameSpec, Trajectory,
};
use phcov::systems::{InputSignal, PortHamiltonianSystem};
use phcov::tracking::{
    build_error_system, solve_error_matching_lq, verify_error_matching, ReferenceTrajectory,
};
use phcov::transform::{
    push_system, solve_matching_lq, InputTransformation, Region, StateTransformation,
};
use phcov::StateVec;

type Mat = DMatrix<f64>;

fn report(index: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] criterion {index:2} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {index} ({name}) failed: {detail}");
}

fn chart(n: usize) -> BundleChart {
    BundleChart::new(n).unwrap()
}

fn canonical_j() -> Mat {
    Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

fn damped_oscillator(r22: f64, g: Mat) -> PortHamiltonianSystem {
    PortHamiltonianSystem::new(
        chart(2),
        StructureField::constant(canonical_j()),
        DissipationField::constant(Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, r22])),
        InputField::constant(g),
        ScalarField::quadratic(Mat::identity(2, 2), StateVec::zeros(2)).unwrap(),
        Connection::trivial(chart(2)),
    )
    .unwrap()
}

fn circle_reference() -> ReferenceTrajectory {
    ReferenceTrajectory::analytic(
        |t| DVector::from_vec(vec![t.sin(), t.cos()]),
        |t| DVector::from_vec(vec![t.cos(), -t.sin()]),
        |_t| DVector::zeros(1),
    )
}

/// Nonlinear triangular change of coordinates with closed-form inverse and
/// analytic derivatives.
fn triangular_phi() -> StateTransformation {
    StateTransformation::new(
        |t: f64, x: &StateVec| DVector::from_vec(vec![x[0] - t.sin(), x[1] + 0.5 * x[0] * x[0]]),
        |t: f64, xb: &StateVec| {
            let x1 = xb[0] + t.sin();
            DVector::from_vec(vec![x1, xb[1] - 0.5 * x1 * x1])
        },
        |_t: f64, x: &StateVec| Mat::from_row_slice(2, 2, &[1.0, 0.0, x[0], 1.0]),
        |t: f64, _x: &StateVec| DVector::from_vec(vec![-t.cos(), 0.0]),
    )
}

fn sample_points(count: usize) -> Vec<(f64, StateVec)> {
    // Deterministic low-tech sampling over t in [-1, 2], x in [-2, 2]^2.
    let mut seed = 0x1234_5678_9abc_def0u64;
    let mut next = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count)
        .map(|_| {
            (
                -1.0 + 3.0 * next(),
                DVector::from_vec(vec![-2.0 + 4.0 * next(), -2.0 + 4.0 * next()]),
            )
        })
        .collect()
}

#[test]
fn criterion_1_frame_equivalence() {
    let spec = RotatingFrameSpec {
        omega: 0.5,
        mass: 1.0,
        q0: [0.0, 0.0],
        p0: [1.0, 0.0],
    };
    let cfg = IntegratorConfig::new(Method::Rk4, 1e-3, 0.0, 2.0).unwrap();
    let rep = frame_equivalence_check(&spec, &cfg).unwrap();

    // Order check at a coarse step where truncation dominates rounding.
    let coarse = frame_equivalence_check(
        &spec,
        &IntegratorConfig::new(Method::Rk4, 0.05, 0.0, 2.0).unwrap(),
    )
    .unwrap();
    let fine = frame_equivalence_check(
        &spec,
        &IntegratorConfig::new(Method::Rk4, 0.025, 0.0, 2.0).unwrap(),
    )
    .unwrap();
    let ratio = coarse.max_discrepancy / fine.max_discrepancy;

    let pass = rep.max_discrepancy <= 1e-6 && (12.0..=20.0).contains(&ratio);
    report(
        1,
        "frame equivalence",
        pass,
        &format!(
            "max discrepancy {:.3e} (tol 1e-6), dt-halving ratio {ratio:.2} (in [12, 20])",
            rep.max_discrepancy
        ),
    );
}

#[test]
fn criterion_2_conservation() {
    let spec = RotatingFrameSpec::default();
    let pair = rotating_frame_scenario(&spec).unwrap();
    let cfg = IntegratorConfig::new(Method::ImplicitMidpoint, 1e-3, 0.0, 10.0).unwrap();
    let traj = integrate(
        &pair.rotating,
        &InputSignal::zero(0),
        &pair.initial_state(),
        &cfg,
    )
    .unwrap();
    let drift = traj.max_energy_drift();
    report(
        2,
        "conservation",
        drift <= 1e-8,
        &format!("rotating-frame Hamiltonian drift {drift:.3e} over t in [0, 10] (tol 1e-8)"),
    );
}

#[test]
fn criterion_3_coriolis_recovery() {
    let spec = RotatingFrameSpec::default();
    let pair = rotating_frame_scenario(&spec).unwrap();
    // Closed-form rotating-frame solution sampled on a grid:
    // qbar(t) = R(t) (q0 + t p0 / m), pbar(t) = R(t) p0.
    let closed_form = |dt: f64| -> Trajectory {
        let n = (2.0 / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let states: Vec<StateVec> = times
            .iter()
            .map(|&t| {
                let r = pair.rotation(t);
                let q = DVector::from_vec(vec![
                    spec.q0[0] + t * spec.p0[0] / spec.mass,
                    spec.q0[1] + t * spec.p0[1] / spec.mass,
                ]);
                let p = DVector::from_vec(vec![spec.p0[0], spec.p0[1]]);
                let qb = &r * q;
                let pb = &r * p;
                DVector::from_vec(vec![qb[0], qb[1], pb[0], pb[1]])
            })
            .collect();
        Trajectory::from_states(times, states).unwrap()
    };
    let max_at = |dt: f64| -> f64 {
        coriolis_residual(&closed_form(dt), spec.omega)
            .unwrap()
            .into_iter()
            .fold(0.0, f64::max)
    };
    let r1 = max_at(1e-3);
    let r2 = max_at(2e-3);
    let ratio = r2 / r1;
    let pass = r1 <= 1e-6 && (3.0..=5.0).contains(&ratio);
    report(
        3,
        "Coriolis recovery",
        pass,
        &format!("residual {r1:.3e} at dt=1e-3 (tol 1e-6), dt-doubling ratio {ratio:.2} (O(dt^2))"),
    );
}

#[test]
fn criterion_4_power_balance() {
    // Damped oscillator.
    let dt = 1e-3;
    let sys = damped_oscillator(0.5, Mat::zeros(2, 0));
    let cfg = IntegratorConfig::new(Method::Rk4, dt, 0.0, 3.0).unwrap();
    let traj = integrate(
        &sys,
        &InputSignal::zero(0),
        &DVector::from_vec(vec![1.0, 0.0]),
        &cfg,
    )
    .unwrap();
    let h_scale = traj
        .energies()
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(1.0);
    let osc_worst = traj.ledger_residuals().into_iter().fold(0.0, f64::max);
    let osc_bound = 10.0 * dt * dt * h_scale;

    // Controlled mechanical example: H0 = p^2/2, Hc = q, constant input.
    let sc = SpaceConnection::trivial(1);
    let h0 = kinetic_hamiltonian(1, 1.0);
    let hc = ScalarField::analytic(
        |_t, x: &StateVec| x[0],
        |_t, _x| 0.0,
        |_t, _x| DVector::from_vec(vec![1.0, 0.0]),
    );
    let mech = embed_controlled(&sc, &h0, std::slice::from_ref(&hc)).unwrap();
    let u = InputSignal::constant(DVector::from_vec(vec![0.3]));
    let mech_traj = integrate(&mech, &u, &DVector::from_vec(vec![0.0, 1.0]), &cfg).unwrap();
    let mech_scale = mech_traj
        .energies()
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(1.0);
    let mech_worst = mech_traj.ledger_residuals().into_iter().fold(0.0, f64::max);
    let mech_bound = 10.0 * dt * dt * mech_scale;

    // Theorem-style identity pointwise along the mechanical trajectory.
    let ch = ControlledHamiltonian::new(h0, vec![hc], u).unwrap();
    let mut identity_worst = 0.0f64;
    for (t, x) in mech_traj
        .times()
        .iter()
        .zip(mech_traj.states())
        .step_by(100)
    {
        let q = x.rows(0, 1).into_owned();
        let p = x.rows(1, 1).into_owned();
        let terms = mech_power_balance(&sc, &ch, *t, &q, &p).unwrap();
        identity_worst =
            identity_worst.max((terms.total - terms.horizontal - terms.supplied).abs());
    }

    let pass = osc_worst <= osc_bound && mech_worst <= mech_bound && identity_worst <= 1e-12;
    report(
        4,
        "power balance",
        pass,
        &format!(
            "oscillator ledger residual {osc_worst:.3e} (bound {osc_bound:.1e}), \
             mechanical {mech_worst:.3e} (bound {mech_bound:.1e}), \
             balance identity {identity_worst:.3e} (tol 1e-12)"
        ),
    );
}

#[test]
fn criterion_5_structure_preservation() {
    let sys = damped_oscillator(0.4, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
    let phi = triangular_phi();
    let points = sample_points(100);

    // Round trip.
    let pushed = push_system(&sys, &phi, None).unwrap();
    let back = push_system(&pushed, &phi.inverted(), None).unwrap();
    let mut roundtrip_worst = 0.0f64;
    for (t, x) in &points {
        let u = DVector::from_vec(vec![0.3]);
        let a = sys.eval_dynamics(*t, x, &u).unwrap();
        let b = back.eval_dynamics(*t, x, &u).unwrap();
        roundtrip_worst = roundtrip_worst.max((a - &b).norm() / b.norm().max(1.0));
    }

    // Pushed structure admissible at 100 points.
    let structure = pushed.check_structure_at(&points, 1e-10).unwrap();

    // Connection transformation composition law.
    let conn = Connection::new(chart(2), |t, x: &StateVec| {
        DVector::from_vec(vec![x[1] + t, -x[0]])
    });
    let phi2 = StateTransformation::new(
        |t: f64, x: &StateVec| {
            let z1 = x[0] + 0.2 * t;
            DVector::from_vec(vec![z1, x[1] + 0.3 * z1 * z1])
        },
        |t: f64, z: &StateVec| {
            let x1 = z[0] - 0.2 * t;
            DVector::from_vec(vec![x1, z[1] - 0.3 * z[0] * z[0]])
        },
        |t: f64, x: &StateVec| {
            let z1 = x[0] + 0.2 * t;
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.6 * z1, 1.0])
        },
        |t: f64, x: &StateVec| {
            let z1 = x[0] + 0.2 * t;
            DVector::from_vec(vec![0.2, 0.6 * z1 * 0.2])
        },
    );
    let twice = transform_connection(&transform_connection(&conn, &phi), &phi2);
    let composed = transform_connection(&conn, &StateTransformation::compose(&phi2, &phi));
    let mut comp_worst = 0.0f64;
    for (t, x) in &points {
        let a = twice.coeffs(*t, x).unwrap();
        let b = composed.coeffs(*t, x).unwrap();
        comp_worst = comp_worst.max((a - &b).norm() / b.norm().max(1.0));
    }

    let pass = roundtrip_worst <= 1e-10 && structure.passed() && comp_worst <= 1e-10;
    report(
        5,
        "structure preservation",
        pass,
        &format!(
            "round-trip {roundtrip_worst:.3e} (tol 1e-10), pushed skew/PSD {} \
             (skew {:.1e}, min eig {:.1e}), composition law {comp_worst:.3e} (tol 1e-10)",
            if structure.passed() { "ok" } else { "violated" },
            structure.max_skew_residual,
            structure.min_eigenvalue,
        ),
    );
}

#[test]
fn criterion_6_matching() {
    // Constructed oscillator error system: circular reference on the plant.
    let plant = damped_oscillator(0.0, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
    let es = build_error_system(&plant, &circle_reference(), Mat::identity(1, 1)).unwrap();
    let region = Region::unit_box((0.0, 2.0 * std::f64::consts::PI), 2);
    let cand = solve_error_matching_lq(&es, &region).unwrap();
    let residual = verify_error_matching(&es, &cand, &region, 20, 20).unwrap();

    // Zero offset gives the exactly-zero candidate.
    let inp = InputTransformation::identity(1);
    let zero_cand = solve_matching_lq(&plant, &inp, &region).unwrap();
    let x_probe = DVector::from_vec(vec![0.7, -0.4]);
    let exact_zero = zero_cand.h_breve.value(1.3, &x_probe) == 0.0
        && zero_cand.h_breve.gradient(1.3, &x_probe).norm() == 0.0;

    let pass = residual <= 1e-8 && exact_zero;
    report(
        6,
        "matching",
        pass,
        &format!(
            "error-system residual {residual:.3e} on 20x20 grid (tol 1e-8), \
             zero offset gives exactly zero candidate: {exact_zero}"
        ),
    );
}

#[test]
fn criterion_7_tracking() {
    let plant = damped_oscillator(0.0, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
    let reference = circle_reference();
    let es = build_error_system(&plant, &reference, Mat::identity(1, 1)).unwrap();
    let flow = es.flow_system().unwrap();
    let period = 2.0 * std::f64::consts::PI;
    let cfg = IntegratorConfig::new(Method::Rk4, 1e-3, 0.0, period).unwrap();

    // Zero-error invariance.
    let traj = integrate(&flow, &InputSignal::zero(1), &DVector::zeros(2), &cfg).unwrap();
    let max_err = traj.states().iter().map(|x| x.norm()).fold(0.0, f64::max);

    // Original-system-then-transform vs error-system trajectory, from an
    // off-reference start.
    let offset = DVector::from_vec(vec![0.1, -0.05]);
    let r = reference.clone();
    let eta_input = InputSignal::new(1, move |t| r.input(t));
    let x0 = reference.state(0.0) + &offset;
    let traj_orig = integrate(&plant, &eta_input, &x0, &cfg).unwrap();
    let traj_err = integrate(&flow, &InputSignal::zero(1), &offset, &cfg).unwrap();
    let mut consistency = 0.0f64;
    for k in 0..traj_orig.len() {
        let t = traj_orig.times()[k];
        let mapped = &traj_orig.states()[k] - reference.state(t);
        consistency = consistency.max((mapped - &traj_err.states()[k]).norm());
    }

    let pass = max_err <= 1e-6 && consistency <= 1e-6;
    report(
        7,
        "tracking",
        pass,
        &format!(
            "zero-error bound {max_err:.3e} over one period (tol 1e-6), \
             transform consistency {consistency:.3e} (tol 1e-6)"
        ),
    );
}

#[test]
fn criterion_8_reductions() {
    // Trivial connection recovers the time-invariant equations.
    let g = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
    let r = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.5]);
    let sys = damped_oscillator(0.5, g.clone());
    let j = canonical_j();
    let mut ti_worst = 0.0f64;
    for (t, x) in sample_points(100) {
        let u = DVector::from_vec(vec![0.7 * t.sin()]);
        // Independently coded time-invariant form.
        let grad = x.clone();
        let want = (&j - &r) * &grad + &g * &u;
        let got = sys.eval_dynamics(t, &x, &u).unwrap();
        ti_worst = ti_worst.max((got - &want).norm() / want.norm().max(1.0));
        let y_want = g.transpose() * &grad;
        let y_got = sys.collocated_output(t, &x).unwrap();
        ti_worst = ti_worst.max((y_got - &y_want).norm() / y_want.norm().max(1.0));
    }

    // Trivial space connection recovers classical Hamilton equations.
    let sc = SpaceConnection::trivial(2);
    let h = ScalarField::quadratic(Mat::identity(4, 4), DVector::zeros(4)).unwrap();
    let mut mech_worst = 0.0f64;
    for (t, x) in sample_points(100) {
        let q = x.clone();
        let p = DVector::from_vec(vec![t.cos(), t.sin()]);
        let v = phcov::mechanics::mech_vector_field(&sc, &h, t, &q, &p).unwrap();
        // Classical: qdot = dH/dp = p, pdot = -dH/dq = -q.
        let qdot = v.rows(0, 2).into_owned();
        let pdot = v.rows(2, 2).into_owned();
        mech_worst = mech_worst.max((qdot - &p).norm() / p.norm().max(1.0));
        mech_worst = mech_worst.max((pdot + &q).norm() / q.norm().max(1.0));
    }

    let pass = ti_worst <= 1e-14 && mech_worst <= 1e-14;
    report(
        8,
        "reductions",
        pass,
        &format!(
            "time-invariant agreement {ti_worst:.3e} (tol 1e-14), \
             classical Hamilton agreement {mech_worst:.3e} (tol 1e-14)"
        ),
    );
}

#[test]
fn criterion_9_derivative_oracles() {
    let points = sample_points(30);
    let mut worst = 0.0f64;

    // Kinetic Hamiltonian of the rotating scenario (4-dimensional chart).
    let kinetic = kinetic_hamiltonian(2, 1.0);
    let points4: Vec<(f64, StateVec)> = points
        .iter()
        .map(|(t, x)| {
            (
                *t,
                DVector::from_vec(vec![x[0], x[1], x[1] - 0.3, x[0] + 0.2]),
            )
        })
        .collect();
    worst = worst.max(grad_check(&kinetic, &points4, 1e-5, 1e-5).max_rel_error);

    // Quadratic plant Hamiltonian.
    let plant = damped_oscillator(0.0, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
    worst = worst.max(grad_check(plant.hamiltonian(), &points, 1e-5, 1e-5).max_rel_error);

    // Pushed Hamiltonian of the tracking error system (chain-rule closures).
    let es = build_error_system(&plant, &circle_reference(), Mat::identity(1, 1)).unwrap();
    worst = worst.max(grad_check(es.base().hamiltonian(), &points, 1e-5, 1e-5).max_rel_error);

    // Analytic connection Jacobians: rotating space connection and the
    // scenario-style affine-in-time connection.
    let spec = RotatingFrameSpec::default();
    let pair = rotating_frame_scenario(&spec).unwrap();
    for (t, x) in &points {
        worst = worst.max(pair.rotating_space.jacobian_deviation(*t, x).unwrap());
    }
    let affine = Connection::with_jacobian(
        chart(2),
        |t, _x| DVector::from_vec(vec![0.1 + 0.2 * t, -0.3 * t]),
        |_t, _x| Mat::zeros(2, 2),
    );
    for (t, x) in &points {
        worst = worst.max(affine.jacobian_deviation(*t, x).unwrap());
    }

    // The matching candidate carries an analytic gradient but a differenced
    // time partial; check its gradient at a looser tolerance.
    let region = Region::unit_box((0.0, 2.0 * std::f64::consts::PI), 2);
    let cand = solve_error_matching_lq(&es, &region).unwrap();
    let cand_report = grad_check(&cand.h_breve, &points, 1e-5, 1e-4);

    let pass = worst <= 1e-5 && cand_report.passed;
    report(
        9,
        "derivative oracles",
        pass,
        &format!(
            "worst analytic-field deviation {worst:.3e} (tol 1e-5), \
             candidate gradient deviation {:.3e} (tol 1e-4)",
            cand_report.max_rel_error
        ),
    );
}

#[test]
fn criterion_10_cli() {
    let bin = env!("CARGO_BIN_EXE_phcov");
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("rotating.toml");
    std::fs::write(&scenario_path, "scenario = \"rotating-frame\"\n").unwrap();

    let run = |out: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .arg("run")
            .arg(&scenario_path)
            .arg("--out-dir")
            .arg(out)
            .output()
            .expect("binary runs");
        status
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let ra = run(&out_a);
    let rb = run(&out_b);
    let exit_ok = ra.status.code() == Some(0) && rb.status.code() == Some(0);

    let mut identical = true;
    for name in ["rotating-frame_trajectory.csv", "rotating-frame_ledger.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        identical &= a == b;
    }

    // Malformed input: missing dt must exit 2 and name the key.
    let bad_path = dir.path().join("bad.toml");
    std::fs::write(
        &bad_path,
        "scenario = \"rotating-frame\"\n[integrator]\nmethod = \"rk4\"\nt0 = 0.0\nt1 = 1.0\n",
    )
    .unwrap();
    let bad = std::process::Command::new(bin)
        .arg("check")
        .arg(&bad_path)
        .output()
        .expect("binary runs");
    let stderr = String::from_utf8_lossy(&bad.stderr);
    let bad_ok = bad.status.code() == Some(2) && stderr.contains("dt");

    let pass = exit_ok && identical && bad_ok;
    report(
        10,
        "CLI",
        pass,
        &format!(
            "builtin run exit 0: {exit_ok}, bit-identical CSV: {identical}, \
             malformed input exit 2 naming the key: {bad_ok}"
        ),
    );
}
