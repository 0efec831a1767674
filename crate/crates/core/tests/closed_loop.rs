mod common;

use nalgebra::{DMatrix, DVector};

use common::*;
use surgarm_core::control::{
    lyapunov_control, passivity_audit, reference_filter, ControllerGains, ControllerKind,
    ObserverState, ReferenceSample, XiDdotMode,
};
use surgarm_core::dynamics::{PlanarArmParams, SurgicalArmParams};
use surgarm_core::signals::{DisturbanceSpec, Space, TrajectorySpec};
use surgarm_core::sim::{
    run_scenario, terminal_start, ControllerConfig, InitialCondition, ModelConfig, ScenarioConfig,
    SimLog,
};
use surgarm_core::Error;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn planar_scenario(kind: ControllerKind, d: f64) -> ScenarioConfig {
    let gains = ControllerGains::isotropic(2, 2.0, 1.0, 2.0).unwrap();
    let mut cfg = ScenarioConfig::new(
        ModelConfig::planar(PlanarArmParams::default()),
        ControllerConfig::new(kind, gains),
        TrajectorySpec::WorkspacePath,
    );
    cfg.disturbance = DisturbanceSpec::Constant(DVector::from_element(2, d));
    cfg
}

fn column_norm(log: &SimLog, prefix: &str, k: usize) -> f64 {
    v(&log.vector_at(prefix, k).unwrap()).norm()
}

#[test]
fn exact_start_without_disturbance_tracks_to_roundoff() {
    for kind in [
        ControllerKind::LyapunovObserver,
        ControllerKind::WorkspaceLyapunov,
        ControllerKind::InverseDynamicsIntegral,
    ] {
        let mut cfg = planar_scenario(kind, 0.0);
        cfg.initial = InitialCondition::OnReference;
        cfg.controller.xi_ddot = XiDdotMode::FlowDifference;
        cfg.sim.duration = 5.0;
        let (_, m) = run_scenario(&cfg).unwrap();
        assert!(m.rms_error <= 1e-6, "{kind}: {:e}", m.rms_error);
    }
}

#[test]
fn perfect_estimate_gives_decaying_sigma() {
    let mut cfg = planar_scenario(ControllerKind::LyapunovObserver, 10.0);
    cfg.d_hat0 = Some(DVector::from_element(2, 10.0));
    cfg.controller.observer = false;
    cfg.sim.duration = 8.0;
    let (log, m) = run_scenario(&cfg).unwrap();
    assert_eq!(m.observer_error, 0.0);
    let s: Vec<f64> = (0..log.len()).map(|k| column_norm(&log, "sigma", k)).collect();
    assert!(s[0] > 0.1);
    for second in 1..8 {
        assert!(s[second * 1000] < s[(second - 1) * 1000] * 0.6, "t = {second}");
    }
    assert_eq!(passivity_audit(&log, cfg.controller.gains.ki()).unwrap(), 0.0);
}

#[test]
fn observer_learns_constant_disturbance() {
    let (log, m) = run_scenario(&planar_scenario(ControllerKind::LyapunovObserver, 10.0)).unwrap();
    assert!(m.observer_error <= 0.2);
    let last = log.vector_at("d_hat", log.len() - 1).unwrap();
    assert!((last[0] - 10.0).abs() < 0.01 && (last[1] - 10.0).abs() < 0.01);
    assert!(m.terminal_sigma <= 1e-3);
}

#[test]
fn disabling_observer_worsens_terminal_error() {
    let with = run_scenario(&planar_scenario(ControllerKind::LyapunovObserver, 10.0)).unwrap().1;
    let mut cfg = planar_scenario(ControllerKind::LyapunovObserver, 10.0);
    cfg.controller.observer = false;
    let without = run_scenario(&cfg).unwrap().1;
    assert!(without.terminal_error > with.terminal_error);
    assert!(without.observer_error > 10.0);
}

#[test]
fn baseline_integral_removes_constant_offset() {
    let gains = ControllerGains::isotropic(2, 2.0, 1.0, 2.0).unwrap();
    let mut cfg = ScenarioConfig::new(
        ModelConfig::planar(PlanarArmParams::default()),
        ControllerConfig::new(ControllerKind::InverseDynamicsIntegral, gains),
        TrajectorySpec::Setpoint { target: v(&[0.4, 1.1]), space: Space::Joint },
    );
    cfg.disturbance = DisturbanceSpec::Constant(v(&[1.0, 1.0]));
    cfg.sim.duration = 60.0;
    let (_, m) = run_scenario(&cfg).unwrap();
    assert!(m.peak_error > 1e-2);
    assert!(m.final_error < 1e-3, "{:e}", m.final_error);
}

#[test]
fn sigma_identity_holds_on_every_row() {
    let mut cfg = planar_scenario(ControllerKind::LyapunovObserver, 10.0);
    cfg.sim.duration = 3.0;
    let (log, _) = run_scenario(&cfg).unwrap();
    for k in 0..log.len() {
        let q = v(&log.vector_at("q", k).unwrap());
        let qd = v(&log.vector_at("qd", k).unwrap());
        let qdot = v(&log.vector_at("qdot", k).unwrap());
        let qdotd = v(&log.vector_at("qdotd", k).unwrap());
        let sigma = v(&log.vector_at("sigma", k).unwrap());
        let lambda = cfg.controller.gains.lambda();
        assert!((sigma - (&qdot - &qdotd) - lambda * (&q - &qd)).amax() < 1e-12);
    }
}

#[test]
fn logged_storage_rate_matches_model_rate() {
    let mut cfg = planar_scenario(ControllerKind::LyapunovObserver, 10.0);
    cfg.sim.duration = 5.0;
    let (log, _) = run_scenario(&cfg).unwrap();
    let t = log.require("t").unwrap();
    let big_v = log.require("V").unwrap();
    let rate = log.require("Vdot_model").unwrap();
    let scale = rate.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    for k in 1..log.len() - 1 {
        let fd = (big_v[k + 1] - big_v[k - 1]) / (t[k + 1] - t[k - 1]);
        assert!((fd - rate[k]).abs() <= 1e-4 * scale, "t = {}: {fd} vs {}", t[k], rate[k]);
    }
}

#[test]
fn workspace_law_rejects_disturbance_with_observer() {
    let mut cfg = planar_scenario(ControllerKind::WorkspaceLyapunov, 1.0);
    cfg.controller.gains = ControllerGains::isotropic(2, 4.0, 1.0, 2.0).unwrap();
    let (log, m) = run_scenario(&cfg).unwrap();
    assert!(m.terminal_error < 5e-3, "{:e}", m.terminal_error);
    assert!(m.final_error < m.peak_error * 1e-2);
    assert!(m.min_sigma_min > 0.05);
    let tail = terminal_start(log.len());
    assert!(column_norm(&log, "sigma", log.len() - 1) < column_norm(&log, "sigma", tail));
}

#[test]
fn estimate_enters_control_affinely() {
    let arm = surgical();
    let mut r = rng(20);
    let gains = ControllerGains::isotropic(4, 2.0, 1.0, 2.0).unwrap();
    for _ in 0..20 {
        let s = state(surgical_q(&mut r), uniform(&mut r, 4, 1.0));
        let reference = ReferenceSample {
            q: surgical_q(&mut r),
            qdot: uniform(&mut r, 4, 1.0),
            qddot: uniform(&mut r, 4, 1.0),
        };
        let fe = reference_filter(&s, &reference, gains.lambda()).unwrap();
        let d1 = uniform(&mut r, 4, 5.0);
        let d2 = uniform(&mut r, 4, 5.0);
        let u1 = lyapunov_control(&arm, &s, &fe, &gains, &ObserverState::new(d1.clone()).unwrap()).unwrap();
        let u2 = lyapunov_control(&arm, &s, &fe, &gains, &ObserverState::new(d2.clone()).unwrap()).unwrap();
        assert!(((u1 - u2) + (d1 - d2)).amax() < 1e-12);
    }
}

#[test]
fn passivity_audit_needs_columns() {
    let log = SimLog::new(vec!["t".into(), "sigma0".into()]);
    assert!(matches!(passivity_audit(&log, &DMatrix::identity(1, 1)), Err(Error::LogSchema(_))));
}

#[test]
fn surgical_joint_tracking_with_observer() {
    let gains = ControllerGains::isotropic(4, 2.0, 1.0, 2.0).unwrap();
    let mut cfg = ScenarioConfig::new(
        ModelConfig::surgical(SurgicalArmParams::default()),
        ControllerConfig::new(ControllerKind::LyapunovObserver, gains),
        TrajectorySpec::JointSinusoid {
            amplitude: v(&[0.3, 0.2, 0.5, 0.02]),
            omega: v(&[1.0, 0.8, 1.5, 0.5]),
            phase: DVector::zeros(4),
            offset: v(&[0.0, 0.4, 0.0, 0.1]),
        },
    );
    cfg.disturbance = DisturbanceSpec::Constant(DVector::from_element(4, 1.0));
    let (_, m) = run_scenario(&cfg).unwrap();
    assert!(m.terminal_error <= 1e-3);
    assert!(m.observer_error <= 1e-2);
}

#[test]
fn tremor_disturbance_stays_bounded() {
    let mut cfg = planar_scenario(ControllerKind::LyapunovObserver, 0.0);
    cfg.disturbance = DisturbanceSpec::Sum(vec![
        DisturbanceSpec::Constant(v(&[2.0, 2.0])),
        DisturbanceSpec::tremor(v(&[0.5, 0.5])),
    ]);
    cfg.sim.duration = 10.0;
    let (log, m) = run_scenario(&cfg).unwrap();
    let d = log.require_vector("d", 2).unwrap();
    assert!(d.iter().all(|c| c.iter().all(|x| x.abs() <= 2.5 + 1e-12)));
    assert!(m.terminal_error < 0.05);
}
