//! Fixed-step closed-loop simulation with full signal logging.
//!
//! The stacked state `[q, q̇, a]` (with `a` the controller's auxiliary state:
//! observer estimate or error integral) is advanced by RK4, the controller
//! being evaluated at every stage.

mod integrator;
mod log;
mod metrics;

use nalgebra::DVector;

pub use integrator::rk4_step;
pub use log::SimLog;
pub use metrics::{
    compute_metrics, compute_metrics_with_band, rms_after, settling_time, terminal_start, Metrics,
    SETTLING_BAND,
};

use crate::control::{
    joint_reference_from_task, lyapunov_diagnostics, ControlEval, Controller, ControllerGains,
    ControllerKind, InverseDynamicsIntegral, LyapunovObserver, ObserverState, WorkspaceLyapunov,
    XiDdotMode,
};
use crate::dynamics::{
    forward_dynamics, total_energy, ElbowBranch, FrictionModel, JointState, Manipulator, PlanarArm,
    PlanarArmParams, SurgicalArm, SurgicalArmParams,
};
use crate::error::{Error, Result};
use crate::kinematics::DampingPolicy;
use crate::signals::{sample_unchecked, DisturbanceSpec, Reference, Space, TrajectorySpec};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Planar {
        params: PlanarArmParams,
        branch: ElbowBranch,
    },
    Surgical(SurgicalArmParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Viscous coefficients; `None` is frictionless.
    pub friction: Option<DVector<f64>>,
}

impl ModelConfig {
    pub fn planar(params: PlanarArmParams) -> Self {
        Self {
            kind: ModelKind::Planar {
                params,
                branch: ElbowBranch::Down,
            },
            friction: None,
        }
    }

    pub fn surgical(params: SurgicalArmParams) -> Self {
        Self {
            kind: ModelKind::Surgical(params),
            friction: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Planar { .. } => "planar",
            ModelKind::Surgical(_) => "surgical",
        }
    }

    pub fn dof(&self) -> usize {
        match self.kind {
            ModelKind::Planar { .. } => PlanarArm::DOF,
            ModelKind::Surgical(_) => SurgicalArm::DOF,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Manipulator>> {
        let friction = match &self.friction {
            Some(c) => {
                if c.len() != self.dof() {
                    return Err(Error::invalid(
                        "model.friction",
                        format!("expected {} coefficients, got {}", self.dof(), c.len()),
                    ));
                }
                FrictionModel::viscous(c.clone())?
            }
            None => FrictionModel::frictionless(self.dof()),
        };
        Ok(match &self.kind {
            ModelKind::Planar { params, branch } => {
                params.validate()?;
                Box::new(
                    PlanarArm::new(params.clone())
                        .with_branch(*branch)
                        .with_friction(friction),
                )
            }
            ModelKind::Surgical(params) => {
                params.validate()?;
                Box::new(SurgicalArm::new(params.clone()).with_friction(friction))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub gains: ControllerGains,
    /// Integrate `d̂̇ = K_I σ`; otherwise `d̂` stays at its initial value.
    pub observer: bool,
    pub xi_ddot: XiDdotMode,
    pub damping: DampingPolicy,
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind, gains: ControllerGains) -> Self {
        Self {
            kind,
            gains,
            observer: true,
            xi_ddot: XiDdotMode::default(),
            damping: DampingPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialCondition {
    /// `q(0) = q_d(0)` (inverse kinematics for task paths), `q̇(0) = 0`.
    #[default]
    ReferenceAtRest,
    /// Position and velocity both taken from the reference.
    OnReference,
    Explicit(JointState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub duration: f64,
    /// Log every `decimation`-th step (the final step is always logged).
    pub decimation: usize,
    /// Stop when `‖[q, q̇, a]‖₂` exceeds this.
    pub blowup: f64,
    /// Zero-order-hold period for the control; `None` updates it at every
    /// integrator stage.
    pub control_period: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 20.0,
            decimation: 1,
            blowup: 1e6,
            control_period: None,
        }
    }
}

impl SimSettings {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    fn hold_steps(&self) -> Option<usize> {
        self.control_period.map(|p| (p / self.dt).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("sim.dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::invalid("sim.duration", "must be finite and >= dt"));
        }
        if self.decimation == 0 {
            return Err(Error::invalid("sim.decimation", "must be >= 1"));
        }
        if self.blowup.is_nan() || self.blowup <= 0.0 {
            return Err(Error::invalid("sim.blowup", "must be > 0"));
        }
        if let Some(p) = self.control_period {
            let ratio = p / self.dt;
            if !(p.is_finite() && ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-9) {
                return Err(Error::invalid(
                    "sim.control_period",
                    "must be a positive integer multiple of dt",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub controller: ControllerConfig,
    pub trajectory: TrajectorySpec,
    pub disturbance: DisturbanceSpec,
    pub initial: InitialCondition,
    /// Initial observer estimate; zero when `None`.
    pub d_hat0: Option<DVector<f64>>,
    pub sim: SimSettings,
}

impl ScenarioConfig {
    pub fn new(model: ModelConfig, controller: ControllerConfig, trajectory: TrajectorySpec) -> Self {
        Self {
            model,
            controller,
            trajectory,
            disturbance: DisturbanceSpec::Zero,
            initial: InitialCondition::default(),
            d_hat0: None,
            sim: SimSettings::default(),
        }
    }

    /// Checks everything `run_scenario` needs without integrating.
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.trajectory.validate()?;
        let model = self.model.build()?;
        self.disturbance.validate(model.dof())?;
        build_controller(model.as_ref(), self)?;
        initial_state(model.as_ref(), self)?;
        Ok(())
    }
}

pub fn build_controller(
    model: &dyn Manipulator,
    cfg: &ScenarioConfig,
) -> Result<Box<dyn Controller>> {
    let c = &cfg.controller;
    let n = model.dof();
    let d_hat0 = cfg.d_hat0.clone().unwrap_or_else(|| DVector::zeros(n));
    if !d_hat0.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("initial.d_hat", "entries must be finite"));
    }
    Ok(match c.kind {
        ControllerKind::LyapunovObserver => Box::new(LyapunovObserver::new(
            model,
            c.gains.clone(),
            cfg.trajectory.clone(),
            c.observer,
            d_hat0,
        )?),
        ControllerKind::WorkspaceLyapunov => Box::new(WorkspaceLyapunov::new(
            model,
            c.gains.clone(),
            cfg.trajectory.clone(),
            c.observer,
            d_hat0,
            c.damping,
            c.xi_ddot,
        )?),
        ControllerKind::InverseDynamicsIntegral => Box::new(InverseDynamicsIntegral::new(
            model,
            c.gains.clone(),
            cfg.trajectory.clone(),
        )?),
    })
}

fn initial_state(model: &dyn Manipulator, cfg: &ScenarioConfig) -> Result<JointState> {
    let n = model.dof();
    let reference = || -> Result<(DVector<f64>, DVector<f64>)> {
        Ok(match cfg.trajectory.sample(0.0)? {
            Reference::Joint(r) => (r.q, r.qdot),
            Reference::Task(task) => {
                let r = joint_reference_from_task(model, &task)?;
                (r.q, r.qdot)
            }
        })
    };
    let state = match &cfg.initial {
        InitialCondition::ReferenceAtRest => JointState::at_rest(reference()?.0)?,
        InitialCondition::OnReference => {
            let (q, qdot) = reference()?;
            JointState::new(q, qdot)?
        }
        InitialCondition::Explicit(s) => s.clone(),
    };
    if state.dof() != n {
        return Err(Error::invalid(
            "initial.q",
            format!("expected {n} entries, got {}", state.dof()),
        ));
    }
    Ok(state)
}

struct Layout {
    n: usize,
    m: usize,
    joint_ref: bool,
    task: bool,
}

impl Layout {
    fn columns(&self) -> Vec<String> {
        let mut names = vec!["t".to_string()];
        let mut vector = |prefix: &str, len: usize| {
            names.extend((0..len).map(|i| format!("{prefix}{i}")));
        };
        vector("q", self.n);
        vector("qdot", self.n);
        if self.joint_ref {
            vector("qd", self.n);
            vector("qdotd", self.n);
        }
        if self.task {
            vector("x", self.m);
            vector("xd", self.m);
        }
        vector("sigma", self.n);
        vector("xi_dot", self.n);
        vector("u", self.n);
        vector("d", self.n);
        vector("d_hat", self.n);
        names.extend(
            ["V", "Vdot_model", "energy", "sigma_min", "err_norm"]
                .into_iter()
                .map(String::from),
        );
        names
    }
}

fn split(y: &DVector<f64>, n: usize) -> (JointState, DVector<f64>) {
    let state = JointState {
        q: y.rows(0, n).into_owned(),
        qdot: y.rows(n, n).into_owned(),
    };
    (state, y.rows(2 * n, y.len() - 2 * n).into_owned())
}

fn log_row(
    model: &dyn Manipulator,
    layout: &Layout,
    gains: &ControllerGains,
    t: f64,
    state: &JointState,
    eval: &ControlEval,
    d: &DVector<f64>,
) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(8 * layout.n + 2 * layout.m + 6);
    row.push(t);
    row.extend(state.q.iter());
    row.extend(state.qdot.iter());
    let mut err = f64::NAN;
    if layout.joint_ref {
        let r = eval.joint_ref.as_ref().expect("joint-space controller");
        row.extend(r.q.iter());
        row.extend(r.qdot.iter());
        err = (&state.q - &r.q).norm();
    }
    if layout.task {
        let r = eval.task_ref.as_ref().expect("task-space trajectory");
        let x = model.forward_kinematics(&state.q);
        err = (&x - &r.x).norm();
        row.extend(x.iter());
        row.extend(r.x.iter());
    }
    row.extend(eval.sigma.iter());
    row.extend(eval.xi_dot.iter());
    row.extend(eval.u.iter());
    row.extend(d.iter());
    row.extend(eval.d_hat.iter());
    let lyap = lyapunov_diagnostics(
        model,
        &state.q,
        &eval.sigma,
        &ObserverState {
            d_hat: eval.d_hat.clone(),
        },
        d,
        &eval.sigma_damping,
        gains.ki_inv(),
    )?;
    row.push(lyap.v);
    row.push(lyap.vdot_model);
    row.push(total_energy(model, state)?);
    row.push(eval.sigma_min);
    row.push(err);
    Ok(row)
}

fn divergence(err: Error, log: &SimLog) -> Error {
    match err {
        Error::Divergence {
            t, reason, state, ..
        } => Error::Divergence {
            t,
            reason,
            state,
            partial_log: Some(Box::new(log.clone())),
        },
        other => other,
    }
}

/// Integrates the closed loop and returns the log with its metrics.
///
/// Identical configurations give bit-identical logs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SimLog, Metrics)> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let model = model.as_ref();
    let mut controller = build_controller(model, cfg)?;
    let n = model.dof();
    let layout = Layout {
        n,
        m: model.task_dim(),
        joint_ref: cfg.controller.kind != ControllerKind::WorkspaceLyapunov,
        task: cfg.trajectory.space() == Space::Task,
    };
    let mut log = SimLog::new(layout.columns());

    let s0 = initial_state(model, cfg)?;
    let mut y = DVector::zeros(2 * n + controller.aux_dim());
    y.rows_mut(0, n).copy_from(&s0.q);
    y.rows_mut(n, n).copy_from(&s0.qdot);
    let aux_len = controller.aux_dim();
    y.rows_mut(2 * n, aux_len).copy_from(&controller.initial_aux());

    let sim = &cfg.sim;
    let steps = sim.steps();
    let hold = sim.hold_steps();
    let mut held: Option<(DVector<f64>, DVector<f64>)> = None;

    for k in 0..=steps {
        let t = k as f64 * sim.dt;
        let (state, aux) = split(&y, n);
        let eval = controller
            .evaluate(model, t, &state, &aux)
            .map_err(|e| divergence(e, &log))?;
        let d = sample_unchecked(&cfg.disturbance, t, n);
        if k % sim.decimation == 0 || k == steps {
            log.push_row(&log_row(model, &layout, &cfg.controller.gains, t, &state, &eval, &d)?)?;
        }
        if k == steps {
            break;
        }
        if let Some(h) = hold {
            if k % h == 0 {
                held = Some((eval.u.clone(), eval.aux_rate.clone()));
            }
        }

        let ctrl: &dyn Controller = controller.as_ref();
        let mut first = Some(eval);
        let rhs = |ts: f64, ys: &DVector<f64>| -> Result<DVector<f64>> {
            let (s, a) = split(ys, n);
            let (u, a_rate) = match (&held, first.take()) {
                (Some((u, r)), _) => (u.clone(), r.clone()),
                (None, Some(e)) => (e.u, e.aux_rate),
                (None, None) => {
                    let e = ctrl.evaluate(model, ts, &s, &a)?;
                    (e.u, e.aux_rate)
                }
            };
            let dist = sample_unchecked(&cfg.disturbance, ts, n);
            let qddot = forward_dynamics(model, &s, &u, &dist)?;
            let mut dy = DVector::zeros(ys.len());
            dy.rows_mut(0, n).copy_from(&s.qdot);
            dy.rows_mut(n, n).copy_from(&qddot);
            dy.rows_mut(2 * n, a_rate.len()).copy_from(&a_rate);
            Ok(dy)
        };
        y = rk4_step(rhs, &y, t, sim.dt).map_err(|e| divergence(e, &log))?;

        let norm = y.norm();
        if norm.is_nan() || norm > sim.blowup {
            return Err(Error::Divergence {
                t: t + sim.dt,
                reason: format!("state norm {norm:e} exceeds bound {:e}", sim.blowup),
                state: y.as_slice().to_vec(),
                partial_log: Some(Box::new(log)),
            });
        }
        let (state, aux) = split(&y, n);
        controller
            .commit(model, (k + 1) as f64 * sim.dt, &state, &aux)
            .map_err(|e| divergence(e, &log))?;
    }

    let metrics = compute_metrics(&log)?;
    Ok((log, metrics))
}
