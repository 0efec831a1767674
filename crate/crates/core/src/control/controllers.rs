//! Stateful controllers driven by the simulator.
//!
//! Each controller owns its reference and exposes an auxiliary integrator
//! state (observer estimate or error integral). The simulator integrates that
//! state in the same Runge–Kutta stages as the mechanical state.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::{
    inverse_dynamics_integral_control, lyapunov_control, reference_filter, workspace_control,
    workspace_filter, ControllerGains, ObserverState, ReferenceSample,
};
use crate::dynamics::{JointState, Manipulator};
use crate::error::{Error, Result};
use crate::kinematics::{damped_pseudoinverse, DampingPolicy, JacobianBundle};
use crate::signals::{Reference, Space, TaskReference, TrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    LyapunovObserver,
    WorkspaceLyapunov,
    InverseDynamicsIntegral,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::LyapunovObserver,
        ControllerKind::WorkspaceLyapunov,
        ControllerKind::InverseDynamicsIntegral,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::LyapunovObserver => "lyapunov_observer",
            ControllerKind::WorkspaceLyapunov => "workspace_lyapunov",
            ControllerKind::InverseDynamicsIntegral => "inverse_dynamics_integral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the workspace law obtains `ξ̈`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiDdotMode {
    /// First-order difference against `ξ̇` at the previous committed step,
    /// starting from zero and held across integrator stages.
    #[default]
    BackwardDifference,
    /// Central difference of `ξ̇(q, t)` along the current motion
    /// `(q ± h q̇, t ± h)`; consistent at every integrator stage.
    FlowDifference,
}

impl XiDdotMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            XiDdotMode::FlowDifference => "flow_difference",
            XiDdotMode::BackwardDifference => "backward_difference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [XiDdotMode::FlowDifference, XiDdotMode::BackwardDifference]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// Everything one controller evaluation produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlEval {
    pub u: DVector<f64>,
    /// Rate of the controller's auxiliary state.
    pub aux_rate: DVector<f64>,
    pub sigma: DVector<f64>,
    pub xi_dot: DVector<f64>,
    /// Disturbance estimate subtracted from the control (zero if none).
    pub d_hat: DVector<f64>,
    pub joint_ref: Option<ReferenceSample>,
    pub task_ref: Option<TaskReference>,
    /// Matrix `K` with `V̇ = −σᵀ K σ` for this law.
    pub sigma_damping: DMatrix<f64>,
    pub sigma_min: f64,
}

pub trait Controller: Send {
    fn kind(&self) -> ControllerKind;

    fn gains(&self) -> &ControllerGains;

    fn aux_dim(&self) -> usize;

    fn initial_aux(&self) -> DVector<f64>;

    fn evaluate(
        &self,
        model: &dyn Manipulator,
        t: f64,
        state: &JointState,
        aux: &DVector<f64>,
    ) -> Result<ControlEval>;

    /// Called once per completed integrator step with the new state.
    fn commit(
        &mut self,
        _model: &dyn Manipulator,
        _t: f64,
        _state: &JointState,
        _aux: &DVector<f64>,
    ) -> Result<()> {
        Ok(())
    }
}

/// Joint reference following a task-space path through inverse kinematics:
/// `q̇_d = J⁺ ẋ_d`, `q̈_d = J⁺ (ẍ_d − J̇ q̇_d)`.
pub fn joint_reference_from_task(
    model: &dyn Manipulator,
    task: &TaskReference,
) -> Result<ReferenceSample> {
    let q = model.inverse_kinematics(&task.x)?;
    let pinv = damped_pseudoinverse(&model.jacobian(&q), 0.0)?;
    let qdot = &pinv * &task.xdot;
    let qddot = &pinv * (&task.xddot - model.jacobian_derivative(&q, &qdot) * &qdot);
    Ok(ReferenceSample { q, qdot, qddot })
}

fn joint_reference(
    model: &dyn Manipulator,
    trajectory: &TrajectorySpec,
    t: f64,
) -> Result<(ReferenceSample, Option<TaskReference>)> {
    match trajectory.sample(t)? {
        Reference::Joint(r) => Ok((r, None)),
        Reference::Task(task) => Ok((joint_reference_from_task(model, &task)?, Some(task))),
    }
}

fn check_gain_dims(gains: &ControllerGains, kd_lambda: usize, ki: usize) -> Result<()> {
    for (key, m, n) in [
        ("controller.kd", gains.kd(), kd_lambda),
        ("controller.lambda", gains.lambda(), kd_lambda),
        ("controller.ki", gains.ki(), ki),
    ] {
        if m.nrows() != n {
            return Err(Error::invalid(key, format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols())));
        }
    }
    Ok(())
}

/// Joint-space Lyapunov law with the integral disturbance observer.
#[derive(Debug, Clone)]
pub struct LyapunovObserver {
    gains: ControllerGains,
    trajectory: TrajectorySpec,
    observer: bool,
    d_hat0: DVector<f64>,
}

impl LyapunovObserver {
    pub fn new(
        model: &dyn Manipulator,
        gains: ControllerGains,
        trajectory: TrajectorySpec,
        observer: bool,
        d_hat0: DVector<f64>,
    ) -> Result<Self> {
        let n = model.dof();
        check_gain_dims(&gains, n, n)?;
        check_trajectory_dim(model, &trajectory)?;
        check_len("initial.d_hat", n, d_hat0.len())?;
        Ok(Self {
            gains,
            trajectory,
            observer,
            d_hat0,
        })
    }
}

fn check_len(key: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(key, format!("expected {expected} entries, got {got}")));
    }
    Ok(())
}

fn check_trajectory_dim(model: &dyn Manipulator, trajectory: &TrajectorySpec) -> Result<()> {
    let expected = match trajectory.space() {
        Space::Joint => model.dof(),
        Space::Task => model.task_dim(),
    };
    check_len("trajectory", expected, trajectory.dim())
}

impl Controller for LyapunovObserver {
    fn kind(&self) -> ControllerKind {
        ControllerKind::LyapunovObserver
    }

    fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    fn aux_dim(&self) -> usize {
        self.d_hat0.len()
    }

    fn initial_aux(&self) -> DVector<f64> {
        self.d_hat0.clone()
    }

    fn evaluate(
        &self,
        model: &dyn Manipulator,
        t: f64,
        state: &JointState,
        aux: &DVector<f64>,
    ) -> Result<ControlEval> {
        let (reference, task_ref) = joint_reference(model, &self.trajectory, t)?;
        let fe = reference_filter(state, &reference, self.gains.lambda())?;
        let obs = ObserverState { d_hat: aux.clone() };
        let u = lyapunov_control(model, state, &fe, &self.gains, &obs)?;
        let aux_rate = if self.observer {
            self.gains.ki() * &fe.sigma
        } else {
            DVector::zeros(aux.len())
        };
        Ok(ControlEval {
            u,
            aux_rate,
            sigma: fe.sigma,
            xi_dot: fe.xi_dot,
            d_hat: obs.d_hat,
            joint_ref: Some(reference),
            task_ref,
            sigma_damping: self.gains.kd().clone(),
            sigma_min: JacobianBundle::from_matrix(model.jacobian(&state.q)).sigma_min,
        })
    }
}

/// Task-space Lyapunov law, optionally with the disturbance observer.
#[derive(Debug, Clone)]
pub struct WorkspaceLyapunov {
    gains: ControllerGains,
    trajectory: TrajectorySpec,
    observer: bool,
    d_hat0: DVector<f64>,
    damping: DampingPolicy,
    mode: XiDdotMode,
    /// `(t, ξ̇, ξ̈)` at the last committed step.
    memory: Option<(f64, DVector<f64>, DVector<f64>)>,
}

impl WorkspaceLyapunov {
    const FLOW_STEP: f64 = 1e-6;

    pub fn new(
        model: &dyn Manipulator,
        gains: ControllerGains,
        trajectory: TrajectorySpec,
        observer: bool,
        d_hat0: DVector<f64>,
        damping: DampingPolicy,
        mode: XiDdotMode,
    ) -> Result<Self> {
        check_gain_dims(&gains, model.task_dim(), model.dof())?;
        if trajectory.space() != Space::Task {
            return Err(Error::invalid(
                "trajectory.kind",
                "workspace_lyapunov needs a task-space trajectory",
            ));
        }
        check_trajectory_dim(model, &trajectory)?;
        check_len("initial.d_hat", model.dof(), d_hat0.len())?;
        Ok(Self {
            gains,
            trajectory,
            observer,
            d_hat0,
            damping,
            mode,
            memory: None,
        })
    }

    fn task_reference(&self, t: f64) -> Result<TaskReference> {
        match self.trajectory.sample(t)? {
            Reference::Task(r) => Ok(r),
            Reference::Joint(_) => unreachable!("validated task-space trajectory"),
        }
    }

    fn xi_dot_at(&self, model: &dyn Manipulator, q: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let r = self.task_reference(t)?;
        Ok(workspace_filter(model, q, &r, self.gains.lambda(), &self.damping)?.xi_dot)
    }

    fn xi_ddot(
        &self,
        model: &dyn Manipulator,
        t: f64,
        state: &JointState,
        xi_dot: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        match self.mode {
            XiDdotMode::FlowDifference => {
                let h = Self::FLOW_STEP;
                let ahead = self.xi_dot_at(model, &(&state.q + &state.qdot * h), t + h)?;
                let behind = self.xi_dot_at(model, &(&state.q - &state.qdot * h), t - h)?;
                Ok((ahead - behind) / (2.0 * h))
            }
            XiDdotMode::BackwardDifference => match &self.memory {
                Some((t_prev, xi_prev, xi_ddot_prev)) => {
                    if t > *t_prev {
                        Ok((xi_dot - xi_prev) / (t - t_prev))
                    } else {
                        Ok(xi_ddot_prev.clone())
                    }
                }
                None => Ok(DVector::zeros(xi_dot.len())),
            },
        }
    }
}

impl Controller for WorkspaceLyapunov {
    fn kind(&self) -> ControllerKind {
        ControllerKind::WorkspaceLyapunov
    }

    fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    fn aux_dim(&self) -> usize {
        self.d_hat0.len()
    }

    fn initial_aux(&self) -> DVector<f64> {
        self.d_hat0.clone()
    }

    fn evaluate(
        &self,
        model: &dyn Manipulator,
        t: f64,
        state: &JointState,
        aux: &DVector<f64>,
    ) -> Result<ControlEval> {
        let task_ref = self.task_reference(t)?;
        let wf = workspace_filter(model, &state.q, &task_ref, self.gains.lambda(), &self.damping)?;
        let xi_ddot = self.xi_ddot(model, t, state, &wf.xi_dot)?;
        let obs = ObserverState { d_hat: aux.clone() };
        let u = workspace_control(
            model,
            state,
            &wf.xi_dot,
            &xi_ddot,
            &wf.jacobian.j,
            &self.gains,
            Some(&obs),
        )?;
        let sigma = &state.qdot - &wf.xi_dot;
        let aux_rate = if self.observer {
            self.gains.ki() * &sigma
        } else {
            DVector::zeros(aux.len())
        };
        let j = &wf.jacobian.j;
        Ok(ControlEval {
            u,
            aux_rate,
            sigma,
            xi_dot: wf.xi_dot,
            d_hat: obs.d_hat,
            joint_ref: None,
            task_ref: Some(task_ref),
            sigma_damping: j.transpose() * self.gains.kd() * j,
            sigma_min: wf.jacobian.sigma_min,
        })
    }

    fn commit(
        &mut self,
        model: &dyn Manipulator,
        t: f64,
        state: &JointState,
        _aux: &DVector<f64>,
    ) -> Result<()> {
        if self.mode != XiDdotMode::BackwardDifference {
            return Ok(());
        }
        let xi_dot = self.xi_dot_at(model, &state.q, t)?;
        let xi_ddot = match &self.memory {
            Some((t_prev, xi_prev, _)) if t > *t_prev => (&xi_dot - xi_prev) / (t - t_prev),
            _ => DVector::zeros(xi_dot.len()),
        };
        self.memory = Some((t, xi_dot, xi_ddot));
        Ok(())
    }
}

/// Computed-torque baseline with integral action on the joint error.
#[derive(Debug, Clone)]
pub struct InverseDynamicsIntegral {
    gains: ControllerGains,
    trajectory: TrajectorySpec,
    n: usize,
}

impl InverseDynamicsIntegral {
    pub fn new(
        model: &dyn Manipulator,
        gains: ControllerGains,
        trajectory: TrajectorySpec,
    ) -> Result<Self> {
        let n = model.dof();
        check_gain_dims(&gains, n, n)?;
        check_trajectory_dim(model, &trajectory)?;
        Ok(Self {
            gains,
            trajectory,
            n,
        })
    }
}

impl Controller for InverseDynamicsIntegral {
    fn kind(&self) -> ControllerKind {
        ControllerKind::InverseDynamicsIntegral
    }

    fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    fn aux_dim(&self) -> usize {
        self.n
    }

    fn initial_aux(&self) -> DVector<f64> {
        DVector::zeros(self.n)
    }

    fn evaluate(
        &self,
        model: &dyn Manipulator,
        t: f64,
        state: &JointState,
        aux: &DVector<f64>,
    ) -> Result<ControlEval> {
        let (reference, task_ref) = joint_reference(model, &self.trajectory, t)?;
        let out = inverse_dynamics_integral_control(model, state, &reference, &self.gains, aux)?;
        let fe = reference_filter(state, &reference, self.gains.lambda())?;
        Ok(ControlEval {
            u: out.u,
            aux_rate: out.integral_rate,
            sigma: fe.sigma,
            xi_dot: fe.xi_dot,
            d_hat: DVector::zeros(self.n),
            joint_ref: Some(reference),
            task_ref,
            sigma_damping: self.gains.kd().clone(),
            sigma_min: JacobianBundle::from_matrix(model.jacobian(&state.q)).sigma_min,
        })
    }
}
