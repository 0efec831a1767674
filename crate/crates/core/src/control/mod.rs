//! Passivity-based tracking control with a disturbance observer.
//!
//! The filtered error `σ = q̇ − ξ̇` with `ξ̇ = q̇_d − Λ q̃` turns the closed
//! loop into
//!
//! ```text
//! M σ̇ + C σ + K_D σ = d − d̂
//! ```
//!
//! and the observer `d̂̇ = K_I σ` makes
//! `V = ½ σᵀ M σ + ½ d̃ᵀ K_I⁻¹ d̃` decrease as `V̇ = −σᵀ K_D σ`.

mod controllers;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{check_state, christoffel_coriolis, JointState, Manipulator};
use crate::error::{Error, Result};
use crate::kinematics::{DampingPolicy, JacobianBundle};
use crate::sim::SimLog;
use crate::signals::TaskReference;

pub use controllers::{
    joint_reference_from_task, ControlEval, Controller, ControllerKind, InverseDynamicsIntegral,
    LyapunovObserver, WorkspaceLyapunov, XiDdotMode,
};

/// Symmetric positive-definite gain matrices.
///
/// `kd` and `lambda` act on σ and q̃ for joint-space laws, or on task-space
/// errors for the workspace law; `ki` always acts on joint-space σ.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    kd: DMatrix<f64>,
    ki: DMatrix<f64>,
    lambda: DMatrix<f64>,
    ki_inv: DMatrix<f64>,
}

fn check_spd(key: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::invalid(key, format!("must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(key, "entries must be finite"));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::invalid(key, "must be symmetric"));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::invalid(key, "must be positive definite"));
    }
    Ok(())
}

impl ControllerGains {
    pub fn new(kd: DMatrix<f64>, ki: DMatrix<f64>, lambda: DMatrix<f64>) -> Result<Self> {
        check_spd("controller.kd", &kd)?;
        check_spd("controller.ki", &ki)?;
        check_spd("controller.lambda", &lambda)?;
        let ki_inv = ki
            .clone()
            .cholesky()
            .expect("checked positive definite")
            .inverse();
        Ok(Self {
            kd,
            ki,
            lambda,
            ki_inv,
        })
    }

    /// `kd·I`, `ki·I`, `lambda·I` of dimension `n`.
    pub fn isotropic(n: usize, kd: f64, ki: f64, lambda: f64) -> Result<Self> {
        let eye = DMatrix::<f64>::identity(n, n);
        Self::new(&eye * kd, &eye * ki, &eye * lambda)
    }

    pub fn kd(&self) -> &DMatrix<f64> {
        &self.kd
    }

    pub fn ki(&self) -> &DMatrix<f64> {
        &self.ki
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn ki_inv(&self) -> &DMatrix<f64> {
        &self.ki_inv
    }

    /// Proportional gain of the inverse-dynamics baseline, `Λ² + K_D Λ`.
    pub fn baseline_kp(&self) -> DMatrix<f64> {
        &self.lambda * &self.lambda + &self.kd * &self.lambda
    }
}

/// Desired joint motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredError {
    /// `q − q_d`
    pub qtilde: DVector<f64>,
    pub qtilde_dot: DVector<f64>,
    /// `q̇ − ξ̇`
    pub sigma: DVector<f64>,
    pub xi_dot: DVector<f64>,
    pub xi_ddot: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub d_hat: DVector<f64>,
}

impl ObserverState {
    pub fn zero(n: usize) -> Self {
        Self {
            d_hat: DVector::zeros(n),
        }
    }

    pub fn new(d_hat: DVector<f64>) -> Result<Self> {
        if !d_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("observer estimate"));
        }
        Ok(Self { d_hat })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub v: f64,
    pub vdot_model: f64,
    pub sigma_norm: f64,
}

fn same_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

/// Filtered tracking error with the constant error filter `F = Λ`.
pub fn reference_filter(
    state: &JointState,
    reference: &ReferenceSample,
    lambda: &DMatrix<f64>,
) -> Result<FilteredError> {
    let n = state.dof();
    same_dim("reference q", n, reference.q.len())?;
    same_dim("reference qdot", n, reference.qdot.len())?;
    same_dim("reference qddot", n, reference.qddot.len())?;
    same_dim("lambda", n, lambda.nrows())?;
    same_dim("lambda", n, lambda.ncols())?;
    let qtilde = &state.q - &reference.q;
    let qtilde_dot = &state.qdot - &reference.qdot;
    let xi_dot = &reference.qdot - lambda * &qtilde;
    let xi_ddot = &reference.qddot - lambda * &qtilde_dot;
    let sigma = &state.qdot - &xi_dot;
    Ok(FilteredError {
        qtilde,
        qtilde_dot,
        sigma,
        xi_dot,
        xi_ddot,
    })
}

/// `u = M ξ̈ + C ξ̇ + G − K_D σ − d̂`.
pub fn lyapunov_control(
    model: &dyn Manipulator,
    state: &JointState,
    fe: &FilteredError,
    gains: &ControllerGains,
    obs: &ObserverState,
) -> Result<DVector<f64>> {
    check_state(model, state)?;
    let n = model.dof();
    same_dim("sigma", n, fe.sigma.len())?;
    same_dim("d_hat", n, obs.d_hat.len())?;
    same_dim("kd", n, gains.kd.nrows())?;
    let m = model.mass_matrix(&state.q);
    let c = christoffel_coriolis(&model.mass_matrix_partials(&state.q), &state.qdot);
    Ok(m * &fe.xi_ddot + c * &fe.xi_dot + model.gravity(&state.q)
        - &gains.kd * &fe.sigma
        - &obs.d_hat)
}

/// One explicit Euler step of `d̂̇ = K_I σ`.
pub fn observer_update(
    obs: &ObserverState,
    sigma: &DVector<f64>,
    ki: &DMatrix<f64>,
    dt: f64,
) -> Result<ObserverState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    same_dim("observer sigma", obs.d_hat.len(), sigma.len())?;
    same_dim("observer ki", obs.d_hat.len(), ki.nrows())?;
    ObserverState::new(&obs.d_hat + ki * sigma * dt)
}

/// Task-space filter quantities feeding the workspace law.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceFilter {
    pub x: DVector<f64>,
    /// `ẋ_d + Λ (x_d − x)`
    pub xi_dot_x: DVector<f64>,
    /// `J⁺ ξ̇_x`
    pub xi_dot: DVector<f64>,
    pub jacobian: JacobianBundle,
}

pub fn workspace_filter(
    model: &dyn Manipulator,
    q: &DVector<f64>,
    task_ref: &TaskReference,
    lambda: &DMatrix<f64>,
    damping: &DampingPolicy,
) -> Result<WorkspaceFilter> {
    same_dim("workspace q", model.dof(), q.len())?;
    same_dim("task reference", model.task_dim(), task_ref.x.len())?;
    same_dim("task lambda", model.task_dim(), lambda.nrows())?;
    let x = model.forward_kinematics(q);
    let xi_dot_x = &task_ref.xdot + lambda * (&task_ref.x - &x);
    let jacobian = JacobianBundle::from_matrix(model.jacobian(q));
    let xi_dot = damping.pseudoinverse(&jacobian)? * &xi_dot_x;
    Ok(WorkspaceFilter {
        x,
        xi_dot_x,
        xi_dot,
        jacobian,
    })
}

/// `u = M ξ̈ + C ξ̇ + G + Jᵀ K_D J (ξ̇ − q̇)`, minus `d̂` when an observer
/// estimate is supplied.
pub fn workspace_control(
    model: &dyn Manipulator,
    state: &JointState,
    xi_dot: &DVector<f64>,
    xi_ddot: &DVector<f64>,
    j: &DMatrix<f64>,
    gains: &ControllerGains,
    obs: Option<&ObserverState>,
) -> Result<DVector<f64>> {
    check_state(model, state)?;
    let n = model.dof();
    same_dim("xi_dot", n, xi_dot.len())?;
    same_dim("xi_ddot", n, xi_ddot.len())?;
    same_dim("jacobian columns", n, j.ncols())?;
    same_dim("task kd", j.nrows(), gains.kd.nrows())?;
    let m = model.mass_matrix(&state.q);
    let c = christoffel_coriolis(&model.mass_matrix_partials(&state.q), &state.qdot);
    let mut u = m * xi_ddot
        + c * xi_dot
        + model.gravity(&state.q)
        + j.transpose() * &gains.kd * j * (xi_dot - &state.qdot);
    if let Some(obs) = obs {
        same_dim("d_hat", n, obs.d_hat.len())?;
        u -= &obs.d_hat;
    }
    Ok(u)
}

/// Control and integrator rate of the computed-torque-plus-integral law.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub u: DVector<f64>,
    /// Rate of the integral state, `q̃`.
    pub integral_rate: DVector<f64>,
}

/// `u = M (q̈_d − K_D q̃̇ − K_P q̃ − K_I ∫q̃) + C q̇ + G` with `K_P = Λ² + K_D Λ`.
pub fn inverse_dynamics_integral_control(
    model: &dyn Manipulator,
    state: &JointState,
    reference: &ReferenceSample,
    gains: &ControllerGains,
    integral: &DVector<f64>,
) -> Result<BaselineOutput> {
    check_state(model, state)?;
    let n = model.dof();
    same_dim("integral state", n, integral.len())?;
    same_dim("kd", n, gains.kd.nrows())?;
    same_dim("ki", n, gains.ki.nrows())?;
    let fe = reference_filter(state, reference, &gains.lambda)?;
    let m = model.mass_matrix(&state.q);
    let c = christoffel_coriolis(&model.mass_matrix_partials(&state.q), &state.qdot);
    let accel = &reference.qddot
        - &gains.kd * &fe.qtilde_dot
        - gains.baseline_kp() * &fe.qtilde
        - &gains.ki * integral;
    Ok(BaselineOutput {
        u: m * accel + c * &state.qdot + model.gravity(&state.q),
        integral_rate: fe.qtilde,
    })
}

/// Storage function `V = ½σᵀMσ + ½d̃ᵀK_I⁻¹d̃` and its model rate `−σᵀ K σ`
/// for the damping matrix `K` acting on σ (`K_D`, or `Jᵀ K_D J` in task space).
pub fn lyapunov_diagnostics(
    model: &dyn Manipulator,
    q: &DVector<f64>,
    sigma: &DVector<f64>,
    obs: &ObserverState,
    true_d: &DVector<f64>,
    damping: &DMatrix<f64>,
    ki_inv: &DMatrix<f64>,
) -> Result<LyapunovSample> {
    let n = model.dof();
    same_dim("lyapunov q", n, q.len())?;
    same_dim("lyapunov sigma", n, sigma.len())?;
    same_dim("lyapunov d_hat", n, obs.d_hat.len())?;
    same_dim("lyapunov d", n, true_d.len())?;
    same_dim("lyapunov damping", n, damping.nrows())?;
    same_dim("lyapunov ki", n, ki_inv.nrows())?;
    let m = model.mass_matrix(q);
    let d_tilde = true_d - &obs.d_hat;
    let v = 0.5 * sigma.dot(&(m * sigma)) + 0.5 * d_tilde.dot(&(ki_inv * &d_tilde));
    let vdot_model = -sigma.dot(&(damping * sigma));
    Ok(LyapunovSample {
        v: v.max(0.0),
        vdot_model: vdot_model.min(0.0),
        sigma_norm: sigma.norm(),
    })
}

/// `|∫₀ᵗ −σᵀd̃ ds − (V₁(t) − V₁(0))|` over the logged run, with
/// `V₁ = ½ d̃ᵀ K_I⁻¹ d̃` and trapezoidal quadrature.
pub fn passivity_audit(log: &SimLog, ki: &DMatrix<f64>) -> Result<f64> {
    let n = ki.nrows();
    let t = log.require("t")?;
    let sigma = log.require_vector("sigma", n)?;
    let d = log.require_vector("d", n)?;
    let d_hat = log.require_vector("d_hat", n)?;
    let ki_inv = ki
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("controller.ki", "must be positive definite"))?
        .inverse();

    let d_tilde = |k: usize| DVector::from_fn(n, |i, _| d[i][k] - d_hat[i][k]);
    let sig = |k: usize| DVector::from_fn(n, |i, _| sigma[i][k]);
    let storage = |dt: &DVector<f64>| 0.5 * dt.dot(&(&ki_inv * dt));
    let supply = |k: usize| -sig(k).dot(&d_tilde(k));

    let mut integral = 0.0;
    for k in 1..t.len() {
        integral += 0.5 * (t[k] - t[k - 1]) * (supply(k) + supply(k - 1));
    }
    let last = t.len() - 1;
    let storage_change = storage(&d_tilde(last)) - storage(&d_tilde(0));
    Ok((integral - storage_change).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{PlanarArm, PlanarArmParams, SurgicalArm, SurgicalArmParams};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn planar() -> PlanarArm {
        PlanarArm::new(PlanarArmParams::default())
    }

    #[test]
    fn gains_reject_non_spd() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let eye = DMatrix::identity(2, 2);
        match ControllerGains::new(bad, eye.clone(), eye.clone()) {
            Err(Error::InvalidParameter { key, .. }) => assert_eq!(key, "controller.kd"),
            other => panic!("{other:?}"),
        }
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]);
        assert!(ControllerGains::new(eye.clone(), asym, eye.clone()).is_err());
        let g = ControllerGains::isotropic(2, 2.0, 1.0, 2.0).unwrap();
        assert_eq!(g.baseline_kp(), DMatrix::identity(2, 2) * 8.0);
    }

    #[test]
    fn zero_error_gives_zero_sigma() {
        let state = JointState::from_slices(&[0.3, -0.2], &[0.5, 0.1]).unwrap();
        let r = ReferenceSample {
            q: v(&[0.3, -0.2]),
            qdot: v(&[0.5, 0.1]),
            qddot: v(&[1.0, 2.0]),
        };
        let fe = reference_filter(&state, &r, &(DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert_eq!(fe.sigma, DVector::zeros(2));
        assert_eq!(fe.xi_dot, r.qdot);
    }

    #[test]
    fn position_error_filters_to_lambda_scaled_sigma() {
        let state = JointState::from_slices(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let r = ReferenceSample {
            q: DVector::zeros(2),
            qdot: DVector::zeros(2),
            qddot: DVector::zeros(2),
        };
        let lambda = DMatrix::identity(2, 2) * 2.0;
        let fe = reference_filter(&state, &r, &lambda).unwrap();
        assert_eq!(fe.sigma.as_slice(), &[2.0, 0.0]);
        assert_eq!(fe.sigma, &fe.qtilde_dot + &lambda * &fe.qtilde);
        // (sI + Λ)⁻¹ has its poles at the negated eigenvalues of Λ.
        let poles = lambda.symmetric_eigenvalues().map(|e| -e);
        assert!(poles.iter().all(|p| *p == -2.0));
    }

    #[test]
    fn rest_gravity_compensation() {
        let arm = SurgicalArm::new(SurgicalArmParams::default());
        let state = JointState::at_rest(v(&[0.1, 0.5, 0.2, 0.05])).unwrap();
        let r = ReferenceSample {
            q: state.q.clone(),
            qdot: DVector::zeros(4),
            qddot: DVector::zeros(4),
        };
        let gains = ControllerGains::isotropic(4, 2.0, 1.0, 2.0).unwrap();
        let fe = reference_filter(&state, &r, gains.lambda()).unwrap();
        let u = lyapunov_control(&arm, &state, &fe, &gains, &ObserverState::zero(4)).unwrap();
        assert!((u - arm.gravity(&state.q)).amax() < 1e-15);
    }

    #[test]
    fn estimate_enters_additively() {
        let arm = planar();
        let state = JointState::from_slices(&[0.4, 1.2], &[0.3, -0.7]).unwrap();
        let r = ReferenceSample {
            q: v(&[0.5, 1.0]),
            qdot: v(&[0.1, 0.2]),
            qddot: v(&[-0.3, 0.4]),
        };
        let gains = ControllerGains::isotropic(2, 2.0, 1.0, 2.0).unwrap();
        let fe = reference_filter(&state, &r, gains.lambda()).unwrap();
        let d1 = ObserverState::new(v(&[1.0, 1.0])).unwrap();
        let d2 = ObserverState::new(v(&[-3.0, 0.5])).unwrap();
        let u1 = lyapunov_control(&arm, &state, &fe, &gains, &d1).unwrap();
        let u2 = lyapunov_control(&arm, &state, &fe, &gains, &d2).unwrap();
        assert!(((&u1 - &u2) + (&d1.d_hat - &d2.d_hat)).amax() < 1e-13);
    }

    #[test]
    fn single_euler_observer_step() {
        let obs = ObserverState::zero(2);
        let next = observer_update(&obs, &v(&[1.0, 0.0]), &DMatrix::identity(2, 2), 0.01).unwrap();
        assert_eq!(next.d_hat.as_slice(), &[0.01, 0.0]);
        let same = observer_update(&next, &DVector::zeros(2), &DMatrix::identity(2, 2), 0.5).unwrap();
        assert_eq!(same, next);
        assert!(observer_update(&obs, &v(&[1.0, 0.0]), &DMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn workspace_law_at_rest_on_target() {
        let arm = planar();
        let q = v(&[0.3, 1.4]);
        let state = JointState::at_rest(q.clone()).unwrap();
        let task = TaskReference {
            x: arm.forward_kinematics(&q),
            xdot: DVector::zeros(2),
            xddot: DVector::zeros(2),
        };
        let gains = ControllerGains::isotropic(2, 4.0, 1.0, 2.0).unwrap();
        let wf = workspace_filter(&arm, &q, &task, gains.lambda(), &DampingPolicy::default()).unwrap();
        assert!(wf.xi_dot.amax() < 1e-14);
        let u = workspace_control(&arm, &state, &wf.xi_dot, &DVector::zeros(2), &wf.jacobian.j, &gains, None)
            .unwrap();
        assert!((u - arm.gravity(&q)).amax() < 1e-12);
    }

    #[test]
    fn workspace_damping_vanishes_when_velocity_matches() {
        let arm = planar();
        let state = JointState::from_slices(&[0.3, 1.4], &[0.2, -0.5]).unwrap();
        let gains = ControllerGains::isotropic(2, 4.0, 1.0, 2.0).unwrap();
        let xi_ddot = v(&[0.7, -0.1]);
        let j = arm.jacobian(&state.q);
        let u = workspace_control(&arm, &state, &state.qdot, &xi_ddot, &j, &gains, None).unwrap();
        let m = arm.mass_matrix(&state.q);
        let c = crate::dynamics::coriolis_matrix(&arm, &state.q, &state.qdot).unwrap();
        let expected = m * &xi_ddot + c * &state.qdot + arm.gravity(&state.q);
        assert!((u - expected).amax() < 1e-13);
    }

    #[test]
    fn baseline_feedforward_only_at_zero_error() {
        let arm = planar();
        let state = JointState::from_slices(&[0.2, 0.9], &[0.4, 0.1]).unwrap();
        let r = ReferenceSample {
            q: state.q.clone(),
            qdot: state.qdot.clone(),
            qddot: v(&[1.5, -0.5]),
        };
        let gains = ControllerGains::isotropic(2, 2.0, 1.0, 2.0).unwrap();
        let out = inverse_dynamics_integral_control(&arm, &state, &r, &gains, &DVector::zeros(2)).unwrap();
        let m = arm.mass_matrix(&state.q);
        let c = crate::dynamics::coriolis_matrix(&arm, &state.q, &state.qdot).unwrap();
        let expected = m * &r.qddot + c * &state.qdot + arm.gravity(&state.q);
        assert!((out.u - expected).amax() < 1e-13);
        assert_eq!(out.integral_rate, DVector::zeros(2));
    }

    #[test]
    fn lyapunov_zero_at_equilibrium_and_rate_nonpositive() {
        let arm = planar();
        let q = v(&[0.5, 1.0]);
        let d = v(&[10.0, 10.0]);
        let obs = ObserverState::new(d.clone()).unwrap();
        let gains = ControllerGains::isotropic(2, 2.0, 1.0, 2.0).unwrap();
        let s = lyapunov_diagnostics(&arm, &q, &DVector::zeros(2), &obs, &d, gains.kd(), gains.ki_inv())
            .unwrap();
        assert_eq!(s.v, 0.0);
        assert_eq!(s.vdot_model, 0.0);
        let s = lyapunov_diagnostics(&arm, &q, &v(&[0.3, -2.0]), &ObserverState::zero(2), &d, gains.kd(), gains.ki_inv())
            .unwrap();
        assert!(s.v > 0.0);
        assert!(s.vdot_model < 0.0);
    }
}
