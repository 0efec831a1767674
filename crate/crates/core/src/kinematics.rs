//! Task-space kinematics, Jacobian conditioning and damped pseudoinverses.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::Manipulator;
use crate::error::{Error, Result};
use crate::signals::{Reference, TrajectorySpec};

/// Task-space position (m) with optional velocity (m/s).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPoint {
    pub x: DVector<f64>,
    pub xdot: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBundle {
    pub j: DMatrix<f64>,
    /// Smallest of the `min(m, n)` singular values.
    pub sigma_min: f64,
    /// `√det(J Jᵀ)`; zero when `J` loses row rank.
    pub manipulability: f64,
}

impl JacobianBundle {
    pub fn from_matrix(j: DMatrix<f64>) -> Self {
        let sv = j.clone().singular_values();
        let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
        let manipulability = if j.nrows() <= j.ncols() {
            sv.iter().product::<f64>().abs()
        } else {
            0.0
        };
        Self {
            j,
            sigma_min,
            manipulability,
        }
    }
}

/// When to add damping to the pseudoinverse: `lambda` is applied only
/// while `sigma_min < threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingPolicy {
    pub lambda: f64,
    pub threshold: f64,
}

impl Default for DampingPolicy {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            threshold: 1e-2,
        }
    }
}

impl DampingPolicy {
    pub fn undamped() -> Self {
        Self {
            lambda: 0.0,
            threshold: 0.0,
        }
    }

    pub fn lambda_for(&self, sigma_min: f64) -> f64 {
        if sigma_min < self.threshold {
            self.lambda
        } else {
            0.0
        }
    }

    pub fn pseudoinverse(&self, bundle: &JacobianBundle) -> Result<DMatrix<f64>> {
        damped_pseudoinverse(&bundle.j, self.lambda_for(bundle.sigma_min))
    }
}

pub fn forward_kinematics(model: &dyn Manipulator, q: &DVector<f64>) -> Result<TaskPoint> {
    check_q(model, q)?;
    Ok(TaskPoint {
        x: model.forward_kinematics(q),
        xdot: None,
    })
}

/// Task point with velocity `J q̇`.
pub fn task_state(
    model: &dyn Manipulator,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Result<TaskPoint> {
    check_q(model, q)?;
    check_q(model, qdot)?;
    Ok(TaskPoint {
        x: model.forward_kinematics(q),
        xdot: Some(model.jacobian(q) * qdot),
    })
}

pub fn jacobian(model: &dyn Manipulator, q: &DVector<f64>) -> Result<JacobianBundle> {
    check_q(model, q)?;
    Ok(JacobianBundle::from_matrix(model.jacobian(q)))
}

fn check_q(model: &dyn Manipulator, q: &DVector<f64>) -> Result<()> {
    if q.len() != model.dof() {
        return Err(Error::DimensionMismatch {
            context: "joint vector",
            expected: model.dof(),
            got: q.len(),
        });
    }
    Ok(())
}

/// `Jᵀ (J Jᵀ + λ² I)⁻¹`. With `λ = 0` and full row rank this is the
/// Moore–Penrose pseudoinverse.
pub fn damped_pseudoinverse(j: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    let m = j.nrows();
    if lambda == 0.0 {
        let sv = j.clone().singular_values();
        let largest = sv.iter().copied().fold(0.0, f64::max);
        let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = f64::EPSILON * largest * j.nrows().max(j.ncols()) as f64;
        if m > j.ncols() || smallest <= tol {
            return Err(Error::SingularJacobian(format!(
                "J is row-rank deficient (sigma_min = {smallest:e})"
            )));
        }
    }
    let gram = j * j.transpose() + DMatrix::identity(m, m) * (lambda * lambda);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularJacobian("J Jᵀ + λ²I is not positive definite".into()))?;
    // (JJᵀ + λ²I)⁻¹ J, transposed.
    Ok(chol.solve(j).transpose())
}

/// Smallest `sigma_min` met while following `trajectory` over `[0, horizon]`
/// with samples every `dt`, using inverse-kinematics configurations.
pub fn singularity_clearance(
    model: &dyn Manipulator,
    trajectory: &TrajectorySpec,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::invalid("dt", "need dt > 0 and horizon >= 0"));
    }
    let steps = (horizon / dt).round() as usize;
    let mut clearance = f64::INFINITY;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let q = match trajectory.sample(t)? {
            Reference::Task(r) => model.inverse_kinematics(&r.x)?,
            Reference::Joint(r) => r.q,
        };
        clearance = clearance.min(jacobian(model, &q)?.sigma_min);
    }
    Ok(clearance)
}
