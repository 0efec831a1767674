//! Rigid-body manipulator dynamics in the canonical form
//!
//! ```text
//! M(q) q̈ + C(q, q̇) q̇ + G(q) + R q̇ = u + d
//! ```
//!
//! Models provide the mass matrix, its configuration partials, gravity and
//! kinematics; the Coriolis matrix is assembled generically from Christoffel
//! symbols so that `Ṁ − 2C` is skew-symmetric for every model.

mod planar;
mod surgical;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use planar::{ElbowBranch, PlanarArm, PlanarArmParams};
pub use surgical::{
    kinetic_energy_components, potential_energy, total_kinetic_energy, SurgicalArm,
    SurgicalArmParams,
};

/// Generalized coordinates and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::DimensionMismatch {
                context: "JointState velocity",
                expected: q.len(),
                got: qdot.len(),
            });
        }
        if !q.iter().chain(qdot.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("JointState"));
        }
        Ok(Self { q, qdot })
    }

    pub fn from_slices(q: &[f64], qdot: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(qdot))
    }

    pub fn at_rest(q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(q, DVector::zeros(n))
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Diagonal viscous friction `R q̇`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionModel {
    coefficients: DVector<f64>,
}

impl FrictionModel {
    pub fn frictionless(n: usize) -> Self {
        Self {
            coefficients: DVector::zeros(n),
        }
    }

    pub fn viscous(coefficients: DVector<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid(
                "model.friction",
                "viscous coefficients must be finite and >= 0",
            ));
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn is_frictionless(&self) -> bool {
        self.coefficients.iter().all(|c| *c == 0.0)
    }

    pub fn force(&self, qdot: &DVector<f64>) -> DVector<f64> {
        self.coefficients.component_mul(qdot)
    }
}

/// Evaluators an n-DOF arm exposes to dynamics, kinematics and control.
///
/// Methods take vectors of the model's dimension; the checked free functions
/// in this module validate dimensions before calling them.
pub trait Manipulator: Send + Sync {
    fn name(&self) -> &'static str;

    fn dof(&self) -> usize;

    /// Dimension of the task-space point returned by `forward_kinematics`.
    fn task_dim(&self) -> usize;

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// `∂M/∂q_k` for k = 0..n.
    fn mass_matrix_partials(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>>;

    fn potential_energy(&self, q: &DVector<f64>) -> f64;

    /// `∂V/∂q` in closed form.
    fn gravity(&self, q: &DVector<f64>) -> DVector<f64>;

    fn friction(&self) -> &FrictionModel;

    fn kinetic_energy(&self, state: &JointState) -> f64 {
        0.5 * state
            .qdot
            .dot(&(self.mass_matrix(&state.q) * &state.qdot))
    }

    fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian of `forward_kinematics`.
    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// `J̇ = Σ_k ∂J/∂q_k q̇_k`. The default differentiates `jacobian`
    /// numerically along `qdot`.
    fn jacobian_derivative(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        let h = 1e-6;
        let plus = self.jacobian(&(q + qdot * h));
        let minus = self.jacobian(&(q - qdot * h));
        (plus - minus) / (2.0 * h)
    }

    /// Joint configuration placing the task point at `x`. Redundant
    /// coordinates are fixed at zero.
    fn inverse_kinematics(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

pub(crate) fn check_state(model: &dyn Manipulator, state: &JointState) -> Result<()> {
    check_dim("joint state", model.dof(), state.dof())
}

pub fn mass_matrix(model: &dyn Manipulator, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim("mass_matrix q", model.dof(), q.len())?;
    Ok(model.mass_matrix(q))
}

pub fn gravity_vector(model: &dyn Manipulator, q: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("gravity_vector q", model.dof(), q.len())?;
    Ok(model.gravity(q))
}

pub fn friction_force(model: &dyn Manipulator, qdot: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("friction_force qdot", model.dof(), qdot.len())?;
    Ok(model.friction().force(qdot))
}

/// Coriolis/centripetal matrix from the Christoffel symbols of `M`:
///
/// `C_kj = Σ_i ½(∂M_kj/∂q_i + ∂M_ki/∂q_j − ∂M_ij/∂q_k) q̇_i`
pub fn coriolis_matrix(
    model: &dyn Manipulator,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.dof();
    check_dim("coriolis_matrix q", n, q.len())?;
    check_dim("coriolis_matrix qdot", n, qdot.len())?;
    Ok(christoffel_coriolis(&model.mass_matrix_partials(q), qdot))
}

pub(crate) fn christoffel_coriolis(dm: &[DMatrix<f64>], qdot: &DVector<f64>) -> DMatrix<f64> {
    let n = qdot.len();
    DMatrix::from_fn(n, n, |k, j| {
        (0..n)
            .map(|i| 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * qdot[i])
            .sum()
    })
}

/// `Ṁ = Σ_k ∂M/∂q_k q̇_k` from the closed-form partials.
pub fn mass_matrix_rate(
    model: &dyn Manipulator,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.dof();
    check_dim("mass_matrix_rate q", n, q.len())?;
    check_dim("mass_matrix_rate qdot", n, qdot.len())?;
    let partials = model.mass_matrix_partials(q);
    Ok(partials
        .iter()
        .zip(qdot.iter())
        .fold(DMatrix::zeros(n, n), |acc, (dm, v)| acc + dm * *v))
}

/// Total mechanical energy `T + V`.
pub fn total_energy(model: &dyn Manipulator, state: &JointState) -> Result<f64> {
    check_state(model, state)?;
    Ok(model.kinetic_energy(state) + model.potential_energy(&state.q))
}

/// Joint accelerations of `M q̈ + C q̇ + G + R q̇ = u + d`, solved through a
/// Cholesky factorization of `M`.
pub fn forward_dynamics(
    model: &dyn Manipulator,
    state: &JointState,
    u: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = model.dof();
    check_state(model, state)?;
    check_dim("forward_dynamics u", n, u.len())?;
    check_dim("forward_dynamics d", n, d.len())?;
    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("forward_dynamics u"));
    }
    if !d.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("forward_dynamics d"));
    }
    let m = model.mass_matrix(&state.q);
    let c = christoffel_coriolis(&model.mass_matrix_partials(&state.q), &state.qdot);
    let rhs = u + d
        - c * &state.qdot
        - model.gravity(&state.q)
        - model.friction().force(&state.qdot);
    let chol = m.cholesky().ok_or_else(|| {
        Error::ModelInvariant(format!(
            "mass matrix of {} is not positive definite at q = {:?}",
            model.name(),
            state.q.as_slice()
        ))
    })?;
    Ok(chol.solve(&rhs))
}
