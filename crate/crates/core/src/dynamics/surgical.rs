//! Four-coordinate spherical surgical arm: azimuth θ, elevation φ, instrument
//! roll α and insertion ρ.
//!
//! Energies are written per body (supporting rod, insertion unit, azimuth
//! base, instrument). The mass matrix below collects their velocity
//! coefficients by hand; `kinetic_energy` evaluates the per-body sums
//! directly, so the two routes check one another.

use nalgebra::{DMatrix, DVector};

use super::{check_dim, FrictionModel, JointState, Manipulator};
use crate::error::{Error, Result};

const KG_MM2: f64 = 1e-6;
const MM: f64 = 1e-3;

/// Inertial parameters in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct SurgicalArmParams {
    /// Supporting rod mass (kg).
    pub m1: f64,
    /// Insertion and instrument-driven unit mass (kg).
    pub m2: f64,
    /// Azimuth base mass (kg). Does not enter the energies.
    pub m3: f64,
    /// Instrument mass (kg).
    pub m4: f64,
    pub i1a: f64,
    pub i1t: f64,
    pub i2a: f64,
    pub i2t: f64,
    pub i3a: f64,
    pub i4a: f64,
    pub i4t: f64,
    /// Supporting rod length (m).
    pub l1: f64,
    /// Instrument length (m).
    pub l2: f64,
    pub g: f64,
}

impl Default for SurgicalArmParams {
    /// Prototype values; inertias converted from kg·mm², lengths from mm.
    fn default() -> Self {
        Self {
            m1: 1.541,
            m2: 1.613,
            m3: 0.915,
            m4: 0.089,
            i1a: 32045.478 * KG_MM2,
            i1t: 31429.513 * KG_MM2,
            i2a: 6317.537 * KG_MM2,
            i2t: 2401.198 * KG_MM2,
            i3a: 4249.517 * KG_MM2,
            i4a: 2681.116 * KG_MM2,
            i4t: 1358.560 * KG_MM2,
            l1: 520.0 * MM,
            l2: 300.0 * MM,
            g: 9.81,
        }
    }
}

impl SurgicalArmParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("model.m1", self.m1),
            ("model.m2", self.m2),
            ("model.m3", self.m3),
            ("model.m4", self.m4),
            ("model.l1", self.l1),
            ("model.l2", self.l2),
            ("model.g", self.g),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(key, format!("must be finite and > 0, got {v}")));
            }
        }
        for (key, v) in [
            ("model.i1a", self.i1a),
            ("model.i1t", self.i1t),
            ("model.i2a", self.i2a),
            ("model.i2t", self.i2t),
            ("model.i3a", self.i3a),
            ("model.i4a", self.i4a),
            ("model.i4t", self.i4t),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Coefficient of `½(φ̇² + θ̇² sin²φ)`, summed over the three tilting bodies.
    fn tilt_inertia(&self, rho: f64) -> f64 {
        let rod = self.i1t + self.m1 * (self.l1 / 2.0).powi(2);
        let unit = self.i2t + self.m2 * (self.l2 - rho).powi(2);
        let tool = self.i4t + self.m4 * (self.l2 / 2.0 - rho).powi(2);
        rod + unit + tool
    }

    fn tilt_inertia_drho(&self, rho: f64) -> f64 {
        -2.0 * self.m2 * (self.l2 - rho) - 2.0 * self.m4 * (self.l2 / 2.0 - rho)
    }

    /// Gravity lever `V / (g cos φ)`.
    fn gravity_lever(&self, rho: f64) -> f64 {
        self.m1 * self.l1 / 2.0 + self.m2 * (self.l2 - rho) + self.m4 * (self.l2 / 2.0 - rho)
    }
}

#[derive(Debug, Clone)]
pub struct SurgicalArm {
    params: SurgicalArmParams,
    friction: FrictionModel,
}

impl SurgicalArm {
    pub const DOF: usize = 4;

    pub fn new(params: SurgicalArmParams) -> Self {
        Self {
            params,
            friction: FrictionModel::frictionless(Self::DOF),
        }
    }

    pub fn with_friction(mut self, friction: FrictionModel) -> Self {
        assert_eq!(friction.coefficients().len(), Self::DOF);
        self.friction = friction;
        self
    }

    pub fn params(&self) -> &SurgicalArmParams {
        &self.params
    }
}

/// `(T1, T2, T3, T4)`: rod, insertion unit, azimuth base, instrument.
pub fn kinetic_energy_components(
    params: &SurgicalArmParams,
    state: &JointState,
) -> Result<[f64; 4]> {
    check_dim("surgical arm state", SurgicalArm::DOF, state.dof())?;
    let p = params;
    let phi = state.q[1];
    let rho = state.q[3];
    let (dtheta, dphi, dalpha, drho) = (state.qdot[0], state.qdot[1], state.qdot[2], state.qdot[3]);
    let (s, c) = phi.sin_cos();

    // (θ̇ sin φ) enters squared in every tilting term.
    let tilt = dphi * dphi + (-dtheta * s).powi(2);
    let spin = (dtheta * c).powi(2);

    let t1 = 0.5 * p.i1a * spin + 0.5 * (p.i1t + p.m1 * (p.l1 / 2.0).powi(2)) * tilt;
    let t2 = 0.5 * p.i2a * spin
        + 0.5 * (p.i2t + p.m2 * (p.l2 - rho).powi(2)) * tilt
        + 0.5 * p.m2 * drho * drho;
    let t3 = 0.5 * p.i3a * dtheta * dtheta;
    let t4 = 0.5 * p.i4a * (dtheta * c + dalpha).powi(2)
        + 0.5 * (p.i4t + p.m4 * (p.l2 / 2.0 - rho).powi(2)) * tilt
        + 0.5 * p.m4 * drho * drho;
    Ok([t1, t2, t3, t4])
}

pub fn total_kinetic_energy(params: &SurgicalArmParams, state: &JointState) -> Result<f64> {
    Ok(kinetic_energy_components(params, state)?.iter().sum())
}

pub fn potential_energy(params: &SurgicalArmParams, q: &DVector<f64>) -> Result<f64> {
    check_dim("surgical arm q", SurgicalArm::DOF, q.len())?;
    Ok(params.g * params.gravity_lever(q[3]) * q[1].cos())
}

impl Manipulator for SurgicalArm {
    fn name(&self) -> &'static str {
        "surgical"
    }

    fn dof(&self) -> usize {
        Self::DOF
    }

    fn task_dim(&self) -> usize {
        3
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let (s, c) = q[1].sin_cos();
        let tilt = p.tilt_inertia(q[3]);
        let spin = p.i1a + p.i2a + p.i4a;
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = spin * c * c + tilt * s * s + p.i3a;
        m[(0, 2)] = p.i4a * c;
        m[(2, 0)] = p.i4a * c;
        m[(1, 1)] = tilt;
        m[(2, 2)] = p.i4a;
        m[(3, 3)] = p.m2 + p.m4;
        m
    }

    fn mass_matrix_partials(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let p = &self.params;
        let phi = q[1];
        let rho = q[3];
        let tilt = p.tilt_inertia(rho);
        let spin = p.i1a + p.i2a + p.i4a;

        let mut d_phi = DMatrix::zeros(4, 4);
        d_phi[(0, 0)] = (tilt - spin) * (2.0 * phi).sin();
        d_phi[(0, 2)] = -p.i4a * phi.sin();
        d_phi[(2, 0)] = d_phi[(0, 2)];

        let dtilt = p.tilt_inertia_drho(rho);
        let mut d_rho = DMatrix::zeros(4, 4);
        d_rho[(0, 0)] = dtilt * phi.sin().powi(2);
        d_rho[(1, 1)] = dtilt;

        vec![DMatrix::zeros(4, 4), d_phi, DMatrix::zeros(4, 4), d_rho]
    }

    fn kinetic_energy(&self, state: &JointState) -> f64 {
        kinetic_energy_components(&self.params, state)
            .expect("surgical arm state has four coordinates")
            .iter()
            .sum()
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        self.params.g * self.params.gravity_lever(q[3]) * q[1].cos()
    }

    fn gravity(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let (s, c) = q[1].sin_cos();
        DVector::from_column_slice(&[
            0.0,
            -p.g * p.gravity_lever(q[3]) * s,
            0.0,
            -p.g * (p.m2 + p.m4) * c,
        ])
    }

    fn friction(&self) -> &FrictionModel {
        &self.friction
    }

    /// Tip at radius `l2 − ρ` along the rod axis; φ is measured from vertical.
    fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64> {
        let r = self.params.l2 - q[3];
        let (st, ct) = q[0].sin_cos();
        let (sp, cp) = q[1].sin_cos();
        DVector::from_column_slice(&[r * sp * ct, r * sp * st, r * cp])
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let r = self.params.l2 - q[3];
        let (st, ct) = q[0].sin_cos();
        let (sp, cp) = q[1].sin_cos();
        DMatrix::from_row_slice(
            3,
            4,
            &[
                -r * sp * st, r * cp * ct, 0.0, -sp * ct,
                r * sp * ct, r * cp * st, 0.0, -sp * st,
                0.0, -r * sp, 0.0, -cp,
            ],
        )
    }

    fn inverse_kinematics(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("surgical arm task point", 3, x.len())?;
        let r = x.norm();
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Unreachable {
                target: x.as_slice().to_vec(),
                reason: "tip radius must be positive".into(),
            });
        }
        let phi = (x[2] / r).clamp(-1.0, 1.0).acos();
        let theta = x[1].atan2(x[0]);
        Ok(DVector::from_column_slice(&[theta, phi, 0.0, self.params.l2 - r]))
    }
}
