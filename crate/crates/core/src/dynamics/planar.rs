//! Two-link revolute arm moving in a vertical plane (y up).

use nalgebra::{DMatrix, DVector};

use super::{check_dim, FrictionModel, Manipulator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarArmParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Distance from each joint to its link's center of mass.
    pub lc1: f64,
    pub lc2: f64,
    pub izz1: f64,
    pub izz2: f64,
    pub g: f64,
}

impl Default for PlanarArmParams {
    /// Unit point masses at the link tips.
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            lc1: 1.0,
            lc2: 1.0,
            izz1: 0.0,
            izz2: 0.0,
            g: 9.81,
        }
    }
}

impl PlanarArmParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("model.m1", self.m1),
            ("model.m2", self.m2),
            ("model.l1", self.l1),
            ("model.l2", self.l2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(key, format!("must be finite and > 0, got {v}")));
            }
        }
        for (key, v, l) in [("model.lc1", self.lc1, self.l1), ("model.lc2", self.lc2, self.l2)] {
            if !(v.is_finite() && (0.0..=l).contains(&v)) {
                return Err(Error::invalid(key, format!("must lie in [0, {l}], got {v}")));
            }
        }
        for (key, v) in [("model.izz1", self.izz1), ("model.izz2", self.izz2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::invalid("model.g", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Which of the two inverse-kinematics branches to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ElbowBranch {
    /// `q2 ≥ 0`.
    #[default]
    Down,
    Up,
}

#[derive(Debug, Clone)]
pub struct PlanarArm {
    params: PlanarArmParams,
    friction: FrictionModel,
    branch: ElbowBranch,
}

impl PlanarArm {
    pub const DOF: usize = 2;

    pub fn new(params: PlanarArmParams) -> Self {
        Self {
            params,
            friction: FrictionModel::frictionless(Self::DOF),
            branch: ElbowBranch::Down,
        }
    }

    pub fn with_friction(mut self, friction: FrictionModel) -> Self {
        assert_eq!(friction.coefficients().len(), Self::DOF);
        self.friction = friction;
        self
    }

    pub fn with_branch(mut self, branch: ElbowBranch) -> Self {
        self.branch = branch;
        self
    }

    pub fn params(&self) -> &PlanarArmParams {
        &self.params
    }
}

impl Manipulator for PlanarArm {
    fn name(&self) -> &'static str {
        "planar"
    }

    fn dof(&self) -> usize {
        Self::DOF
    }

    fn task_dim(&self) -> usize {
        2
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let c2 = q[1].cos();
        let m22 = p.m2 * p.lc2 * p.lc2 + p.izz2;
        let m12 = m22 + p.m2 * p.l1 * p.lc2 * c2;
        let m11 = p.m1 * p.lc1 * p.lc1 + p.izz1 + p.m2 * p.l1 * p.l1 + 2.0 * m12 - m22;
        DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
    }

    fn mass_matrix_partials(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let p = &self.params;
        let h = -p.m2 * p.l1 * p.lc2 * q[1].sin();
        vec![
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[2.0 * h, h, h, 0.0]),
        ]
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let p = &self.params;
        let s1 = q[0].sin();
        let s12 = (q[0] + q[1]).sin();
        p.g * (p.m1 * p.lc1 * s1 + p.m2 * (p.l1 * s1 + p.lc2 * s12))
    }

    fn gravity(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        let g2 = p.g * p.m2 * p.lc2 * c12;
        DVector::from_column_slice(&[p.g * (p.m1 * p.lc1 + p.m2 * p.l1) * c1 + g2, g2])
    }

    fn friction(&self) -> &FrictionModel {
        &self.friction
    }

    fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let q12 = q[0] + q[1];
        DVector::from_column_slice(&[
            p.l1 * q[0].cos() + p.l2 * q12.cos(),
            p.l1 * q[0].sin() + p.l2 * q12.sin(),
        ])
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -p.l1 * s1 - p.l2 * s12, -p.l2 * s12,
                p.l1 * c1 + p.l2 * c12, p.l2 * c12,
            ],
        )
    }

    fn jacobian_derivative(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        let w1 = qdot[0];
        let w12 = qdot[0] + qdot[1];
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -p.l1 * c1 * w1 - p.l2 * c12 * w12, -p.l2 * c12 * w12,
                -p.l1 * s1 * w1 - p.l2 * s12 * w12, -p.l2 * s12 * w12,
            ],
        )
    }

    fn inverse_kinematics(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("planar arm task point", 2, x.len())?;
        let p = &self.params;
        let r2 = x.norm_squared();
        let c2 = (r2 - p.l1 * p.l1 - p.l2 * p.l2) / (2.0 * p.l1 * p.l2);
        if !c2.is_finite() || c2.abs() > 1.0 + 1e-12 {
            return Err(Error::Unreachable {
                target: x.as_slice().to_vec(),
                reason: format!(
                    "radius {} outside annulus [{}, {}]",
                    r2.sqrt(),
                    (p.l1 - p.l2).abs(),
                    p.l1 + p.l2
                ),
            });
        }
        let elbow = c2.clamp(-1.0, 1.0).acos();
        let q2 = match self.branch {
            ElbowBranch::Down => elbow,
            ElbowBranch::Up => -elbow,
        };
        let q1 = x[1].atan2(x[0]) - (p.l2 * q2.sin()).atan2(p.l1 + p.l2 * q2.cos());
        Ok(DVector::from_column_slice(&[q1, q2]))
    }
}
