//! Reference trajectories and bounded disturbance (tremor) generators.

use std::f64::consts::TAU;

use nalgebra::DVector;

use crate::control::ReferenceSample;
use crate::error::{Error, Result};

/// Desired task-space motion (m, m/s, m/s²).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskReference {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    pub xddot: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Joint(ReferenceSample),
    Task(TaskReference),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Joint,
    Task,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySpec {
    /// The closed-form singularity-free planar path (2-D task space).
    WorkspacePath,
    /// `q_i = A_i sin(ω_i t + φ_i) + offset_i`.
    JointSinusoid {
        amplitude: DVector<f64>,
        omega: DVector<f64>,
        phase: DVector<f64>,
        offset: DVector<f64>,
    },
    Setpoint {
        target: DVector<f64>,
        space: Space,
    },
    /// `x = center + radius [cos(ωt + φ), sin(ωt + φ)]`.
    WorkspaceCircle {
        center: DVector<f64>,
        radius: f64,
        omega: f64,
        phase: f64,
    },
}

impl TrajectorySpec {
    pub fn space(&self) -> Space {
        match self {
            TrajectorySpec::JointSinusoid { .. } => Space::Joint,
            TrajectorySpec::Setpoint { space, .. } => *space,
            TrajectorySpec::WorkspacePath | TrajectorySpec::WorkspaceCircle { .. } => Space::Task,
        }
    }

    /// Dimension of the produced reference (joint or task).
    pub fn dim(&self) -> usize {
        match self {
            TrajectorySpec::WorkspacePath | TrajectorySpec::WorkspaceCircle { .. } => 2,
            TrajectorySpec::JointSinusoid { amplitude, .. } => amplitude.len(),
            TrajectorySpec::Setpoint { target, .. } => target.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |key: &str, v: &DVector<f64>| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::invalid(key, "entries must be finite"))
            }
        };
        match self {
            TrajectorySpec::WorkspacePath => Ok(()),
            TrajectorySpec::JointSinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => {
                let n = amplitude.len();
                for (key, v) in [
                    ("trajectory.amplitude", amplitude),
                    ("trajectory.omega", omega),
                    ("trajectory.phase", phase),
                    ("trajectory.offset", offset),
                ] {
                    finite(key, v)?;
                    if v.len() != n {
                        return Err(Error::invalid(
                            key,
                            format!("expected {n} entries, got {}", v.len()),
                        ));
                    }
                }
                if omega.iter().any(|w| *w < 0.0) {
                    return Err(Error::invalid("trajectory.omega", "frequencies must be >= 0"));
                }
                Ok(())
            }
            TrajectorySpec::Setpoint { target, .. } => finite("trajectory.target", target),
            TrajectorySpec::WorkspaceCircle {
                center,
                radius,
                omega,
                phase,
            } => {
                finite("trajectory.center", center)?;
                if center.len() != 2 {
                    return Err(Error::invalid("trajectory.center", "expected 2 entries"));
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::invalid("trajectory.radius", "must be finite and >= 0"));
                }
                if !(omega.is_finite() && *omega >= 0.0) {
                    return Err(Error::invalid("trajectory.omega", "must be finite and >= 0"));
                }
                if !phase.is_finite() {
                    return Err(Error::invalid("trajectory.phase", "must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, t: f64) -> Result<Reference> {
        if !t.is_finite() {
            return Err(Error::NonFinite("trajectory time"));
        }
        Ok(match self {
            TrajectorySpec::WorkspacePath => {
                let s = workspace_path(t);
                let a = workspace_path_acceleration(t);
                Reference::Task(TaskReference {
                    x: DVector::from_column_slice(&[s.x, s.y]),
                    xdot: DVector::from_column_slice(&[s.xdot, s.ydot]),
                    xddot: DVector::from_column_slice(&a),
                })
            }
            TrajectorySpec::JointSinusoid { .. } => Reference::Joint(joint_sinusoid_reference(self, t)?),
            TrajectorySpec::Setpoint { target, space } => {
                let n = target.len();
                match space {
                    Space::Joint => Reference::Joint(ReferenceSample {
                        q: target.clone(),
                        qdot: DVector::zeros(n),
                        qddot: DVector::zeros(n),
                    }),
                    Space::Task => Reference::Task(TaskReference {
                        x: target.clone(),
                        xdot: DVector::zeros(n),
                        xddot: DVector::zeros(n),
                    }),
                }
            }
            TrajectorySpec::WorkspaceCircle {
                center,
                radius,
                omega,
                phase,
            } => {
                let (s, c) = (omega * t + phase).sin_cos();
                let r = *radius;
                let w = *omega;
                Reference::Task(TaskReference {
                    x: center + DVector::from_column_slice(&[r * c, r * s]),
                    xdot: DVector::from_column_slice(&[-r * w * s, r * w * c]),
                    xddot: DVector::from_column_slice(&[-r * w * w * c, -r * w * w * s]),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub y: f64,
    pub xdot: f64,
    pub ydot: f64,
}

/// Planar reference path that stays clear of the arm's singular set.
/// Position and velocity are the published closed forms, term for term.
pub fn workspace_path(t: f64) -> PathSample {
    let s = t.sin() / 2.0 + 1.0;
    let x = t.cos() / 2.0 + s.sin() / s;
    let y = -(s.cos() - 1.0) / s;
    let xdot = (s.cos() * t.cos()) / (2.0 * s) - t.sin() / 2.0
        - (s.sin() * t.cos()) / (2.0 * s * s);
    let ydot = (s.sin() * t.cos()) / (2.0 * s) + (t.cos() * (s.cos() - 1.0)) / (2.0 * s * s);
    PathSample { x, y, xdot, ydot }
}

/// Second derivative of [`workspace_path`], from the chain rule through
/// `s(t) = sin t / 2 + 1`.
pub fn workspace_path_acceleration(t: f64) -> [f64; 2] {
    let s = t.sin() / 2.0 + 1.0;
    let ds = t.cos() / 2.0;
    let dds = -t.sin() / 2.0;
    let (sn, cs) = s.sin_cos();
    let (s2, s3) = (s * s, s * s * s);

    // f(s) = sin s / s, g(s) = (1 − cos s) / s
    let f1 = cs / s - sn / s2;
    let f2 = -sn / s - 2.0 * cs / s2 + 2.0 * sn / s3;
    let g1 = sn / s - (1.0 - cs) / s2;
    let g2 = cs / s - 2.0 * sn / s2 + 2.0 * (1.0 - cs) / s3;

    [
        -t.cos() / 2.0 + f2 * ds * ds + f1 * dds,
        g2 * ds * ds + g1 * dds,
    ]
}

pub fn joint_sinusoid_reference(spec: &TrajectorySpec, t: f64) -> Result<ReferenceSample> {
    let TrajectorySpec::JointSinusoid {
        amplitude,
        omega,
        phase,
        offset,
    } = spec
    else {
        return Err(Error::invalid("trajectory.kind", "expected joint_sinusoid"));
    };
    let n = amplitude.len();
    let mut q = DVector::zeros(n);
    let mut qdot = DVector::zeros(n);
    let mut qddot = DVector::zeros(n);
    for i in 0..n {
        let (s, c) = (omega[i] * t + phase[i]).sin_cos();
        q[i] = amplitude[i] * s + offset[i];
        qdot[i] = amplitude[i] * omega[i] * c;
        qddot[i] = -amplitude[i] * omega[i] * omega[i] * s;
    }
    Ok(ReferenceSample { q, qdot, qddot })
}

/// Additive generalized-force disturbance `d(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSpec {
    Zero,
    Constant(DVector<f64>),
    /// `amplitude · sin(2π f t + phase)`, frequency in Hz.
    Sinusoid {
        amplitude: DVector<f64>,
        frequency: f64,
        phase: f64,
    },
    Sum(Vec<DisturbanceSpec>),
}

impl DisturbanceSpec {
    /// Sinusoidal tremor with the default 10 Hz frequency.
    pub fn tremor(amplitude: DVector<f64>) -> Self {
        DisturbanceSpec::Sinusoid {
            amplitude,
            frequency: 10.0,
            phase: 0.0,
        }
    }

    /// Declared bound on `‖d(t)‖∞`.
    pub fn bound(&self) -> f64 {
        match self {
            DisturbanceSpec::Zero => 0.0,
            DisturbanceSpec::Constant(d) => d.amax(),
            DisturbanceSpec::Sinusoid { amplitude, .. } => amplitude.amax(),
            DisturbanceSpec::Sum(parts) => parts.iter().map(|p| p.bound()).sum(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        match self {
            DisturbanceSpec::Zero => DisturbanceSpec::Zero,
            DisturbanceSpec::Constant(d) => DisturbanceSpec::Constant(d * k),
            DisturbanceSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => DisturbanceSpec::Sinusoid {
                amplitude: amplitude * k,
                frequency: *frequency,
                phase: *phase,
            },
            DisturbanceSpec::Sum(parts) => {
                DisturbanceSpec::Sum(parts.iter().map(|p| p.scaled(k)).collect())
            }
        }
    }

    /// The disturbance when it is time-invariant.
    pub fn constant_value(&self, n: usize) -> Option<DVector<f64>> {
        match self {
            DisturbanceSpec::Zero => Some(DVector::zeros(n)),
            DisturbanceSpec::Constant(d) => Some(d.clone()),
            DisturbanceSpec::Sinusoid { amplitude, .. } if amplitude.amax() == 0.0 => {
                Some(DVector::zeros(n))
            }
            DisturbanceSpec::Sinusoid { .. } => None,
            DisturbanceSpec::Sum(parts) => parts
                .iter()
                .map(|p| p.constant_value(n))
                .try_fold(DVector::zeros(n), |acc, p| p.map(|p| acc + p)),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |key: &str, v: &DVector<f64>| {
            if v.len() != n {
                Err(Error::invalid(key, format!("expected {n} entries, got {}", v.len())))
            } else if !v.iter().all(|x| x.is_finite()) {
                Err(Error::invalid(key, "entries must be finite"))
            } else {
                Ok(())
            }
        };
        match self {
            DisturbanceSpec::Zero => Ok(()),
            DisturbanceSpec::Constant(d) => check("disturbance.value", d),
            DisturbanceSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                check("disturbance.amplitude", amplitude)?;
                if !(frequency.is_finite() && *frequency >= 0.0) {
                    return Err(Error::invalid("disturbance.frequency", "must be finite and >= 0"));
                }
                if !phase.is_finite() {
                    return Err(Error::invalid("disturbance.phase", "must be finite"));
                }
                Ok(())
            }
            DisturbanceSpec::Sum(parts) => parts.iter().try_for_each(|p| p.validate(n)),
        }
    }
}

pub fn disturbance_sample(spec: &DisturbanceSpec, t: f64, n: usize) -> Result<DVector<f64>> {
    spec.validate(n)?;
    Ok(sample_unchecked(spec, t, n))
}

pub(crate) fn sample_unchecked(spec: &DisturbanceSpec, t: f64, n: usize) -> DVector<f64> {
    match spec {
        DisturbanceSpec::Zero => DVector::zeros(n),
        DisturbanceSpec::Constant(d) => d.clone(),
        DisturbanceSpec::Sinusoid {
            amplitude,
            frequency,
            phase,
        } => amplitude * (TAU * frequency * t + phase).sin(),
        DisturbanceSpec::Sum(parts) => parts
            .iter()
            .fold(DVector::zeros(n), |acc, p| acc + sample_unchecked(p, t, n)),
    }
}
