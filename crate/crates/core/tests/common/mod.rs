#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use surgarm_core::dynamics::{JointState, PlanarArm, PlanarArmParams, SurgicalArm, SurgicalArmParams};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn surgical() -> SurgicalArm {
    SurgicalArm::new(SurgicalArmParams::default())
}

pub fn planar() -> PlanarArm {
    PlanarArm::new(PlanarArmParams::default())
}

/// θ, α ∈ [−π, π], φ ∈ [−π/2, π/2], ρ ∈ [0, 0.25] m.
pub fn surgical_q(r: &mut StdRng) -> DVector<f64> {
    DVector::from_column_slice(&[
        r.gen_range(-PI..=PI),
        r.gen_range(-FRAC_PI_2..=FRAC_PI_2),
        r.gen_range(-PI..=PI),
        r.gen_range(0.0..=0.25),
    ])
}

pub fn planar_q(r: &mut StdRng) -> DVector<f64> {
    DVector::from_column_slice(&[r.gen_range(-PI..=PI), r.gen_range(-PI..=PI)])
}

pub fn uniform(r: &mut StdRng, n: usize, a: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-a..=a))
}

pub fn state(q: DVector<f64>, qdot: DVector<f64>) -> JointState {
    JointState::new(q, qdot).unwrap()
}
