//! Lagrangian dynamics, Lyapunov tracking control with a disturbance
//! observer, and fixed-step closed-loop simulation for a 4-DOF surgical arm
//! and a planar two-link arm.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod signals;
pub mod sim;

pub use error::{Error, Result};
