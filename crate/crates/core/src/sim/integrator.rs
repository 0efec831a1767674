//! Classical fixed-step fourth-order Runge–Kutta.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Advances `y' = f(t, y)` by one step of size `dt`.
///
/// A non-finite stage derivative or result is reported as a divergence
/// carrying `t` and the state at the start of the step.
pub fn rk4_step<F>(mut f: F, state: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("sim.dt", format!("must be finite and > 0, got {dt}")));
    }
    let half = 0.5 * dt;
    let k1 = finite(f(t, state)?, t, state)?;
    let k2 = finite(f(t + half, &(state + &k1 * half))?, t, state)?;
    let k3 = finite(f(t + half, &(state + &k2 * half))?, t, state)?;
    let k4 = finite(f(t + dt, &(state + &k3 * dt))?, t, state)?;
    let next = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    finite(next, t, state)
}

fn finite(v: DVector<f64>, t: f64, state: &DVector<f64>) -> Result<DVector<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::Divergence {
            t,
            reason: "non-finite derivative".into(),
            state: state.as_slice().to_vec(),
            partial_log: None,
        })
    }
}
