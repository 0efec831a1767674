//! Scalar summaries of a logged run.

use std::fmt::Write as _;

use super::SimLog;
use crate::error::{Error, Result};

/// Default half-width of the settling band on `err_norm`.
pub const SETTLING_BAND: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// RMS of `err_norm` over the whole run.
    pub rms_error: f64,
    /// Mean of `err_norm` over the last 10% of samples.
    pub terminal_error: f64,
    pub final_error: f64,
    pub peak_error: f64,
    /// Largest `‖u‖₂`.
    pub peak_control: f64,
    /// First time after which `err_norm` stays within the band; `None` if
    /// it never settles.
    pub settling_time: Option<f64>,
    /// `‖d − d̂‖₂` at the last sample.
    pub observer_error: f64,
    /// Smallest logged Jacobian singular value.
    pub min_sigma_min: f64,
    /// Mean of `‖σ‖₂` over the last 10% of samples.
    pub terminal_sigma: f64,
}

impl Metrics {
    /// `key = value` lines, one per metric. An unsettled run reports
    /// `settling_time = unsettled`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: f64| writeln!(s, "{k} = {v:?}").unwrap();
        put("rms_error", self.rms_error);
        put("terminal_error", self.terminal_error);
        put("final_error", self.final_error);
        put("peak_error", self.peak_error);
        put("peak_control", self.peak_control);
        put("observer_error", self.observer_error);
        put("min_sigma_min", self.min_sigma_min);
        put("terminal_sigma", self.terminal_sigma);
        match self.settling_time {
            Some(t) => writeln!(s, "settling_time = {t:?}").unwrap(),
            None => writeln!(s, "settling_time = unsettled").unwrap(),
        }
        s
    }

    pub const KEYS: [&'static str; 9] = [
        "rms_error",
        "terminal_error",
        "final_error",
        "peak_error",
        "peak_control",
        "observer_error",
        "min_sigma_min",
        "terminal_sigma",
        "settling_time",
    ];
}

/// Start index of the last 10% of `len` samples (at least one sample).
pub fn terminal_start(len: usize) -> usize {
    len - (len / 10).max(1)
}

fn norms(log: &SimLog, prefix: &str) -> Result<Vec<f64>> {
    let n = log.vector_len(prefix);
    if n == 0 {
        return Ok(vec![0.0; log.len()]);
    }
    let cols = log.require_vector(prefix, n)?;
    Ok((0..log.len())
        .map(|k| cols.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt())
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// RMS of `err_norm` over samples with `t ≥ from`.
pub fn rms_after(log: &SimLog, from: f64) -> Result<f64> {
    let t = log.require("t")?;
    let e = log.require("err_norm")?;
    let tail: Vec<f64> = t.iter().zip(e).filter(|(t, _)| **t >= from).map(|(_, e)| e * e).collect();
    if tail.is_empty() {
        return Err(Error::LogSchema(format!("no samples after t = {from}")));
    }
    Ok(mean(&tail).sqrt())
}

/// Time at which `err` enters `band` for good.
pub fn settling_time(t: &[f64], err: &[f64], band: f64) -> Option<f64> {
    match err.iter().rposition(|e| *e > band) {
        None => t.first().copied(),
        Some(k) if k + 1 < t.len() => Some(t[k + 1]),
        Some(_) => None,
    }
}

pub fn compute_metrics(log: &SimLog) -> Result<Metrics> {
    compute_metrics_with_band(log, SETTLING_BAND)
}

pub fn compute_metrics_with_band(log: &SimLog, band: f64) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::LogSchema("empty log".into()));
    }
    let t = log.require("t")?;
    let e = log.require("err_norm")?;
    let tail = terminal_start(e.len());
    let sigma = norms(log, "sigma")?;
    let u = norms(log, "u")?;

    let last = log.len() - 1;
    let observer_error = match (log.vector_len("d"), log.vector_len("d_hat")) {
        (n, m) if n > 0 && n == m => {
            let d = log.vector_at("d", last)?;
            let d_hat = log.vector_at("d_hat", last)?;
            d.iter().zip(&d_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        }
        _ => 0.0,
    };
    let min_sigma_min = log
        .column("sigma_min")
        .map_or(f64::INFINITY, |c| c.iter().copied().fold(f64::INFINITY, f64::min));

    Ok(Metrics {
        rms_error: mean(&e.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt(),
        terminal_error: mean(&e[tail..]),
        final_error: e[last],
        peak_error: e.iter().copied().fold(0.0, f64::max),
        peak_control: u.iter().copied().fold(0.0, f64::max),
        settling_time: settling_time(t, e, band),
        observer_error,
        min_sigma_min,
        terminal_sigma: mean(&sigma[tail..]),
    })
}
