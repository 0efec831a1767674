//! Sectioned `key = value` scenario files.
//!
//! ```text
//! [model]
//! kind = planar
//!
//! [controller]
//! kind = lyapunov_observer
//! kd = 2          # scalar: 2·I, list: diagonal, rows split by `;`: full matrix
//! ki = 1
//! lambda = 2
//!
//! [trajectory]
//! kind = workspace_eq24
//!
//! [disturbance]
//! kind = constant
//! value = 10, 10
//! ```
//!
//! Every key is checked; unknown or misplaced keys are rejected by name.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use surgarm_core::control::{ControllerGains, ControllerKind, XiDdotMode};
use surgarm_core::dynamics::{ElbowBranch, JointState, PlanarArmParams, SurgicalArmParams};
use surgarm_core::kinematics::DampingPolicy;
use surgarm_core::signals::{DisturbanceSpec, Space, TrajectorySpec};
use surgarm_core::sim::{
    ControllerConfig, InitialCondition, ModelConfig, ModelKind, ScenarioConfig, SimSettings,
};

use crate::CliError;

pub const SECTIONS: [&str; 6] = ["model", "controller", "trajectory", "disturbance", "initial", "sim"];

/// Raw file contents: section → key → value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("line {}", lineno + 1);
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(format!("{}: unterminated section header", at())))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(config_err(format!("{}: unknown section [{name}]", at())));
                }
                ini.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("{}: expected `key = value`", at())))?;
            let section = current
                .as_ref()
                .ok_or_else(|| config_err(format!("{}: key outside any section", at())))?;
            let key = key.trim().to_string();
            let map = ini.sections.get_mut(section).expect("section inserted");
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(config_err(format!("{}: duplicate key `{section}.{key}`", at())));
            }
        }
        Ok(ini)
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| config_err(format!("override key `{}` must be section.key", path.trim())))?;
        if !SECTIONS.contains(&section) {
            return Err(config_err(format!("override `{path}`: unknown section [{section}]")));
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    fn section(&self, name: &'static str) -> Section {
        Section {
            name,
            entries: self.sections.get(name).cloned().unwrap_or_default(),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    match line.find(" #") {
        Some(i) => &line[..i],
        None => line,
    }
}

struct Section {
    name: &'static str,
    entries: BTreeMap<String, String>,
}

impl Section {
    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn bad(&self, key: &str, reason: impl std::fmt::Display) -> CliError {
        config_err(format!("invalid `{}`: {reason}", self.key(key)))
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String, CliError> {
        self.take(key)
            .ok_or_else(|| config_err(format!("missing `{}`", self.key(key))))
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        self.take(key)
            .map(|v| parse_f64(&v).map_err(|e| self.bad(key, e)))
            .transpose()
    }

    fn vector(&mut self, key: &str) -> Result<Option<DVector<f64>>, CliError> {
        self.take(key)
            .map(|v| parse_list(&v).map(DVector::from_vec).map_err(|e| self.bad(key, e)))
            .transpose()
    }

    fn require_vector(&mut self, key: &str) -> Result<DVector<f64>, CliError> {
        self.vector(key)?
            .ok_or_else(|| config_err(format!("missing `{}`", self.key(key))))
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>, CliError> {
        self.take(key)
            .map(|v| match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(self.bad(key, format!("expected true or false, got `{other}`"))),
            })
            .transpose()
    }

    /// Scalar, diagonal list, or `;`-separated rows.
    fn matrix(&mut self, key: &str, n: usize) -> Result<Option<DMatrix<f64>>, CliError> {
        let Some(text) = self.take(key) else {
            return Ok(None);
        };
        let rows: Vec<Vec<f64>> = text
            .split(';')
            .map(parse_list)
            .collect::<Result<_, _>>()
            .map_err(|e| self.bad(key, e))?;
        let m = match rows.as_slice() {
            [row] if row.len() == 1 => DMatrix::identity(n, n) * row[0],
            [row] if row.len() == n => DMatrix::from_diagonal(&DVector::from_column_slice(row)),
            rows if rows.len() == n && rows.iter().all(|r| r.len() == n) => {
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
            _ => return Err(self.bad(key, format!("expected a scalar, {n} diagonal entries or a {n}x{n} matrix"))),
        };
        Ok(Some(m))
    }

    /// Rejects anything not consumed.
    fn finish(self) -> Result<(), CliError> {
        match self.entries.keys().next() {
            Some(k) => Err(config_err(format!("unknown key `{}.{k}`", self.name))),
            None => Ok(()),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{}` is not a number", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{}` is not finite", s.trim()))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Err("empty list".into());
    }
    s.split(',').map(parse_f64).collect()
}

fn planar_fields(p: &mut PlanarArmParams) -> [(&'static str, &mut f64); 9] {
    [
        ("m1", &mut p.m1),
        ("m2", &mut p.m2),
        ("l1", &mut p.l1),
        ("l2", &mut p.l2),
        ("lc1", &mut p.lc1),
        ("lc2", &mut p.lc2),
        ("izz1", &mut p.izz1),
        ("izz2", &mut p.izz2),
        ("g", &mut p.g),
    ]
}

fn surgical_fields(p: &mut SurgicalArmParams) -> [(&'static str, &mut f64); 14] {
    [
        ("m1", &mut p.m1),
        ("m2", &mut p.m2),
        ("m3", &mut p.m3),
        ("m4", &mut p.m4),
        ("i1a", &mut p.i1a),
        ("i1t", &mut p.i1t),
        ("i2a", &mut p.i2a),
        ("i2t", &mut p.i2t),
        ("i3a", &mut p.i3a),
        ("i4a", &mut p.i4a),
        ("i4t", &mut p.i4t),
        ("l1", &mut p.l1),
        ("l2", &mut p.l2),
        ("g", &mut p.g),
    ]
}

fn parse_model(ini: &Ini) -> Result<ModelConfig, CliError> {
    let mut s = ini.section("model");
    let kind = s.require("kind")?;
    let model_kind = match kind.as_str() {
        "planar" => {
            let mut params = PlanarArmParams::default();
            for (key, field) in planar_fields(&mut params) {
                if let Some(v) = s.f64(key)? {
                    *field = v;
                }
            }
            let branch = match s.take("branch").as_deref() {
                None | Some("down") => ElbowBranch::Down,
                Some("up") => ElbowBranch::Up,
                Some(other) => return Err(s.bad("branch", format!("expected down or up, got `{other}`"))),
            };
            ModelKind::Planar { params, branch }
        }
        "surgical" => {
            let mut params = SurgicalArmParams::default();
            for (key, field) in surgical_fields(&mut params) {
                if let Some(v) = s.f64(key)? {
                    *field = v;
                }
            }
            ModelKind::Surgical(params)
        }
        other => return Err(s.bad("kind", format!("unknown model `{other}` (planar, surgical)"))),
    };
    let friction = s.vector("friction")?;
    s.finish()?;
    Ok(ModelConfig {
        kind: model_kind,
        friction,
    })
}

fn dims(model: &ModelConfig) -> (usize, usize) {
    match model.kind {
        ModelKind::Planar { .. } => (2, 2),
        ModelKind::Surgical(_) => (4, 3),
    }
}

fn parse_controller(ini: &Ini, model: &ModelConfig) -> Result<ControllerConfig, CliError> {
    let mut s = ini.section("controller");
    let kind_text = s.require("kind")?;
    let kind = ControllerKind::parse(&kind_text).ok_or_else(|| {
        s.bad(
            "kind",
            format!("unknown controller `{kind_text}` (lyapunov_observer, workspace_lyapunov, inverse_dynamics_integral)"),
        )
    })?;
    let (n, m) = dims(model);
    let outer = if kind == ControllerKind::WorkspaceLyapunov { m } else { n };
    let kd = s.matrix("kd", outer)?.unwrap_or_else(|| DMatrix::identity(outer, outer) * 2.0);
    let ki = s.matrix("ki", n)?.unwrap_or_else(|| DMatrix::identity(n, n));
    let lambda = s.matrix("lambda", outer)?.unwrap_or_else(|| DMatrix::identity(outer, outer) * 2.0);
    let gains = ControllerGains::new(kd, ki, lambda).map_err(CliError::from)?;
    let mut c = ControllerConfig::new(kind, gains);
    if let Some(b) = s.bool("observer")? {
        c.observer = b;
    }
    if let Some(mode) = s.take("xi_ddot") {
        c.xi_ddot = XiDdotMode::parse(&mode)
            .ok_or_else(|| s.bad("xi_ddot", format!("unknown mode `{mode}` (backward_difference, flow_difference)")))?;
    }
    let mut damping = DampingPolicy::default();
    if let Some(v) = s.f64("damping_lambda")? {
        damping.lambda = v;
    }
    if let Some(v) = s.f64("damping_threshold")? {
        damping.threshold = v;
    }
    if damping.lambda < 0.0 || damping.threshold < 0.0 {
        return Err(s.bad("damping_lambda", "damping values must be >= 0"));
    }
    c.damping = damping;
    s.finish()?;
    Ok(c)
}

fn parse_space(s: &mut Section) -> Result<Space, CliError> {
    match s.require("space")?.as_str() {
        "joint" => Ok(Space::Joint),
        "task" => Ok(Space::Task),
        other => Err(s.bad("space", format!("expected joint or task, got `{other}`"))),
    }
}

fn parse_trajectory(ini: &Ini) -> Result<TrajectorySpec, CliError> {
    let mut s = ini.section("trajectory");
    let kind = s.require("kind")?;
    let spec = match kind.as_str() {
        "workspace_eq24" => TrajectorySpec::WorkspacePath,
        "joint_sinusoid" => {
            let amplitude = s.require_vector("amplitude")?;
            let n = amplitude.len();
            let omega = s.require_vector("omega")?;
            let phase = s.vector("phase")?.unwrap_or_else(|| DVector::zeros(n));
            let offset = s.vector("offset")?.unwrap_or_else(|| DVector::zeros(n));
            TrajectorySpec::JointSinusoid {
                amplitude,
                omega,
                phase,
                offset,
            }
        }
        "setpoint" => TrajectorySpec::Setpoint {
            target: s.require_vector("target")?,
            space: parse_space(&mut s)?,
        },
        "workspace_circle" => TrajectorySpec::WorkspaceCircle {
            center: s.require_vector("center")?,
            radius: s.f64("radius")?.ok_or_else(|| config_err("missing `trajectory.radius`"))?,
            omega: s.f64("omega")?.ok_or_else(|| config_err("missing `trajectory.omega`"))?,
            phase: s.f64("phase")?.unwrap_or(0.0),
        },
        other => {
            return Err(s.bad(
                "kind",
                format!("unknown trajectory `{other}` (workspace_eq24, joint_sinusoid, setpoint, workspace_circle)"),
            ))
        }
    };
    s.finish()?;
    spec.validate().map_err(CliError::from)?;
    Ok(spec)
}

fn parse_disturbance(ini: &Ini) -> Result<DisturbanceSpec, CliError> {
    let mut s = ini.section("disturbance");
    let kind = s.take("kind").unwrap_or_else(|| "zero".into());
    let sinusoid = |s: &mut Section| -> Result<DisturbanceSpec, CliError> {
        Ok(DisturbanceSpec::Sinusoid {
            amplitude: s.require_vector("amplitude")?,
            frequency: s.f64("frequency")?.unwrap_or(10.0),
            phase: s.f64("phase")?.unwrap_or(0.0),
        })
    };
    let spec = match kind.as_str() {
        "zero" => DisturbanceSpec::Zero,
        "constant" => DisturbanceSpec::Constant(s.require_vector("value")?),
        "sinusoid" => sinusoid(&mut s)?,
        "sum" => DisturbanceSpec::Sum(vec![
            DisturbanceSpec::Constant(s.require_vector("value")?),
            sinusoid(&mut s)?,
        ]),
        other => return Err(s.bad("kind", format!("unknown disturbance `{other}` (zero, constant, sinusoid, sum)"))),
    };
    let spec = match s.f64("scale")? {
        Some(k) => spec.scaled(k),
        None => spec,
    };
    s.finish()?;
    Ok(spec)
}

fn parse_initial(ini: &Ini) -> Result<(InitialCondition, Option<DVector<f64>>), CliError> {
    let mut s = ini.section("initial");
    let mode = s.take("mode").unwrap_or_else(|| "reference_at_rest".into());
    let initial = match mode.as_str() {
        "reference_at_rest" => InitialCondition::ReferenceAtRest,
        "on_reference" => InitialCondition::OnReference,
        "explicit" => {
            let q = s.require_vector("q")?;
            let qdot = s.vector("qdot")?.unwrap_or_else(|| DVector::zeros(q.len()));
            InitialCondition::Explicit(JointState::new(q, qdot).map_err(|e| s.bad("qdot", e))?)
        }
        other => {
            return Err(s.bad("mode", format!("unknown mode `{other}` (reference_at_rest, on_reference, explicit)")))
        }
    };
    let d_hat = s.vector("d_hat")?;
    s.finish()?;
    Ok((initial, d_hat))
}

fn parse_sim(ini: &Ini) -> Result<SimSettings, CliError> {
    let mut s = ini.section("sim");
    let mut sim = SimSettings::default();
    if let Some(v) = s.f64("dt")? {
        sim.dt = v;
    }
    if let Some(v) = s.f64("duration")? {
        sim.duration = v;
    }
    if let Some(v) = s.take("decimation") {
        sim.decimation = v.parse().map_err(|_| s.bad("decimation", format!("`{v}` is not a positive integer")))?;
    }
    if let Some(v) = s.f64("blowup")? {
        sim.blowup = v;
    }
    sim.control_period = s.f64("control_period")?;
    s.finish()?;
    Ok(sim)
}

/// Builds and validates a scenario.
pub fn scenario_from_ini(ini: &Ini) -> Result<ScenarioConfig, CliError> {
    let model = parse_model(ini)?;
    let controller = parse_controller(ini, &model)?;
    let trajectory = parse_trajectory(ini)?;
    let disturbance = parse_disturbance(ini)?;
    let (initial, d_hat0) = parse_initial(ini)?;
    let sim = parse_sim(ini)?;
    let cfg = ScenarioConfig {
        model,
        controller,
        trajectory,
        disturbance,
        initial,
        d_hat0,
        sim,
    };
    cfg.validate().map_err(CliError::from)?;
    Ok(cfg)
}

/// Reads a scenario file, applying `overrides` in order.
pub fn load_scenario(text: &str, overrides: &[String]) -> Result<ScenarioConfig, CliError> {
    let mut ini = Ini::parse(text)?;
    for o in overrides {
        ini.set(o)?;
    }
    scenario_from_ini(&ini)
}

fn list(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn matrix(m: &DMatrix<f64>) -> String {
    m.row_iter()
        .map(|r| r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "))
        .collect::<Vec<_>>()
        .join("; ")
}

fn render_disturbance(out: &mut String, d: &DisturbanceSpec) {
    let sinusoid = |out: &mut String, amplitude: &DVector<f64>, frequency: f64, phase: f64| {
        writeln!(out, "amplitude = {}", list(amplitude)).unwrap();
        writeln!(out, "frequency = {frequency:?}").unwrap();
        writeln!(out, "phase = {phase:?}").unwrap();
    };
    match d {
        DisturbanceSpec::Zero => writeln!(out, "kind = zero").unwrap(),
        DisturbanceSpec::Constant(v) => {
            writeln!(out, "kind = constant\nvalue = {}", list(v)).unwrap();
        }
        DisturbanceSpec::Sinusoid {
            amplitude,
            frequency,
            phase,
        } => {
            writeln!(out, "kind = sinusoid").unwrap();
            sinusoid(out, amplitude, *frequency, *phase);
        }
        DisturbanceSpec::Sum(parts) => match parts.as_slice() {
            [DisturbanceSpec::Constant(v), DisturbanceSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
            }] => {
                writeln!(out, "kind = sum\nvalue = {}", list(v)).unwrap();
                sinusoid(out, amplitude, *frequency, *phase);
            }
            _ => unreachable!("only constant + sinusoid sums are built from files"),
        },
    }
}

/// Canonical text of a scenario; loading it reproduces `cfg` exactly.
pub fn render(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let o = &mut out;

    writeln!(o, "[model]").unwrap();
    match &cfg.model.kind {
        ModelKind::Planar { params, branch } => {
            writeln!(o, "kind = planar").unwrap();
            let mut p = params.clone();
            for (k, v) in planar_fields(&mut p) {
                writeln!(o, "{k} = {:?}", *v).unwrap();
            }
            let b = match branch {
                ElbowBranch::Down => "down",
                ElbowBranch::Up => "up",
            };
            writeln!(o, "branch = {b}").unwrap();
        }
        ModelKind::Surgical(params) => {
            writeln!(o, "kind = surgical").unwrap();
            let mut p = params.clone();
            for (k, v) in surgical_fields(&mut p) {
                writeln!(o, "{k} = {:?}", *v).unwrap();
            }
        }
    }
    if let Some(f) = &cfg.model.friction {
        writeln!(o, "friction = {}", list(f)).unwrap();
    }

    let c = &cfg.controller;
    writeln!(o, "\n[controller]").unwrap();
    writeln!(o, "kind = {}", c.kind).unwrap();
    writeln!(o, "kd = {}", matrix(c.gains.kd())).unwrap();
    writeln!(o, "ki = {}", matrix(c.gains.ki())).unwrap();
    writeln!(o, "lambda = {}", matrix(c.gains.lambda())).unwrap();
    writeln!(o, "observer = {}", c.observer).unwrap();
    writeln!(o, "xi_ddot = {}", c.xi_ddot.as_str()).unwrap();
    writeln!(o, "damping_lambda = {:?}", c.damping.lambda).unwrap();
    writeln!(o, "damping_threshold = {:?}", c.damping.threshold).unwrap();

    writeln!(o, "\n[trajectory]").unwrap();
    match &cfg.trajectory {
        TrajectorySpec::WorkspacePath => writeln!(o, "kind = workspace_eq24").unwrap(),
        TrajectorySpec::JointSinusoid {
            amplitude,
            omega,
            phase,
            offset,
        } => {
            writeln!(o, "kind = joint_sinusoid").unwrap();
            writeln!(o, "amplitude = {}", list(amplitude)).unwrap();
            writeln!(o, "omega = {}", list(omega)).unwrap();
            writeln!(o, "phase = {}", list(phase)).unwrap();
            writeln!(o, "offset = {}", list(offset)).unwrap();
        }
        TrajectorySpec::Setpoint { target, space } => {
            writeln!(o, "kind = setpoint\ntarget = {}", list(target)).unwrap();
            let space = match space {
                Space::Joint => "joint",
                Space::Task => "task",
            };
            writeln!(o, "space = {space}").unwrap();
        }
        TrajectorySpec::WorkspaceCircle {
            center,
            radius,
            omega,
            phase,
        } => {
            writeln!(o, "kind = workspace_circle\ncenter = {}", list(center)).unwrap();
            writeln!(o, "radius = {radius:?}\nomega = {omega:?}\nphase = {phase:?}").unwrap();
        }
    }

    writeln!(o, "\n[disturbance]").unwrap();
    render_disturbance(o, &cfg.disturbance);

    writeln!(o, "\n[initial]").unwrap();
    match &cfg.initial {
        InitialCondition::ReferenceAtRest => writeln!(o, "mode = reference_at_rest").unwrap(),
        InitialCondition::OnReference => writeln!(o, "mode = on_reference").unwrap(),
        InitialCondition::Explicit(s) => {
            writeln!(o, "mode = explicit\nq = {}\nqdot = {}", list(&s.q), list(&s.qdot)).unwrap();
        }
    }
    if let Some(d) = &cfg.d_hat0 {
        writeln!(o, "d_hat = {}", list(d)).unwrap();
    }

    let s = &cfg.sim;
    writeln!(o, "\n[sim]").unwrap();
    writeln!(o, "dt = {:?}\nduration = {:?}", s.dt, s.duration).unwrap();
    writeln!(o, "decimation = {}\nblowup = {:?}", s.decimation, s.blowup).unwrap();
    if let Some(p) = s.control_period {
        writeln!(o, "control_period = {p:?}").unwrap();
    }
    out
}
