//! Batch front end: run scenario files, compare controller variants, and
//! write CSV logs plus metric summaries.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use surgarm_core::control::ControllerKind;
use surgarm_core::dynamics::{PlanarArmParams, SurgicalArmParams};
use surgarm_core::sim::{run_scenario, Metrics, ScenarioConfig, SimLog};
use thiserror::Error;

pub use config::{load_scenario, render};

/// Terminal error below which a variant counts as converged.
pub const CONVERGED_BAND: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{message}")]
    Divergence { message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<surgarm_core::Error> for CliError {
    fn from(e: surgarm_core::Error) -> Self {
        match e {
            surgarm_core::Error::Divergence { .. } => CliError::Divergence {
                message: e.to_string(),
            },
            other => CliError::Config(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_log(path: &Path, log: &SimLog) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    log.write_csv(BufWriter::new(file)).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn load_file(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, CliError> {
    load_scenario(&read(path)?, overrides)
        .map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
}

/// Runs one scenario into `out`, writing `log.csv`, `metrics.txt` and
/// `config.resolved`. A diverging run still leaves its partial log and an
/// `error.txt` report.
pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<Metrics, CliError> {
    create_dir(out)?;
    write(&out.join("config.resolved"), &render(cfg))?;
    match run_scenario(cfg) {
        Ok((log, metrics)) => {
            write_log(&out.join("log.csv"), &log)?;
            write(&out.join("metrics.txt"), &metrics.to_kv())?;
            Ok(metrics)
        }
        Err(e) => {
            if let surgarm_core::Error::Divergence { partial_log, state, .. } = &e {
                if let Some(log) = partial_log {
                    write_log(&out.join("log.csv"), log)?;
                }
                write(&out.join("error.txt"), &format!("{e}\nstate = {state:?}\n"))?;
            }
            Err(e.into())
        }
    }
}

pub fn run_file(config: &Path, out: &Path, overrides: &[String]) -> Result<Metrics, CliError> {
    run(&load_file(config, overrides)?, out)
}

pub fn validate_file(config: &Path, overrides: &[String]) -> Result<ScenarioConfig, CliError> {
    load_file(config, overrides)
}

/// One variant in a comparison.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<(Variant, Metrics)>,
    pub table: String,
}

/// Names variants by file stem, suffixing repeats with `-2`, `-3`, ...
pub fn variant_names(paths: &[PathBuf]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for p in paths {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "variant".into());
        let mut name = stem.clone();
        let mut k = 2;
        while names.contains(&name) {
            name = format!("{stem}-{k}");
            k += 1;
        }
        names.push(name);
    }
    names
}

fn check_shared(variants: &[Variant]) -> Result<(), CliError> {
    if variants.len() < 2 {
        return Err(CliError::Config(format!(
            "compare needs at least two variants, got {}",
            variants.len()
        )));
    }
    let first = &variants[0];
    for v in &variants[1..] {
        let a = &first.config;
        let b = &v.config;
        for (what, same) in [
            ("model", a.model == b.model),
            ("trajectory", a.trajectory == b.trajectory),
            ("disturbance", a.disturbance == b.disturbance),
            ("sim", a.sim == b.sim),
        ] {
            if !same {
                return Err(CliError::Config(format!(
                    "variants `{}` and `{}` differ in [{what}]",
                    first.name, v.name
                )));
            }
        }
    }
    Ok(())
}

fn observer_label(cfg: &ScenarioConfig) -> &'static str {
    match (cfg.controller.kind, cfg.controller.observer) {
        (ControllerKind::InverseDynamicsIntegral, _) => "-",
        (_, true) => "on",
        (_, false) => "off",
    }
}

fn comparison_table(rows: &[(Variant, Metrics)]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<24} {:<26} {:>8} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>9}",
        "variant",
        "controller",
        "observer",
        "rms_error",
        "terminal",
        "peak_error",
        "peak_control",
        "observer_err",
        "settling",
        "converged"
    )
    .unwrap();
    for (v, m) in rows {
        let settling = m
            .settling_time
            .map_or_else(|| "unsettled".to_string(), |t| format!("{t:.3}"));
        writeln!(
            s,
            "{:<24} {:<26} {:>8} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13} {:>9}",
            v.name,
            v.config.controller.kind.as_str(),
            observer_label(&v.config),
            m.rms_error,
            m.terminal_error,
            m.peak_error,
            m.peak_control,
            m.observer_error,
            settling,
            if m.terminal_error <= CONVERGED_BAND { "yes" } else { "no" }
        )
        .unwrap();
    }
    let (base, bm) = &rows[0];
    writeln!(s).unwrap();
    for (v, m) in &rows[1..] {
        let ratio = m.peak_error / bm.peak_error;
        writeln!(s, "peak_error_ratio {} / {} = {ratio:.6}", v.name, base.name).unwrap();
        if ratio >= 2.0 {
            writeln!(s, "larger transient: {} (>= 2x {})", v.name, base.name).unwrap();
        }
    }
    s
}

/// Runs every variant (in parallel) into `out/<name>/`, then writes
/// `comparison.txt` and `error_norms.csv` to `out`.
pub fn compare(variants: Vec<Variant>, out: &Path) -> Result<Comparison, CliError> {
    check_shared(&variants)?;
    create_dir(out)?;
    let results: Vec<Result<Metrics, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|v| scope.spawn(move || run(&v.config, &out.join(&v.name))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant thread panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    for (v, r) in variants.into_iter().zip(results) {
        rows.push((v, r?));
    }

    let mut logs = Vec::new();
    for (v, _) in &rows {
        let path = out.join(&v.name).join("log.csv");
        let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        logs.push(SimLog::read_csv(io::BufReader::new(file))?);
    }
    let mut combined = SimLog::new(
        std::iter::once("t".to_string())
            .chain(rows.iter().map(|(v, _)| format!("err_{}", v.name)))
            .collect(),
    );
    let t = logs[0].require("t")?;
    let errs: Vec<&[f64]> = logs
        .iter()
        .map(|l| l.require("err_norm"))
        .collect::<Result<_, _>>()?;
    for k in 0..t.len() {
        let mut row = vec![t[k]];
        row.extend(errs.iter().map(|e| e[k]));
        combined.push_row(&row)?;
    }
    write_log(&out.join("error_norms.csv"), &combined)?;

    let table = comparison_table(&rows);
    write(&out.join("comparison.txt"), &table)?;
    Ok(Comparison { rows, table })
}

pub fn compare_files(configs: &[PathBuf], out: &Path, overrides: &[String]) -> Result<Comparison, CliError> {
    let names = variant_names(configs);
    let variants = configs
        .iter()
        .zip(names)
        .map(|(p, name)| {
            Ok(Variant {
                name,
                config: load_file(p, overrides)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    compare(variants, out)
}

/// Text listing of the built-in models and their default parameters.
pub fn list_models() -> String {
    let p = PlanarArmParams::default();
    let s = SurgicalArmParams::default();
    let mut out = String::new();
    writeln!(out, "planar    dof = 2  task_dim = 2  two-link revolute arm in a vertical plane").unwrap();
    writeln!(
        out,
        "  m1 = {:?}  m2 = {:?}  l1 = {:?}  l2 = {:?}  lc1 = {:?}  lc2 = {:?}  izz1 = {:?}  izz2 = {:?}  g = {:?}",
        p.m1, p.m2, p.l1, p.l2, p.lc1, p.lc2, p.izz1, p.izz2, p.g
    )
    .unwrap();
    writeln!(out, "surgical  dof = 4  task_dim = 3  azimuth, elevation, roll, insertion").unwrap();
    writeln!(
        out,
        "  m1 = {:?}  m2 = {:?}  m3 = {:?}  m4 = {:?}  l1 = {:?}  l2 = {:?}  g = {:?}",
        s.m1, s.m2, s.m3, s.m4, s.l1, s.l2, s.g
    )
    .unwrap();
    writeln!(
        out,
        "  i1a = {:e}  i1t = {:e}  i2a = {:e}  i2t = {:e}  i3a = {:e}  i4a = {:e}  i4t = {:e}",
        s.i1a, s.i1t, s.i2a, s.i2t, s.i3a, s.i4a, s.i4t
    )
    .unwrap();
    out
}
