//! Run configuration: TOML files with dotted keys, command-line overrides and
//! per-experiment defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::engine::Scheme;
use crate::error::{Error, Result};
use crate::fields::{preset_defaults, MANIFOLDS};
use crate::harness::{log_spaced, EnsembleSpec};

pub const EXPERIMENTS: [&str; 9] = [
    "simulate",
    "momentum",
    "momentum-pointwise",
    "quad-check",
    "converge",
    "drift",
    "bm-check",
    "vertical-check",
    "validate",
];

/// Fixed keys; `model.<parameter>` keys are checked against the preset.
pub const KEYS: [&str; 30] = [
    "experiment",
    "model",
    "manifold",
    "seed",
    "run.experiment",
    "run.seed",
    "run.out",
    "run.threads",
    "model.preset",
    "model.manifold",
    "sim.T",
    "sim.dt",
    "sim.limit_dt",
    "sim.scheme",
    "sim.reortho_every",
    "sim.chart_switch",
    "sim.thin",
    "sim.n_paths",
    "sim.system",
    "sim.path_index",
    "ensemble.masses",
    "ensemble.p",
    "ensemble.theta0",
    "ensemble.v0",
    "ensemble.dt_fraction",
    "ensemble.alpha",
    "ensemble.beta",
    "ensemble.integrand",
    "ensemble.dt_halving",
    "ensemble.mass_check",
];

const EXTRA_KEYS: [&str; 3] = ["ensemble.q", "ensemble.mass_dt", "drift.n_points"];

pub const THREADS_ENV: &str = "FRAME_LANGEVIN_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Mass,
    Limit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub out_dir: PathBuf,
    /// 0 selects the rayon default.
    pub threads: usize,
    pub system: System,
    pub path_index: u64,
    pub dt_halving: bool,
    pub mass_check: f64,
    pub mass_dt: f64,
    pub drift_points: usize,
    pub spec: EnsembleSpec,
    /// Every resolved key with its value, for output headers.
    pub resolved: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, t: &Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in t {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(inner) if key != "model" || !inner.is_empty() => flatten(&key, inner, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

/// Parses a `key = value` override; bare words are taken as strings.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not of the form key=value")))?;
    let k = k.trim().to_string();
    let v = v.trim();
    let value = match format!("v = {v}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(v.into())),
        Err(_) => Value::String(v.into()),
    };
    Ok((k, value))
}

/// Flat key-value view of a config file plus overrides, with source text kept
/// for error line numbers.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub values: BTreeMap<String, Value>,
    source: Option<String>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(format!("config parse error: {e}")))?;
        let mut values = BTreeMap::new();
        flatten("", &t, &mut values);
        Ok(RawConfig { values, source: Some(text.to_string()) })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        let src = self.source.as_ref()?;
        let last = key.rsplit('.').next().unwrap_or(key);
        src.lines().position(|l| {
            let t = l.trim_start();
            [key, last].iter().any(|k| t.strip_prefix(k).is_some_and(|r| r.trim_start().starts_with('=')))
        })
        .map(|i| i + 1)
    }

    fn type_error(&self, key: &str, want: &str, got: &Value) -> Error {
        let at = self.line_of(key).map(|l| format!(" (line {l})")).unwrap_or_default();
        Error::Config(format!("key {key}{at}: expected {want}, got {got}"))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(self.type_error(key, "a number", v)),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(self.type_error(key, "a non-negative integer", v)),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(self.type_error(key, "a string", v)),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(self.type_error(key, "a boolean", v)),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    o => Err(self.type_error(key, "an array of numbers", o)),
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
            Some(v) => Err(self.type_error(key, "an array of numbers", v)),
        }
    }

    /// First of several alias keys that is present.
    fn pick<T>(&self, keys: &[&str], get: impl Fn(&Self, &str) -> Result<Option<T>>) -> Result<Option<T>> {
        for k in keys {
            if let Some(v) = get(self, k)? {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let experiment = self
            .pick(&["run.experiment", "experiment"], Self::string)?
            .ok_or_else(|| Error::Config(format!("no experiment given; valid: {}", EXPERIMENTS.join(", "))))?;
        if !EXPERIMENTS.contains(&experiment.as_str()) {
            return Err(Error::Config(format!("unknown experiment {experiment:?}; valid: {}", EXPERIMENTS.join(", "))));
        }
        let manifold = self.pick(&["model.manifold", "manifold"], Self::string)?.unwrap_or_else(|| default_manifold(&experiment).into());
        if !MANIFOLDS.contains(&manifold.as_str()) {
            return Err(Error::Config(format!("unknown manifold {manifold:?}; valid: {}", MANIFOLDS.join(", "))));
        }
        let preset = self.pick(&["model.preset", "model"], Self::string)?.unwrap_or_else(|| default_preset(&experiment).into());
        let defaults = preset_defaults(&preset)?;
        let mut params = BTreeMap::new();
        for key in self.values.keys() {
            if KEYS.contains(&key.as_str()) || EXTRA_KEYS.contains(&key.as_str()) {
                continue;
            }
            match key.strip_prefix("model.") {
                Some(p) if defaults.iter().any(|(d, _)| *d == p) => {
                    params.insert(p.to_string(), self.f64(key)?.unwrap());
                }
                _ => {
                    let mut valid: Vec<String> = KEYS.iter().chain(EXTRA_KEYS.iter()).map(|s| s.to_string()).collect();
                    valid.extend(defaults.iter().map(|(d, _)| format!("model.{d}")));
                    return Err(Error::Config(format!("unknown key {key:?}; valid keys: {}", valid.join(", "))));
                }
            }
        }
        let base = EnsembleSpec::default();
        let (t_default, paths_default) = experiment_defaults(&experiment);
        let scheme = match self.string("sim.scheme")? {
            Some(s) => Scheme::parse(&s)?,
            None => base.scheme,
        };
        let system = match self.string("sim.system")?.as_deref() {
            None | Some("mass") => System::Mass,
            Some("limit") => System::Limit,
            Some(o) => return Err(Error::Config(format!("sim.system must be mass or limit, got {o:?}"))),
        };
        let dt = self.f64("sim.dt")?.unwrap_or(base.dt);
        let mass = params.get("mass").copied().unwrap_or_else(|| defaults.iter().find(|d| d.0 == "mass").unwrap().1);
        let spec = EnsembleSpec {
            manifold,
            preset,
            params,
            masses: self.f64_list("ensemble.masses")?.unwrap_or(if experiment == "vertical-check" { vec![mass] } else { log_spaced(1e-1, 1e-3, 5) }),
            t_end: self.f64("sim.T")?.unwrap_or(t_default),
            dt,
            limit_dt: self.f64("sim.limit_dt")?.unwrap_or(dt),
            n_paths: self.uint("sim.n_paths")?.map(|x| x as usize).unwrap_or(paths_default),
            master_seed: self.pick(&["run.seed", "seed"], Self::uint)?.unwrap_or(0),
            order: self.pick(&["ensemble.p", "ensemble.q"], Self::f64)?.unwrap_or(2.0),
            thin: self.uint("sim.thin")?.unwrap_or(1).max(1) as usize,
            scheme,
            v0: self.f64_list("ensemble.v0")?.unwrap_or_default(),
            theta0: self.f64("ensemble.theta0")?.unwrap_or(base.theta0),
            dt_fraction: self.f64("ensemble.dt_fraction")?.unwrap_or(base.dt_fraction),
            reortho_every: self.uint("sim.reortho_every")?.unwrap_or(1) as usize,
            chart_switch: self.f64("sim.chart_switch")?.unwrap_or(base.chart_switch),
            alpha: self.uint("ensemble.alpha")?.unwrap_or(0) as usize,
            beta: self.uint("ensemble.beta")?.unwrap_or(0) as usize,
            quad_fn: self.string("ensemble.integrand")?.unwrap_or(base.quad_fn),
        };
        let mut cfg = RunConfig {
            experiment,
            out_dir: PathBuf::from(self.string("run.out")?.unwrap_or_else(|| "out".into())),
            threads: self.uint("run.threads")?.unwrap_or(0) as usize,
            system,
            path_index: self.uint("sim.path_index")?.unwrap_or(0),
            dt_halving: self.boolean("ensemble.dt_halving")?.unwrap_or(true),
            mass_check: self.f64("ensemble.mass_check")?.unwrap_or(1e-3),
            mass_dt: self.f64("ensemble.mass_dt")?.unwrap_or(2.5e-4),
            drift_points: self.uint("drift.n_points")?.unwrap_or(100) as usize,
            spec,
            resolved: BTreeMap::new(),
        };
        cfg.resolved = resolved_keys(&cfg);
        Ok(cfg)
    }
}

fn default_manifold(experiment: &str) -> &'static str {
    match experiment {
        "momentum" | "momentum-pointwise" => "circle",
        "bm-check" | "vertical-check" => "sphere2",
        _ => "torus2",
    }
}

fn default_preset(experiment: &str) -> &'static str {
    match experiment {
        "converge" | "quad-check" => "scalar_drag_noise",
        "vertical-check" | "drift" => "anisotropic_drag",
        _ => "bm",
    }
}

/// (T, n_paths) defaults.
fn experiment_defaults(experiment: &str) -> (f64, usize) {
    match experiment {
        "simulate" | "validate" | "drift" => (1.0, 1),
        "bm-check" => (0.2, 10_000),
        "vertical-check" => (0.5, 5000),
        _ => (1.0, 2000),
    }
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| Value::Float(*x)).collect())
}

fn resolved_keys(c: &RunConfig) -> BTreeMap<String, Value> {
    let s = &c.spec;
    let mut r = BTreeMap::new();
    let st = |x: &str| Value::String(x.into());
    let int = |x: u64| Value::Integer(x as i64);
    r.insert("run.experiment".into(), st(&c.experiment));
    r.insert("run.seed".into(), int(s.master_seed));
    r.insert("run.out".into(), st(&c.out_dir.display().to_string()));
    r.insert("run.threads".into(), int(c.threads as u64));
    r.insert("model.preset".into(), st(&s.preset));
    r.insert("model.manifold".into(), st(&s.manifold));
    if let Ok(d) = preset_defaults(&s.preset) {
        for (k, v) in d {
            r.insert(format!("model.{k}"), Value::Float(s.params.get(k).copied().unwrap_or(v)));
        }
    }
    r.insert("sim.T".into(), Value::Float(s.t_end));
    r.insert("sim.dt".into(), Value::Float(s.dt));
    r.insert("sim.limit_dt".into(), Value::Float(s.limit_dt));
    r.insert("sim.scheme".into(), st(s.scheme.name()));
    r.insert("sim.reortho_every".into(), int(s.reortho_every as u64));
    r.insert("sim.chart_switch".into(), Value::Float(s.chart_switch));
    r.insert("sim.thin".into(), int(s.thin as u64));
    r.insert("sim.n_paths".into(), int(s.n_paths as u64));
    r.insert("sim.system".into(), st(if c.system == System::Mass { "mass" } else { "limit" }));
    r.insert("sim.path_index".into(), int(c.path_index));
    r.insert("ensemble.masses".into(), floats(&s.masses));
    r.insert("ensemble.p".into(), Value::Float(s.order));
    r.insert("ensemble.theta0".into(), Value::Float(s.theta0));
    r.insert("ensemble.v0".into(), floats(&s.v0));
    r.insert("ensemble.dt_fraction".into(), Value::Float(s.dt_fraction));
    r.insert("ensemble.alpha".into(), int(s.alpha as u64));
    r.insert("ensemble.beta".into(), int(s.beta as u64));
    r.insert("ensemble.integrand".into(), st(&s.quad_fn));
    r.insert("ensemble.dt_halving".into(), Value::Boolean(c.dt_halving));
    r.insert("ensemble.mass_check".into(), Value::Float(c.mass_check));
    r.insert("ensemble.mass_dt".into(), Value::Float(c.mass_dt));
    r.insert("drift.n_points".into(), int(c.drift_points as u64));
    r
}

/// Reads the optional file, applies `--set` overrides and the experiment and
/// seed flags, and resolves defaults.
pub fn parse_config(
    file: Option<&Path>,
    experiment: Option<&str>,
    seed: Option<u64>,
    out: Option<&Path>,
    overrides: &[String],
) -> Result<RunConfig> {
    let mut raw = match file {
        Some(p) => RawConfig::from_file(p)?,
        None => RawConfig::default(),
    };
    for o in overrides {
        let (k, v) = parse_override(o)?;
        raw.set(&k, v);
    }
    if let Some(e) = experiment {
        raw.values.remove("experiment");
        raw.set("run.experiment", Value::String(e.into()));
    }
    if let Some(s) = seed {
        raw.values.remove("seed");
        raw.set("run.seed", Value::Integer(s as i64));
    }
    if let Some(o) = out {
        raw.set("run.out", Value::String(o.display().to_string()));
    }
    raw.resolve()
}

/// Thread count from the environment variable, falling back to the config.
pub fn thread_count(cfg: &RunConfig) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {s:?}"))),
        Err(_) => Ok(cfg.threads),
    }
}
