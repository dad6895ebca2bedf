//! Run configuration: `key = value` lines or one JSON object.

use std::collections::BTreeMap;
use std::path::PathBuf;

use blowup_core::phys_solver::{FarBoundary, PhysConfig, PhysScheme};
use blowup_core::sim_solver::{default_y_max, Formulation, Scheme, SolverConfig, BLOWUP_GUARD};
use blowup_core::SimParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    SimulatePhysical,
    Shoot,
    Sweep,
    Modes,
    Residual,
    VerifyProfile,
    FinalProfile,
    Ode,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SimulatePhysical => "simulate-physical",
            Command::Shoot => "shoot",
            Command::Sweep => "sweep",
            Command::Modes => "modes",
            Command::Residual => "residual",
            Command::VerifyProfile => "verify-profile",
            Command::FinalProfile => "final-profile",
            Command::Ode => "ode",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("{0}")]
    Other(String),
}

/// Every tunable of a run. Optional fields are derived from the others when
/// left unset ("auto").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub output_dir: PathBuf,

    pub alpha: f64,
    pub dim: usize,
    pub t_blow: f64,
    pub s0: f64,
    pub k0: f64,
    pub a_amp: f64,
    pub eps0: f64,
    pub alpha0: f64,
    /// Auto: `0.2·|Û(1)|`.
    pub delta0: Option<f64>,
    pub eta0: f64,
    pub c0: f64,
    pub c0_prime: f64,
    pub a_far: f64,

    /// Auto: `1.1·2K₀√s_end`.
    pub y_max: Option<f64>,
    pub dy: f64,
    pub ds: f64,
    pub cfl_safety: f64,
    pub scheme: Scheme,
    pub formulation: Formulation,
    pub blowup_guard: f64,
    pub reaction: bool,

    pub s_end: f64,
    pub snapshot_every: f64,
    pub d0: f64,
    /// Empty means zeros.
    pub d1: Vec<f64>,
    /// `simulate` exits with code 4 when the run leaves the spectral box.
    pub enforce_trap: bool,

    pub grid_res: usize,
    /// `sweep` also refines the best cell to this depth when positive.
    pub refine_depth: usize,

    pub theta_end: f64,
    pub dt_base: f64,
    pub phys_cfl: f64,
    pub phys_scheme: PhysScheme,
    pub phys_boundary: FarBoundary,
    pub blowup_margin: f64,
    pub max_steps: usize,
    pub r_min: f64,

    /// Auto: `s0 + 3`.
    pub fit_from: Option<f64>,

    pub w0_init: f64,
    /// Auto: `−1/((4+4α)s0)`.
    pub w2_init: Option<f64>,
    pub ode_s_end: f64,

    pub residual_s: Vec<f64>,
    pub residual_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = SimParams::default();
        let ph = PhysConfig::default();
        RunConfig {
            command: Command::Simulate,
            output_dir: PathBuf::from("out"),
            alpha: p.alpha,
            dim: p.dim,
            t_blow: p.t_blow,
            s0: p.s0,
            k0: p.k0,
            a_amp: p.a_amp,
            eps0: p.eps0,
            alpha0: p.alpha0,
            delta0: None,
            eta0: p.eta0,
            c0: p.c0,
            c0_prime: p.c0_prime,
            a_far: p.a_far,
            y_max: None,
            dy: 0.05,
            ds: 0.02,
            cfl_safety: 0.5,
            scheme: Scheme::SemiImplicitCn,
            formulation: Formulation::WEquation,
            blowup_guard: BLOWUP_GUARD,
            reaction: true,
            s_end: 30.0,
            snapshot_every: 0.1,
            d0: 0.0,
            d1: Vec::new(),
            enforce_trap: false,
            grid_res: 17,
            refine_depth: 0,
            theta_end: 1e-10,
            dt_base: ph.dt_base,
            phys_cfl: ph.cfl,
            phys_scheme: ph.scheme,
            phys_boundary: ph.boundary,
            blowup_margin: ph.blowup_margin,
            max_steps: ph.max_steps,
            r_min: 1e-3,
            fit_from: None,
            w0_init: 0.0,
            w2_init: None,
            ode_s_end: 1e4,
            residual_s: vec![10.0, 20.0, 40.0, 80.0, 160.0, 320.0],
            residual_samples: 6001,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> SimParams {
        let mut p = SimParams {
            alpha: self.alpha,
            dim: self.dim,
            t_blow: self.t_blow,
            s0: self.s0,
            k0: self.k0,
            a_amp: self.a_amp,
            eps0: self.eps0,
            alpha0: self.alpha0,
            delta0: 0.0,
            eta0: self.eta0,
            c0: self.c0,
            c0_prime: self.c0_prime,
            a_far: self.a_far,
        };
        p.delta0 = self.delta0.unwrap_or_else(|| p.default_delta0());
        p
    }

    pub fn solver(&self) -> SolverConfig {
        let p = self.params();
        SolverConfig {
            y_max: self.y_max.unwrap_or_else(|| default_y_max(&p, self.s_end)),
            dy: self.dy,
            ds: self.ds,
            cfl_safety: self.cfl_safety,
            scheme: self.scheme,
            formulation: self.formulation,
            blowup_guard: self.blowup_guard,
            reaction: self.reaction,
        }
    }

    pub fn phys(&self) -> PhysConfig {
        PhysConfig {
            dt_base: self.dt_base,
            cfl: self.phys_cfl,
            scheme: self.phys_scheme,
            boundary: self.phys_boundary,
            blowup_margin: self.blowup_margin,
            store_frames: true,
            reaction: self.reaction,
            max_steps: self.max_steps,
        }
    }

    pub fn d1_vec(&self) -> Vec<f64> {
        if self.d1.is_empty() {
            vec![0.0; self.dim]
        } else {
            self.d1.clone()
        }
    }

    pub fn fit_from(&self) -> f64 {
        self.fit_from.unwrap_or(self.s0 + 3.0)
    }

    pub fn w2_init(&self) -> f64 {
        self.w2_init.unwrap_or(-1.0 / ((4.0 + 4.0 * self.alpha) * self.s0))
    }

    /// Range checks beyond what the types enforce.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |f: &str, msg: String| Err(ConfigError::Field { field: f.into(), msg });
        // The auto δ₀ needs a valid α.
        if !(self.alpha > -1.0) {
            return field("alpha", "must satisfy alpha > -1".into());
        }
        let p = self.params();
        if let Err(e) = p.validate() {
            return Err(ConfigError::Other(e.to_string()));
        }
        if !(self.s_end > self.s0) {
            return field("s_end", format!("must exceed s0 = {}", self.s0));
        }
        if !(self.snapshot_every > 0.0) {
            return field("snapshot_every", "must be > 0".into());
        }
        if let Err(e) = self.solver().validate(&p, self.s_end) {
            return Err(ConfigError::Other(e.to_string()));
        }
        if !self.d1.is_empty() && self.d1.len() != self.dim {
            return field("d1", format!("needs {} entries", self.dim));
        }
        if self.dim > 1 && self.d1_vec().iter().any(|v| *v != 0.0) {
            return field("d1", "radial runs need d1 = 0".into());
        }
        if self.grid_res < 2 {
            return field("grid_res", "must be >= 2".into());
        }
        let theta0 = (-self.s0).exp();
        if !(self.theta_end > 0.0 && self.theta_end < theta0) {
            return field("theta_end", format!("must lie in (0, e^-s0 = {theta0})"));
        }
        if !(self.dt_base > 0.0) {
            return field("dt_base", "must be > 0".into());
        }
        if !(self.phys_cfl > 0.0) {
            return field("phys_cfl", "must be > 0".into());
        }
        if !(self.r_min > 0.0) {
            return field("r_min", "must be > 0".into());
        }
        if !(self.ode_s_end > self.s0) {
            return field("ode_s_end", format!("must exceed s0 = {}", self.s0));
        }
        if self.residual_s.iter().any(|s| !(*s > 0.0)) {
            return field("residual_s", "entries must be > 0".into());
        }
        if self.residual_samples < 2 {
            return field("residual_samples", "must be >= 2".into());
        }
        Ok(())
    }
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

/// A bare value: JSON literal if it parses, `auto` as unset, else a string.
fn scalar(raw: &str) -> Value {
    let raw = raw.trim();
    if raw == "auto" {
        return Value::Null;
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Parses `key = value` lines (`#` starts a comment) into a key map,
/// remembering the line of each key.
fn parse_lines(text: &str) -> Result<(Map<String, Value>, BTreeMap<String, usize>), ConfigError> {
    let keys = known_keys();
    let mut map = Map::new();
    let mut lines = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Line { line: n, msg: format!("expected `key = value`, got `{line}`") });
        };
        let k = k.trim();
        if !keys.iter().any(|x| x == k) {
            return Err(ConfigError::Line { line: n, msg: format!("unknown key `{k}`") });
        }
        map.insert(k.to_string(), scalar(v));
        lines.insert(k.to_string(), n);
    }
    Ok((map, lines))
}

fn from_map(map: &Map<String, Value>, lines: &BTreeMap<String, usize>) -> Result<RunConfig, ConfigError> {
    let keys = known_keys();
    for k in map.keys() {
        if !keys.contains(k) {
            return Err(ConfigError::Field { field: k.clone(), msg: "unknown key".into() });
        }
    }
    match serde_json::from_value::<RunConfig>(Value::Object(map.clone())) {
        Ok(cfg) => Ok(cfg),
        Err(_) => {
            // Locate the offending key by trying each on its own.
            for (k, v) in map {
                let mut one = Map::new();
                one.insert(k.clone(), v.clone());
                if let Err(e) = serde_json::from_value::<RunConfig>(Value::Object(one)) {
                    let msg = format!("invalid value {v}: {e}");
                    return Err(match lines.get(k) {
                        Some(&line) => ConfigError::Line { line, msg: format!("`{k}`: {msg}") },
                        None => ConfigError::Field { field: k.clone(), msg },
                    });
                }
            }
            Err(ConfigError::Other("inconsistent configuration".into()))
        }
    }
}

/// Raw key map from config text, before overrides and validation.
pub fn parse_map(text: &str) -> Result<(Map<String, Value>, BTreeMap<String, usize>), ConfigError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(m)) => Ok((m, BTreeMap::new())),
            Ok(_) => Err(ConfigError::Other("JSON config must be an object".into())),
            Err(e) => Err(ConfigError::Line { line: e.line(), msg: e.to_string() }),
        }
    } else {
        parse_lines(text)
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let (map, lines) = parse_map(text)?;
    let cfg = from_map(&map, &lines)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Config text plus `key=value` overrides, validated.
pub fn build_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let (mut map, mut lines) = parse_map(text)?;
    let keys = known_keys();
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(ConfigError::Other(format!("--set expects key=value, got `{o}`")));
        };
        let k = k.trim();
        if !keys.iter().any(|x| x == k) {
            return Err(ConfigError::Field { field: k.into(), msg: "unknown key".into() });
        }
        map.insert(k.to_string(), scalar(v));
        lines.remove(k);
    }
    let cfg = from_map(&map, &lines)?;
    cfg.validate()?;
    Ok(cfg)
}
