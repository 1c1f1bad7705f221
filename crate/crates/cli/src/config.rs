//! Flat `key = value` configuration with dotted section keys.
//!
//! Blank lines and `#` comments are ignored; values may be quoted. A line
//! `[section]` prefixes the following keys with `section.`. Keys are
//! case-insensitive.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nonholo_core::dynamics::{IntegratorConfig, Method};
use nonholo_core::systems::chaplygin::{ChaplyginParams, ChaplyginPotential};
use nonholo_core::systems::profile::ShapeProfile;
use nonholo_core::systems::revolution::{RevolutionParams, RevolutionPotential, SolutionChoice};
use nonholo_core::verification::LambdaChoice;

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "system",
    "seed",
    "chaplygin.i1",
    "chaplygin.i3",
    "chaplygin.m",
    "chaplygin.r",
    "chaplygin.potential",
    "chaplygin.strength",
    "chaplygin.theta_min",
    "revolution.profile",
    "revolution.radius",
    "revolution.offset",
    "revolution.a",
    "revolution.c",
    "revolution.f1",
    "revolution.f2",
    "revolution.i1",
    "revolution.i3",
    "revolution.m",
    "revolution.potential",
    "revolution.g0",
    "revolution.theta_min",
    "revolution.solution",
    "initial.q",
    "initial.pi",
    "integrator.method",
    "integrator.step",
    "integrator.t_end",
    "integrator.rtol",
    "integrator.atol",
    "integrator.stride",
    "integrator.min_step",
    "integrator.max_energy_drift",
    "output.dir",
    "verify.n_samples",
    "verify.n_triples",
    "verify.lambda",
    "verify.lambda_scale",
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{key}': {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

/// Raw key-value pairs in insertion-independent order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: format!("expected key = value, got '{line}'") })?;
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            raw.set(&key, v)?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        let v = value.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        self.entries.insert(key, v.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, msg: format!("override '{kv}' is not key=value") })?;
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn num(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_f64(key, v),
        }
    }

    fn int(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| value_err(key, format!("expected a non-negative integer, got '{v}'"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key)
            .map(|v| {
                let v = v.trim_start_matches('[').trim_end_matches(']');
                v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s.trim())).collect()
            })
            .transpose()
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn value_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value { key: key.into(), msg: msg.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.trim().parse().map_err(|_| value_err(key, format!("expected a number, got '{v}'")))
}

/// Mechanical system selected by `system`.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemConfig {
    Chaplygin(ChaplyginParams),
    Revolution { profile: ShapeProfile, params: RevolutionParams, solution: SolutionChoice },
}

impl SystemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Chaplygin(_) => "chaplygin",
            Self::Revolution { .. } => "revolution",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub n_samples: usize,
    pub n_triples: usize,
    pub lambda: LambdaChoice,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub seed: u64,
    pub q0: Vec<f64>,
    pub pi0: Vec<f64>,
    pub integrator: IntegratorConfig,
    pub max_energy_drift: Option<f64>,
    pub out_dir: PathBuf,
    pub verify: VerifyConfig,
}

pub const DEFAULT_SEED: u64 = 7;

impl RunConfig {
    /// Resolves raw entries; `seed_env` (the value of `NONHOLO_SEED`) wins over the file.
    pub fn resolve(raw: &RawConfig, seed_env: Option<&str>) -> Result<Self, ConfigError> {
        let system = match raw.get("system").unwrap_or("chaplygin") {
            "chaplygin" => SystemConfig::Chaplygin(chaplygin_params(raw)?),
            "revolution" => revolution_system(raw)?,
            other => return Err(value_err("system", format!("expected chaplygin or revolution, got '{other}'"))),
        };
        let seed = match seed_env {
            Some(s) => s.trim().parse().map_err(|_| value_err("NONHOLO_SEED", format!("expected an integer, got '{s}'")))?,
            None => raw.int("seed", DEFAULT_SEED)?,
        };
        let q0 = raw.list("initial.q")?.unwrap_or_else(|| vec![0.0, 1.2, 0.3, 0.0, 0.0]);
        let pi0 = raw.list("initial.pi")?.unwrap_or_else(|| vec![0.5, 0.3, 0.2]);
        if q0.len() != 5 || pi0.len() != 3 {
            return Err(ConfigError::Invalid(format!(
                "initial.q needs 5 entries and initial.pi 3, got {} and {}",
                q0.len(),
                pi0.len()
            )));
        }
        let defaults = IntegratorConfig::default();
        let method = match raw.get("integrator.method").unwrap_or("rk4") {
            "rk4" | "rk4-fixed" => Method::Rk4Fixed,
            "rkf45" | "rkf45-adaptive" => Method::Rkf45Adaptive,
            other => return Err(value_err("integrator.method", format!("expected rk4 or rkf45, got '{other}'"))),
        };
        let integrator = IntegratorConfig {
            method,
            step: raw.num("integrator.step", defaults.step)?,
            rtol: raw.num("integrator.rtol", defaults.rtol)?,
            atol: raw.num("integrator.atol", defaults.atol)?,
            t_end: raw.num("integrator.t_end", defaults.t_end)?,
            sample_stride: raw.int("integrator.stride", defaults.sample_stride as u64)? as usize,
            min_step: raw.num("integrator.min_step", defaults.min_step)?,
        };
        integrator.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let max_energy_drift = raw.get("integrator.max_energy_drift").map(|v| parse_f64("integrator.max_energy_drift", v)).transpose()?;
        let lambda = match raw.get("verify.lambda").unwrap_or("generators") {
            "generators" => LambdaChoice::Generators,
            "zero" => LambdaChoice::Zero,
            "random" => LambdaChoice::Random { seed, scale: raw.num("verify.lambda_scale", 1.0)? },
            other => {
                return Err(value_err("verify.lambda", format!("expected generators, zero or random, got '{other}'")))
            }
        };
        Ok(Self {
            system,
            seed,
            q0,
            pi0,
            integrator,
            max_energy_drift,
            out_dir: PathBuf::from(raw.get("output.dir").unwrap_or("out")),
            verify: VerifyConfig {
                n_samples: raw.int("verify.n_samples", 100)? as usize,
                n_triples: raw.int("verify.n_triples", 200)? as usize,
                lambda,
            },
        })
    }
}

fn chaplygin_params(raw: &RawConfig) -> Result<ChaplyginParams, ConfigError> {
    let d = ChaplyginParams::default();
    let potential = match raw.get("chaplygin.potential").unwrap_or("none") {
        "none" => ChaplyginPotential::None,
        "uniform-gravity-like" => {
            ChaplyginPotential::UniformGravityLike { strength: raw.num("chaplygin.strength", 1.0)? }
        }
        other => {
            return Err(value_err("chaplygin.potential", format!("expected none or uniform-gravity-like, got '{other}'")))
        }
    };
    let p = ChaplyginParams {
        i1: raw.num("chaplygin.i1", d.i1)?,
        i3: raw.num("chaplygin.i3", d.i3)?,
        m: raw.num("chaplygin.m", d.m)?,
        radius: raw.num("chaplygin.r", d.radius)?,
        potential,
        theta_min: raw.num("chaplygin.theta_min", d.theta_min)?,
    };
    p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(p)
}

fn revolution_system(raw: &RawConfig) -> Result<SystemConfig, ConfigError> {
    let radius = raw.num("revolution.radius", 1.0)?;
    let profile = match raw.get("revolution.profile").unwrap_or("ellipsoid") {
        "sphere" => ShapeProfile::Sphere { radius },
        "offset-sphere" => ShapeProfile::OffsetSphere { radius, offset: raw.num("revolution.offset", 0.3)? },
        "ellipsoid" => ShapeProfile::Ellipsoid { a: raw.num("revolution.a", 1.0)?, c: raw.num("revolution.c", 0.6)? },
        "polynomial" => ShapeProfile::Polynomial {
            f1: raw.list("revolution.f1")?.ok_or_else(|| value_err("revolution.f1", "required for a polynomial profile"))?,
            f2: raw.list("revolution.f2")?.ok_or_else(|| value_err("revolution.f2", "required for a polynomial profile"))?,
        },
        other => {
            return Err(value_err(
                "revolution.profile",
                format!("expected sphere, offset-sphere, ellipsoid or polynomial, got '{other}'"),
            ))
        }
    };
    let d = RevolutionParams::default();
    let potential = match raw.get("revolution.potential").unwrap_or("none") {
        "none" => RevolutionPotential::None,
        "gravity" => RevolutionPotential::Gravity { g0: raw.num("revolution.g0", 9.81)? },
        other => return Err(value_err("revolution.potential", format!("expected none or gravity, got '{other}'"))),
    };
    let params = RevolutionParams {
        i1: raw.num("revolution.i1", d.i1)?,
        i3: raw.num("revolution.i3", d.i3)?,
        m: raw.num("revolution.m", d.m)?,
        potential,
        theta_min: raw.num("revolution.theta_min", d.theta_min)?,
    };
    params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let solution = match raw.get("revolution.solution").unwrap_or("auto") {
        "auto" => SolutionChoice::Auto,
        "first" | "1" => SolutionChoice::First,
        "second" | "2" => SolutionChoice::Second,
        other => return Err(value_err("revolution.solution", format!("expected auto, first or second, got '{other}'"))),
    };
    Ok(SystemConfig::Revolution { profile, params, solution })
}
