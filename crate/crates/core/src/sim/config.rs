//! Line-oriented `key = value` run configuration.
//!
//! `#` starts a comment; blank lines are ignored; keys may appear once.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `nx`, `ny` | required | cells per direction |
//! | `epsilon` | required | interface width |
//! | `kappa` | required | surface gradient weight, `≥ 0` |
//! | `tau` | required | time step |
//! | `t_end` | `2000 * tau` | final time |
//! | `steps` | | alternative to `t_end`: `t_end = steps * tau` |
//! | `domain` | `0, 0, 1, 1` | `x0, y0, x1, y1` |
//! | `theta_bulk`, `theta_surf` | `0.25` | double-well heights (a solver default) |
//! | `model` | `liu_wu` | or `neumann_classic` |
//! | `stepper` | `fully_implicit` | or `minimizing_movement`, `convex_concave`, `mm`, `fi`, `cc` |
//! | `newton_tol` | `1e-10` | residual ∞-norm |
//! | `newton_max_iter` | `50` | |
//! | `init` | `constant` | or `random` |
//! | `init_bulk`, `init_boundary` | `0`, `1` | constant data |
//! | `bulk_lo`, `bulk_hi` | `-0.1`, `0.1` | random interior range |
//! | `surf_lo`, `surf_hi` | `0.4`, `0.6` | random boundary range |
//! | `seed` | `1` | SplitMix64 seed |
//! | `output` | `out` | output directory |
//! | `snapshot_every` | `100` | steps between snapshots |
//! | `formats` | `csv` | comma list of `csv`, `vtk`, `ppm` |

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::energy::{ModelKind, ModelParams};
use crate::mesh::{build_friedrichs_keller, Rect};
use crate::potentials::double_well;
use crate::stepper::{StepperConfig, StepperKind};

pub const REQUIRED_KEYS: [&str; 5] = ["nx", "ny", "epsilon", "kappa", "tau"];

const KNOWN_KEYS: [&str; 25] = [
    "nx",
    "ny",
    "epsilon",
    "kappa",
    "tau",
    "t_end",
    "domain",
    "theta_bulk",
    "theta_surf",
    "model",
    "stepper",
    "newton_tol",
    "newton_max_iter",
    "init",
    "init_bulk",
    "init_boundary",
    "bulk_lo",
    "bulk_hi",
    "surf_lo",
    "surf_hi",
    "seed",
    "output",
    "snapshot_every",
    "formats",
    "steps",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<&'static str>),
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    Constant { bulk_value: f64, boundary_value: f64 },
    Random { bulk_lo: f64, bulk_hi: f64, surf_lo: f64, surf_hi: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Formats {
    pub csv: bool,
    pub vtk: bool,
    pub ppm: bool,
}

impl Formats {
    pub fn all() -> Self {
        Formats { csv: true, vtk: true, ppm: true }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let mut f = Formats::default();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match item {
                "csv" => f.csv = true,
                "vtk" => f.vtk = true,
                "ppm" => f.ppm = true,
                other => return Err(format!("unknown format `{other}`")),
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub params: ModelParams,
    pub stepper: StepperConfig,
    pub init: InitSpec,
    pub output: PathBuf,
    pub snapshot_every: usize,
    pub formats: Formats,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        build_friedrichs_keller(self.domain, self.nx, self.ny).map_err(|e| invalid(&e))?;
        self.params.validate().map_err(|e| invalid(&e))?;
        self.stepper.validate().map_err(|e| invalid(&e))?;
        if self.snapshot_every == 0 {
            return Err(ConfigError::Invalid("snapshot_every must be at least 1".into()));
        }
        if self.stepper.kind == StepperKind::MinimizingMovement && (self.nx < 2 || self.ny < 2) {
            return Err(ConfigError::Invalid("minimizing_movement needs nx, ny >= 2 for an interior vertex".into()));
        }
        match self.init {
            InitSpec::Constant { bulk_value, boundary_value } => {
                if !bulk_value.is_finite() || !boundary_value.is_finite() {
                    return Err(ConfigError::Invalid("initial values must be finite".into()));
                }
            }
            InitSpec::Random { bulk_lo, bulk_hi, surf_lo, surf_hi, .. } => {
                for (lo, hi, which) in [(bulk_lo, bulk_hi, "bulk"), (surf_lo, surf_hi, "surf")] {
                    if !lo.is_finite() || !hi.is_finite() || lo > hi {
                        return Err(ConfigError::Invalid(format!("{which} range needs finite lo <= hi, got [{lo}, {hi}]")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        self.params.num_steps()
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Table {
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| ConfigError::Value {
                line: e.line,
                key: key.to_string(),
                message: format!("`{}`: {err}", e.value),
            }),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn value_error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Value { line: self.entries[key].line, key: key.to_string(), message: message.into() }
    }

    fn text(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }
}

fn tokenize(text: &str) -> Result<Table, ConfigError> {
    let mut entries = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line, message: "empty key or value".into() });
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { line, key: key.to_string() });
        }
        if entries.contains_key(key) {
            return Err(ConfigError::Duplicate { line, key: key.to_string() });
        }
        entries.insert(key.to_string(), Entry { line, value: value.to_string() });
    }
    Ok(Table { entries })
}

/// Parses and validates a configuration. `steps = K` is accepted as a
/// shorthand for `t_end = K * tau` and may not be combined with `t_end`.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let table = tokenize(text)?;
    let missing: Vec<&'static str> = REQUIRED_KEYS.iter().copied().filter(|k| !table.entries.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }

    let nx: usize = table.get("nx", 0)?;
    let ny: usize = table.get("ny", 0)?;
    let epsilon: f64 = table.get("epsilon", 0.0)?;
    let kappa: f64 = table.get("kappa", 0.0)?;
    let tau: f64 = table.get("tau", 0.0)?;
    if kappa < 0.0 {
        return Err(table.value_error("kappa", format!("must be nonnegative, got {kappa}")));
    }

    let t_end = match (table.parse::<f64>("t_end")?, table.parse::<usize>("steps")?) {
        (Some(_), Some(_)) => return Err(table.value_error("steps", "cannot be combined with t_end")),
        (Some(t), None) => t,
        (None, Some(k)) => k as f64 * tau,
        (None, None) => 2000.0 * tau,
    };

    let domain = match table.text("domain") {
        None => Rect::unit_square(),
        Some(s) => {
            let parts: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
            match parts {
                Ok(p) if p.len() == 4 => {
                    Rect::new(p[0], p[1], p[2], p[3]).map_err(|e| table.value_error("domain", e.to_string()))?
                }
                _ => return Err(table.value_error("domain", "expected `x0, y0, x1, y1`")),
            }
        }
    };

    let theta = |key: &str| -> Result<_, ConfigError> {
        let t: f64 = table.get(key, 0.25)?;
        double_well(t).map_err(|e| table.value_error(key, e.to_string()))
    };
    let model = match table.text("model").unwrap_or("liu_wu") {
        "liu_wu" => ModelKind::LiuWu,
        "neumann_classic" => ModelKind::NeumannClassic,
        other => return Err(table.value_error("model", format!("unknown model `{other}`"))),
    };
    let params = ModelParams { epsilon, kappa, pot_bulk: theta("theta_bulk")?, pot_surf: theta("theta_surf")?, tau, t_end, model };

    let kind = match table.text("stepper") {
        None => StepperKind::default(),
        Some(s) => StepperKind::parse(s).ok_or_else(|| table.value_error("stepper", format!("unknown stepper `{s}`")))?,
    };
    let defaults = StepperConfig::default();
    let stepper = StepperConfig {
        kind,
        newton_tol: table.get("newton_tol", defaults.newton_tol)?,
        newton_max_iter: table.get("newton_max_iter", defaults.newton_max_iter)?,
    };

    let init = match table.text("init").unwrap_or("constant") {
        "constant" => InitSpec::Constant {
            bulk_value: table.get("init_bulk", 0.0)?,
            boundary_value: table.get("init_boundary", 1.0)?,
        },
        "random" => InitSpec::Random {
            bulk_lo: table.get("bulk_lo", -0.1)?,
            bulk_hi: table.get("bulk_hi", 0.1)?,
            surf_lo: table.get("surf_lo", 0.4)?,
            surf_hi: table.get("surf_hi", 0.6)?,
            seed: table.get("seed", 1)?,
        },
        other => return Err(table.value_error("init", format!("expected `constant` or `random`, got `{other}`"))),
    };

    let formats = match table.text("formats") {
        None => Formats { csv: true, ..Default::default() },
        Some(s) => Formats::parse(s).map_err(|e| table.value_error("formats", e))?,
    };

    let config = SimConfig {
        domain,
        nx,
        ny,
        params,
        stepper,
        init,
        output: PathBuf::from(table.text("output").unwrap_or("out")),
        snapshot_every: table.get("snapshot_every", 100)?,
        formats,
    };
    config.validate()?;
    Ok(config)
}
