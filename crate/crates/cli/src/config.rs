//! Run configuration: the model keys at top level, the ladder settings next
//! to them, and optional `[sweep]`, `[value]`, `[simulate]` and `[verify]`
//! tables.

use std::fmt;
use std::path::Path;

use levystop::laplace::LimitConfig;
use levystop::verify::VerifyConfig;
use levystop::{Family, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

fn d_eta_down() -> f64 {
    1.0
}

fn d_eta_up() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    family: Family,
    #[serde(default)]
    mu: f64,
    #[serde(default)]
    sigma: f64,
    #[serde(default)]
    lambda_down: f64,
    #[serde(default = "d_eta_down")]
    eta_down: f64,
    #[serde(default)]
    lambda_up: f64,
    #[serde(default = "d_eta_up")]
    eta_up: f64,
    r: f64,
    #[serde(default)]
    m: f64,
    c: f64,

    seed: Option<u64>,

    ladder_start: Option<f64>,
    ladder_levels: Option<usize>,
    paths_per_level: Option<usize>,
    rel_tol: Option<f64>,
    force_monte_carlo: Option<bool>,

    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    value: ValueSection,
    #[serde(default)]
    simulate: SimulateSection,
    #[serde(default)]
    verify: VerifySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Starting value; defaults to `c`.
    pub v: Option<f64>,
    pub grid: usize,
    pub paths: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            v: None,
            grid: 97,
            paths: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueSection {
    pub points: usize,
    /// Grid ends; default `[B_c / 4, 8 c]`.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub paths: usize,
}

impl Default for ValueSection {
    fn default() -> Self {
        ValueSection {
            points: 64,
            lo: None,
            hi: None,
            paths: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub v: Option<f64>,
    pub paths: usize,
    pub step: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            v: None,
            paths: 100_000,
            step: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VerifySection {
    sweep_grid: Option<usize>,
    sweep_paths: Option<usize>,
    value_paths: Option<usize>,
    curve_paths: Option<usize>,
    supermartingale_paths: Option<usize>,
    realization_paths: Option<usize>,
    convexity_paths: Option<usize>,
    step_h: Option<f64>,
}

/// Fully resolved settings. The config hash is taken over this, so command
/// line overrides show up in it; the seed is reported separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub limits: LimitConfig,
    pub sweep: SweepSection,
    pub value: ValueSection,
    pub simulate: SimulateSection,
    pub verify: VerifyConfig,
    #[serde(skip)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let model = ModelSpec {
            family: raw.family,
            mu: raw.mu,
            sigma: raw.sigma,
            lambda_down: raw.lambda_down,
            eta_down: raw.eta_down,
            lambda_up: raw.lambda_up,
            eta_up: raw.eta_up,
            r: raw.r,
            m: raw.m,
            c: raw.c,
        };
        model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut limits = LimitConfig::default();
        if let Some(x) = raw.ladder_start {
            limits.ladder_start = x;
        }
        if let Some(x) = raw.ladder_levels {
            limits.ladder_levels = x;
        }
        if let Some(x) = raw.paths_per_level {
            limits.paths_per_level = x;
        }
        if let Some(x) = raw.rel_tol {
            limits.rel_tol = x;
        }
        if let Some(x) = raw.force_monte_carlo {
            limits.force_monte_carlo = x;
        }
        limits.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut verify = VerifyConfig::default();
        verify.solver.limits = limits;
        let vs = raw.verify;
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut verify.sweep_grid, vs.sweep_grid);
        set(&mut verify.sweep_paths, vs.sweep_paths);
        set(&mut verify.value_paths, vs.value_paths);
        set(&mut verify.curve_paths, vs.curve_paths);
        set(&mut verify.supermartingale_paths, vs.supermartingale_paths);
        set(&mut verify.realization_paths, vs.realization_paths);
        set(&mut verify.solver.convexity_paths, vs.convexity_paths);
        if let Some(h) = vs.step_h {
            verify.step_h = h;
        }

        let cfg = RunConfig {
            model,
            limits,
            sweep: raw.sweep,
            value: raw.value,
            simulate: raw.simulate,
            verify,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
        };
        cfg.check_sections()?;
        Ok(cfg)
    }

    fn check_sections(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, x: Option<f64>| match x {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(ConfigError::Invalid(format!("{name} must be finite and > 0"))),
            _ => Ok(()),
        };
        positive("sweep.v", self.sweep.v)?;
        positive("simulate.v", self.simulate.v)?;
        positive("simulate.step", Some(self.simulate.step))?;
        positive("value.lo", self.value.lo)?;
        positive("value.hi", self.value.hi)?;
        if let (Some(lo), Some(hi)) = (self.value.lo, self.value.hi) {
            if lo >= hi {
                return Err(ConfigError::Invalid("value.lo must be below value.hi".into()));
            }
        }
        if self.value.points < 3 {
            return Err(ConfigError::Invalid("value.points must be at least 3".into()));
        }
        Ok(())
    }

    /// `--paths` replaces every Monte Carlo path count except the ladder's.
    pub fn override_paths(&mut self, n: usize) {
        self.sweep.paths = n;
        self.value.paths = n;
        self.simulate.paths = n;
        self.verify = self.verify.with_paths(n);
    }

    /// `--grid` sets the sweep and value grid sizes.
    pub fn override_grid(&mut self, n: usize) {
        self.sweep.grid = n;
        self.value.points = n;
        self.verify.sweep_grid = n;
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved settings.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = "family = \"BrownianDrift\"\nmu = 0.0\nsigma = 0.3\nr = 0.05\nc = 1.0\n";

    #[test]
    fn parses_defaults() {
        let cfg = RunConfig::parse(DESK).unwrap();
        assert_eq!(cfg.model, ModelSpec::brownian(0.0, 0.3, 0.05, 0.0, 1.0));
        assert_eq!(cfg.limits, LimitConfig::default());
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.sweep.grid, 97);
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = RunConfig::parse(&format!("{DESK}sigmaa = 1\n")).unwrap_err();
        match err {
            ConfigError::Parse(m) => assert!(m.contains("line 6"), "{m}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn hash_tracks_overrides_not_seed() {
        let a = RunConfig::parse(DESK).unwrap();
        let mut b = RunConfig::parse(&format!("seed = 5\n{DESK}")).unwrap();
        assert_eq!(a.hash(), b.hash());
        b.override_paths(10);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_model_rejected() {
        let err = RunConfig::parse("family = \"brownian\"\nsigma = 0.0\nr = 0.05\nc = 1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }
}
