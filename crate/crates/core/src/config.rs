//! Run configuration: a TOML document mirroring [`RunConfig`] exactly.
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shock::{ShockDistribution, ShockError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}` must be non-empty")]
    EmptyList { field: &'static str },
    #[error("config field `{field}` must be positive")]
    NonPositive { field: &'static str },
    #[error("degree {0} is odd; only even k are supported")]
    OddDegree(usize),
    #[error("leverage {0} must be non-negative")]
    NegativeLeverage(f64),
    #[error("recovery rate delta {0} must lie in [0, 1)")]
    InvalidDelta(f64),
    #[error(transparent)]
    Shock(#[from] ShockError),
}

/// Which outputs a sweep computes per cell.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Modes {
    pub simulate: bool,
    pub analytic: bool,
    pub limit: bool,
}

impl Default for Modes {
    fn default() -> Self {
        Self {
            simulate: true,
            analytic: true,
            limit: true,
        }
    }
}

/// Full description of a sweep; every output is a pure function of this
/// struct, including `master_seed`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Banks per network instance.
    pub n: usize,
    /// Even degrees k to sweep.
    pub degrees: Vec<usize>,
    /// Interbank leverages to sweep.
    pub leverages: Vec<f64>,
    /// Shock correlations to sweep.
    pub rhos: Vec<f64>,
    /// Shock values, strictly increasing, last equal to 0.
    pub sigmas: Vec<f64>,
    /// Shock probabilities, summing to 1.
    pub probs: Vec<f64>,
    /// Shock vectors per network instance.
    pub n_shock_samples: usize,
    /// Independent graphs per cell.
    pub n_network_instances: usize,
    /// Cascade stopping tolerance on equity changes.
    pub tol: f64,
    /// Cascade iteration cutoff.
    pub cutoff: usize,
    /// Exogenous recovery rate.
    pub delta: f64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub modes: Modes,
    /// System sizes for the complete-network size scan.
    pub sizes: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        // desk-scale defaults: a full sweep stays in the minutes range
        Self {
            n: 2000,
            degrees: vec![212],
            leverages: vec![2.0],
            rhos: vec![0.0],
            sigmas: vec![-1.1, -0.75, 0.0],
            probs: vec![0.02, 0.09, 0.89],
            n_shock_samples: 200,
            n_network_instances: 5,
            tol: 0.03,
            cutoff: 1000,
            delta: 0.0,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            modes: Modes::default(),
            sizes: vec![300, 800, 2000],
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Total realizations per cell.
    pub fn n_realizations(&self) -> usize {
        self.n_shock_samples * self.n_network_instances
    }

    /// Switches to the reference scale: 10^4 banks, 1000 shock vectors
    /// per instance (5000 realizations per cell).
    pub fn at_paper_scale(mut self) -> Self {
        self.n = 10_000;
        self.n_shock_samples = 1000;
        self
    }

    /// The shock distribution at a given correlation from this config.
    pub fn shock_distribution(&self, rho: f64) -> Result<ShockDistribution, ShockError> {
        ShockDistribution::new(self.sigmas.clone(), self.probs.clone(), rho)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::NonPositive { field: "n" });
        }
        for (field, empty) in [
            ("degrees", self.degrees.is_empty()),
            ("leverages", self.leverages.is_empty()),
            ("rhos", self.rhos.is_empty()),
            ("sigmas", self.sigmas.is_empty()),
            ("probs", self.probs.is_empty()),
        ] {
            if empty {
                return Err(ConfigError::EmptyList { field });
            }
        }
        if self.n_shock_samples == 0 {
            return Err(ConfigError::NonPositive {
                field: "n_shock_samples",
            });
        }
        if self.n_network_instances == 0 {
            return Err(ConfigError::NonPositive {
                field: "n_network_instances",
            });
        }
        if self.tol <= 0.0 {
            return Err(ConfigError::NonPositive { field: "tol" });
        }
        if self.cutoff == 0 {
            return Err(ConfigError::NonPositive { field: "cutoff" });
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(ConfigError::InvalidDelta(self.delta));
        }
        for &k in &self.degrees {
            if k % 2 != 0 {
                return Err(ConfigError::OddDegree(k));
            }
        }
        for &lev in &self.leverages {
            if lev < 0.0 {
                return Err(ConfigError::NegativeLeverage(lev));
            }
        }
        // the distribution constructor owns the sigma/prob/rho invariants
        for &rho in &self.rhos {
            self.shock_distribution(rho)?;
        }
        Ok(())
    }
}
