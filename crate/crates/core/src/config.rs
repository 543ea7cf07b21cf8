//! Solver knobs. Unspecified JSON keys fall back to the reference defaults
//! (sigma 0.02, K 2, gamma_HR 0.99, lambda 0.5, N_s from the image size).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::default_sample_count;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Assumed measurement noise standard deviation, in normalized units.
    pub sigma: f64,
    /// Number of subsampled pixels; `None` selects `max(ceil(sqrt(N_p)), 4K)`.
    #[serde(rename = "N_s", alias = "n_s")]
    pub num_samples: Option<usize>,
    /// Subspace dimension.
    #[serde(rename = "K", alias = "k")]
    pub rank: usize,
    #[serde(rename = "gamma_HR", alias = "gamma_hr")]
    pub gamma_hr: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma: 0.02,
            num_samples: None,
            rank: 2,
            gamma_hr: 0.99,
            lambda: 0.5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn sample_count(&self, num_pixels: usize) -> usize {
        self.num_samples
            .unwrap_or_else(|| default_sample_count(num_pixels, self.rank))
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            v.push(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.rank == 0 {
            v.push("K must be positive".to_string());
        }
        if !(self.gamma_hr > 0.0 && self.gamma_hr < 1.0) {
            v.push(format!("gamma_HR must lie in (0, 1), got {}", self.gamma_hr));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            v.push(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if let Some(ns) = self.num_samples {
            if ns <= self.rank {
                v.push(format!("N_s={ns} must exceed K={}", self.rank));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// ADMM penalty and stopping rule. The penalty multiplies a data term
/// weighted by `1 / sigma^2`, so useful values sit near that scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1000.0,
            max_iters: 50_000,
            tol_primal: 1e-9,
            tol_dual: 1e-9,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.tol_primal > 0.0) || !(self.tol_dual > 0.0) || self.max_iters == 0 {
            return Err(Error::invalid(format!(
                "ADMM needs rho > 0, positive tolerances and max_iters > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Config file layout: solver keys at the top level plus an optional `admm` block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub solver: SolverConfig,
    pub admm: AdmmConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::invalid(format!("config: {e}"));
        let mut map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(bad)?;
        let admm = match map.remove("admm") {
            Some(v) => serde_json::from_value(v).map_err(bad)?,
            None => AdmmConfig::default(),
        };
        let solver = serde_json::from_value(serde_json::Value::Object(map)).map_err(bad)?;
        Ok(RunConfig { solver, admm })
    }
}
