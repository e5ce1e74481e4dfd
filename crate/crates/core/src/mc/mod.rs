//! Monte Carlo estimators for the probabilistic representations of the dual value.

mod estimators;
mod paths;
mod rng;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use estimators::{
    estimate_l, estimate_l_many, estimate_phi, estimate_phi_derivatives, estimate_psi, estimate_xi, estimate_xi_with, local_time_tables, mc_phi_rh, LEstimate,
    LocalTimeTables, PhiDerivatives, PhiRhTable, TermDriver,
};
pub use paths::{simulate_reflected, skorokhod, ReflectedPathSet};
pub(crate) use rng::for_each_unit;
pub use rng::{derive_seed, PathNoise};
pub use stats::{Estimate, Moments};

/// How the running maximum is sampled between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionScheme {
    /// Exact maximum of the Brownian bridge between grid values.
    #[default]
    Bridge,
    /// Maximum over grid values only.
    GridOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub antithetic: bool,
    #[serde(default)]
    pub scheme: ReflectionScheme,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_paths: 10_000, dt: 1e-3, horizon: 10.0, seed: DEFAULT_SEED, antithetic: false, scheme: ReflectionScheme::Bridge }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_917;

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        McConfig { n_paths, dt, horizon, seed, ..Default::default() }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn with_scheme(mut self, scheme: ReflectionScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.horizon.is_finite() || !(self.dt < self.horizon) {
            return Err(Error::Config(format!("need 0 < dt < horizon (dt = {}, horizon = {})", self.dt, self.horizon)));
        }
        if self.n_paths < 2 {
            return Err(Error::Config("need at least 2 paths".into()));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(Error::Config("antithetic sampling needs an even path count".into()));
        }
        if self.n_steps() > 50_000_000 {
            return Err(Error::Config("too many time steps".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    /// Independent sampling units (antithetic pairs count once).
    pub fn n_units(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }
}

/// Running maximum over one step with endpoints `a`, `b` and variance `var`.
#[inline]
pub(crate) fn step_max(scheme: ReflectionScheme, a: f64, b: f64, var: f64, u: f64) -> f64 {
    match scheme {
        ReflectionScheme::GridOnly => a.max(b),
        ReflectionScheme::Bridge => {
            let d = b - a;
            0.5 * (a + b + (d * d - 2.0 * var * u.ln()).sqrt())
        }
    }
}

/// Running minimum over one step; see [`step_max`].
#[inline]
pub(crate) fn step_min(scheme: ReflectionScheme, a: f64, b: f64, var: f64, u: f64) -> f64 {
    -step_max(scheme, -a, -b, var, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(McConfig::new(10, 0.1, 1.0, 1).validate().is_ok());
        assert!(McConfig::new(1, 0.1, 1.0, 1).validate().is_err());
        assert!(McConfig::new(10, 2.0, 1.0, 1).validate().is_err());
        assert!(McConfig::new(11, 0.1, 1.0, 1).with_antithetic(true).validate().is_err());
        assert_eq!(McConfig::new(10, 1e-3, 10.0, 1).n_steps(), 10_000);
    }

    #[test]
    fn bridge_max_bounds() {
        for u in [1e-9, 0.3, 1.0] {
            let m = step_max(ReflectionScheme::Bridge, 0.2, -0.1, 0.01, u);
            assert!(m >= 0.2);
        }
        assert_eq!(step_max(ReflectionScheme::Bridge, 0.2, -0.1, 0.01, 1.0), 0.2);
        assert_eq!(step_max(ReflectionScheme::GridOnly, 0.2, 0.5, 0.01, 0.1), 0.5);
        assert!(step_min(ReflectionScheme::Bridge, 0.2, 0.5, 0.01, 0.1) <= 0.2);
    }
}
