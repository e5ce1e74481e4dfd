//! Closed-form densities: drifted Brownian motion with its running maximum,
//! first passage, reflected drifted Brownian motion and expected local time.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_sqrt_sub, QuadOptions};
use crate::special::{exp_times_sf, norm_pdf};

/// Process `σ(W_s + ν s)`: `drift` is the normalized drift `ν`, `sigma` the volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub drift: f64,
    pub sigma: f64,
}

impl DriftSpec {
    pub fn new(drift: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !drift.is_finite() {
            return Err(Error::Domain(format!("drift spec needs sigma > 0 (got {sigma})")));
        }
        Ok(DriftSpec { drift, sigma })
    }

    /// Driver `W̃_s = −αB¹_s − (α²/2 − ρ)s` of the dual reflected process.
    pub fn dual_driver(alpha: f64, rho: f64) -> Result<Self> {
        Self::new((rho - 0.5 * alpha * alpha) / alpha, alpha)
    }
}

/// Joint density of `(X_s, max_{q≤s} X_q)` at `(x, y)` for `X = σ(W + ν·)`.
pub fn phi1(s: f64, x: f64, y: f64, spec: DriftSpec) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("phi1 needs s > 0 (got {s})")));
    }
    if y < x || y < 0.0 {
        return Err(Error::Domain(format!("phi1 needs y >= max(x, 0) (got x = {x}, y = {y})")));
    }
    let DriftSpec { drift: nu, sigma } = spec;
    let u = 2.0 * y - x;
    let pref = 2.0 * u / (sigma.powi(3) * (2.0 * PI * s.powi(3)).sqrt());
    Ok(pref * (nu * x / sigma - 0.5 * nu * nu * s - u * u / (2.0 * sigma * sigma * s)).exp())
}

/// First-passage density of level `h > 0` by `μ_B s + σ_B W_s`.
pub fn phi2(s: f64, h: f64, mu_b: f64, sigma_b: f64) -> Result<f64> {
    if !(h > 0.0) || !(sigma_b > 0.0) || !(s > 0.0) {
        return Err(Error::Domain(format!("phi2 needs s, h, sigma_B > 0 (got s = {s}, h = {h}, sigma_B = {sigma_b})")));
    }
    let d = h - mu_b * s;
    Ok(h / (sigma_b * (2.0 * PI * s.powi(3)).sqrt()) * (-d * d / (2.0 * sigma_b * sigma_b * s)).exp())
}

/// Brownian motion with drift `drift` and volatility `vol`, reflected at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectedBm {
    pub drift: f64,
    pub vol: f64,
}

impl ReflectedBm {
    /// Transition density from `x` to `y` over time `t`.
    pub fn density(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("transition density needs t > 0 (got {t})")));
        }
        if y < 0.0 || x < 0.0 {
            return Ok(0.0);
        }
        let (m, s) = (self.drift, self.vol);
        let st = s * t.sqrt();
        let a = (y - x - m * t) / st;
        let b = (y + x + m * t) / st;
        let k = 2.0 * m * y / (s * s);
        let direct = norm_pdf(a) / st;
        let image = (k - 0.5 * b * b).exp() / ((2.0 * PI).sqrt() * st);
        let tail = -2.0 * m / (s * s) * exp_times_sf(k, b);
        Ok((direct + image + tail).max(0.0))
    }

    /// `P(sup_{q≤t}(m q + σ W_q) ≥ a)` for the free process (reflection at the max).
    pub fn max_tail(&self, t: f64, a: f64) -> f64 {
        if a <= 0.0 {
            return 1.0;
        }
        let (m, s) = (self.drift, self.vol);
        let st = s * t.sqrt();
        let k = 2.0 * m * a / (s * s);
        crate::special::norm_sf((a - m * t) / st) + exp_times_sf(k, (a + m * t) / st)
    }
}

/// Benchmark-side densities for `P^h` (drift `−μ_B`, volatility `σ_B`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkKernel {
    pub mu_b: f64,
    pub sigma_b: f64,
}

impl BenchmarkKernel {
    pub fn new(mu_b: f64, sigma_b: f64) -> Result<Self> {
        if !(sigma_b > 0.0) {
            return Err(Error::Domain("benchmark kernel needs sigma_B > 0".into()));
        }
        Ok(BenchmarkKernel { mu_b, sigma_b })
    }

    pub fn reflected(&self) -> ReflectedBm {
        ReflectedBm { drift: -self.mu_b, vol: self.sigma_b }
    }

    pub fn phi2(&self, s: f64, h: f64) -> Result<f64> {
        phi2(s, h, self.mu_b, self.sigma_b)
    }

    pub fn rdbm_density(&self, s: f64, h0: f64, h: f64) -> Result<f64> {
        self.reflected().density(s, h0, h)
    }

    /// Rate `dE[G_s^h]/ds = (σ_B²/2) p(0,h; s,0)`.
    pub fn local_time_rate(&self, s: f64, h: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        0.5 * self.sigma_b * self.sigma_b * self.rdbm_density(s, h, 0.0).unwrap_or(0.0)
    }

    /// `E[G_s^h]` by quadrature of the boundary flux.
    pub fn expected_local_time(&self, s: f64, h: f64) -> Result<f64> {
        if s < 0.0 || h < 0.0 {
            return Err(Error::Domain(format!("expected_local_time needs s, h >= 0 (got s = {s}, h = {h})")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let mode = (h * h / (3.0 * self.sigma_b * self.sigma_b)).min(s);
        let r = integrate_sqrt_sub(|l| if l <= s { self.local_time_rate(l, h) } else { 0.0 }, s, &[mode], QuadOptions::new(1e-15, 1e-11))?;
        Ok(r.value)
    }
}
