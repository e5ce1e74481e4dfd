//! Materialized reflected paths, mainly for inspection and tests.

use serde::{Deserialize, Serialize};

use super::rng::PathNoise;
use super::{step_max, McConfig};
use crate::error::{Error, Result};
use crate::params::Model;

/// Discrete Skorokhod map: reflect `start + free[k]` at zero.
///
/// Returns the reflected values and the cumulative regulator; `free[0]` must be 0.
pub fn skorokhod(start: f64, free: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut run = 0.0f64;
    let mut x = Vec::with_capacity(free.len());
    let mut l = Vec::with_capacity(free.len());
    for &f in free {
        run = run.max(-(start + f));
        x.push(start + f + run);
        l.push(run);
    }
    (x, l)
}

/// Drivers of `(R^r, H^h, N^z)` for a set of paths on a common grid.
///
/// `R = max(r, M̃) − W̃` with `W̃ = −αB¹ − (α²/2 − ρ)s` and `M̃` its running max;
/// `H = max(h, Y*) − Y` with `Y = μ_B s + σ_B B³` (or `B⁰` when uncorrelated).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectedPathSet {
    pub times: Vec<f64>,
    pub r0: f64,
    pub h0: f64,
    pub correlated: bool,
    pub w: Vec<Vec<f64>>,
    pub w_max: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub y_max: Vec<Vec<f64>>,
    pub n: Vec<Vec<f64>>,
}

impl ReflectedPathSet {
    pub fn n_paths(&self) -> usize {
        self.w.len()
    }

    /// `L^r_k = (M̃_k − r)⁺`
    pub fn l(&self, path: usize, r: f64) -> Vec<f64> {
        self.w_max[path].iter().map(|m| (m - r).max(0.0)).collect()
    }

    pub fn r(&self, path: usize, r: f64) -> Vec<f64> {
        self.w_max[path].iter().zip(&self.w[path]).map(|(m, w)| m.max(r) - w).collect()
    }

    /// `K^h_k = (Y*_k − h)⁺`
    pub fn k(&self, path: usize, h: f64) -> Vec<f64> {
        self.y_max[path].iter().map(|m| (m - h).max(0.0)).collect()
    }

    pub fn h(&self, path: usize, h: f64) -> Vec<f64> {
        self.y_max[path].iter().zip(&self.y[path]).map(|(m, y)| m.max(h) - y).collect()
    }
}

pub fn simulate_reflected(model: &Model, cfg: &McConfig, r: f64, h: f64, z: f64, correlated: bool) -> Result<ReflectedPathSet> {
    cfg.validate()?;
    if r < 0.0 || h < 0.0 || z < 0.0 {
        return Err(Error::Config("initial states must be nonnegative".into()));
    }
    if cfg.n_paths * (cfg.n_steps() + 1) > 50_000_000 {
        return Err(Error::Config("path set too large to materialize".into()));
    }
    let dc = &model.derived;
    let b = model.bench();
    let (alpha, rho) = (dc.alpha, model.rho());
    let n = cfg.n_steps();
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let (r1, r1c) = (dc.rho1, (1.0 - dc.rho1 * dc.rho1).max(0.0).sqrt());
    let (r2, r2c) = (dc.rho2, (1.0 - dc.rho2 * dc.rho2).max(0.0).sqrt());
    let mut set = ReflectedPathSet {
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        r0: r,
        h0: h,
        correlated,
        w: vec![],
        w_max: vec![],
        y: vec![],
        y_max: vec![],
        n: vec![],
    };
    for p in 0..cfg.n_paths {
        let (unit, twin) = if cfg.antithetic { (p / 2, p % 2 == 1) } else { (p, false) };
        let mut noise = PathNoise::new(cfg.seed, unit as u64, twin);
        let (mut w, mut wm, mut y, mut ym, mut lnn) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut pw = vec![0.0; n + 1];
        let mut pwm = vec![0.0; n + 1];
        let mut py = vec![0.0; n + 1];
        let mut pym = vec![0.0; n + 1];
        let mut pn = vec![z; n + 1];
        for k in 1..=n {
            let n1 = noise.normal();
            let n0 = noise.normal();
            let n2 = noise.normal();
            let uw = noise.uniform();
            let uy = noise.uniform();
            let w_new = w + (rho - 0.5 * alpha * alpha) * dt - alpha * sq * n1;
            wm = wm.max(step_max(cfg.scheme, w, w_new, alpha * alpha * dt, uw));
            w = w_new;
            let eps = if correlated { r1 * n1 + r1c * n0 } else { n0 };
            let y_new = y + b.mu_b * dt + b.sigma_b * sq * eps;
            ym = ym.max(step_max(cfg.scheme, y, y_new, b.sigma_b * b.sigma_b * dt, uy));
            y = y_new;
            lnn += (b.mu_z - 0.5 * b.sigma_z * b.sigma_z) * dt + b.sigma_z * sq * (r2 * n1 + r2c * n2);
            pw[k] = w;
            pwm[k] = wm;
            py[k] = y;
            pym[k] = ym;
            pn[k] = z * lnn.exp();
        }
        set.w.push(pw);
        set.w_max.push(pwm);
        set.y.push(py);
        set.y_max.push(pym);
        set.n.push(pn);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    #[test]
    fn monotone_path_stays_at_zero() {
        // Free path with negative drift and no noise, started at zero.
        let free: Vec<f64> = (0..100).map(|k| -0.3 * k as f64 * 0.01).collect();
        let (x, l) = skorokhod(0.0, &free);
        assert!(x.iter().all(|&v| v.abs() < 1e-15));
        assert!(l.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn reflection_invariants() {
        let model = Model::new(ModelParams::reference()).unwrap();
        let cfg = McConfig::new(20, 1e-3, 2.0, 5);
        let set = simulate_reflected(&model, &cfg, 0.3, 0.2, 1.0, true).unwrap();
        for p in 0..set.n_paths() {
            let r = set.r(p, 0.3);
            let h = set.h(p, 0.2);
            assert!(r.iter().all(|&v| v >= 0.0) && h.iter().all(|&v| v >= 0.0));
            let l = set.l(p, 0.3);
            let k = set.k(p, 0.2);
            assert!(l.windows(2).all(|w| w[1] >= w[0]) && k.windows(2).all(|w| w[1] >= w[0]));
            assert!(set.n[p].iter().all(|&v| v > 0.0));
            // K^0 − K^h nondecreasing
            let k0 = set.k(p, 0.0);
            assert!((1..k0.len()).all(|i| k0[i] - k[i] >= k0[i - 1] - k[i - 1] - 1e-15));
            // |L^{x1} − L^{x2}| ≤ |x1 − x2|
            let la = set.l(p, 0.1);
            let lb = set.l(p, 0.45);
            assert!(la.iter().zip(&lb).all(|(a, b)| (a - b).abs() <= 0.35 + 1e-15 && a >= b));
        }
    }

    #[test]
    fn regulator_increases_only_at_boundary() {
        let model = Model::new(ModelParams::reference()).unwrap();
        let cfg = McConfig::new(10, 1e-3, 1.0, 9).with_scheme(super::super::ReflectionScheme::GridOnly);
        let set = simulate_reflected(&model, &cfg, 0.05, 0.02, 0.0, false).unwrap();
        for p in 0..set.n_paths() {
            let r = set.r(p, 0.05);
            let l = set.l(p, 0.05);
            let comp: f64 = (1..l.len()).map(|i| r[i] * (l[i] - l[i - 1])).sum();
            assert!(comp.abs() < 1e-12);
        }
    }
}
