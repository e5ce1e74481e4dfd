use serde::{Deserialize, Serialize};

use super::rng::{for_each_unit, PathNoise};
use super::stats::Estimate;
use super::{step_max, McConfig};
use crate::error::{Error, Result};
use crate::params::Model;
use crate::representations::PhiQuadrature;

/// Driver of the benchmark-side local time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermDriver {
    /// `B³ = ϱ1 B¹ + √(1−ϱ1²) B⁰`, giving `K^h` and `ψ`.
    Correlated,
    /// `B⁰` alone, giving `G^h` and `φ`.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LEstimate {
    pub total: Estimate,
    pub first: Estimate,
    pub second: Estimate,
}

fn trapezoid_discount(rho: f64, dt: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
            w * (-rho * k as f64 * dt).exp()
        })
        .collect()
}

/// Monte Carlo estimate of the probabilistic representation of `l(r,z)`.
pub fn estimate_l(model: &Model, cfg: &McConfig, r: f64, z: f64) -> Result<LEstimate> {
    Ok(estimate_l_many(model, cfg, &[(r, z)])?[0])
}

/// [`estimate_l`] at several points on common random numbers.
pub fn estimate_l_many(model: &Model, cfg: &McConfig, points: &[(f64, f64)]) -> Result<Vec<LEstimate>> {
    cfg.validate()?;
    if points.iter().any(|&(r, z)| r < 0.0 || z < 0.0) {
        return Err(Error::Config("estimate_l needs r, z >= 0".into()));
    }
    let dc = &model.derived;
    let b = model.bench();
    let (alpha, rho, k) = (dc.alpha, model.rho(), model.k());
    let beta = model.beta();
    let p = model.p();
    let coef1 = (1.0 - p) / p * beta.powf(-k);
    let coef2 = beta * (dc.kappa2 - b.mu_z);
    let n = cfg.n_steps();
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let wt = trapezoid_discount(0.0, dt, n);
    let (r2, r2c) = (dc.rho2, (1.0 - dc.rho2 * dc.rho2).max(0.0).sqrt());
    let np = points.len();
    let drift_w = (rho - 0.5 * alpha * alpha) * dt;
    let drift_n = (b.mu_z - 0.5 * b.sigma_z * b.sigma_z) * dt;
    let any_z = points.iter().any(|p| p.1 > 0.0);
    let moments = for_each_unit(cfg, 3 * np, |noise: &mut PathNoise, out: &mut [f64]| {
        let mut ekm: Vec<f64> = points.iter().map(|&(r, _)| (k * r).exp()).collect();
        let mut enm: Vec<f64> = points.iter().map(|&(r, _)| (-r).exp()).collect();
        let (mut w, mut wm, mut lnn) = (0.0f64, 0.0f64, 0.0f64);
        for step in 0..=n {
            if step > 0 {
                let n1 = noise.normal();
                let n2 = noise.normal();
                let u = noise.uniform();
                let w_new = w + drift_w - alpha * sq * n1;
                let m = step_max(cfg.scheme, w, w_new, alpha * alpha * dt, u);
                w = w_new;
                lnn += drift_n + b.sigma_z * sq * (r2 * n1 + r2c * n2);
                if m > wm {
                    wm = m;
                    for (i, &(r, _)) in points.iter().enumerate() {
                        if wm > r {
                            ekm[i] = (k * wm).exp();
                            enm[i] = (-wm).exp();
                        }
                    }
                }
            }
            let s = step as f64 * dt;
            let a = wt[step] * (-rho * s - k * w).exp();
            let c = if any_z { wt[step] * (w - rho * s + lnn).exp() } else { 0.0 };
            for i in 0..np {
                out[3 * i] += a * ekm[i];
                out[3 * i + 1] += c * enm[i] * points[i].1;
            }
        }
        for i in 0..np {
            out[3 * i] *= coef1;
            out[3 * i + 1] *= coef2;
            out[3 * i + 2] = out[3 * i] + out[3 * i + 1];
        }
    });
    let t = cfg.horizon;
    let lam = 2.0 * (rho - 0.5 * alpha * alpha) / (alpha * alpha);
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, &(r, z))| {
            let growth = if k <= 0.0 {
                1.0
            } else if k < lam {
                (k * r).exp() * lam / (lam - k)
            } else {
                f64::INFINITY
            };
            let tb1 = coef1.abs() * growth * (-rho * t).exp() / rho;
            let tb2 = if z == 0.0 {
                0.0
            } else if rho > b.mu_z {
                coef2.abs() * z * (-(rho - b.mu_z) * t).exp() / (rho - b.mu_z)
            } else {
                f64::INFINITY
            };
            let first = moments.estimate(3 * i, cfg.n_paths).with_truncation(tb1);
            let second = moments.estimate(3 * i + 1, cfg.n_paths).with_truncation(tb2);
            let total = moments.estimate(3 * i + 2, cfg.n_paths).with_truncation(tb1 + tb2);
            LEstimate { total, first, second }
        })
        .collect())
}

/// Tables of the local-time term and its derivatives on a grid of `(r, h)`.
///
/// For the correlated driver these are `ψ, ψ_r, ψ_h, ψ_rh`; for the independent
/// driver `φ, φ_r, φ_h, φ_rh`. Index `i * h_nodes.len() + j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalTimeTables {
    pub r_nodes: Vec<f64>,
    pub h_nodes: Vec<f64>,
    pub driver: TermDriver,
    pub value: Vec<Estimate>,
    pub d_r: Vec<Estimate>,
    pub d_h: Vec<Estimate>,
    pub d_rh: Vec<Estimate>,
}

impl LocalTimeTables {
    pub fn at(&self, i: usize, j: usize) -> [Estimate; 4] {
        let idx = i * self.h_nodes.len() + j;
        [self.value[idx], self.d_r[idx], self.d_h[idx], self.d_rh[idx]]
    }
}

fn check_sorted(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() || v[0] < 0.0 || v.windows(2).any(|w| !(w[1] > w[0])) || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Grid(format!("{name} nodes must be nonnegative, finite and strictly increasing")));
    }
    Ok(())
}

/// Per-step draws shared by every local-time estimator: `B¹`, `B⁰` and three bridge uniforms.
struct TermStep {
    n1: f64,
    n0: f64,
    uw: f64,
    uy: f64,
    uy0: f64,
}

impl TermStep {
    #[inline]
    fn draw(noise: &mut PathNoise) -> Self {
        TermStep { n1: noise.normal(), n0: noise.normal(), uw: noise.uniform(), uy: noise.uniform(), uy0: noise.uniform() }
    }
}

/// Shared path dynamics of `(W̃, M̃, Y, Y*)` for the local-time estimators.
struct TermPath {
    alpha: f64,
    drift_w: f64,
    mu_b: f64,
    sigma_b: f64,
    rho1: f64,
    rho1c: f64,
    dt: f64,
    sq: f64,
    driver: TermDriver,
    scheme: super::ReflectionScheme,
    w: f64,
    wm: f64,
    y: f64,
    ym: f64,
}

impl TermPath {
    fn new(model: &Model, cfg: &McConfig, driver: TermDriver) -> Self {
        let dc = &model.derived;
        let b = model.bench();
        TermPath {
            alpha: dc.alpha,
            drift_w: (model.rho() - 0.5 * dc.alpha * dc.alpha) * cfg.dt,
            mu_b: b.mu_b,
            sigma_b: b.sigma_b,
            rho1: dc.rho1,
            rho1c: (1.0 - dc.rho1 * dc.rho1).max(0.0).sqrt(),
            dt: cfg.dt,
            sq: cfg.dt.sqrt(),
            driver,
            scheme: cfg.scheme,
            w: 0.0,
            wm: 0.0,
            y: 0.0,
            ym: 0.0,
        }
    }

    /// Advances one step; returns `(M̃ changed, previous Y*)`.
    #[inline]
    fn advance(&mut self, st: &TermStep) -> (bool, f64) {
        let w_new = self.w + self.drift_w - self.alpha * self.sq * st.n1;
        let m = step_max(self.scheme, self.w, w_new, self.alpha * self.alpha * self.dt, st.uw);
        self.w = w_new;
        let (eps, u) = match self.driver {
            TermDriver::Correlated => (self.rho1 * st.n1 + self.rho1c * st.n0, st.uy),
            TermDriver::Independent => (st.n0, st.uy0),
        };
        let y_new = self.y + self.mu_b * self.dt + self.sigma_b * self.sq * eps;
        let ym = step_max(self.scheme, self.y, y_new, self.sigma_b * self.sigma_b * self.dt, u);
        self.y = y_new;
        let prev = self.ym;
        if ym > self.ym {
            self.ym = ym;
        }
        let moved = m > self.wm;
        if moved {
            self.wm = m;
        }
        (moved, prev)
    }
}

pub fn local_time_tables(model: &Model, cfg: &McConfig, r_nodes: &[f64], h_nodes: &[f64], driver: TermDriver) -> Result<LocalTimeTables> {
    cfg.validate()?;
    check_sorted("r", r_nodes)?;
    check_sorted("h", h_nodes)?;
    let b = model.bench();
    if !(b.sigma_b > 0.0) {
        return Err(Error::AssumptionViolated("local-time estimators need sigma_B > 0".into()));
    }
    let beta = model.beta();
    let rho = model.rho();
    let (nr, nh) = (r_nodes.len(), h_nodes.len());
    let cells = nr * nh;
    let n = cfg.n_steps();
    let dt = cfg.dt;
    let enr: Vec<f64> = r_nodes.iter().map(|r| (-r).exp()).collect();
    let moments = for_each_unit(cfg, 4 * cells, |noise: &mut PathNoise, out: &mut [f64]| {
        let (val, rest) = out.split_at_mut(cells);
        let (dr, rest) = rest.split_at_mut(cells);
        let (dh, drh) = rest.split_at_mut(cells);
        let mut path = TermPath::new(model, cfg, driver);
        let mut g = vec![0.0; nr];
        let mut gi = vec![0.0; nr];
        // Running sums of g ΔY* and the offsets fixed at each node's first passage.
        let mut s_val = vec![0.0; nr];
        let mut s_dr = vec![0.0; nr];
        let mut next = h_nodes.partition_point(|&h| h <= 0.0);
        for j in 0..next {
            for i in 0..nr {
                dh[i * nh + j] += beta * enr[i];
                if r_nodes[i] > 0.0 {
                    drh[i * nh + j] -= beta * enr[i];
                }
            }
        }
        let mut emw = 1.0;
        for step in 1..=n {
            let st = TermStep::draw(noise);
            let (moved, prev) = path.advance(&st);
            if moved {
                emw = (-path.wm).exp();
            }
            let ym = path.ym;
            if ym <= prev || h_nodes[0] >= ym {
                continue;
            }
            let s = step as f64 * dt;
            let base = beta * (path.w - rho * s).exp();
            let dy = ym - prev;
            for i in 0..nr {
                let inside = path.wm < r_nodes[i];
                g[i] = base * if inside { enr[i] } else { emw };
                gi[i] = if inside { g[i] } else { 0.0 };
                s_val[i] += g[i] * dy;
                s_dr[i] += gi[i] * dy;
            }
            while next < nh && h_nodes[next] < ym {
                let over = ym - h_nodes[next].max(prev);
                for i in 0..nr {
                    let idx = i * nh + next;
                    val[idx] = s_val[i] - g[i] * over;
                    dr[idx] = s_dr[i] - gi[i] * over;
                    dh[idx] += g[i];
                    drh[idx] -= gi[i];
                }
                next += 1;
            }
        }
        for j in 0..next {
            for i in 0..nr {
                let idx = i * nh + j;
                val[idx] -= s_val[i];
                dr[idx] = s_dr[i] - dr[idx];
            }
        }
    });
    let t = cfg.horizon;
    let tail_k = beta * (-rho * t).exp() * (b.mu_b.max(0.0) / rho + b.sigma_b / (2.0 * rho).sqrt());
    let tail_h = beta * (-rho * t).exp();
    let est = |block: usize, tb: f64| -> Vec<Estimate> { (0..cells).map(|c| moments.estimate(block * cells + c, cfg.n_paths).with_truncation(tb)).collect() };
    let mut d_h = est(2, tail_h);
    let mut d_rh = est(3, tail_h);
    for (j, &h) in h_nodes.iter().enumerate() {
        if h <= 0.0 {
            for i in 0..nr {
                d_h[i * nh + j].truncation_bound = 0.0;
                d_rh[i * nh + j].truncation_bound = 0.0;
            }
        }
    }
    Ok(LocalTimeTables { r_nodes: r_nodes.to_vec(), h_nodes: h_nodes.to_vec(), driver, value: est(0, tail_k), d_r: est(1, tail_k), d_h, d_rh })
}

/// `ψ(r,h) = −β E[∫ e^{−ρs−R_s} dK_s^h]` with the correlated driver.
pub fn estimate_psi(model: &Model, cfg: &McConfig, r: f64, h: f64) -> Result<Estimate> {
    Ok(local_time_tables(model, cfg, &[r], &[h], TermDriver::Correlated)?.value[0])
}

/// `φ(r,h) = −β E[∫ e^{−ρs−R_s} dG_s^h]` with the independent driver.
pub fn estimate_phi(model: &Model, cfg: &McConfig, r: f64, h: f64) -> Result<Estimate> {
    Ok(local_time_tables(model, cfg, &[r], &[h], TermDriver::Independent)?.value[0])
}

/// Monte Carlo `−β E[e^{−ρη_h − R_{η_h}} 1{η_h < τ_r}]`.
pub fn mc_phi_rh(model: &Model, cfg: &McConfig, r: f64, h: f64) -> Result<Estimate> {
    Ok(local_time_tables(model, cfg, &[r], &[h], TermDriver::Independent)?.d_rh[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiDerivatives {
    pub phi_r: Estimate,
    pub phi_h: Estimate,
    /// Deterministic quadrature value.
    pub phi_rh: Estimate,
}

pub fn estimate_phi_derivatives(model: &Model, cfg: &McConfig, r: f64, h: f64) -> Result<PhiDerivatives> {
    let t = local_time_tables(model, cfg, &[r], &[h], TermDriver::Independent)?;
    let q = PhiQuadrature::new(model)?;
    Ok(PhiDerivatives { phi_r: t.d_r[0], phi_h: t.d_h[0], phi_rh: Estimate::exact(q.phi_rh(r, h)?) })
}

/// Tabulated `Q(r,h)` with `φ_rh = −β e^{−r} Q`, bicubic in `ln Q` on graded nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiRhTable {
    pub beta: f64,
    pub r_nodes: Vec<f64>,
    pub h_nodes: Vec<f64>,
    pub q: Vec<f64>,
}

fn graded(max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| max * (i as f64 / n as f64).powi(2)).collect()
}

/// Cubic Hermite on cell `[x_i, x_{i+1}]` at fraction `t`, slopes from neighbouring nodes.
fn hermite(x: &[f64], f: impl Fn(usize) -> f64, i: usize, t: f64) -> f64 {
    let last = x.len() - 1;
    let slope = |k: usize| -> f64 {
        if k == 0 {
            (f(1) - f(0)) / (x[1] - x[0])
        } else if k == last {
            (f(last) - f(last - 1)) / (x[last] - x[last - 1])
        } else {
            let (h0, h1) = (x[k] - x[k - 1], x[k + 1] - x[k]);
            let (d0, d1) = ((f(k) - f(k - 1)) / h0, (f(k + 1) - f(k)) / h1);
            (h1 * d0 + h0 * d1) / (h0 + h1)
        }
    };
    let dx = x[i + 1] - x[i];
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * f(i) + (t3 - 2.0 * t2 + t) * dx * slope(i) + (-2.0 * t3 + 3.0 * t2) * f(i + 1) + (t3 - t2) * dx * slope(i + 1)
}

fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    if x <= nodes[0] {
        return (0, 0.0);
    }
    let last = nodes.len() - 1;
    if x >= nodes[last] {
        return (last - 1, 1.0);
    }
    let i = nodes.partition_point(|&v| v <= x) - 1;
    (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
}

impl PhiRhTable {
    /// Covers `[0, r_max] × [0, h_max]`; beyond `r_max` the `r`-dependence is carried by `e^{−r}` alone.
    pub fn build(model: &Model, r_max: f64, h_max: f64, nodes: usize) -> Result<Self> {
        let quad = PhiQuadrature::new(model)?;
        let r_nodes = graded(r_max, nodes);
        let h_nodes = graded(h_max, nodes);
        let nh = h_nodes.len();
        let row = |i: usize| -> Result<Vec<f64>> { h_nodes.iter().map(|&h| quad.q(r_nodes[i], h)).collect() };
        #[cfg(feature = "parallel")]
        let rows: Vec<Result<Vec<f64>>> = {
            use rayon::prelude::*;
            (0..r_nodes.len()).into_par_iter().map(row).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Result<Vec<f64>>> = (0..r_nodes.len()).map(row).collect();
        let mut q = Vec::with_capacity(r_nodes.len() * nh);
        for r in rows {
            q.extend(r?);
        }
        Ok(PhiRhTable { beta: model.beta(), r_nodes, h_nodes, q })
    }

    /// Table extent suited to `model` and starting point `(r, h)`.
    pub fn for_model(model: &Model, r: f64, h: f64) -> Result<Self> {
        let b = model.bench();
        let decay = ((b.mu_b * b.mu_b + 2.0 * model.rho() * b.sigma_b * b.sigma_b).sqrt() - b.mu_b) / (b.sigma_b * b.sigma_b);
        let h_max = h.max(0.0) + 28.0 / decay.max(1e-6);
        Self::build(model, r + 2.0, h_max, 40)
    }

    pub fn q_at(&self, r: f64, h: f64) -> f64 {
        let nh = self.h_nodes.len();
        let (i, tr) = locate(&self.r_nodes, r);
        let (j, th) = locate(&self.h_nodes, h);
        let ri = i.saturating_sub(1)..(i + 3).min(self.r_nodes.len());
        let hj = j.saturating_sub(1)..(j + 3).min(nh);
        let positive = ri.clone().all(|a| hj.clone().all(|b| self.q[a * nh + b] > 0.0));
        if !positive {
            let q = |a: usize, b: usize| self.q[a * nh + b];
            return (1.0 - tr) * ((1.0 - th) * q(i, j) + th * q(i, j + 1)) + tr * ((1.0 - th) * q(i + 1, j) + th * q(i + 1, j + 1));
        }
        let lo = ri.start;
        let mut col = [0.0; 4];
        for a in ri {
            col[a - lo] = hermite(&self.h_nodes, |b| self.q[a * nh + b].ln(), j, th);
        }
        hermite(&self.r_nodes, |a| col[a - lo], i, tr).exp()
    }

    pub fn phi_rh(&self, r: f64, h: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        -self.beta * (-r).exp() * self.q_at(r, h)
    }
}

/// `ξ(r,h) = −κ1 E[∫ e^{−ρs} φ_rh(R_s, H_s) ds]` over correlated paths.
pub fn estimate_xi(model: &Model, cfg: &McConfig, r: f64, h: f64) -> Result<Estimate> {
    if model.derived.kappa1 == 0.0 {
        return Ok(Estimate { n: cfg.n_paths, ..Estimate::exact(0.0) });
    }
    let table = PhiRhTable::for_model(model, r, h)?;
    Ok(estimate_xi_with(model, cfg, &table, &[(r, h)])?[0])
}

pub fn estimate_xi_with(model: &Model, cfg: &McConfig, table: &PhiRhTable, points: &[(f64, f64)]) -> Result<Vec<Estimate>> {
    cfg.validate()?;
    if !(model.bench().sigma_b > 0.0) {
        return Err(Error::AssumptionViolated("xi needs sigma_B > 0".into()));
    }
    let kappa1 = model.derived.kappa1;
    let rho = model.rho();
    let n = cfg.n_steps();
    let wt = trapezoid_discount(rho, cfg.dt, n);
    let np = points.len();
    let moments = for_each_unit(cfg, np, |noise: &mut PathNoise, out: &mut [f64]| {
        let mut path = TermPath::new(model, cfg, TermDriver::Correlated);
        for (i, &(r, h)) in points.iter().enumerate() {
            out[i] += wt[0] * table.phi_rh(r, h);
        }
        for step in 1..=n {
            let st = TermStep::draw(noise);
            path.advance(&st);
            for (i, &(r, h)) in points.iter().enumerate() {
                let rr = path.wm.max(r) - path.w;
                let hh = path.ym.max(h) - path.y;
                out[i] += wt[step] * table.phi_rh(rr, hh);
            }
        }
        out.iter_mut().for_each(|x| *x *= -kappa1);
    });
    let tb = kappa1.abs() * model.beta() * (-rho * cfg.horizon).exp() / rho;
    Ok((0..np).map(|i| moments.estimate(i, cfg.n_paths).with_truncation(tb)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::ClosedFormL;
    use crate::params::ModelParams;

    fn reference() -> Model {
        Model::new(ModelParams::reference()).unwrap()
    }

    #[test]
    fn l_second_term_vanishes_at_zero_z() {
        let m = reference();
        let e = estimate_l(&m, &McConfig::new(64, 1e-2, 5.0, 3), 0.4, 0.0).unwrap();
        assert_eq!(e.second.value, 0.0);
        assert_eq!(e.second.std_error, 0.0);
    }

    #[test]
    fn l_matches_closed_form_small() {
        let m = reference();
        let l = ClosedFormL::new(&m);
        let cfg = McConfig::new(4000, 2e-3, 8.0, 17);
        for (r, z) in [(0.5, 1.0), (0.0, 0.3), (2.0, 2.0)] {
            let e = estimate_l(&m, &cfg, r, z).unwrap();
            let exact = l.value(r, z);
            assert!(
                (e.total.value - exact).abs() < 4.0 * e.total.std_error + 1e-4 * exact.abs(),
                "r={r} z={z}: {} ± {} vs {exact}",
                e.total.value,
                e.total.std_error
            );
        }
    }

    #[test]
    fn deterministic_estimates() {
        let m = reference();
        let cfg = McConfig::new(40, 1e-2, 3.0, 99);
        let a = estimate_psi(&m, &cfg, 0.2, 0.1).unwrap();
        let b = estimate_psi(&m, &cfg, 0.2, 0.1).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn psi_nonpositive_and_vanishes_far() {
        let m = reference();
        let cfg = McConfig::new(500, 1e-3, 10.0, 1);
        let e = estimate_psi(&m, &cfg, 0.5, 0.1).unwrap();
        assert!(e.value <= 0.0 && e.value + 3.0 * e.std_error <= 1e-3);
        let far = estimate_psi(&m, &cfg, 0.5, 10.0).unwrap();
        assert_eq!(far.value, 0.0);
    }

    #[test]
    fn h_zero_derivative_is_exact() {
        let m = reference();
        let cfg = McConfig::new(50, 1e-2, 2.0, 4);
        let t = local_time_tables(&m, &cfg, &[0.0, 0.5, 1.0], &[0.0, 0.2], TermDriver::Correlated).unwrap();
        for (i, r) in [0.0f64, 0.5, 1.0].iter().enumerate() {
            let [_, dr, dh, drh] = t.at(i, 0);
            assert_eq!(dh.value, (-r).exp());
            assert_eq!(dh.std_error, 0.0);
            assert!(drh.value.abs() <= (-r).exp());
            if i == 0 {
                assert_eq!(dr.value, 0.0);
                assert_eq!(t.at(0, 1)[3].value, 0.0);
            }
        }
    }

    #[test]
    fn table_matches_single_node_runs() {
        let m = reference();
        let cfg = McConfig::new(64, 2e-3, 4.0, 12);
        let rs = [0.0, 0.1, 0.7];
        let hs = [0.0, 0.02, 0.05, 0.3];
        let t = local_time_tables(&m, &cfg, &rs, &hs, TermDriver::Correlated).unwrap();
        for (i, &r) in rs.iter().enumerate() {
            for (j, &h) in hs.iter().enumerate() {
                let one = local_time_tables(&m, &cfg, &[r], &[h], TermDriver::Correlated).unwrap();
                let a = t.at(i, j);
                let b = one.at(0, 0);
                for k in 0..4 {
                    assert!((a[k].value - b[k].value).abs() <= 1e-12 * (1.0 + b[k].value.abs()), "({r},{h}) part {k}");
                }
            }
        }
    }

    #[test]
    fn phi_bounded_by_local_time() {
        let m = reference();
        let cfg = McConfig::new(400, 1e-3, 10.0, 8);
        let e = estimate_phi(&m, &cfg, 0.3, 0.05).unwrap();
        let lt = crate::densities::BenchmarkKernel::new(0.1, 0.1).unwrap().expected_local_time(10.0, 0.05).unwrap();
        assert!(e.value <= 0.0 && e.value >= -m.beta() * lt - 3.0 * e.std_error);
    }

    #[test]
    fn xi_zero_when_uncoupled() {
        let mut p = ModelParams::reference();
        p.market = crate::params::MarketParams { d: 2, mu: vec![0.1, 0.0], sigma: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        p.benchmark.gamma = vec![0.0, 1.0];
        p.benchmark.eta = vec![1.0, 0.0];
        let m = Model::new(p).unwrap();
        assert_eq!(m.derived.kappa1, 0.0);
        let e = estimate_xi(&m, &McConfig::new(10, 1e-2, 1.0, 1), 0.5, 0.5).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn phi_rh_table_interpolates_quadrature() {
        let m = reference();
        let t = PhiRhTable::build(&m, 2.0, 1.5, 40).unwrap();
        let q = PhiQuadrature::new(&m).unwrap();
        for (r, h) in [(0.3, 0.05), (1.0, 0.2), (1.7, 0.01)] {
            let exact = q.phi_rh(r, h).unwrap();
            assert!((t.phi_rh(r, h) - exact).abs() < 5e-3 * exact.abs() + 1e-6, "({r},{h}) {} vs {exact}", t.phi_rh(r, h));
        }
    }
}
