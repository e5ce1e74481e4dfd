//! Forward simulation of the benchmark and of the controlled auxiliary system `(X*, I, Z)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dual_solver::DualField;
use crate::error::{Error, Result};
use crate::mc::{for_each_unit, step_max, step_min, Estimate, McConfig, PathNoise};
use crate::params::Model;
use crate::policy::{controls_at, invert_dual_near};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Spacing of recorded states and of the benchmark mean profile.
    pub record_dt: f64,
    /// Number of leading paths stored in full.
    pub keep_paths: usize,
    /// Also run a 2·dt scheme on the same noise to size the discretization error.
    pub coupled_coarse: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { record_dt: 0.01, keep_paths: 8, coupled_coarse: false }
    }
}

impl SimOptions {
    fn stride(&self, dt: f64) -> usize {
        ((self.record_dt / dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPath {
    pub path_id: usize,
    pub m: Vec<f64>,
    pub z: Vec<f64>,
    pub big_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub times: Vec<f64>,
    /// `E[M_t]` on `times`.
    pub mean_big_m: Vec<Estimate>,
    /// Every simulated `m` path was nondecreasing.
    pub m_nondecreasing: bool,
    pub paths: Vec<BenchmarkPath>,
}

impl BenchmarkRun {
    /// Mean of `M_t` at the recorded time nearest to `t`.
    pub fn mean_at(&self, t: f64) -> Estimate {
        let k = self.times.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs())).map(|x| x.0).unwrap_or(0);
        self.mean_big_m[k]
    }
}

struct BenchStep {
    b: f64,
    m: f64,
    z: f64,
}

/// Simulates `M = m + Z` with `m_t = max(m0, sup B)`; `σ_B = 0` is allowed.
pub fn simulate_benchmark(model: &Model, cfg: &McConfig, opts: &SimOptions) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let b = model.bench().clone();
    if !(b.z0 >= 0.0 && b.m0 >= 0.0) {
        return Err(Error::InvalidParams("benchmark needs z0, m0 >= 0".into()));
    }
    let n = cfg.n_steps();
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let stride = opts.stride(dt);
    let n_rec = n / stride + 1;
    let times: Vec<f64> = (0..n_rec).map(|k| (k * stride) as f64 * dt).collect();
    let c = model.derived.eta_gamma.clamp(-1.0, 1.0);
    let cc = (1.0 - c * c).sqrt();
    let drift_z = (b.mu_z - 0.5 * b.sigma_z * b.sigma_z) * dt;
    let run = |noise: &mut PathNoise, mut sink: Option<&mut BenchmarkPath>, out: &mut [f64]| {
        let mut s = BenchStep { b: b.b0, m: b.m0.max(b.b0), z: b.z0 };
        let push = |s: &BenchStep, k: usize, out: &mut [f64], sink: &mut Option<&mut BenchmarkPath>| {
            out[k] += s.m + s.z;
            if let Some(p) = sink.as_deref_mut() {
                p.m.push(s.m);
                p.z.push(s.z);
                p.big_m.push(s.m + s.z);
            }
        };
        push(&s, 0, out, &mut sink);
        for step in 1..=n {
            let ng = noise.normal();
            let np = noise.normal();
            let ub = noise.uniform();
            let b_new = s.b + b.mu_b * dt + b.sigma_b * sq * ng;
            let top = step_max(cfg.scheme, s.b, b_new, b.sigma_b * b.sigma_b * dt, ub);
            let m_new = s.m.max(top);
            if m_new < s.m {
                out[n_rec] = 1.0;
            }
            s.m = m_new;
            s.b = b_new;
            s.z *= (drift_z + b.sigma_z * sq * (c * ng + cc * np)).exp();
            if step % stride == 0 {
                push(&s, step / stride, out, &mut sink);
            }
        }
    };
    let moments = for_each_unit(cfg, n_rec + 1, |noise, out| run(noise, None, out));
    let paths = (0..opts.keep_paths.min(cfg.n_paths))
        .map(|p| {
            let mut rec = BenchmarkPath { path_id: p, m: vec![], z: vec![], big_m: vec![] };
            let mut scratch = vec![0.0; n_rec + 1];
            run(&mut PathNoise::new(cfg.seed, p as u64, false), Some(&mut rec), &mut scratch);
            rec
        })
        .collect();
    Ok(BenchmarkRun { mean_big_m: (0..n_rec).map(|k| moments.estimate(k, cfg.n_paths)).collect(), m_nondecreasing: moments.mean(n_rec) == 0.0, times, paths })
}

/// Feedback rule driving the controlled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPolicy {
    Optimal,
    ZeroInvestment,
    HalfConsumption,
    NoConsumption,
}

impl ControlPolicy {
    pub const SUBOPTIMAL: [ControlPolicy; 3] = [ControlPolicy::ZeroInvestment, ControlPolicy::HalfConsumption, ControlPolicy::NoConsumption];
}

/// Starting point of the controlled system in primal variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Start {
    pub x: f64,
    pub h: f64,
    pub z: f64,
    pub b: f64,
    /// `A*_0 = (m∨b + z − v)⁺`
    pub initial_injection: f64,
}

impl Start {
    pub fn auxiliary(x: f64, h: f64, z: f64) -> Self {
        Start { x, h, z, b: 0.0, initial_injection: 0.0 }
    }

    pub fn primal(v: f64, m: f64, z: f64, b: f64) -> Self {
        let mb = m.max(b);
        let x = v - mb - z;
        Start { x: x.max(0.0), h: mb - b, z, b, initial_injection: (-x).max(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: usize,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub i: Vec<f64>,
    pub z: Vec<f64>,
    pub m: Vec<f64>,
    pub big_m: Vec<f64>,
    pub v: Vec<f64>,
    pub a_star: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub l_x: Vec<f64>,
    pub disc_utility: Vec<f64>,
    pub disc_injection: Vec<f64>,
}

impl PathRecord {
    fn new(path_id: usize) -> Self {
        PathRecord {
            path_id,
            times: vec![],
            x: vec![],
            i: vec![],
            z: vec![],
            m: vec![],
            big_m: vec![],
            v: vec![],
            a_star: vec![],
            theta: vec![],
            c: vec![],
            l_x: vec![],
            disc_utility: vec![],
            disc_injection: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledSummary {
    pub policy: ControlPolicy,
    pub start: Start,
    /// `E[∫e^{−ρt}U(c)dt − β∫e^{−ρt}dL^X]`, initial injection excluded.
    pub j: Estimate,
    pub utility: Estimate,
    /// `E[∫e^{−ρt}dL^X]`
    pub injection: Estimate,
    /// `E[Σ X_{t_i} ΔL^X_{t_i}]`
    pub complementarity: Estimate,
    /// `J(2dt) − J(dt)` on shared noise, when requested.
    pub coarse_gap: Option<Estimate>,
    /// `|J(dt) − J(2dt)|`, or 0 without the coupled run.
    pub allowance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledRun {
    pub summary: ControlledSummary,
    pub paths: Vec<PathRecord>,
}

struct Controlled<'a> {
    field: &'a DualField,
    policy: ControlPolicy,
    cfg: &'a McConfig,
    start: Start,
    d: usize,
    mu: Vec<f64>,
    /// Row-major σ.
    sigma: Vec<f64>,
    gamma: Vec<f64>,
    eta: Vec<f64>,
    mu_b: f64,
    sigma_b: f64,
    mu_z: f64,
    sigma_z: f64,
    p: f64,
    rho: f64,
    beta: f64,
    /// `((1 − e^{−ρΔ})/ρ, e^{−ρΔ/2})` for `Δ = dt` and `Δ = 2dt`.
    weights: (f64, f64),
    weights_coarse: (f64, f64),
}

/// One discretization of `X*` with its own controls and accumulators.
struct Track {
    x: f64,
    r_guess: f64,
    l: f64,
    util: f64,
    inj: f64,
    compl: f64,
    theta: Vec<f64>,
    c: f64,
}

impl Track {
    fn new(x: f64, d: usize) -> Self {
        Track { x, r_guess: f64::NAN, l: 0.0, util: 0.0, inj: 0.0, compl: 0.0, theta: vec![0.0; d], c: 0.0 }
    }
}

const OUT_UTIL: usize = 0;
const OUT_INJ: usize = 1;
const OUT_J: usize = 2;
const OUT_COMPL: usize = 3;
const OUT_FAIL: usize = 4;
const OUT_GAP: usize = 5;

impl<'a> Controlled<'a> {
    fn new(field: &'a DualField, cfg: &'a McConfig, start: Start, policy: ControlPolicy) -> Self {
        let model = field.model();
        let mk = &model.params.market;
        let b = model.bench();
        Controlled {
            field,
            policy,
            cfg,
            start,
            d: mk.d,
            mu: mk.mu.clone(),
            sigma: mk.sigma.iter().flatten().copied().collect(),
            gamma: b.gamma.clone(),
            eta: b.eta.clone(),
            mu_b: b.mu_b,
            sigma_b: b.sigma_b,
            mu_z: b.mu_z,
            sigma_z: b.sigma_z,
            p: model.p(),
            rho: model.rho(),
            beta: model.beta(),
            weights: Self::weights(model.rho(), cfg.dt),
            weights_coarse: Self::weights(model.rho(), 2.0 * cfg.dt),
        }
    }

    fn weights(rho: f64, len: f64) -> (f64, f64) {
        (-(-rho * len).exp_m1() / rho, (-0.5 * rho * len).exp())
    }

    fn update_controls(&self, t: &mut Track, h: f64, z: f64) -> Result<()> {
        let root = invert_dual_near(self.field, t.x, h, z, t.r_guess).map_err(|e| match e {
            Error::Bracket { x, r_limit } => Error::FieldCoverage(format!("no dual root for x = {x} below r = {r_limit}")),
            other => other,
        })?;
        t.r_guess = root.r_star;
        let (theta, c) = controls_at(self.field, &root, h, z)?;
        t.theta = theta;
        t.c = c;
        match self.policy {
            ControlPolicy::Optimal => {}
            ControlPolicy::ZeroInvestment => t.theta.iter_mut().for_each(|v| *v = 0.0),
            ControlPolicy::HalfConsumption => t.c *= 0.5,
            ControlPolicy::NoConsumption => t.c = 0.0,
        }
        Ok(())
    }

    fn utility(&self, c: f64) -> f64 {
        c.powf(self.p) / self.p
    }

    /// Advances `t` over `[s, s+len]` given the Brownian increment and the exogenous moves.
    #[allow(clippy::too_many_arguments)]
    fn advance(&self, t: &mut Track, s: f64, len: f64, dw: &[f64], z0: f64, dz: f64, dm: f64, u: f64) {
        let d = self.d;
        let mut drift = -t.c;
        let mut noise = 0.0;
        let mut var = 0.0;
        for j in 0..d {
            drift += t.theta[j] * self.mu[j];
            // (σᵀθ)_j
            let mut st = 0.0;
            for i in 0..d {
                st += self.sigma[i * d + j] * t.theta[i];
            }
            noise += st * dw[j];
            let vol = st - self.sigma_z * z0 * self.eta[j];
            var += vol * vol;
        }
        let x_end = t.x + drift * len + noise - dz - dm;
        let lowest = step_min(self.cfg.scheme, t.x, x_end, var * len, u);
        let dl = (-lowest).max(0.0);
        t.x = x_end + dl;
        t.l += dl;
        let disc = (-self.rho * s).exp();
        let (weight, mid) = if len == self.cfg.dt { self.weights } else { self.weights_coarse };
        t.util += self.utility(t.c) * disc * weight;
        t.inj += disc * mid * dl;
        t.compl += t.x * dl;
    }

    fn record(&self, rec: &mut PathRecord, time: f64, t: &Track, i: f64, z: f64, m: f64) {
        let a = self.start.initial_injection + t.l;
        rec.times.push(time);
        rec.x.push(t.x);
        rec.i.push(i);
        rec.z.push(z);
        rec.m.push(m);
        rec.big_m.push(m + z);
        rec.v.push(t.x + m + z - a);
        rec.a_star.push(a);
        rec.theta.push(t.theta.clone());
        rec.c.push(t.c);
        rec.l_x.push(t.l);
        rec.disc_utility.push(t.util);
        rec.disc_injection.push(t.inj);
    }

    fn run(&self, noise: &mut PathNoise, coupled: bool, stride: usize, mut rec: Option<&mut PathRecord>, out: &mut [f64]) {
        let d = self.d;
        let n = self.cfg.n_steps();
        let dt = self.cfg.dt;
        let sq = dt.sqrt();
        let drift_z = (self.mu_z - 0.5 * self.sigma_z * self.sigma_z) * dt;
        let mut b = self.start.b;
        let mut m = b + self.start.h;
        let mut z = self.start.z;
        let mut fine = Track::new(self.start.x, d);
        let mut coarse = Track::new(self.start.x, d);
        let mut dw = vec![0.0; d];
        let mut dw_pair = vec![0.0; d];
        let (mut z_pair, mut m_pair) = (z, m);
        let fail = |out: &mut [f64]| out[OUT_FAIL] = 1.0;
        for step in 0..n {
            let s = step as f64 * dt;
            let h = m - b;
            if self.update_controls(&mut fine, h, z).is_err() {
                return fail(out);
            }
            if let Some(r) = rec.as_deref_mut() {
                if step % stride == 0 {
                    self.record(r, s, &fine, h, z, m);
                }
            }
            if coupled && step % 2 == 0 {
                if self.update_controls(&mut coarse, h, z).is_err() {
                    return fail(out);
                }
                dw_pair.iter_mut().for_each(|v| *v = 0.0);
                z_pair = z;
                m_pair = m;
            }
            for w in dw.iter_mut() {
                *w = sq * noise.normal();
            }
            let ub = noise.uniform();
            let ux = noise.uniform();
            let uxc = noise.uniform();
            let wg: f64 = self.gamma.iter().zip(&dw).map(|(g, w)| g * w).sum();
            let we: f64 = self.eta.iter().zip(&dw).map(|(e, w)| e * w).sum();
            let b_new = b + self.mu_b * dt + self.sigma_b * wg;
            let m_new = m.max(step_max(self.cfg.scheme, b, b_new, self.sigma_b * self.sigma_b * dt, ub));
            let z_new = z * (drift_z + self.sigma_z * we).exp();
            self.advance(&mut fine, s, dt, &dw, z, z_new - z, m_new - m, ux);
            if coupled {
                dw_pair.iter_mut().zip(&dw).for_each(|(a, w)| *a += w);
                if step % 2 == 1 {
                    self.advance(&mut coarse, s - dt, 2.0 * dt, &dw_pair, z_pair, z_new - z_pair, m_new - m_pair, uxc);
                }
            }
            b = b_new;
            m = m_new;
            z = z_new;
        }
        if let Some(r) = rec {
            if n.is_multiple_of(stride) {
                self.record(r, n as f64 * dt, &fine, m - b, z, m);
            }
        }
        out[OUT_UTIL] = fine.util;
        out[OUT_INJ] = fine.inj;
        out[OUT_J] = fine.util - self.beta * fine.inj;
        out[OUT_COMPL] = fine.compl;
        if coupled {
            out[OUT_GAP] = (coarse.util - self.beta * coarse.inj) - out[OUT_J];
        }
    }
}

/// Simulates `(X*, I, Z)` under `policy` from `start` and estimates the discounted objective.
pub fn simulate_controlled(field: &DualField, cfg: &McConfig, start: Start, policy: ControlPolicy, opts: &SimOptions) -> Result<ControlledRun> {
    cfg.validate()?;
    let model = field.model();
    if !(model.bench().sigma_b > 0.0) {
        return Err(Error::AssumptionViolated("controlled simulation needs sigma_B > 0".into()));
    }
    if !(start.x >= 0.0 && start.h >= 0.0 && start.z >= 0.0) {
        return Err(Error::Domain("controlled simulation needs x, h, z >= 0".into()));
    }
    if policy == ControlPolicy::NoConsumption && model.p() < 0.0 {
        return Err(Error::Config("zero consumption has utility −∞ when p < 0".into()));
    }
    let sim = Controlled::new(field, cfg, start, policy);
    let stride = opts.stride(cfg.dt);
    let coupled = opts.coupled_coarse;
    let moments = for_each_unit(cfg, 6, |noise, out| sim.run(noise, coupled, stride, None, out));
    if moments.mean(OUT_FAIL) > 0.0 {
        return Err(Error::FieldCoverage("feedback controls left the range of the dual field".into()));
    }
    let est = |k: usize| moments.estimate(k, cfg.n_paths);
    let coarse_gap = coupled.then(|| est(OUT_GAP));
    let summary = ControlledSummary {
        policy,
        start,
        j: est(OUT_J),
        utility: est(OUT_UTIL),
        injection: est(OUT_INJ),
        complementarity: est(OUT_COMPL),
        coarse_gap,
        allowance: coarse_gap.map_or(0.0, |g| g.value.abs()),
    };
    let mut paths = Vec::new();
    for p in 0..opts.keep_paths.min(cfg.n_paths) {
        let mut rec = PathRecord::new(p);
        let mut scratch = [0.0; 6];
        sim.run(&mut PathNoise::new(cfg.seed, p as u64, false), false, stride, Some(&mut rec), &mut scratch);
        paths.push(rec);
    }
    Ok(ControlledRun { summary, paths })
}

/// `E[∫e^{−ρt}dA*_t]` under the optimal policy from primal state `(v, m, z, b)`, initial jump included.
pub fn estimate_injection(field: &DualField, cfg: &McConfig, v0: f64, m0: f64, z0: f64, b0: f64) -> Result<Estimate> {
    if !(v0 >= 0.0 && m0 >= 0.0 && z0 >= 0.0) {
        return Err(Error::Domain("estimate_injection needs v, m, z >= 0".into()));
    }
    let start = Start::primal(v0, m0, z0, b0);
    let opts = SimOptions { keep_paths: 0, ..Default::default() };
    let run = simulate_controlled(field, cfg, start, ControlPolicy::Optimal, &opts)?;
    let inj = run.summary.injection;
    Ok(Estimate { value: inj.value + start.initial_injection, ..inj })
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per recorded state; floats at 17 significant digits.
pub fn write_paths_csv<W: Write>(paths: &[PathRecord], d: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["path_id", "t", "X", "I", "Z", "m", "M", "V", "A_star"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=d).map(|k| format!("theta_{k}")));
    header.extend(["c".to_string(), "L_X".to_string()]);
    out.write_record(&header).map_err(csv_err)?;
    for p in paths {
        for k in 0..p.times.len() {
            let mut row = vec![p.path_id.to_string()];
            for v in [p.times[k], p.x[k], p.i[k], p.z[k], p.m[k], p.big_m[k], p.v[k], p.a_star[k]] {
                row.push(fmt17(v));
            }
            row.extend(p.theta[k].iter().map(|&v| fmt17(v)));
            row.push(fmt17(p.c[k]));
            row.push(fmt17(p.l_x[k]));
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_benchmark_csv<W: Write>(run: &BenchmarkRun, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path_id", "t", "m", "Z", "M"]).map_err(csv_err)?;
    for p in &run.paths {
        for k in 0..p.m.len() {
            out.write_record([p.path_id.to_string(), fmt17(run.times[k]), fmt17(p.m[k]), fmt17(p.z[k]), fmt17(p.big_m[k])]).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_solver::{build_dual_field, GridSpec};
    use crate::params::ModelParams;
    use crate::policy::primal_value;
    use std::sync::OnceLock;

    fn field() -> &'static DualField {
        static F: OnceLock<DualField> = OnceLock::new();
        F.get_or_init(|| {
            let m = Model::new(ModelParams::reference()).unwrap();
            build_dual_field(&m, &McConfig::new(400, 2e-3, 6.0, 11), &GridSpec::new(4.0, 1.5, 17, 17).with_h_grading(2.0)).unwrap()
        })
    }

    #[test]
    fn deterministic_benchmark_trend() {
        let m = Model::new(ModelParams::trend_benchmark()).unwrap();
        let cfg = McConfig::new(200, 1e-3, 1.0, 3);
        let run = simulate_benchmark(&m, &cfg, &SimOptions::default()).unwrap();
        assert!(run.m_nondecreasing);
        for p in &run.paths {
            for (k, &mv) in p.m.iter().enumerate() {
                assert!((mv - (1.0 + 2.0 * run.times[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_vol_benchmark_is_exact() {
        let mut params = ModelParams::trend_benchmark();
        params.benchmark.sigma_z = 0.0;
        let m = Model::new(params).unwrap();
        let run = simulate_benchmark(&m, &McConfig::new(4, 1e-2, 1.0, 1), &SimOptions { keep_paths: 4, ..Default::default() }).unwrap();
        for p in &run.paths {
            for (k, &zv) in p.z.iter().enumerate() {
                assert!((zv - 0.8 * (2.0 * run.times[k]).exp()).abs() < 1e-12 * zv);
            }
        }
    }

    #[test]
    fn controlled_paths_respect_constraints() {
        let f = field();
        let cfg = McConfig::new(8, 1e-2, 2.0, 4);
        let run = simulate_controlled(
            f,
            &cfg,
            Start::auxiliary(1.0, 0.5, 0.8),
            ControlPolicy::Optimal,
            &SimOptions { record_dt: 0.01, keep_paths: 8, coupled_coarse: true },
        )
        .unwrap();
        assert_eq!(run.paths.len(), 8);
        for p in &run.paths {
            assert!(p.x.iter().all(|&x| x >= 0.0));
            assert!(p.i.iter().all(|&i| i >= -1e-12));
            assert!(p.z.iter().all(|&z| z > 0.0));
            assert!(p.l_x.windows(2).all(|w| w[1] >= w[0]));
            assert!(p.m.windows(2).all(|w| w[1] >= w[0]));
            assert!(p.a_star.windows(2).all(|w| w[1] >= w[0]));
            // A* = 0 ∨ sup(M − V) on the record grid
            let mut run_max = 0.0f64;
            for k in 0..p.times.len() {
                run_max = run_max.max(p.big_m[k] - p.v[k]);
                assert!(p.a_star[k] >= run_max - 1e-9);
            }
        }
        assert!(run.summary.coarse_gap.is_some());
    }

    #[test]
    fn csv_layout() {
        let f = field();
        let cfg = McConfig::new(2, 0.1, 0.5, 4);
        let run = simulate_controlled(
            f,
            &cfg,
            Start::auxiliary(1.0, 0.5, 0.8),
            ControlPolicy::Optimal,
            &SimOptions { record_dt: 0.1, keep_paths: 2, coupled_coarse: false },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&run.paths, 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "path_id,t,X,I,Z,m,M,V,A_star,theta_1,c,L_X");
        assert_eq!(text.lines().count(), 1 + 2 * 6);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 12);
        assert_eq!(row[2], "1.0000000000000000e0");
    }

    #[test]
    fn injection_includes_jump() {
        let f = field();
        let cfg = McConfig::new(16, 1e-2, 2.0, 8);
        let e = estimate_injection(f, &cfg, 1.0, 0.0, 0.8, 1.0).unwrap();
        assert!(e.value >= 0.8);
        let s = Start::primal(1.0, 0.0, 0.8, 1.0);
        assert_eq!((s.x, s.h), (0.0, 0.0));
        assert!((s.initial_injection - 0.8).abs() < 1e-15);
    }

    #[test]
    fn objective_near_value_small_run() {
        let f = field();
        let cfg = McConfig::new(200, 2e-3, 4.0, 21);
        let run =
            simulate_controlled(f, &cfg, Start::auxiliary(1.0, 0.5, 0.8), ControlPolicy::Optimal, &SimOptions { keep_paths: 0, ..Default::default() }).unwrap();
        let u = primal_value(f, 1.0, 0.5, 0.8).unwrap();
        let j = run.summary.j;
        assert!((j.value - u).abs() < 5.0 * j.std_error + 0.02 * u.abs(), "J = {} ± {}, u = {u}", j.value, j.std_error);
    }
}
