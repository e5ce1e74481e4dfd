//! Model inputs, derived constants and assumption checks.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SINGULAR_TOL: f64 = 1e-10;

/// Risky-asset market: `d` assets with drift `mu` and volatility `sigma` (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub d: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

/// Benchmark `M = m + Z` with `m` the running max of `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkParams {
    #[serde(rename = "mu_Z")]
    pub mu_z: f64,
    #[serde(rename = "sigma_Z")]
    pub sigma_z: f64,
    #[serde(rename = "mu_B")]
    pub mu_b: f64,
    #[serde(rename = "sigma_B")]
    pub sigma_b: f64,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default = "one")]
    pub z0: f64,
    #[serde(default)]
    pub m0: f64,
    #[serde(default)]
    pub b0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceParams {
    pub p: f64,
    pub rho: f64,
    pub beta: f64,
}

/// Raw parameter file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub market: MarketParams,
    pub benchmark: BenchmarkParams,
    pub preferences: PreferenceParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub ell: f64,
    pub c1: f64,
    pub c2: f64,
    pub cq: f64,
    /// `ηᵀγ`, the instantaneous correlation of `W^η` and `W^γ`.
    pub eta_gamma: f64,
}

impl ModelParams {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    /// Parameters of the numerical illustration: one asset, ρ = 3.
    pub fn reference() -> Self {
        ModelParams {
            market: MarketParams { d: 1, mu: vec![0.1], sigma: vec![vec![1.0]] },
            benchmark: BenchmarkParams { mu_z: 0.1, sigma_z: 0.1, mu_b: 0.1, sigma_b: 0.1, gamma: vec![1.0], eta: vec![1.0], z0: 0.8, m0: 0.0, b0: 0.0 },
            preferences: PreferenceParams { p: 0.5, rho: 3.0, beta: 1.0 },
        }
    }

    /// Benchmark-path inputs with deterministic `m` (σ_B = 0).
    pub fn trend_benchmark() -> Self {
        ModelParams {
            market: MarketParams { d: 1, mu: vec![0.1], sigma: vec![vec![1.0]] },
            benchmark: BenchmarkParams { mu_z: 2.0, sigma_z: 1.0, mu_b: 2.0, sigma_b: 0.0, gamma: vec![1.0], eta: vec![1.0], z0: 0.8, m0: 0.0, b0: 1.0 },
            preferences: PreferenceParams { p: 0.5, rho: 3.0, beta: 1.0 },
        }
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} is not finite")))
    }
}

fn unit(name: &str, v: &[f64], d: usize) -> Result<Vec<f64>> {
    if v.len() != d {
        return Err(Error::InvalidParams(format!("{name} has length {}, expected {d}", v.len())));
    }
    for &x in v {
        check_finite(name, x)?;
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::InvalidParams(format!("{name} entry {x} outside [-1, 1]")));
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidParams(format!("{name} is the zero vector")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Validated model with γ, η normalized and the linear algebra precomputed.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub derived: DerivedConstants,
    sigma_inv: DMatrix<f64>,
    /// σ⁻¹μ
    lambda: DVector<f64>,
}

impl Model {
    pub fn new(mut params: ModelParams) -> Result<Self> {
        let d = params.market.d;
        if d == 0 {
            return Err(Error::InvalidParams("d must be positive".into()));
        }
        params.benchmark.gamma = unit("gamma", &params.benchmark.gamma, d)?;
        params.benchmark.eta = unit("eta", &params.benchmark.eta, d)?;
        let b = &params.benchmark;
        for (n, v) in [("mu_Z", b.mu_z), ("sigma_Z", b.sigma_z), ("mu_B", b.mu_b), ("sigma_B", b.sigma_b), ("z0", b.z0), ("m0", b.m0), ("b0", b.b0)] {
            check_finite(n, v)?;
        }
        if b.sigma_z < 0.0 || b.sigma_b < 0.0 {
            return Err(Error::InvalidParams("sigma_Z and sigma_B must be nonnegative".into()));
        }
        if b.z0 < 0.0 || b.m0 < 0.0 {
            return Err(Error::InvalidParams("z0 and m0 must be nonnegative".into()));
        }
        let (sigma_inv, lambda) = market_factor(&params.market)?;
        let derived = derive_constants(&params.market, &params.benchmark, &params.preferences)?;
        Ok(Model { params, derived, sigma_inv, lambda })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::new(ModelParams::from_json_str(s)?)
    }

    pub fn d(&self) -> usize {
        self.params.market.d
    }
    pub fn p(&self) -> f64 {
        self.params.preferences.p
    }
    pub fn rho(&self) -> f64 {
        self.params.preferences.rho
    }
    pub fn beta(&self) -> f64 {
        self.params.preferences.beta
    }
    pub fn bench(&self) -> &BenchmarkParams {
        &self.params.benchmark
    }
    /// `p / (1 − p)`
    pub fn k(&self) -> f64 {
        let p = self.p();
        p / (1.0 - p)
    }

    /// Market price of risk `σ⁻¹μ`.
    pub fn market_price_of_risk(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        sigma_matrix(&self.params.market)
    }

    pub fn validate(&self, mode: SolverMode) -> ValidationReport {
        validate_assumptions(&self.params, &self.derived, mode)
    }
}

fn sigma_matrix(m: &MarketParams) -> DMatrix<f64> {
    DMatrix::from_fn(m.d, m.d, |i, j| m.sigma[i][j])
}

fn market_factor(m: &MarketParams) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = m.d;
    if m.mu.len() != d {
        return Err(Error::InvalidParams(format!("mu has length {}, expected {d}", m.mu.len())));
    }
    if m.sigma.len() != d || m.sigma.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidParams(format!("sigma must be {d}x{d}")));
    }
    for &x in m.mu.iter().chain(m.sigma.iter().flatten()) {
        check_finite("market", x)?;
    }
    if m.mu.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroMu);
    }
    let sigma = sigma_matrix(m);
    let sv = sigma.clone().svd(true, true);
    let smax = sv.singular_values.max();
    let smin = sv.singular_values.min();
    let inv_condition = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(inv_condition > SINGULAR_TOL) {
        return Err(Error::SingularSigma { inv_condition });
    }
    let sigma_inv = sv.pseudo_inverse(0.0).map_err(|e| Error::Numerical(format!("sigma inverse: {e}")))?;
    let lambda = &sigma_inv * DVector::from_column_slice(&m.mu);
    Ok((sigma_inv, lambda))
}

/// Positive root of `½α²ℓ² + (ρ − κ2 − ½α²)ℓ + μ_Z − ρ = 0`.
pub fn ell_root(alpha: f64, rho: f64, kappa2: f64, mu_z: f64) -> Result<f64> {
    let a = 0.5 * alpha * alpha;
    let b = rho - kappa2 - a;
    let c = mu_z - rho;
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) {
        return Err(Error::AssumptionViolated(format!("quadratic for ell has negative discriminant {disc:.3e}")));
    }
    let sq = disc.sqrt();
    // Cancellation-free form of (−b + √disc) / 2a.
    let ell = if b >= 0.0 { 2.0 * c / (-b - sq) } else { (-b + sq) / (2.0 * a) };
    Ok(ell)
}

pub fn derive_constants(market: &MarketParams, bench: &BenchmarkParams, pref: &PreferenceParams) -> Result<DerivedConstants> {
    let PreferenceParams { p, rho, beta } = *pref;
    for (n, v) in [("p", p), ("rho", rho), ("beta", beta)] {
        check_finite(n, v)?;
    }
    if p == 0.0 || p >= 1.0 {
        return Err(Error::InvalidParams(format!("p = {p} must lie in (-inf, 0) or (0, 1)")));
    }
    if rho <= 0.0 || beta <= 0.0 {
        return Err(Error::InvalidParams("rho and beta must be positive".into()));
    }
    let (_, lambda) = market_factor(market)?;
    let gamma = unit("gamma", &bench.gamma, market.d)?;
    let eta = unit("eta", &bench.eta, market.d)?;
    let alpha = lambda.norm();
    let lg: f64 = lambda.iter().zip(&gamma).map(|(a, b)| a * b).sum();
    let le: f64 = lambda.iter().zip(&eta).map(|(a, b)| a * b).sum();
    let kappa1 = bench.sigma_b * lg;
    let kappa2 = bench.sigma_z * le;
    let rho1 = (lg / alpha).clamp(-1.0, 1.0);
    let rho2 = (le / alpha).clamp(-1.0, 1.0);
    let ell = ell_root(alpha, rho, kappa2, bench.mu_z)?;
    let q = 1.0 - p;
    let den = 2.0 * rho * q - alpha * alpha * p;
    let c1 = 2.0 * q.powi(3) / (p * den);
    let c2 = 2.0 * q * q / den * beta.powf(-1.0 / q);
    let cq = beta.powf(-1.0 / q) * (1.0 / q).exp() + den / (2.0 * q) / (1.0 - (-1.0 / q).exp());
    let eta_gamma = gamma.iter().zip(&eta).map(|(a, b)| a * b).sum();
    Ok(DerivedConstants { alpha, kappa1, kappa2, rho1, rho2, ell, c1, c2, cq, eta_gamma })
}

/// Whether the parameters feed the dual solver or only benchmark path simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    DualSolver,
    BenchmarkOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotChecked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub condition: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub degenerate_benchmark: bool,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

fn check(id: &str, condition: &str, ok: bool, detail: String) -> Check {
    Check { id: id.into(), condition: condition.into(), status: if ok { CheckStatus::Pass } else { CheckStatus::Fail }, detail }
}

pub fn validate_assumptions(params: &ModelParams, dc: &DerivedConstants, mode: SolverMode) -> ValidationReport {
    let b = &params.benchmark;
    let PreferenceParams { p, rho, .. } = params.preferences;
    let a2 = dc.alpha * dc.alpha;
    let bound_a = 2.0 * b.mu_z + b.sigma_z * b.sigma_z;
    let bound_b = a2 * p.abs() / (2.0 * (1.0 - p)) + b.mu_z;
    let degenerate = b.sigma_b <= 0.0;
    let mut checks = vec![
        check("a", "rho > 2 mu_Z + sigma_Z^2", rho > bound_a, format!("rho = {rho}, bound = {bound_a}")),
        check("b", "rho > alpha^2 |p| / (2 (1 - p)) + mu_Z", rho > bound_b, format!("rho = {rho}, bound = {bound_b}")),
        check("c", "mu_Z > kappa2", b.mu_z > dc.kappa2, format!("mu_Z = {}, kappa2 = {}", b.mu_z, dc.kappa2)),
    ];
    let mut d = check("d", "sigma_B > 0 (dual solver)", !(degenerate && mode == SolverMode::DualSolver), format!("sigma_B = {}", b.sigma_b));
    if degenerate && mode == SolverMode::BenchmarkOnly {
        d.detail.push_str("; allowed for benchmark path simulation");
    }
    checks.push(d);
    checks.push(Check {
        id: "rho0".into(),
        condition: "rho > rho_0".into(),
        status: CheckStatus::NotChecked,
        detail: "not checked - see documentation".into(),
    });
    ValidationReport { checks, degenerate_benchmark: degenerate }
}
