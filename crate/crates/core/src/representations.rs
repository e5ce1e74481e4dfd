//! Deterministic (quadrature) forms of the independent-driver local-time term
//! `φ(r,h) = −β E[∫ e^{−ρs−R_s} dG_s^h]` and its derivatives.

use std::f64::consts::PI;

use crate::densities::{BenchmarkKernel, DriftSpec};
use crate::error::Result;
use crate::params::Model;
use crate::quadrature::{integrate, integrate_sqrt_sub, peak_breaks, QuadOptions};
use crate::special::{erfcx, mills_gap};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Functionals of `(W̃_s, M̃_s)`, the dual driver and its running maximum.
#[derive(Debug, Clone, Copy)]
pub struct DualKernel {
    spec: DriftSpec,
    /// `1 + ν/σ`
    c: f64,
    rho: f64,
}

impl DualKernel {
    pub fn new(alpha: f64, rho: f64) -> Result<Self> {
        let spec = DriftSpec::dual_driver(alpha, rho)?;
        Ok(DualKernel { spec, c: 1.0 + spec.drift / spec.sigma, rho })
    }

    pub fn spec(&self) -> DriftSpec {
        self.spec
    }

    /// `I(s,y) = ∫_{−∞}^y e^x φ1(s,x,y) dx`, the density of `M̃_s` weighted by `e^{W̃_s}`.
    pub fn weighted_max_density(&self, s: f64, y: f64) -> f64 {
        let sig = self.spec.sigma;
        let nu = self.spec.drift;
        let tau = sig * sig * s;
        let st = (2.0 * tau).sqrt();
        let b = y / st;
        let w = b + self.c * tau / st;
        let bracket = mills_gap(w) + SQRT_PI * b * erfcx(w);
        let expo = self.c * y - 0.5 * nu * nu * s - y * y / (2.0 * tau);
        2.0 * expo.exp() / (sig * (2.0 * PI * s).sqrt()) * bracket
    }

    /// Location and width of the `y`-mass of `e^{−y} I(s, y)`.
    fn y_window(&self, s: f64) -> (f64, f64) {
        let sig = self.spec.sigma;
        let centre = (self.spec.drift * sig * s).max(0.0);
        (centre, sig * s.sqrt())
    }

    /// `E[e^{W̃_s} 1{M̃_s ≤ r}] = ∫₀^r I(s,y) dy`.
    pub fn j(&self, s: f64, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let (centre, width) = self.y_window(s);
        let peak = centre + self.spec.sigma * self.spec.sigma * s;
        let top = r.min(peak + 40.0 * width);
        let lower = (peak - 40.0 * width).max(0.0);
        if lower >= r {
            return Ok(0.0);
        }
        let res = integrate(|y| self.weighted_max_density(s, y), lower, top, &peak_breaks(peak, width), QuadOptions::new(1e-300, 1e-11))?;
        Ok(res.value)
    }

    /// `E[e^{−R_s^r}] = ∫₀^∞ e^{−max(r,y)} I(s,y) dy`.
    pub fn exp_neg_reflected(&self, s: f64, r: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok((-r).exp());
        }
        let (centre, width) = self.y_window(s);
        let lo = (centre - 40.0 * width).max(0.0);
        let hi = centre + 40.0 * width;
        let f = |y: f64| (-(y.max(r))).exp() * self.weighted_max_density(s, y);
        let mut breaks = peak_breaks(centre, width);
        breaks.push(r);
        let res = integrate(f, lo, hi.max(lo + width), &breaks, QuadOptions::new(1e-300, 1e-11))?;
        Ok(res.value)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Quadrature evaluation of `φ` and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct PhiQuadrature {
    pub dual: DualKernel,
    pub bench: BenchmarkKernel,
    pub beta: f64,
    pub rho: f64,
}

impl PhiQuadrature {
    pub fn new(model: &Model) -> Result<Self> {
        let b = model.bench();
        Ok(PhiQuadrature {
            dual: DualKernel::new(model.derived.alpha, model.rho())?,
            bench: BenchmarkKernel::new(b.mu_b, b.sigma_b)?,
            beta: model.beta(),
            rho: model.rho(),
        })
    }

    fn s_max(&self) -> f64 {
        45.0 / self.rho
    }

    fn s_breaks(&self, h: f64) -> Vec<f64> {
        let sb = self.bench.sigma_b;
        let mut v = vec![0.05 / self.rho, 0.5 / self.rho, 3.0 / self.rho];
        if h > 0.0 {
            let vb = (self.bench.mu_b * self.bench.mu_b + 2.0 * self.rho * sb * sb).sqrt();
            v.push(h * h / (3.0 * sb * sb));
            v.push(h / vb);
        }
        v.retain(|&s| s > 0.0 && s < self.s_max());
        v
    }

    fn opts(&self) -> QuadOptions {
        QuadOptions::new(1e-15, 1e-9)
    }

    /// `−β ∫ E[e^{−ρs−R_s}] dE[G_s^h]`.
    pub fn phi(&self, r: f64, h: f64) -> Result<f64> {
        let mut err = None;
        let res = integrate_sqrt_sub(
            |s| {
                let rate = self.bench.local_time_rate(s, h);
                if rate == 0.0 {
                    return 0.0;
                }
                match self.dual.exp_neg_reflected(s, r) {
                    Ok(v) => (-self.rho * s).exp() * v * rate,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            },
            self.s_max(),
            &self.s_breaks(h),
            self.opts(),
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(-self.beta * res.value)
    }

    /// `β e^{−r} ∫ e^{−ρs} J(s,r) dE[G_s^h]`.
    pub fn phi_r(&self, r: f64, h: f64) -> Result<f64> {
        let v = self.local_time_integral(h, |s| self.dual.j(s, r))?;
        Ok(self.beta * (-r).exp() * v)
    }

    /// `β e^{−r} ∫ e^{−ρs} I(s,r) dE[G_s^h] − φ_r`.
    pub fn phi_rr(&self, r: f64, h: f64) -> Result<f64> {
        let v = self.local_time_integral(h, |s| Ok(self.dual.weighted_max_density(s, r)))?;
        Ok(self.beta * (-r).exp() * v - self.phi_r(r, h)?)
    }

    /// `β ∫ e^{−ρs} φ2(s,h) E[e^{−R_s}] ds`, equal to `β e^{−r}` at `h = 0`.
    pub fn phi_h(&self, r: f64, h: f64) -> Result<f64> {
        if h <= 0.0 {
            return Ok(self.beta * (-r).exp());
        }
        let v = self.passage_integral(h, |s| self.dual.exp_neg_reflected(s, r))?;
        Ok(self.beta * v)
    }

    /// `−β e^{−r} Q(r,h)` with `Q = ∫ e^{−ρs} φ2(s,h) J(s,r) ds`.
    pub fn phi_rh(&self, r: f64, h: f64) -> Result<f64> {
        Ok(-self.beta * (-r).exp() * self.q(r, h)?)
    }

    /// `Q(r,h)`; `Q(r,0) = 1` for `r > 0`.
    pub fn q(&self, r: f64, h: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        if h <= 0.0 {
            return Ok(1.0);
        }
        self.passage_integral(h, |s| self.dual.j(s, r))
    }

    fn local_time_integral(&self, h: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let mut err = None;
        let res = integrate_sqrt_sub(
            |s| {
                let rate = self.bench.local_time_rate(s, h);
                if rate == 0.0 {
                    return 0.0;
                }
                match g(s) {
                    Ok(v) => (-self.rho * s).exp() * v * rate,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            },
            self.s_max(),
            &self.s_breaks(h),
            self.opts(),
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(res.value),
        }
    }

    fn passage_integral(&self, h: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let mut err = None;
        let res = integrate_sqrt_sub(
            |s| {
                let d = match self.bench.phi2(s, h) {
                    Ok(d) if d > 0.0 => d,
                    _ => return 0.0,
                };
                match g(s) {
                    Ok(v) => (-self.rho * s).exp() * d * v,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            },
            self.s_max(),
            &self.s_breaks(h),
            self.opts(),
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(res.value),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{phi1, ReflectedBm};
    use crate::params::ModelParams;

    fn model() -> Model {
        Model::new(ModelParams::reference()).unwrap()
    }

    fn stress() -> Model {
        let mut p = ModelParams::reference();
        p.market.mu = vec![0.6];
        p.benchmark.sigma_b = 0.5;
        p.benchmark.mu_b = 0.05;
        p.preferences.rho = 0.8;
        Model::new(p).unwrap()
    }

    #[test]
    fn inner_integral_matches_direct() {
        for m in [model(), stress()] {
            let k = DualKernel::new(m.derived.alpha, m.rho()).unwrap();
            let spec = k.spec();
            for (s, y) in [(0.1, 0.05), (0.5, 0.2), (1.0, 0.0), (2.0, 1.5), (0.3, 0.9)] {
                let direct =
                    integrate(|x| x.exp() * phi1(s, x, y, spec).unwrap(), y - 40.0 * spec.sigma * f64::sqrt(s) - 40.0, y, &[], QuadOptions::new(1e-300, 1e-12))
                        .unwrap()
                        .value;
                let closed = k.weighted_max_density(s, y);
                assert!((closed - direct).abs() <= 1e-9 * direct.abs() + 1e-300, "s={s} y={y}: {closed} vs {direct}");
            }
        }
    }

    #[test]
    fn j_total_is_exp_rho_s() {
        for m in [model(), stress()] {
            let k = DualKernel::new(m.derived.alpha, m.rho()).unwrap();
            for s in [0.01, 0.2, 1.0, 3.0] {
                let v = k.j(s, 1e6).unwrap();
                assert!((v / (m.rho() * s).exp() - 1.0).abs() < 1e-8, "s={s}: {v}");
            }
        }
    }

    #[test]
    fn exp_neg_reflected_matches_transition_density() {
        for m in [model(), stress()] {
            let a = m.derived.alpha;
            let k = DualKernel::new(a, m.rho()).unwrap();
            let rbm = ReflectedBm { drift: 0.5 * a * a - m.rho(), vol: a };
            for (s, r) in [(0.2, 0.0), (0.5, 0.5), (1.0, 1.0), (2.0, 0.1)] {
                let via_density =
                    integrate(|y| (-y).exp() * rbm.density(s, r, y).unwrap(), 0.0, r + 30.0 * a * f64::sqrt(s) + 1.0, &[r], QuadOptions::new(1e-15, 1e-12))
                        .unwrap()
                        .value;
                let v = k.exp_neg_reflected(s, r).unwrap();
                assert!((v - via_density).abs() < 1e-9, "s={s} r={r}: {v} vs {via_density}");
            }
        }
    }

    #[test]
    fn phi_h_boundary_and_derivative_consistency() {
        let m = stress();
        let q = PhiQuadrature::new(&m).unwrap();
        assert_eq!(q.phi_h(0.7, 0.0).unwrap(), (-0.7f64).exp());
        let (r, h, d) = (0.6, 0.4, 1e-4);
        let fd_h = (q.phi(r, h + d).unwrap() - q.phi(r, h - d).unwrap()) / (2.0 * d);
        assert!((fd_h - q.phi_h(r, h).unwrap()).abs() < 1e-6, "{fd_h}");
        let fd_r = (q.phi(r + d, h).unwrap() - q.phi(r - d, h).unwrap()) / (2.0 * d);
        assert!((fd_r - q.phi_r(r, h).unwrap()).abs() < 1e-6, "{fd_r}");
        let fd_rr = (q.phi_r(r + d, h).unwrap() - q.phi_r(r - d, h).unwrap()) / (2.0 * d);
        assert!((fd_rr - q.phi_rr(r, h).unwrap()).abs() < 1e-5, "{fd_rr}");
        let fd_rh = (q.phi_h(r + d, h).unwrap() - q.phi_h(r - d, h).unwrap()) / (2.0 * d);
        assert!((fd_rh - q.phi_rh(r, h).unwrap()).abs() < 1e-6, "{fd_rh}");
    }

    #[test]
    fn phi_rh_bound_and_signs() {
        for m in [model(), stress()] {
            let q = PhiQuadrature::new(&m).unwrap();
            for r in [0.0, 0.3, 1.0, 2.5] {
                for h in [0.0, 0.05, 0.5, 1.5] {
                    let v = q.phi_rh(r, h).unwrap();
                    assert!(v <= 0.0 && v.abs() <= m.beta() * (-r).exp() * (1.0 + 1e-9));
                    assert!(q.phi(r, h).unwrap() <= 0.0);
                    assert!(q.phi_r(r, h).unwrap() >= 0.0);
                }
            }
        }
    }
}
