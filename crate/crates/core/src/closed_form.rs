//! Closed-form part `l(r, z)` of the dual value and the injection lower bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Model;

pub const DEFAULT_R_MAX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LPartials {
    pub l_r: f64,
    pub l_rr: f64,
    pub l_z: f64,
    pub l_rz: f64,
    pub l_zz: f64,
}

/// `l(r,z) = C1 β^{−k} e^{kr} + C2 β e^{−r} + z(β e^{−r} − (β/ℓ) e^{−ℓr})`, `k = p/(1−p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormL {
    pub p: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    pub mu_z: f64,
    pub sigma_z: f64,
    pub kappa2: f64,
    pub ell: f64,
    pub c1: f64,
    pub c2: f64,
    /// `C1 β^{−k}`
    pub c1_scaled: f64,
    /// Arguments beyond this are clamped.
    pub r_max: f64,
}

impl ClosedFormL {
    pub fn new(model: &Model) -> Self {
        let dc = &model.derived;
        let b = model.bench();
        let p = model.p();
        let k = p / (1.0 - p);
        let r_max = if k > 0.0 { DEFAULT_R_MAX.min(700.0 / k) } else { DEFAULT_R_MAX };
        ClosedFormL {
            p,
            rho: model.rho(),
            beta: model.beta(),
            alpha: dc.alpha,
            mu_z: b.mu_z,
            sigma_z: b.sigma_z,
            kappa2: dc.kappa2,
            ell: dc.ell,
            c1: dc.c1,
            c2: dc.c2,
            c1_scaled: dc.c1 * model.beta().powf(-k),
            r_max,
        }
    }

    pub fn k(&self) -> f64 {
        self.p / (1.0 - self.p)
    }

    /// True when `r` lies beyond the clamp.
    pub fn is_clamped(&self, r: f64) -> bool {
        r > self.r_max
    }

    fn a(&self) -> f64 {
        self.c1_scaled
    }

    pub fn value(&self, r: f64, z: f64) -> f64 {
        let r = r.min(self.r_max);
        let k = self.k();
        let er = (-r).exp();
        self.a() * (k * r).exp() + self.c2 * self.beta * er + z * self.beta * (er - (-self.ell * r).exp() / self.ell)
    }

    pub fn partials(&self, r: f64, z: f64) -> LPartials {
        let r = r.min(self.r_max);
        let k = self.k();
        let b = self.beta;
        let ekr = self.a() * (k * r).exp();
        let er = (-r).exp();
        let el = (-self.ell * r).exp();
        LPartials {
            l_r: k * ekr - self.c2 * b * er + z * b * (el - er),
            l_rr: k * k * ekr + self.c2 * b * er + z * b * (er - self.ell * el),
            l_z: b * er - b / self.ell * el,
            l_rz: b * (el - er),
            l_zz: 0.0,
        }
    }

    /// Residual of the Neumann problem solved by `l` at an interior point.
    pub fn pde_residual(&self, r: f64, z: f64) -> f64 {
        let v = self.value(r, z);
        let d = self.partials(r, z);
        let a2 = self.alpha * self.alpha;
        let k = self.k();
        0.5 * a2 * d.l_rr
            + (0.5 * a2 - self.rho) * d.l_r
            + 0.5 * self.sigma_z.powi(2) * z * z * d.l_zz
            + self.mu_z * z * d.l_z
            + self.kappa2 * z * d.l_rz
            + (self.kappa2 - self.mu_z) * self.beta * z * (-r).exp()
            + (1.0 - self.p) / self.p * self.beta.powf(-k) * (k * r).exp()
            - self.rho * v
    }

    pub fn tilde_w(&self, v: f64, z: f64) -> Result<f64> {
        tilde_w(v, z, self.ell)
    }
}

/// Lower bound `z(1−ℓ)/ℓ · (1 + (v−z)⁺/z)^{ℓ/(ℓ−1)}` on the discounted injection.
pub fn tilde_w(v: f64, z: f64, ell: f64) -> Result<f64> {
    if !(ell > 0.0 && ell < 1.0) {
        return Err(Error::DegenerateEll(ell));
    }
    if !(z > 0.0) || !(v >= 0.0) {
        return Err(Error::Domain(format!("tilde_w needs z > 0, v >= 0 (got v = {v}, z = {z})")));
    }
    let excess = (v - z).max(0.0) / z;
    Ok(z * (1.0 - ell) / ell * (1.0 + excess).powf(ell / (ell - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Model, ModelParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> ClosedFormL {
        ClosedFormL::new(&Model::new(ModelParams::reference()).unwrap())
    }

    fn rho_one() -> ClosedFormL {
        let mut p = ModelParams::reference();
        p.preferences.rho = 1.0;
        ClosedFormL::new(&Model::new(p).unwrap())
    }

    #[test]
    fn value_at_origin() {
        let l = reference();
        let z = 0.7;
        let expect = l.c1 * l.beta.powf(-l.k()) + l.c2 * l.beta + z * l.beta * (1.0 - 1.0 / l.ell);
        assert_relative_eq!(l.value(0.0, z), expect, max_relative = 1e-15);
    }

    #[test]
    fn value_z0_r1() {
        let l = rho_one();
        let c = 0.25 / 0.4975;
        assert_relative_eq!(l.value(1.0, 0.0), c * 1f64.exp() + c * (-1f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn neumann_at_zero() {
        let l = reference();
        for z in [0.0, 0.3, 1.0, 4.0] {
            assert!(l.partials(0.0, z).l_r.abs() < 1e-15);
            let h = 1e-6;
            let fd = (l.value(h, z) - l.value(0.0, z)) / h;
            assert!(fd.abs() < 1e-6, "{fd}");
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let l = reference();
        let (r, z, h) = (0.7, 1.3, 1e-5);
        let d = l.partials(r, z);
        let fd_r = (l.value(r + h, z) - l.value(r - h, z)) / (2.0 * h);
        assert!((fd_r - d.l_r).abs() < 1e-8);
        let fd_rr = (l.partials(r + h, z).l_r - l.partials(r - h, z).l_r) / (2.0 * h);
        assert!((fd_rr - d.l_rr).abs() < 1e-8);
        let fd_z = (l.value(r, z + h) - l.value(r, z - h)) / (2.0 * h);
        assert!((fd_z - d.l_z).abs() < 1e-8);
        let fd_rz = (l.partials(r, z + h).l_r - l.partials(r, z - h).l_r) / (2.0 * h);
        assert!((fd_rz - d.l_rz).abs() < 1e-8);
        assert_eq!(d.l_zz, 0.0);
    }

    #[test]
    fn pde_residual_grid() {
        for l in [reference(), rho_one()] {
            for i in 0..20 {
                for j in 0..20 {
                    let r = 5.0 * i as f64 / 19.0;
                    let z = 5.0 * j as f64 / 19.0;
                    assert!(l.pde_residual(r, z).abs() < 1e-9, "r={r} z={z}");
                }
            }
        }
    }

    #[test]
    fn growth_bound() {
        let l = reference();
        let k = l.k();
        let q = 2f64.max(k + 0.1);
        let c = l.c1.abs() * l.beta.powf(-k) + l.c2 * l.beta + l.beta * (1.0 + 1.0 / l.ell);
        for i in 0..30 {
            for j in 0..30 {
                let r = 0.5 * i as f64;
                let z = 0.5 * j as f64;
                assert!(l.value(r, z).abs() <= c * (1.0 + (q * r).exp() + z.powf(q)));
            }
        }
    }

    #[test]
    fn l_r_lower_bound() {
        // Coefficient 2(1−p)² (the printed derivation's 2(1−p) fails for p in (0,1)).
        let l = reference();
        let p = l.p;
        let den = 2.0 * l.rho * (1.0 - p) - l.alpha * l.alpha * p;
        for i in 0..40 {
            for z in [0.0, 0.5, 2.0] {
                let r = 1.0 + 0.25 * i as f64;
                let y = l.beta * (-r).exp();
                let bound = y.powf(-l.k()) * 2.0 * (1.0 - p).powi(2) / den * (1.0 - (-r / (1.0 - p)).exp());
                assert!(l.partials(r, z).l_r >= bound * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn clamp_flag() {
        let l = reference();
        assert!(!l.is_clamped(10.0));
        assert!(l.is_clamped(60.0));
        assert_eq!(l.value(60.0, 1.0), l.value(l.r_max, 1.0));
        assert!(l.value(60.0, 1.0).is_finite());
    }

    #[test]
    fn tilde_w_examples() {
        assert_relative_eq!(tilde_w(0.5, 1.0, 0.5).unwrap(), 1.0);
        assert_relative_eq!(tilde_w(2.0, 1.0, 0.5).unwrap(), 0.5, max_relative = 1e-15);
        assert!(tilde_w(3.0, 1.0, 0.5).unwrap() <= tilde_w(2.0, 1.0, 0.5).unwrap());
        assert!(matches!(tilde_w(1.0, 1.0, 1.2), Err(Error::DegenerateEll(_))));
    }

    proptest! {
        #[test]
        fn residual_random_params(p in prop_oneof![-3.0f64..-0.05, 0.05f64..0.9], rho in 0.5f64..4.0, mu in 0.05f64..0.5, sz in 0.0f64..0.4, mz in -0.2f64..0.2, r in 0.0f64..5.0, z in 0.0f64..5.0) {
            let mut params = ModelParams::reference();
            params.preferences.p = p;
            params.preferences.rho = rho;
            params.market.mu = vec![mu];
            params.benchmark.sigma_z = sz;
            params.benchmark.mu_z = mz;
            let model = Model::new(params).unwrap();
            let l = ClosedFormL::new(&model);
            let scale = 1.0 + l.value(r, z).abs() + l.partials(r, z).l_rr.abs();
            prop_assert!(l.pde_residual(r, z).abs() < 1e-12 * scale * 1e3);
            prop_assert!(l.partials(0.0, z).l_r.abs() < 1e-12 * scale);
        }

        #[test]
        fn tilde_w_nonincreasing(z in 0.1f64..3.0, v1 in 0.0f64..5.0, dv in 0.0f64..5.0, ell in 0.05f64..0.95) {
            prop_assert!(tilde_w(v1 + dv, z, ell).unwrap() <= tilde_w(v1, z, ell).unwrap() * (1.0 + 1e-15));
        }
    }
}
