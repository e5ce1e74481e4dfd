//! Dual inversion and feedback controls.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dual_solver::DualField;
use crate::error::{Error, Result};

/// Solution of `û_y(y*,h,z) = −x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualRoot {
    pub y_star: f64,
    /// `r* = −ln(y*/β)`
    pub r_star: f64,
    pub iterations: u32,
    /// `|û_y(y*) + x|`
    pub residual: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub x: f64,
    pub h: f64,
    pub z: f64,
    pub y_star: f64,
    pub u_value: f64,
    pub theta_star: Vec<f64>,
    pub c_star: f64,
    pub iterations: u32,
    pub residual: f64,
    pub extrapolated: bool,
}

const MAX_ITER: u32 = 200;

/// Finds `y* ∈ (0,β]` with `û_y(y*,h,z) = −x`.
///
/// Works in `r = −ln(y/β)`, where `F(r) = v_r e^{r} − βx` is increasing; Newton steps
/// are kept inside a shrinking bracket and replaced by bisection when they leave it.
pub fn invert_dual(field: &DualField, x: f64, h: f64, z: f64) -> Result<DualRoot> {
    solve(field, x, h, z, None)
}

/// [`invert_dual`] started from a nearby `r*`, as along a simulated path.
pub fn invert_dual_near(field: &DualField, x: f64, h: f64, z: f64, r_guess: f64) -> Result<DualRoot> {
    solve(field, x, h, z, Some(r_guess))
}

fn solve(field: &DualField, x: f64, h: f64, z: f64, guess: Option<f64>) -> Result<DualRoot> {
    if !(x >= 0.0) || !x.is_finite() || !(h >= 0.0) || !(z >= 0.0) {
        return Err(Error::Domain(format!("invert_dual needs x, h, z >= 0 (got {x}, {h}, {z})")));
    }
    let beta = field.beta();
    if x == 0.0 {
        return Ok(DualRoot { y_star: beta, r_star: 0.0, iterations: 0, residual: 0.0, extrapolated: field.psi_at(0.0, h).extrapolated });
    }
    let target = beta * x;
    let tol = 1e-10 * (1.0 + x) * beta;
    let r_limit = field.closed_form().r_max;
    let f = |r: f64| {
        let (m, dm) = field.marginal(r, h, z);
        (m - target, dm)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = 0;
    let mut r = f64::NAN;
    let root = |r: f64, fr: f64, iterations: u32| DualRoot {
        y_star: beta * (-r).exp(),
        r_star: r,
        iterations,
        residual: fr.abs() / beta,
        extrapolated: !field.covers(r, h),
    };
    if let Some(g) = guess.filter(|g| *g > 0.0 && *g < r_limit) {
        let (fg, dfg) = f(g);
        iterations += 1;
        if fg.abs() <= tol {
            return Ok(root(g, fg, iterations));
        }
        // Unbracketed Newton from the warm start while |F| keeps shrinking fast.
        let (mut rn, mut fn_, mut dfn) = (g, fg, dfg);
        for _ in 0..4 {
            let next = rn - fn_ / dfn;
            if !(dfn > 0.0) || !(next > 0.0 && next < r_limit) {
                break;
            }
            let (fx, dfx) = f(next);
            iterations += 1;
            if fx.abs() <= tol {
                return Ok(root(next, fx, iterations));
            }
            if fx.abs() > 0.5 * fn_.abs() {
                break;
            }
            (rn, fn_, dfn) = (next, fx, dfx);
        }
        let mut step = 0.05;
        if fg < 0.0 {
            lo = g;
            loop {
                hi = (g + step).min(r_limit);
                iterations += 1;
                if f(hi).0 >= 0.0 {
                    break;
                }
                lo = hi;
                if hi >= r_limit {
                    return Err(Error::Bracket { x, r_limit });
                }
                step *= 4.0;
            }
        } else {
            hi = g;
            loop {
                lo = (g - step).max(0.0);
                iterations += 1;
                if lo == 0.0 || f(lo).0 < 0.0 {
                    break;
                }
                hi = lo;
                step *= 4.0;
            }
        }
        r = g;
    } else {
        loop {
            let (fh, _) = f(hi);
            iterations += 1;
            if fh >= 0.0 {
                break;
            }
            lo = hi;
            if hi >= r_limit {
                return Err(Error::Bracket { x, r_limit });
            }
            hi = (2.0 * hi).min(r_limit);
        }
    }
    if !(r > lo && r < hi) {
        r = 0.5 * (lo + hi);
    }
    let fr = loop {
        let (fr, dfr) = f(r);
        iterations += 1;
        if fr.abs() <= tol || beta * (-lo).exp() - beta * (-hi).exp() < 1e-13 {
            break fr;
        }
        if iterations > MAX_ITER {
            return Err(Error::Numerical(format!("dual inversion did not converge at x = {x}")));
        }
        if fr > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let newton = r - fr / dfr;
        r = if dfr > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    };
    Ok(root(r, fr, iterations))
}

/// `u(x,h,z) = û(y*) + x y*`.
pub fn primal_value(field: &DualField, x: f64, h: f64, z: f64) -> Result<f64> {
    let root = invert_dual(field, x, h, z)?;
    Ok(field.v(root.r_star, h, z) + x * root.y_star)
}

/// Value in the original variables `(v, m, z, b)`.
pub fn original_value(field: &DualField, v: f64, m: f64, z: f64, b: f64) -> Result<f64> {
    if !(v >= 0.0 && m >= 0.0 && z >= 0.0) {
        return Err(Error::Domain("original_value needs v, m, z >= 0".into()));
    }
    let mb = m.max(b);
    if v >= mb + z {
        primal_value(field, v - mb - z, mb - b, z)
    } else {
        Ok(primal_value(field, 0.0, mb - b, z)? - field.beta() * (mb + z - v))
    }
}

/// `(θ*, c*)` at `(x,h,z)` via the second-order dual relations.
pub fn feedback_controls(field: &DualField, x: f64, h: f64, z: f64) -> Result<(Vec<f64>, f64)> {
    let root = invert_dual(field, x, h, z)?;
    controls_at(field, &root, h, z)
}

pub(crate) fn controls_at(field: &DualField, root: &DualRoot, h: f64, z: f64) -> Result<(Vec<f64>, f64)> {
    let y = root.y_star;
    let (v_r, v_rr, v_rh, v_rz) = field.control_partials(root.r_star, h, z);
    let u_yy = (v_rr + v_r) / (y * y);
    if !(u_yy > 0.0) {
        return Err(Error::Convexity { r: root.r_star, h, value: v_rr + v_r });
    }
    let model = field.model();
    let b = model.bench();
    let u_x = y;
    let u_xx = -1.0 / u_yy;
    let u_xh = v_rh / (y * u_yy);
    let u_xz = v_rz / (y * u_yy);
    let gamma = DVector::from_vec(b.gamma.clone());
    let eta = DVector::from_vec(b.eta.clone());
    let inner = model.market_price_of_risk() * u_x - gamma * (b.sigma_b * u_xh) - eta * (b.sigma_z * z * (u_xx - u_xz));
    let theta = model.sigma_inv().transpose() * inner * (-1.0 / u_xx);
    let c = y.powf(1.0 / (model.p() - 1.0));
    Ok((theta.iter().copied().collect(), c))
}

/// Everything the policy needs at one state.
pub fn evaluate(field: &DualField, x: f64, h: f64, z: f64) -> Result<PolicyEvaluation> {
    let root = invert_dual(field, x, h, z)?;
    let (theta, c) = controls_at(field, &root, h, z)?;
    Ok(PolicyEvaluation {
        x,
        h,
        z,
        y_star: root.y_star,
        u_value: field.v(root.r_star, h, z) + x * root.y_star,
        theta_star: theta,
        c_star: c,
        iterations: root.iterations,
        residual: root.residual,
        extrapolated: root.extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_solver::{build_dual_field, GridSpec};
    use crate::mc::McConfig;
    use crate::params::{Model, ModelParams};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn field() -> &'static DualField {
        static F: OnceLock<DualField> = OnceLock::new();
        F.get_or_init(|| {
            let m = Model::new(ModelParams::reference()).unwrap();
            build_dual_field(&m, &McConfig::new(400, 2e-3, 6.0, 11), &GridSpec::new(4.0, 1.5, 17, 17).with_h_grading(2.0)).unwrap()
        })
    }

    #[test]
    fn zero_wealth_gives_beta() {
        let f = field();
        let r = invert_dual(f, 0.0, 0.3, 0.8).unwrap();
        assert_eq!(r.y_star, f.beta());
        let (_, c) = feedback_controls(f, 0.0, 0.3, 0.8).unwrap();
        assert_eq!(c, f.beta().powf(1.0 / (f.model().p() - 1.0)));
    }

    #[test]
    fn round_trip() {
        let f = field();
        let beta = f.beta();
        for (h, z) in [(0.0, 0.8), (0.5, 0.8), (0.2, 2.0)] {
            let y0 = beta / 2.0;
            let x = -f.u_hat_partials(y0, h, z).unwrap().u_y;
            let y = invert_dual(f, x, h, z).unwrap().y_star;
            assert!((y - y0).abs() < 1e-9, "{y} vs {y0}");
        }
    }

    #[test]
    fn warm_start_agrees() {
        let f = field();
        for (x, g) in [(1.0, 0.01), (1.0, 3.0), (0.3, 40.0), (50.0, 0.5)] {
            let a = invert_dual(f, x, 0.4, 0.8).unwrap();
            let b = invert_dual_near(f, x, 0.4, 0.8, g).unwrap();
            assert!((a.y_star - b.y_star).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_within_tolerance() {
        let f = field();
        for x in [1e-6, 0.1, 1.0, 10.0, 300.0] {
            let r = invert_dual(f, x, 0.5, 0.8).unwrap();
            assert!(r.residual <= 1e-10 * (1.0 + x), "x={x}: {}", r.residual);
            assert!(r.y_star > 0.0 && r.y_star <= f.beta());
        }
    }

    #[test]
    fn bracket_error_beyond_reach() {
        let f = field();
        assert!(matches!(invert_dual(f, 1e300, 0.5, 0.8), Err(Error::Bracket { .. })));
        assert!(invert_dual(f, -1.0, 0.5, 0.8).is_err());
    }

    #[test]
    fn original_value_branches() {
        let f = field();
        let w = original_value(f, 2.0, 0.0, 0.8, 1.0).unwrap();
        assert!((w - primal_value(f, 0.2, 0.0, 0.8).unwrap()).abs() < 1e-14);
        let seam = original_value(f, 1.8, 0.0, 0.8, 1.0).unwrap();
        assert!((seam - primal_value(f, 0.0, 0.0, 0.8).unwrap()).abs() < 1e-15);
        let a = original_value(f, 1.0, 0.0, 0.8, 1.0).unwrap();
        let b = original_value(f, 1.5, 0.0, 0.8, 1.0).unwrap();
        assert!((b - a - 0.5 * f.beta()).abs() < 1e-12);
    }

    #[test]
    fn consumption_bound() {
        let f = field();
        let cq = f.model().derived.cq;
        for x in [0.0, 0.5, 2.0, 20.0] {
            let (_, c) = feedback_controls(f, x, 0.3, 0.8).unwrap();
            assert!(c > 0.0 && c <= cq * (1.0 + x));
        }
    }

    #[test]
    fn theta_matches_finite_differences() {
        let f = field();
        let m = f.model();
        let (x, h, z) = (1.0, 0.5, 0.8);
        let e = 1e-3;
        let u = |a: f64, b: f64, c: f64| primal_value(f, a, b, c).unwrap();
        let ux = (u(x + e, h, z) - u(x - e, h, z)) / (2.0 * e);
        let uxx = (u(x + e, h, z) - 2.0 * u(x, h, z) + u(x - e, h, z)) / (e * e);
        let uxh = (u(x + e, h + e, z) - u(x + e, h - e, z) - u(x - e, h + e, z) + u(x - e, h - e, z)) / (4.0 * e * e);
        let uxz = (u(x + e, h, z + e) - u(x + e, h, z - e) - u(x - e, h, z + e) + u(x - e, h, z - e)) / (4.0 * e * e);
        let b = m.bench();
        let lam = m.market_price_of_risk()[0];
        let sigma = m.sigma()[(0, 0)];
        let mu = lam * sigma;
        // θ-dependent part of the Hamiltonian with X-diffusion σθ − σ_Z z and I-diffusion −σ_B.
        let ham = |th: f64| {
            let q = sigma * th - b.sigma_z * z;
            th * mu * ux + 0.5 * q * q * uxx - b.sigma_b * q * uxh + b.sigma_z * z * q * uxz
        };
        let (hm, h0, hp) = (ham(-1.0), ham(0.0), ham(1.0));
        let fd = 0.5 * (hm - hp) / (hm - 2.0 * h0 + hp);
        let (theta, _) = feedback_controls(f, x, h, z).unwrap();
        assert!((theta[0] - fd).abs() < 1e-3 * (1.0 + fd.abs()), "{} vs {fd}", theta[0]);
        assert!((ux - invert_dual(f, x, h, z).unwrap().y_star).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn monotone_and_concave(x1 in 0.0f64..5.0, x2 in 0.0f64..5.0, h in 0.0f64..1.5, z in 0.0f64..3.0) {
            let f = field();
            let (a, b) = (x1.min(x2), x1.max(x2));
            let ya = invert_dual(f, a, h, z).unwrap().y_star;
            let yb = invert_dual(f, b, h, z).unwrap().y_star;
            prop_assert!(ya >= yb);
            let ua = primal_value(f, a, h, z).unwrap();
            let ub = primal_value(f, b, h, z).unwrap();
            prop_assert!(ub >= ua - 1e-12);
            prop_assert!(ub - ua <= f.beta() * (b - a) + 1e-12);
            let um = primal_value(f, 0.5 * (a + b), h, z).unwrap();
            prop_assert!(um >= 0.5 * (ua + ub) - 1e-9);
            let (_, ca) = feedback_controls(f, a, h, z).unwrap();
            let (_, cb) = feedback_controls(f, b, h, z).unwrap();
            prop_assert!(cb >= ca);
        }
    }
}
