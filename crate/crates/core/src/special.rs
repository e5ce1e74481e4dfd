//! Special functions not covered by `libm`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Depth of the continued fraction; ample for `x >= 2`.
fn cf_depth(x: f64) -> usize {
    (20.0 + 400.0 / (x * x)).min(200.0) as usize
}

/// `(1/2)/(x + 1/(x + (3/2)/(x + ...)))`, the tail of the erfc continued fraction.
fn cf_tail(x: f64) -> f64 {
    let mut t = 0.0;
    for n in (1..=cf_depth(x)).rev() {
        t = (n as f64 * 0.5) / (x + t);
    }
    t
}

/// Scaled complementary error function `exp(x²) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 2.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        1.0 / (SQRT_PI * (x + cf_tail(x)))
    }
}

/// `1 − √π x erfcx(x)` without cancellation for large `x`.
pub fn mills_gap(x: f64) -> f64 {
    if x < 2.0 {
        1.0 - SQRT_PI * x * erfcx(x)
    } else {
        let t = cf_tail(x);
        t / (x + t)
    }
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `P(N > x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `exp(a) · P(N > x)` evaluated without overflow.
pub fn exp_times_sf(a: f64, x: f64) -> f64 {
    if x > 0.0 {
        let w = x * FRAC_1_SQRT_2;
        0.5 * (a - w * w).exp() * erfcx(w)
    } else {
        a.exp() * norm_sf(x)
    }
}
