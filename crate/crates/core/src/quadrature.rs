//! Adaptive Gauss–Kronrod (7/15) quadrature with global error control.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-10, max_segments: 4000 }
    }
}

impl QuadOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOptions { abs_tol, rel_tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    let value = k * h;
    let mut error = ((k - g) * h).abs();
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Segment { a, b, value, error }
}

/// Integrates `f` over `[a, b]`, splitting first at the interior `breaks`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: QuadOptions) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Numerical(format!("bad integration interval [{a}, {b}]")));
    }
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in pts.windows(2) {
        heap.push(gk15(&mut f, w[0], w[1]));
        evals += 15;
    }
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(QuadResult { value, error, evaluations: evals });
        }
        if heap.len() >= opts.max_segments {
            if error <= 1e3 * target {
                return Ok(QuadResult { value, error, evaluations: evals });
            }
            return Err(Error::Numerical(format!("quadrature did not converge: value {value:.6e}, error {error:.3e}")));
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::Numerical("quadrature interval underflow".into()));
        }
        heap.push(gk15(&mut f, worst.a, mid));
        heap.push(gk15(&mut f, mid, worst.b));
        evals += 30;
    }
}

/// Break points at geometrically spaced offsets around a peak of scale `width`.
pub fn peak_breaks(centre: f64, width: f64) -> Vec<f64> {
    let mut v = vec![centre];
    let mut d = 0.5 * width;
    while d < 64.0 * width {
        v.push(centre - d);
        v.push(centre + d);
        d *= 2.0;
    }
    v
}

/// Integrates over `[0, ∞)` after substituting `s = u²`, which removes `s^{-1/2}`
/// singularities at the origin; `s_max` is the truncation point.
pub fn integrate_sqrt_sub<F: FnMut(f64) -> f64>(mut f: F, s_max: f64, breaks: &[f64], opts: QuadOptions) -> Result<QuadResult> {
    let ub: Vec<f64> = breaks.iter().filter(|&&s| s > 0.0).map(|s| s.sqrt()).collect();
    integrate(|u| 2.0 * u * f(u * u), 0.0, s_max.sqrt(), &ub, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, &[], QuadOptions::default()).unwrap();
        assert!((r.value - (8.0 - 2.0 + 4.0 - (-1.0 - 0.5 - 2.0))).abs() < 1e-13);
    }

    #[test]
    fn gaussian_peak() {
        let s = 1e-3;
        let f = |x: f64| (-(x - 0.3) * (x - 0.3) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let r = integrate(f, 0.0, 10.0, &peak_breaks(0.3, s), QuadOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sqrt_singularity() {
        // ∫₀^∞ e^{-s}/√s ds = √π
        let r = integrate_sqrt_sub(|s| (-s).exp() / s.sqrt(), 60.0, &[], QuadOptions::default()).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn divergent_reports_error() {
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, &[], QuadOptions { max_segments: 50, ..Default::default() });
        assert!(r.is_err());
    }
}
