use serde::{Deserialize, Serialize};

/// Value, standard error, sample count and horizon-truncation bound of an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub truncation_bound: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0, n: 0, truncation_bound: 0.0 }
    }

    pub fn ci(&self, k: f64) -> (f64, f64) {
        (self.value - k * self.std_error, self.value + k * self.std_error)
    }

    /// Sum of independent estimates.
    pub fn plus(&self, o: &Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            std_error: self.std_error.hypot(o.std_error),
            n: self.n.min(o.n),
            truncation_bound: self.truncation_bound + o.truncation_bound,
        }
    }

    pub fn scaled(&self, c: f64) -> Estimate {
        Estimate { value: c * self.value, std_error: c.abs() * self.std_error, truncation_bound: c.abs() * self.truncation_bound, ..*self }
    }

    pub fn with_truncation(mut self, bound: f64) -> Self {
        self.truncation_bound = bound;
        self
    }
}

/// Chan–Welford running moments for a vector of outputs.
#[derive(Debug, Clone)]
pub struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Moments { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = o.clone();
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = o.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += o.m2[i] + d * d * na * nb / n;
        }
        self.n += o.n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    pub fn variance(&self, i: usize) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2[i] / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Estimate for output `i`; `paths` is the reported sample count.
    pub fn estimate(&self, i: usize, paths: usize) -> Estimate {
        Estimate { value: self.mean[i], std_error: (self.variance(i) / self.n.max(1) as f64).sqrt(), n: paths, truncation_bound: 0.0 }
    }
}
