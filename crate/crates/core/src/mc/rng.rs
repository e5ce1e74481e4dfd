//! Counter-based per-path random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::stats::Moments;
use super::McConfig;

/// SplitMix64 finalizer, used to derive stage seeds from one user seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gaussian and uniform draws for one path; `sign = −1` gives the antithetic twin.
pub struct PathNoise {
    rng: ChaCha8Rng,
    sign: f64,
}

impl PathNoise {
    pub fn new(seed: u64, stream: u64, antithetic: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PathNoise { rng, sign: if antithetic { -1.0 } else { 1.0 } }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.sign * z
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }
}

const CHUNK: usize = 16;

/// Runs `f(noise, out)` for every path and returns moments of the per-unit outputs.
///
/// `out` has length `dim` and is zeroed before each path; antithetic twins are averaged.
/// Chunks are reduced in index order so the result does not depend on thread count.
pub(crate) fn for_each_unit<F>(cfg: &McConfig, dim: usize, f: F) -> Moments
where
    F: Fn(&mut PathNoise, &mut [f64]) + Sync,
{
    let units = cfg.n_units();
    let n_chunks = units.div_ceil(CHUNK);
    let run_chunk = |c: usize| {
        let mut m = Moments::new(dim);
        let mut out = vec![0.0; dim];
        let mut twin = vec![0.0; dim];
        for u in (c * CHUNK)..((c + 1) * CHUNK).min(units) {
            out.iter_mut().for_each(|x| *x = 0.0);
            f(&mut PathNoise::new(cfg.seed, u as u64, false), &mut out);
            if cfg.antithetic {
                twin.iter_mut().for_each(|x| *x = 0.0);
                f(&mut PathNoise::new(cfg.seed, u as u64, true), &mut twin);
                out.iter_mut().zip(&twin).for_each(|(a, b)| *a = 0.5 * (*a + b));
            }
            m.push(&out);
        }
        m
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Moments> = {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(run_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Moments> = (0..n_chunks).map(run_chunk).collect();
    let mut total = Moments::new(dim);
    for p in &parts {
        total.merge(p);
    }
    total
}
