//! Seeded substreams and deterministic parallel reduction over paths.
//!
//! Path `i` of a run with seed `s` always draws from ChaCha stream `i` keyed
//! by `s`. Paths are grouped in fixed-size chunks; chunk results are merged
//! in index order, so estimates do not depend on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type PathRng = ChaCha8Rng;

const CHUNK: usize = 1024;

/// SplitMix64 finalizer; used to derive independent seeds for distinct
/// purposes from one master seed.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tag: u64) -> u64 {
    mix64(master ^ mix64(tag))
}

pub fn path_rng(seed: u64, path: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Running sums for the sample mean and (co)variance of a per-path vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    n: u64,
    dim: usize,
    full: bool,
    sum: Vec<f64>,
    /// `dim * dim` cross products when `full`, otherwise `dim` squares.
    cross: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize, full: bool) -> Self {
        Moments {
            n: 0,
            dim,
            full,
            sum: vec![0.0; dim],
            cross: vec![0.0; if full { dim * dim } else { dim }],
        }
    }

    pub fn push(&mut self, y: &[f64]) {
        debug_assert_eq!(y.len(), self.dim);
        self.n += 1;
        for (s, v) in self.sum.iter_mut().zip(y) {
            *s += v;
        }
        if self.full {
            for i in 0..self.dim {
                let row = &mut self.cross[i * self.dim..(i + 1) * self.dim];
                for (c, v) in row.iter_mut().zip(y) {
                    *c += y[i] * v;
                }
            }
        } else {
            for (c, v) in self.cross.iter_mut().zip(y) {
                *c += v * v;
            }
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.mean(i)).collect()
    }

    /// Sample covariance of components `i` and `j`. Needs a full accumulator
    /// unless `i == j`.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let raw = if self.full {
            self.cross[i * self.dim + j]
        } else {
            assert_eq!(i, j, "cross covariance needs a full accumulator");
            self.cross[i]
        };
        let c = (raw - self.sum[i] * self.sum[j] / n) / (n - 1.0);
        if i == j {
            c.max(0.0)
        } else {
            c
        }
    }

    /// Standard error of the mean of component `i`.
    pub fn se(&self, i: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.cov(i, i) / self.n as f64).sqrt()
    }

    /// Mean of `sum_k w_k y_k`.
    pub fn combo_mean(&self, w: &[f64]) -> f64 {
        w.iter().enumerate().map(|(k, wk)| wk * self.mean(k)).sum()
    }

    /// Covariance between the means of two linear combinations.
    pub fn combo_cov(&self, a: &[f64], b: &[f64]) -> f64 {
        assert!(self.full, "linear-combination covariance needs a full accumulator");
        if self.n == 0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (i, ai) in a.iter().enumerate() {
            if *ai == 0.0 {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                acc += ai * bj * self.cov(i, j);
            }
        }
        acc / self.n as f64
    }
}

/// Runs `per_path` for paths `0..n_paths` and accumulates the vectors it
/// writes. Each path gets its own substream of `seed`.
pub fn reduce_paths<F>(n_paths: usize, seed: u64, dim: usize, full: bool, per_path: F) -> Moments
where
    F: Fn(&mut PathRng, &mut [f64]) + Sync,
{
    let chunks = n_paths.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut acc = Moments::new(dim, full);
            let mut buf = vec![0.0; dim];
            for i in k * CHUNK..((k + 1) * CHUNK).min(n_paths) {
                let mut rng = path_rng(seed, i as u64);
                buf.iter_mut().for_each(|b| *b = 0.0);
                per_path(&mut rng, &mut buf);
                acc.push(&buf);
            }
            acc
        })
        .collect();
    let mut total = Moments::new(dim, full);
    for part in &parts {
        total.merge(part);
    }
    total
}

/// Collects one value per path, in path order.
pub fn collect_paths<T, F>(n_paths: usize, seed: u64, per_path: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut PathRng) -> T + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| per_path(&mut path_rng(seed, i as u64)))
        .collect()
}
