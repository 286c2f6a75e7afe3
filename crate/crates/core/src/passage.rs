//! First-passage sampling of `Xbar_t = X_t - m t` below negative levels.
//!
//! Continuous motion is never discretized: the passage time of the
//! Brownian-with-drift part is drawn from its inverse-Gaussian law, jumps
//! arrive at exact exponential times, and when a diffusion segment ends
//! without crossing, its endpoint is drawn from the law conditioned on
//! survival. A single path can serve a whole decreasing ladder of levels,
//! which is how common random numbers are shared across levels.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::ModelSpec;

/// Passage of `Xbar` below one level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Passage {
    pub hit: bool,
    /// Passage time, or the horizon when not hit.
    pub tau: f64,
    /// `Xbar` at the passage time (0 when not hit).
    pub position: f64,
}

/// One simulated first-passage event below `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageSample {
    pub hit: bool,
    pub tau: f64,
    pub position: f64,
    /// `e^{-(r-m) tau}` when hit, else 0.
    pub discount_weight: f64,
}

/// Horizon whose truncation bias bound `e^{-q H}` is a tenth of `target_se`.
pub fn horizon_for(q: f64, target_se: f64) -> f64 {
    (10.0 / target_se.max(1e-12)).ln().max(1.0) / q
}

/// Upper bound on the truncation bias of a discounted passage functional.
pub fn truncation_bound(q: f64, horizon: f64) -> f64 {
    (-q * horizon).exp()
}

/// Draws an inverse-Gaussian variate with the given mean and shape.
///
/// Uses the smaller root of the Michael-Schucany-Haas quadratic in a form
/// that stays accurate when `mean / shape` is huge (nearly driftless motion).
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let a = mean * z * z / (2.0 * shape);
    let small = mean / (1.0 + a + (a * (2.0 + a)).sqrt());
    let u: f64 = rng.random();
    if u * (mean + small) <= mean {
        small
    } else {
        mean * mean / small
    }
}

/// Validated per-model constants for path sampling.
#[derive(Debug, Clone, Copy)]
pub struct PassageSampler {
    drift: f64,
    sigma: f64,
    jump_rate: f64,
    p_down: f64,
    eta_down: f64,
    eta_up: f64,
    q: f64,
    horizon: f64,
}

impl PassageSampler {
    pub fn new(model: &ModelSpec, horizon: f64) -> Result<Self> {
        model.validate()?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return domain(format!("horizon must be finite and > 0, got {horizon}"));
        }
        let jump_rate = model.jump_rate();
        Ok(PassageSampler {
            drift: model.drift_adjusted(),
            sigma: model.sigma,
            jump_rate,
            p_down: if jump_rate > 0.0 { model.lambda_down / jump_rate } else { 0.0 },
            eta_down: model.eta_down,
            eta_up: model.eta_up,
            q: model.q(),
            horizon,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Time for Brownian motion with drift `self.drift` to fall by `depth > 0`;
    /// infinite when it never does.
    fn diffusive_passage<R: Rng + ?Sized>(&self, depth: f64, rng: &mut R) -> f64 {
        let toward = -self.drift;
        let s2 = self.sigma * self.sigma;
        let shape = depth * depth / s2;
        if toward > 0.0 {
            sample_inverse_gaussian(depth / toward, shape, rng)
        } else if toward < 0.0 {
            let reach = (-2.0 * (-toward) * depth / s2).exp();
            let u: f64 = rng.random();
            if u < reach {
                sample_inverse_gaussian(depth / -toward, shape, rng)
            } else {
                f64::INFINITY
            }
        } else {
            let z: f64 = rng.sample(StandardNormal);
            shape / (z * z)
        }
    }

    /// Endpoint after `dt` starting at `y`, conditioned on staying above `level`.
    fn surviving_endpoint<R: Rng + ?Sized>(&self, y: f64, level: f64, dt: f64, rng: &mut R) -> f64 {
        let mean = y + self.drift * dt;
        let sd = self.sigma * dt.sqrt();
        let s2dt = self.sigma * self.sigma * dt;
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let end = mean + sd * z;
            if end <= level {
                continue;
            }
            let cross = (-2.0 * (y - level) * (end - level) / s2dt).exp();
            let u: f64 = rng.random();
            if u >= cross {
                return end;
            }
        }
    }

    /// Simulates one path of `Xbar` and records the first passage below each
    /// of `levels`, which must be strictly decreasing and negative.
    pub fn sample_ladder<R: Rng + ?Sized>(&self, levels: &[f64], rng: &mut R, out: &mut [Passage]) {
        debug_assert_eq!(levels.len(), out.len());
        debug_assert!(levels.windows(2).all(|w| w[0] > w[1]));
        debug_assert!(levels.first().is_none_or(|&l| l < 0.0));
        for p in out.iter_mut() {
            *p = Passage {
                hit: false,
                tau: self.horizon,
                position: 0.0,
            };
        }
        let mut next = 0;
        let mut t = 0.0;
        let mut y = 0.0;
        while next < levels.len() {
            let jump_at = if self.jump_rate > 0.0 {
                let e: f64 = rng.sample(Exp1);
                t + e / self.jump_rate
            } else {
                f64::INFINITY
            };
            let seg_end = jump_at.min(self.horizon);

            // continuous motion on [t, seg_end]
            loop {
                let level = levels[next];
                let span = seg_end - t;
                let wait = if self.sigma > 0.0 {
                    self.diffusive_passage(y - level, rng)
                } else if self.drift < 0.0 {
                    (y - level) / -self.drift
                } else {
                    f64::INFINITY
                };
                if wait <= span {
                    t += wait;
                    y = level;
                    out[next] = Passage {
                        hit: true,
                        tau: t,
                        position: level,
                    };
                    next += 1;
                    if next == levels.len() {
                        return;
                    }
                } else {
                    if jump_at <= self.horizon {
                        y = if self.sigma > 0.0 {
                            self.surviving_endpoint(y, level, span, rng)
                        } else {
                            y + self.drift * span
                        };
                    }
                    t = seg_end;
                    break;
                }
            }
            if jump_at > self.horizon {
                return;
            }

            let u: f64 = rng.random();
            let size: f64 = rng.sample(Exp1);
            if u < self.p_down {
                y -= size / self.eta_down;
                while next < levels.len() && y <= levels[next] {
                    out[next] = Passage {
                        hit: true,
                        tau: t,
                        position: y,
                    };
                    next += 1;
                }
            } else {
                y += size / self.eta_up;
            }
        }
    }

    /// Single-level passage, with the discount weight attached.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> FirstPassageSample {
        let mut out = [Passage::default()];
        self.sample_ladder(&[x], rng, &mut out);
        let p = out[0];
        FirstPassageSample {
            hit: p.hit,
            tau: p.tau,
            position: p.position,
            discount_weight: if p.hit { (-self.q * p.tau).exp() } else { 0.0 },
        }
    }

    /// `Xbar_h` at a fixed time `h >= 0`, sampled exactly.
    pub fn sample_increment<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> f64 {
        let mut x = self.drift * h;
        if self.sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x += self.sigma * h.sqrt() * z;
        }
        if self.jump_rate > 0.0 {
            let mut t: f64 = rng.sample::<f64, _>(Exp1) / self.jump_rate;
            while t <= h {
                let u: f64 = rng.random();
                let size: f64 = rng.sample(Exp1);
                if u < self.p_down {
                    x -= size / self.eta_down;
                } else {
                    x += size / self.eta_up;
                }
                t += rng.sample::<f64, _>(Exp1) / self.jump_rate;
            }
        }
        x
    }
}

/// First passage of `Xbar` below `x < 0` before `horizon`.
pub fn simulate_first_passage<R: Rng + ?Sized>(
    model: &ModelSpec,
    x: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<FirstPassageSample> {
    if !(x < 0.0) || !x.is_finite() {
        return domain(format!("passage level must be finite and < 0, got {x}"));
    }
    Ok(PassageSampler::new(model, horizon)?.sample(x, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::path_rng;

    fn bm() -> ModelSpec {
        ModelSpec::brownian(0.0, 1.0, 0.5, 0.0, 1.0)
    }

    #[test]
    fn unreachable_level_is_missed() {
        let mut rng = path_rng(1, 0);
        for model in [
            bm(),
            ModelSpec::compound_poisson(0.2, 1.0, 2.0, 0.1, 0.0, 1.0),
            ModelSpec::kou(0.0, 0.2, 0.5, 5.0, 0.3, 8.0, 0.08, 0.0, 1.0),
        ] {
            let s = simulate_first_passage(&model, -1e6, 1.0, &mut rng).unwrap();
            assert!(!s.hit);
            assert_eq!(s.discount_weight, 0.0);
            assert_eq!(s.tau, 1.0);
        }
    }

    #[test]
    fn driftless_brownian_hits_without_overshoot() {
        let mut hits = 0;
        for i in 0..200 {
            let mut rng = path_rng(3, i);
            let s = simulate_first_passage(&bm(), -0.5, 1e4, &mut rng).unwrap();
            if s.hit {
                hits += 1;
                assert_eq!(s.position, -0.5);
            }
        }
        // P(miss by 1e4) = P(|Z| < 0.5/100) < 0.004
        assert!(hits >= 195, "hits = {hits}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = path_rng(1, 0);
        assert!(simulate_first_passage(&bm(), 0.0, 1.0, &mut rng).is_err());
        assert!(simulate_first_passage(&bm(), -1.0, 0.0, &mut rng).is_err());
        assert!(simulate_first_passage(&bm(), f64::NAN, 1.0, &mut rng).is_err());
        let mut bad = bm();
        bad.mu = f64::INFINITY;
        assert!(simulate_first_passage(&bad, -1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let model = ModelSpec::kou(0.0, 0.2, 0.5, 5.0, 0.3, 8.0, 0.08, 0.0, 1.0);
        let a = simulate_first_passage(&model, -0.3, 50.0, &mut path_rng(9, 4)).unwrap();
        let b = simulate_first_passage(&model, -0.3, 50.0, &mut path_rng(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ladder_is_pathwise_monotone() {
        let model = ModelSpec::kou(-0.05, 0.2, 0.5, 5.0, 0.3, 8.0, 0.08, 0.0, 1.0);
        let sampler = PassageSampler::new(&model, 100.0).unwrap();
        let levels = [-0.01, -0.05, -0.2, -0.6];
        let mut out = [Passage::default(); 4];
        for i in 0..500 {
            sampler.sample_ladder(&levels, &mut path_rng(11, i), &mut out);
            for k in 0..4 {
                if out[k].hit {
                    assert!(out[k].position <= levels[k]);
                }
                if k > 0 && out[k].hit {
                    assert!(out[k - 1].hit);
                    assert!(out[k - 1].tau <= out[k].tau);
                }
            }
        }
    }

    #[test]
    fn inverse_gaussian_mean() {
        let mut rng = path_rng(5, 0);
        let n = 200_000;
        let (mean, shape) = (2.0, 3.0);
        let xs: Vec<f64> = (0..n).map(|_| sample_inverse_gaussian(mean, shape, &mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Var = mean^3 / shape
        let se = (mean.powi(3) / shape / n as f64).sqrt();
        assert!((m - mean).abs() < 4.0 * se, "mean {m}");
        assert!((var - 8.0 / 3.0).abs() < 0.1, "var {var}");
        // huge mean/shape stays finite and positive
        for _ in 0..1000 {
            let x = sample_inverse_gaussian(1e12, 1e-3, &mut rng);
            assert!(x.is_finite() && x > 0.0);
        }
    }

    #[test]
    fn horizon_bound_is_a_tenth_of_target() {
        let h = horizon_for(0.05, 1e-3);
        assert!((truncation_bound(0.05, h) - 1e-4).abs() < 1e-12);
    }
}
