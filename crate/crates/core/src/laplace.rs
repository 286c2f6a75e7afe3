//! The Laplace pair `L(x) = E[e^{-q tau_x}]`, `G(x) = E[e^{-q tau_x + Xbar_{tau_x}}]`
//! with `q = r - m`, and their one-sided behaviour at `x = 0-`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{self, Moments};
use crate::model::{check_assumptions, is_downward_regular, Family, ModelSpec};
use crate::passage::{horizon_for, truncation_bound, Passage, PassageSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub x: f64,
    pub l_hat: f64,
    pub g_hat: f64,
    pub se_l: f64,
    pub se_g: f64,
    /// Covariance of the two estimators.
    pub cov_lg: f64,
    pub n_paths: usize,
    pub horizon: f64,
    /// Bound on the bias from stopping paths at the horizon.
    pub truncation_bound: f64,
    pub source: Source,
}

/// Ladder settings for the left limits at `0-`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub ladder_start: f64,
    pub ladder_levels: usize,
    pub paths_per_level: usize,
    pub rel_tol: f64,
    /// Use the Monte Carlo ladder even when a closed form exists.
    pub force_monte_carlo: bool,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            ladder_start: 0.1,
            ladder_levels: 8,
            paths_per_level: 1_000_000,
            rel_tol: 1e-3,
            force_monte_carlo: false,
        }
    }
}

impl LimitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ladder_start > 0.0) || !self.ladder_start.is_finite() {
            return domain("ladder_start must be > 0");
        }
        if self.ladder_levels < 2 {
            return domain("ladder_levels must be >= 2");
        }
        if self.paths_per_level < 2 {
            return domain("paths_per_level must be >= 2");
        }
        if !(self.rel_tol > 0.0) {
            return domain("rel_tol must be > 0");
        }
        Ok(())
    }

    /// Ladder `x_k = -ladder_start * 2^-k`, deepest first.
    pub fn levels(&self) -> Vec<f64> {
        (0..self.ladder_levels)
            .map(|k| -self.ladder_start * 0.5f64.powi(k as i32))
            .collect()
    }
}

/// Two correlated estimates (of `L` and `G` or of their derivatives) with
/// the covariance of the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub l: f64,
    pub g: f64,
    pub var_l: f64,
    pub var_g: f64,
    pub cov_lg: f64,
}

impl PairEstimate {
    pub fn exact(l: f64, g: f64) -> Self {
        PairEstimate {
            l,
            g,
            var_l: 0.0,
            var_g: 0.0,
            cov_lg: 0.0,
        }
    }

    pub fn se_l(&self) -> f64 {
        self.var_l.sqrt()
    }

    pub fn se_g(&self) -> f64 {
        self.var_g.sqrt()
    }

    /// Standard error of `a * l + b * g`.
    pub fn combo_se(&self, a: f64, b: f64) -> f64 {
        (a * a * self.var_l + b * b * self.var_g + 2.0 * a * b * self.cov_lg)
            .max(0.0)
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftLimitEstimate {
    /// `lim_{x -> 0-} (1 - L(x)) / (1 - G(x))`.
    pub ratio_limit: f64,
    pub ratio_se: f64,
    /// `L(0-)`, `G(0-)`; both exactly 1 in the downward-regular case.
    pub limits: PairEstimate,
    /// `L'(0-)`, `G'(0-)`; only for downward-regular models.
    pub derivatives: Option<PairEstimate>,
    pub levels_used: Vec<f64>,
    /// `(1 - L(x_k)) / (1 - G(x_k))` on the ladder.
    pub ladder_ratios: Vec<f64>,
    /// Diagonal Richardson extrapolants of the ratio.
    pub iterates: Vec<f64>,
    pub converged: bool,
    /// Convergence declared because successive iterates agree within noise
    /// rather than within `rel_tol`.
    pub noise_limited: bool,
    pub n_paths: usize,
    pub source: Source,
}

impl LeftLimitEstimate {
    pub fn l_left_deriv(&self) -> Option<f64> {
        self.derivatives.map(|d| d.l)
    }

    pub fn g_left_deriv(&self) -> Option<f64> {
        self.derivatives.map(|d| d.g)
    }
}

fn require_admissible(model: &ModelSpec) -> Result<()> {
    model.validate()?;
    check_assumptions(model).require()
}

/// Positive root `gamma` of `sigma^2 g^2 / 2 - mu_bar g - q = 0`, so that
/// `L(x) = e^{gamma x}` for Brownian motion with drift `mu_bar = mu - m`.
pub fn brownian_gamma(model: &ModelSpec) -> Result<f64> {
    if model.family != Family::BrownianDrift {
        return domain(format!("closed form needs BrownianDrift, got {}", model.family));
    }
    model.validate()?;
    let mu_bar = model.drift_adjusted();
    let s2 = model.sigma * model.sigma;
    Ok((mu_bar + (mu_bar * mu_bar + 2.0 * model.q() * s2).sqrt()) / s2)
}

/// Closed-form pair for Brownian motion with drift: `L = e^{gamma x}`,
/// `G = e^{(gamma + 1) x}`.
pub fn analytic_pair_brownian(model: &ModelSpec, x: f64) -> Result<LaplaceEstimate> {
    if !(x < 0.0) || !x.is_finite() {
        return domain(format!("level must be finite and < 0, got {x}"));
    }
    let gamma = brownian_gamma(model)?;
    Ok(LaplaceEstimate {
        x,
        l_hat: (gamma * x).exp(),
        g_hat: ((gamma + 1.0) * x).exp(),
        se_l: 0.0,
        se_g: 0.0,
        cov_lg: 0.0,
        n_paths: 0,
        horizon: f64::INFINITY,
        truncation_bound: 0.0,
        source: Source::Analytic,
    })
}

/// Monte Carlo estimate of `(L(x), G(x))` at one level.
pub fn mc_pair(model: &ModelSpec, x: f64, n_paths: usize, horizon: f64, seed: u64) -> Result<LaplaceEstimate> {
    Ok(mc_pair_ladder(model, &[x], n_paths, horizon, seed)?.remove(0))
}

/// Monte Carlo estimates of `(L, G)` at several levels from one set of paths,
/// so the estimates share random numbers. Levels `>= 0` are passed at time 0
/// and get `L = G = 1` exactly.
///
/// The pair is well defined for any structurally valid model (`q > 0`); the
/// standing assumptions are enforced by the stopping-problem operations.
pub fn mc_pair_ladder(
    model: &ModelSpec,
    xs: &[f64],
    n_paths: usize,
    horizon: f64,
    seed: u64,
) -> Result<Vec<LaplaceEstimate>> {
    model.validate()?;
    if n_paths == 0 {
        return domain("n_paths must be >= 1");
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return domain("levels must be finite");
    }
    let sampler = PassageSampler::new(model, horizon)?;
    let q = model.q();

    let mut below: Vec<f64> = xs.iter().copied().filter(|&x| x < 0.0).collect();
    below.sort_by(|a, b| b.total_cmp(a));
    below.dedup();
    let n_levels = below.len();

    let moments = if n_levels > 0 {
        // slots per level: l, g, l * g
        mc::reduce_paths(n_paths, seed, 3 * n_levels, false, |rng, out| {
            let mut passages = vec![Passage::default(); n_levels];
            sampler.sample_ladder(&below, rng, &mut passages);
            for (k, p) in passages.iter().enumerate() {
                if p.hit {
                    let w = (-q * p.tau).exp();
                    let g = w * p.position.exp();
                    out[3 * k] = w;
                    out[3 * k + 1] = g;
                    out[3 * k + 2] = w * g;
                }
            }
        })
    } else {
        Moments::new(0, false)
    };

    Ok(xs
        .iter()
        .map(|&x| {
            let base = LaplaceEstimate {
                x,
                l_hat: 1.0,
                g_hat: 1.0,
                se_l: 0.0,
                se_g: 0.0,
                cov_lg: 0.0,
                n_paths,
                horizon,
                truncation_bound: truncation_bound(q, horizon),
                source: Source::MonteCarlo,
            };
            match below.iter().position(|&l| l == x) {
                None => base,
                Some(k) => {
                    let (l, g) = (moments.mean(3 * k), moments.mean(3 * k + 1));
                    let nf = n_paths as f64;
                    let cov = if n_paths > 1 {
                        (moments.mean(3 * k + 2) - l * g) / (nf - 1.0)
                    } else {
                        0.0
                    };
                    LaplaceEstimate {
                        l_hat: l,
                        g_hat: g,
                        se_l: moments.se(3 * k),
                        se_g: moments.se(3 * k + 1),
                        cov_lg: cov,
                        ..base
                    }
                }
            }
        })
        .collect())
}

/// Richardson tableau for a halving ladder, as weight vectors over the
/// ladder values. Entry `[k]` is the diagonal extrapolant using levels `0..=k`.
fn richardson_diagonal(n: usize) -> Vec<Vec<f64>> {
    let mut prev: Vec<Vec<f64>> = Vec::new();
    let mut diagonal = Vec::with_capacity(n);
    for k in 0..n {
        let mut row: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
        let mut unit = vec![0.0; n];
        unit[k] = 1.0;
        row.push(unit);
        for j in 1..=k {
            let factor = 2f64.powi(j as i32) - 1.0;
            let w: Vec<f64> = row[j - 1]
                .iter()
                .zip(&prev[j - 1])
                .map(|(a, b)| a + (a - b) / factor)
                .collect();
            row.push(w);
        }
        diagonal.push(row[k].clone());
        prev = row;
    }
    diagonal
}

/// Ratio `A / B` of two linear combinations and the weight vector of its
/// first-order (delta method) linearization.
fn ratio_linearization(moments: &Moments, a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let am = moments.combo_mean(a);
    let bm = moments.combo_mean(b);
    let ratio = am / bm;
    let grad = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| ai / bm - bi * am / (bm * bm))
        .collect();
    (ratio, grad)
}

/// `(offset + sign * A, offset + sign * B)`; the sign leaves the covariance unchanged.
fn pair_from(moments: &Moments, a: &[f64], b: &[f64], offset: f64, sign: f64) -> PairEstimate {
    PairEstimate {
        l: offset + sign * moments.combo_mean(a),
        g: offset + sign * moments.combo_mean(b),
        var_l: moments.combo_cov(a, a),
        var_g: moments.combo_cov(b, b),
        cov_lg: moments.combo_cov(a, b),
    }
}

/// One-sided limits and derivatives of `L`, `G` at `0-`.
///
/// Brownian models use the closed form unless `force_monte_carlo` is set.
/// Otherwise `L`, `G` are estimated on the ladder of [`LimitConfig::levels`]
/// with common random numbers, and the numerator and denominator of the ratio
/// (`1 - L`, `1 - G`, or the difference quotients `(1 - L(x)) / -x`,
/// `(1 - G(x)) / -x` for downward-regular models) are Richardson-extrapolated
/// separately. Convergence is declared at the first diagonal whose ratio moves
/// by less than `rel_tol` relative, or by less than two standard errors of the
/// move.
pub fn left_limits(model: &ModelSpec, config: &LimitConfig, seed: u64) -> Result<LeftLimitEstimate> {
    config.validate()?;
    require_admissible(model)?;
    let regular = is_downward_regular(model);

    if model.family == Family::BrownianDrift && !config.force_monte_carlo {
        let gamma = brownian_gamma(model)?;
        let ratio = gamma / (gamma + 1.0);
        return Ok(LeftLimitEstimate {
            ratio_limit: ratio,
            ratio_se: 0.0,
            limits: PairEstimate::exact(1.0, 1.0),
            derivatives: Some(PairEstimate::exact(gamma, gamma + 1.0)),
            levels_used: Vec::new(),
            ladder_ratios: Vec::new(),
            iterates: vec![ratio],
            converged: true,
            noise_limited: false,
            n_paths: 0,
            source: Source::Analytic,
        });
    }

    let levels = config.levels();
    let k_levels = levels.len();
    let n = config.paths_per_level;
    let q = model.q();
    let shallowest = levels[k_levels - 1].abs();
    let target_se = 0.5 / (n as f64).sqrt();
    let horizon = if regular {
        horizon_for(q, target_se * shallowest)
    } else {
        horizon_for(q, target_se)
    };
    let sampler = PassageSampler::new(model, horizon)?;
    let ascending: Vec<f64> = levels.iter().rev().copied().collect();

    // per path: u_k = 1 - l_k in slots 0..K, w_k = 1 - g_k in slots K..2K
    let moments = mc::reduce_paths(n, seed, 2 * k_levels, true, |rng, out| {
        let mut passages = vec![Passage::default(); k_levels];
        sampler.sample_ladder(&ascending, rng, &mut passages);
        for (j, p) in passages.iter().enumerate() {
            let k = k_levels - 1 - j;
            let (l, g) = if p.hit {
                let w = (-q * p.tau).exp();
                (w, w * p.position.exp())
            } else {
                (0.0, 0.0)
            };
            out[k] = 1.0 - l;
            out[k_levels + k] = 1.0 - g;
        }
    });

    let scale: Vec<f64> = levels
        .iter()
        .map(|x| if regular { 1.0 / x.abs() } else { 1.0 })
        .collect();
    let embed = |w: &[f64], second: bool| -> Vec<f64> {
        let mut full = vec![0.0; 2 * k_levels];
        for (k, wk) in w.iter().enumerate() {
            full[if second { k_levels + k } else { k }] = wk * scale[k];
        }
        full
    };

    let ladder_ratios = (0..k_levels)
        .map(|k| moments.mean(k) / moments.mean(k_levels + k))
        .collect();

    let diagonal = richardson_diagonal(k_levels);
    let mut iterates = Vec::with_capacity(k_levels);
    let mut chosen = None;
    let mut noise_limited = false;
    let mut previous: Option<(f64, Vec<f64>)> = None;
    for (k, w) in diagonal.iter().enumerate() {
        let (a, b) = (embed(w, false), embed(w, true));
        let (ratio, grad) = ratio_linearization(&moments, &a, &b);
        iterates.push(ratio);
        if let Some((prev_ratio, prev_grad)) = &previous {
            let step = ratio - prev_ratio;
            let diff: Vec<f64> = grad.iter().zip(prev_grad).map(|(x, y)| x - y).collect();
            let step_se = moments.combo_cov(&diff, &diff).max(0.0).sqrt();
            if step.abs() <= config.rel_tol * ratio.abs() {
                chosen = Some(k);
                break;
            }
            if step.abs() <= 2.0 * step_se {
                chosen = Some(k);
                noise_limited = true;
                break;
            }
        }
        previous = Some((ratio, grad));
    }

    let converged = chosen.is_some();
    let k = chosen.unwrap_or(k_levels - 1);
    let (a, b) = (embed(&diagonal[k], false), embed(&diagonal[k], true));
    let (ratio_limit, grad) = ratio_linearization(&moments, &a, &b);
    let ratio_se = moments.combo_cov(&grad, &grad).max(0.0).sqrt();
    if !ratio_limit.is_finite() {
        return Err(Error::NotConverged(format!(
            "ratio estimate is not finite ({ratio_limit}); too few passages on the ladder"
        )));
    }

    let (limits, derivatives) = if regular {
        (PairEstimate::exact(1.0, 1.0), Some(pair_from(&moments, &a, &b, 0.0, 1.0)))
    } else {
        (pair_from(&moments, &a, &b, 1.0, -1.0), None)
    };

    Ok(LeftLimitEstimate {
        ratio_limit,
        ratio_se,
        limits,
        derivatives,
        levels_used: levels[..=k].to_vec(),
        ladder_ratios,
        iterates,
        converged,
        noise_limited,
        n_paths: n,
        source: Source::MonteCarlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn brownian_closed_form_examples() {
        let unit = ModelSpec::brownian(0.0, 1.0, 0.5, 0.0, 1.0);
        let e = analytic_pair_brownian(&unit, -1.0).unwrap();
        assert_relative_eq!(e.l_hat, (-1.0f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(e.g_hat, (-2.0f64).exp(), epsilon = 1e-14);
        assert_eq!((e.se_l, e.se_g), (0.0, 0.0));

        let desk = ModelSpec::brownian(0.0, 0.3, 0.05, 0.0, 1.0);
        let gamma = brownian_gamma(&desk).unwrap();
        assert_relative_eq!(gamma, 1.054_092_553_389_459_7, epsilon = 1e-12);
        let e = analytic_pair_brownian(&desk, -0.1).unwrap();
        assert!((e.l_hat - 0.8999).abs() < 1e-4);
        assert!((e.g_hat - 0.8143).abs() < 1e-4);

        let near = analytic_pair_brownian(&desk, -1e-12).unwrap();
        assert!((1.0 - near.l_hat) < 1e-11 && (1.0 - near.g_hat) < 1e-11);
    }

    #[test]
    fn closed_form_rejects_other_families_and_levels() {
        let cp = ModelSpec::compound_poisson(0.2, 1.0, 2.0, 0.1, 0.0, 1.0);
        assert!(analytic_pair_brownian(&cp, -0.1).is_err());
        let desk = ModelSpec::brownian(0.0, 0.3, 0.05, 0.0, 1.0);
        assert!(analytic_pair_brownian(&desk, 0.0).is_err());
        let bad = ModelSpec::brownian(0.0, 0.0, 0.05, 0.0, 1.0);
        assert!(analytic_pair_brownian(&bad, -0.1).is_err());
        let drifting = ModelSpec::brownian(0.2, 0.3, 0.05, 0.0, 1.0);
        assert!(matches!(
            left_limits(&drifting, &LimitConfig::default(), 0),
            Err(Error::AssumptionFailed { .. })
        ));
    }

    #[test]
    fn analytic_limits_for_brownian() {
        let desk = ModelSpec::brownian(0.0, 0.3, 0.05, 0.0, 1.0);
        let est = left_limits(&desk, &LimitConfig::default(), 0).unwrap();
        assert!((est.ratio_limit - 0.5132).abs() < 1e-4);
        assert!(est.converged);
        assert_eq!(est.source, Source::Analytic);
        let d = est.derivatives.unwrap();
        assert_relative_eq!(d.g - d.l, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn richardson_weights_cancel_low_orders() {
        let diag = richardson_diagonal(4);
        let xs: Vec<f64> = (0..4).map(|k| -0.1 * 0.5f64.powi(k)).collect();
        // cubic data: the order-3 extrapolant recovers the value at 0
        let f = |x: f64| 2.0 + 3.0 * x - 5.0 * x * x + 7.0 * x * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let est: f64 = diag[3].iter().zip(&ys).map(|(w, y)| w * y).sum();
        assert!((est - 2.0).abs() < 1e-12);
        for w in &diag {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_combo_se() {
        let p = PairEstimate {
            l: 0.8,
            g: 0.6,
            var_l: 4e-6,
            var_g: 9e-6,
            cov_lg: 5e-6,
        };
        assert_relative_eq!(p.combo_se(1.0, -1.0), (4e-6f64 + 9e-6 - 1e-5).sqrt(), epsilon = 1e-15);
        assert_eq!(PairEstimate::exact(0.8, 0.6).combo_se(3.0, 2.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(LimitConfig::default().validate().is_ok());
        let bad = LimitConfig {
            ladder_levels: 1,
            ..LimitConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(LimitConfig::default().levels()[7], -0.1 / 128.0);
    }
}
