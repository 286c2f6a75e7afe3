//! The auxiliary value `s_b(v)` of the threshold rule `tau_b`, the optimal
//! value `s = s_{B_c}`, and the reward on the drift-adjusted scale.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::laplace::{analytic_pair_brownian, brownian_gamma, mc_pair, mc_pair_ladder};
use crate::mc;
use crate::model::{check_assumptions, Family, ModelSpec};
use crate::passage::{horizon_for, PassageSampler};
use crate::threshold::ThresholdSolution;

/// A value with its Monte Carlo standard error (0 for exact values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    /// Standard error of the difference with an independent estimate.
    pub fn joint_se(&self, other: &Estimate) -> f64 {
        self.se.hypot(other.se)
    }

    /// `|self - other| <= k * joint_se`, with a floor for exact comparisons.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= (k * self.joint_se(other)).max(1e-12)
    }
}

/// `f(nu) = c - nu`, the undiscounted reward on the drift-adjusted scale.
/// Discounting by `e^{-(r-m) t}` is up to the caller.
pub fn reward(model: &ModelSpec, nu: f64) -> f64 {
    model.c - nu
}

/// `f+(nu) = max(c - nu, 0)`.
pub fn reward_plus(model: &ModelSpec, nu: f64) -> f64 {
    reward(model, nu).max(0.0)
}

/// Discounted reward of the original problem, `e^{-r t}(-V + c e^{m t})`.
pub fn original_payoff(model: &ModelSpec, v_t: f64, t: f64) -> f64 {
    (-model.r * t).exp() * (-v_t + model.c * (model.m * t).exp())
}

/// Monte Carlo settings for value estimates that need simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_paths: usize,
    /// Truncation horizon; derived from the target standard error when `None`.
    pub horizon: Option<f64>,
    pub seed: u64,
    /// Simulate even when a closed form exists.
    pub force_monte_carlo: bool,
}

impl McSettings {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McSettings {
            n_paths,
            horizon: None,
            seed,
            force_monte_carlo: false,
        }
    }

    pub fn forced(mut self) -> Self {
        self.force_monte_carlo = true;
        self
    }

    pub fn horizon_for(&self, model: &ModelSpec) -> f64 {
        self.horizon
            .unwrap_or_else(|| horizon_for(model.q(), 0.5 / (self.n_paths.max(1) as f64).sqrt()))
    }

    fn analytic(&self, model: &ModelSpec) -> bool {
        model.family == Family::BrownianDrift && !self.force_monte_carlo
    }
}

fn check_threshold(model: &ModelSpec, b: f64) -> Result<()> {
    if !(b > 0.0 && b < model.c) {
        return domain(format!("threshold must lie in (0, c = {}), got {b}", model.c));
    }
    Ok(())
}

fn check_point(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return domain(format!("v must be finite and > 0, got {v}"));
    }
    Ok(())
}

/// `s_b(v)`: `c - v` on `v <= b`, otherwise `-v G(ln(b/v)) + c L(ln(b/v))`.
pub fn s_b(model: &ModelSpec, b: f64, v: f64, settings: &McSettings) -> Result<Estimate> {
    check_threshold(model, b)?;
    check_point(v)?;
    if v <= b {
        return Ok(Estimate::exact(model.c - v));
    }
    let x = (b / v).ln();
    let pair = if settings.analytic(model) {
        analytic_pair_brownian(model, x)?
    } else {
        mc_pair(model, x, settings.n_paths, settings.horizon_for(model), settings.seed)?
    };
    let value = -v * pair.g_hat + model.c * pair.l_hat;
    let var = v * v * pair.se_g * pair.se_g + model.c * model.c * pair.se_l * pair.se_l
        - 2.0 * v * model.c * pair.cov_lg;
    Ok(Estimate {
        value,
        se: var.max(0.0).sqrt(),
    })
}

/// Closed form of `s_b(v)` for Brownian models: `(b/v)^gamma (c - b)` above `b`.
pub fn brownian_s_b(model: &ModelSpec, b: f64, v: f64) -> Result<f64> {
    check_threshold(model, b)?;
    check_point(v)?;
    if v <= b {
        return Ok(model.c - v);
    }
    let gamma = brownian_gamma(model)?;
    Ok((b / v).powf(gamma) * (model.c - b))
}

/// Direct simulation of `E_v[e^{-(r-m) tau_b}(c - nu_{tau_b})]`, where `tau_b`
/// is the first time `nu = v e^{Xbar}` falls to `b` or below.
pub fn mc_value(model: &ModelSpec, b: f64, v: f64, n_paths: usize, horizon: f64, seed: u64) -> Result<Estimate> {
    check_threshold(model, b)?;
    check_point(v)?;
    check_assumptions(model).require()?;
    if v <= b {
        return Ok(Estimate::exact(model.c - v));
    }
    if n_paths == 0 {
        return domain("n_paths must be >= 1");
    }
    let sampler = PassageSampler::new(model, horizon)?;
    let x = (b / v).ln();
    let q = model.q();
    let c = model.c;
    let moments = mc::reduce_paths(n_paths, seed, 1, false, |rng, out| {
        let s = sampler.sample(x, rng);
        if s.hit {
            out[0] = (-q * s.tau).exp() * (c - v * s.position.exp());
        }
    });
    Ok(Estimate {
        value: moments.mean(0),
        se: moments.se(0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Stop,
    Continue,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Stop => "stop",
            Branch::Continue => "continue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveSource {
    Representation,
    MonteCarlo,
    AnalyticBrownian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub v: f64,
    pub value: f64,
    pub se: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCurve {
    pub points: Vec<CurvePoint>,
    pub b: f64,
    pub source: CurveSource,
    /// The model only satisfies the bounded-support alternative; the value
    /// need not be continuous and no interpolated extension is applied.
    pub remark_mode: bool,
}

impl ValueCurve {
    /// `v,value,se,branch` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,value,se,branch\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.v, p.value, p.se, p.branch.as_str());
        }
        out
    }

    /// Interpolates linearly in `ln v`. Below the grid (or below `b`) the
    /// exact stopping value `c - v` is used; above the grid the last value.
    pub fn value_at(&self, model: &ModelSpec, v: f64) -> Estimate {
        if v <= self.b {
            return Estimate::exact(model.c - v);
        }
        let pts = &self.points;
        let first = pts.first().expect("empty curve");
        let last = pts.last().expect("empty curve");
        if v <= first.v {
            return Estimate {
                value: first.value,
                se: first.se,
            };
        }
        if v >= last.v {
            return Estimate {
                value: last.value,
                se: last.se,
            };
        }
        let j = pts.partition_point(|p| p.v <= v);
        let (lo, hi) = (&pts[j - 1], &pts[j]);
        let t = (v.ln() - lo.v.ln()) / (hi.v.ln() - lo.v.ln());
        Estimate {
            value: lo.value + t * (hi.value - lo.value),
            se: lo.se.max(hi.se),
        }
    }

    /// Slope increments `(s_{j+1} - s_j)/h_j - (s_j - s_{j-1})/h_{j-1}` at the
    /// interior points with their standard errors (points treated as
    /// independent). Nonnegative for a convex function.
    pub fn convexity_increments(&self) -> Vec<Estimate> {
        self.points
            .windows(3)
            .map(|w| {
                let a = 1.0 / (w[1].v - w[0].v);
                let c = 1.0 / (w[2].v - w[1].v);
                let value = c * (w[2].value - w[1].value) - a * (w[1].value - w[0].value);
                let se = ((a * w[0].se).powi(2) + ((a + c) * w[1].se).powi(2) + (c * w[2].se).powi(2)).sqrt();
                Estimate { value, se }
            })
            .collect()
    }

    /// `s_{j+1} - s_j` with propagated errors.
    pub fn first_differences(&self) -> Vec<Estimate> {
        self.points
            .windows(2)
            .map(|w| Estimate {
                value: w[1].value - w[0].value,
                se: w[0].se.hypot(w[1].se),
            })
            .collect()
    }
}

/// Geometric grid of `n >= 2` points from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo * (ratio * k as f64).exp() })
        .collect()
}

/// Default grid: 64 geometric points over `[B_c / 4, 8 c]`.
pub fn default_value_grid(b_c: f64, c: f64) -> Vec<f64> {
    geometric_grid(b_c / 4.0, 8.0 * c, 64)
}

/// `s_b` over a grid. Brownian models use the closed form; otherwise the
/// Laplace pair is estimated at every `ln(b/v)` from one set of paths.
pub fn threshold_curve(model: &ModelSpec, b: f64, v_grid: &[f64], settings: &McSettings) -> Result<ValueCurve> {
    check_threshold(model, b)?;
    for &v in v_grid {
        check_point(v)?;
    }
    let report = check_assumptions(model);
    report.require()?;
    let branch = |v: f64| if v <= b { Branch::Stop } else { Branch::Continue };

    if settings.analytic(model) {
        let points = v_grid
            .iter()
            .map(|&v| {
                Ok(CurvePoint {
                    v,
                    value: brownian_s_b(model, b, v)?,
                    se: 0.0,
                    branch: branch(v),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(ValueCurve {
            points,
            b,
            source: CurveSource::AnalyticBrownian,
            remark_mode: report.remark_mode(),
        });
    }

    let xs: Vec<f64> = v_grid.iter().map(|&v| (b / v).ln()).collect();
    let pairs = mc_pair_ladder(model, &xs, settings.n_paths, settings.horizon_for(model), settings.seed)?;
    let points = v_grid
        .iter()
        .zip(&pairs)
        .map(|(&v, pair)| {
            if v <= b {
                return CurvePoint {
                    v,
                    value: model.c - v,
                    se: 0.0,
                    branch: Branch::Stop,
                };
            }
            let var = v * v * pair.se_g * pair.se_g + model.c * model.c * pair.se_l * pair.se_l
                - 2.0 * v * model.c * pair.cov_lg;
            CurvePoint {
                v,
                value: -v * pair.g_hat + model.c * pair.l_hat,
                se: var.max(0.0).sqrt(),
                branch: Branch::Continue,
            }
        })
        .collect();
    Ok(ValueCurve {
        points,
        b,
        source: CurveSource::Representation,
        remark_mode: report.remark_mode(),
    })
}

/// The optimal value `s = s_{B_c}` over a grid.
pub fn optimal_value(
    model: &ModelSpec,
    solution: &ThresholdSolution,
    v_grid: &[f64],
    settings: &McSettings,
) -> Result<ValueCurve> {
    threshold_curve(model, solution.b_c, v_grid, settings)
}
