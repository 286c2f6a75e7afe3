//! Brute-force checks of solver output.
//!
//! Nothing here calls the Laplace-pair estimators or the threshold formulas:
//! the sweep simulates payoffs of threshold rules directly, and the
//! realization of the stopping rule uses its own time-stepping scheme on `X`
//! against the moving boundary `B_c e^{m t}`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::laplace::brownian_gamma;
use crate::mc::{self, PathRng};
use crate::model::{check_assumptions, Family, ModelSpec};
use crate::passage::{horizon_for, Passage, PassageSampler};
use crate::threshold::ThresholdSolution;
use crate::value::{geometric_grid, original_payoff, threshold_curve, Estimate, McSettings, ValueCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub v: f64,
    pub b_grid: Vec<f64>,
    pub values: Vec<Estimate>,
    /// Standard error of `value(argmax) - value(b)` under common random numbers.
    pub diff_se: Vec<f64>,
    pub argmax_b: f64,
    /// Grid indices `[lo, hi]` of the plateau.
    pub plateau_indices: (usize, usize),
    /// Thresholds whose nearest grid point lies on the plateau.
    pub plateau: (f64, f64),
    pub grid_step: f64,
}

impl SweepResult {
    pub fn plateau_contains(&self, b: f64) -> bool {
        b >= self.plateau.0 && b <= self.plateau.1
    }

    /// `b,value,se` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b,value,se\n");
        for (b, e) in self.b_grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{},{}", b, e.value, e.se);
        }
        out
    }
}

/// Payoff of every threshold rule in `b_grid` (ascending) on one path.
fn sweep_payoffs(
    sampler: &PassageSampler,
    model: &ModelSpec,
    v: f64,
    b_grid: &[f64],
    levels: &[f64],
    rng: &mut PathRng,
    out: &mut [f64],
) {
    let q = model.q();
    // thresholds below v map to levels ln(b/v) < 0; levels are sorted descending
    let below = levels.len();
    let mut passages = vec![Passage::default(); below];
    if below > 0 {
        sampler.sample_ladder(levels, rng, &mut passages);
    }
    for (i, &b) in b_grid.iter().enumerate() {
        out[i] = if b >= v {
            model.c - v
        } else {
            let p = passages[below - 1 - i];
            if p.hit {
                (-q * p.tau).exp() * (model.c - v * p.position.exp())
            } else {
                0.0
            }
        };
    }
}

/// Exhaustive search over threshold rules `tau_b`, `b` on a uniform grid over
/// `[0.02 c, 0.98 c]`, with common random numbers across `b`.
pub fn sweep_thresholds(model: &ModelSpec, v: f64, grid_size: usize, n_paths: usize, seed: u64) -> Result<SweepResult> {
    if grid_size < 16 {
        return domain(format!("sweep grid needs at least 16 points, got {grid_size}"));
    }
    if !(v > 0.0) || !v.is_finite() {
        return domain(format!("v must be finite and > 0, got {v}"));
    }
    if n_paths < 2 {
        return domain("sweep needs at least 2 paths");
    }
    check_assumptions(model).require()?;
    let c = model.c;
    let (lo, hi) = (0.02 * c, 0.98 * c);
    let step = (hi - lo) / (grid_size - 1) as f64;
    let b_grid: Vec<f64> = (0..grid_size).map(|k| lo + step * k as f64).collect();
    let levels: Vec<f64> = b_grid
        .iter()
        .rev()
        .filter(|&&b| b < v)
        .map(|&b| (b / v).ln())
        .collect();
    let horizon = horizon_for(model.q(), 0.5 / (n_paths as f64).sqrt());
    let sampler = PassageSampler::new(model, horizon)?;

    let first = mc::reduce_paths(n_paths, seed, grid_size, false, |rng, out| {
        sweep_payoffs(&sampler, model, v, &b_grid, &levels, rng, out)
    });
    let values: Vec<Estimate> = (0..grid_size)
        .map(|i| {
            if b_grid[i] >= v {
                // instant stop on every path
                Estimate::exact(c - v)
            } else {
                Estimate {
                    value: first.mean(i),
                    se: first.se(i),
                }
            }
        })
        .collect();
    let best = values.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
    // largest threshold attaining the maximum: the smallest optimal time
    let star = values.iter().rposition(|e| e.value == best).unwrap_or(0);

    let second = mc::reduce_paths(n_paths, seed, grid_size, false, |rng, out| {
        sweep_payoffs(&sampler, model, v, &b_grid, &levels, rng, out);
        let top = out[star];
        for y in out.iter_mut() {
            *y = top - *y;
        }
    });
    let diff_se: Vec<f64> = (0..grid_size).map(|i| second.se(i)).collect();
    let on_plateau = |i: usize| values[i].value >= best - 3.0 * diff_se[i];
    let mut lo_i = star;
    while lo_i > 0 && on_plateau(lo_i - 1) {
        lo_i -= 1;
    }
    let mut hi_i = star;
    while hi_i + 1 < grid_size && on_plateau(hi_i + 1) {
        hi_i += 1;
    }

    Ok(SweepResult {
        v,
        argmax_b: b_grid[star],
        plateau_indices: (lo_i, hi_i),
        plateau: (b_grid[lo_i] - 0.5 * step, b_grid[hi_i] + 0.5 * step),
        grid_step: step,
        b_grid,
        values,
        diff_se,
    })
}

/// `s` as a function of `v`, either in closed form or interpolated from a
/// fine representation curve.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueFunction {
    Analytic { c: f64, b: f64, gamma: f64 },
    Curve(ValueCurve),
}

impl ValueFunction {
    /// Builds `s_{B_c}` covering `v` up to `v_max`.
    pub fn for_solution(
        model: &ModelSpec,
        solution: &ThresholdSolution,
        v_max: f64,
        settings: &McSettings,
    ) -> Result<Self> {
        let b = solution.b_c;
        if model.family == Family::BrownianDrift && !settings.force_monte_carlo {
            return Ok(ValueFunction::Analytic {
                c: model.c,
                b,
                gamma: brownian_gamma(model)?,
            });
        }
        let hi = v_max.max(2.0 * b);
        let grid = geometric_grid(b * 1.0001, hi, 256);
        Ok(ValueFunction::Curve(threshold_curve(model, b, &grid, settings)?))
    }

    pub fn eval(&self, model: &ModelSpec, v: f64) -> Estimate {
        match self {
            ValueFunction::Analytic { c, b, gamma } => {
                if v <= *b {
                    Estimate::exact(c - v)
                } else {
                    Estimate::exact((b / v).powf(*gamma) * (c - b))
                }
            }
            ValueFunction::Curve(curve) => curve.value_at(model, v),
        }
    }

    /// Largest standard error anywhere on the curve.
    pub fn max_se(&self) -> f64 {
        match self {
            ValueFunction::Analytic { .. } => 0.0,
            ValueFunction::Curve(c) => c.points.iter().map(|p| p.se).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleRow {
    pub v: f64,
    /// `E_v[e^{-q h} s(nu_h)]`.
    pub lhs: Estimate,
    /// `s(v)`.
    pub rhs: Estimate,
    pub joint_se: f64,
    /// `lhs <= rhs + 3 joint_se`.
    pub holds: bool,
    /// `lhs + 3 joint_se < rhs`.
    pub strict: bool,
    /// Start lies in the continuation region `v > B_c`.
    pub continuation: bool,
    /// `|lhs - rhs| <= 3 joint_se`.
    pub equal_within_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub h: f64,
    pub rows: Vec<SupermartingaleRow>,
}

impl SupermartingaleReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,lhs,lhs_se,rhs,rhs_se,holds,continuation,equal_within_noise\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.v, r.lhs.value, r.lhs.se, r.rhs.value, r.rhs.se, r.holds, r.continuation, r.equal_within_noise
            );
        }
        out
    }
}

/// One-step check that `e^{-q t} s(nu_t)` is a supermartingale (and a
/// martingale while the start lies in the continuation region).
pub fn supermartingale_check(
    model: &ModelSpec,
    solution: &ThresholdSolution,
    value: &ValueFunction,
    start_points: &[f64],
    h: f64,
    n_paths: usize,
    seed: u64,
) -> Result<SupermartingaleReport> {
    if !(h >= 0.0) || !h.is_finite() {
        return domain(format!("time step must be finite and >= 0, got {h}"));
    }
    if n_paths < 2 {
        return domain("supermartingale check needs at least 2 paths");
    }
    let sampler = PassageSampler::new(model, 1.0)?;
    let q = model.q();
    let curve_se = value.max_se();
    let mut rows = Vec::with_capacity(start_points.len());
    for (i, &v) in start_points.iter().enumerate() {
        if !(v > 0.0) {
            return domain(format!("start point must be > 0, got {v}"));
        }
        let rhs = value.eval(model, v);
        if h == 0.0 {
            rows.push(SupermartingaleRow {
                v,
                lhs: rhs,
                rhs,
                joint_se: 0.0,
                holds: true,
                strict: false,
                continuation: v > solution.b_c,
                equal_within_noise: true,
            });
            continue;
        }
        let discount = (-q * h).exp();
        let moments = mc::reduce_paths(n_paths, mc::derive_seed(seed, i as u64), 1, false, |rng, out| {
            let nu = v * sampler.sample_increment(h, rng).exp();
            out[0] = discount * value.eval(model, nu).value;
        });
        let lhs = Estimate {
            value: moments.mean(0),
            se: moments.se(0),
        };
        let joint_se = lhs.se.hypot(2.0 * curve_se);
        let tol = (3.0 * joint_se).max(1e-12);
        rows.push(SupermartingaleRow {
            v,
            lhs,
            rhs,
            joint_se,
            holds: lhs.value <= rhs.value + tol,
            strict: lhs.value + tol < rhs.value,
            continuation: v > solution.b_c,
            equal_within_noise: (lhs.value - rhs.value).abs() <= tol,
        });
    }
    Ok(SupermartingaleReport { h, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedStop {
    pub stopped: bool,
    /// Stopping time, or the horizon when the path never stopped.
    pub tau: f64,
    /// `V` at the stopping time.
    pub v_tau: f64,
    /// `e^{-r tau}(-V_tau + c e^{m tau})`, 0 when not stopped.
    pub payoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizationConfig {
    /// Grid step of the time-stepping scheme; jump times are inserted.
    pub step: f64,
    /// Passage times are located to this resolution by bridge bisection.
    pub resolution: f64,
    pub horizon: Option<f64>,
}

impl Default for RealizationConfig {
    fn default() -> Self {
        RealizationConfig {
            step: 0.5,
            resolution: 1e-7,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationReport {
    pub v: f64,
    pub boundary_level: f64,
    pub boundary_growth: f64,
    pub horizon: f64,
    pub samples: Vec<RealizedStop>,
    pub mean_payoff: Estimate,
}

impl RealizationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,stopped,tau,v_tau,payoff\n");
        for (i, s) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", i, s.stopped as u8, s.tau, s.v_tau, s.payoff);
        }
        out
    }
}

/// Time of the first zero of a Brownian bridge of variance rate `s2` from
/// `d0 > 0` at `t0` to `d1` at `t1`, conditioned on reaching zero. Located by
/// bisection with exact bridge midpoints.
fn bridge_crossing_time(
    mut t0: f64,
    mut t1: f64,
    mut d0: f64,
    mut d1: f64,
    s2: f64,
    resolution: f64,
    rng: &mut PathRng,
) -> f64 {
    let crosses = |a: f64, b: f64, dt: f64, rng: &mut PathRng| -> bool {
        if a <= 0.0 || b <= 0.0 {
            return true;
        }
        let u: f64 = rng.random();
        u < (-2.0 * a * b / (s2 * dt)).exp()
    };
    while t1 - t0 > resolution {
        let half = 0.5 * (t1 - t0);
        let tm = t0 + half;
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let dm = 0.5 * (d0 + d1) + (s2 * half * 0.5).sqrt() * z;
            let left = crosses(d0, dm, half, rng);
            let right = left || crosses(dm, d1, half, rng);
            if left {
                t1 = tm;
                d1 = dm;
                break;
            }
            if right {
                t0 = tm;
                d0 = dm;
                break;
            }
        }
        if d0 <= 0.0 {
            return t0;
        }
    }
    0.5 * (t0 + t1)
}

fn realize_path(
    model: &ModelSpec,
    level: f64,
    v: f64,
    horizon: f64,
    config: &RealizationConfig,
    rng: &mut PathRng,
) -> RealizedStop {
    let log_b = (level / v).ln();
    let boundary = |t: f64| log_b + model.m * t;
    let stop = |tau: f64, log_v: f64| {
        let v_tau = v * log_v.exp();
        RealizedStop {
            stopped: true,
            tau,
            v_tau,
            payoff: original_payoff(model, v_tau, tau),
        }
    };
    if boundary(0.0) >= 0.0 {
        return stop(0.0, 0.0);
    }
    let jump_rate = model.jump_rate();
    let s2 = model.sigma * model.sigma;
    let mut next_jump = if jump_rate > 0.0 {
        rng.sample::<f64, _>(Exp1) / jump_rate
    } else {
        f64::INFINITY
    };
    let mut t = 0.0;
    let mut x = 0.0;
    while t < horizon {
        let t1 = (t + config.step).min(next_jump).min(horizon);
        let dt = t1 - t;
        let d0 = x - boundary(t);
        let x1 = if model.sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x + model.mu * dt + model.sigma * dt.sqrt() * z
        } else {
            x + model.mu * dt
        };
        let d1 = x1 - boundary(t1);
        if model.sigma > 0.0 {
            let crossed = d1 <= 0.0 || {
                let u: f64 = rng.random();
                u < (-2.0 * d0 * d1 / (s2 * dt)).exp()
            };
            if crossed {
                let tau = bridge_crossing_time(t, t1, d0, d1, s2, config.resolution, rng);
                return stop(tau, boundary(tau));
            }
        } else if d1 <= 0.0 {
            // linear motion relative to the boundary
            let tau = t + dt * d0 / (d0 - d1);
            return stop(tau, boundary(tau));
        }
        t = t1;
        x = x1;
        if t == next_jump && t < horizon {
            let p_down = model.lambda_down / jump_rate;
            let u: f64 = rng.random();
            let size: f64 = rng.sample(Exp1);
            if u < p_down {
                x -= size / model.eta_down;
            } else {
                x += size / model.eta_up;
            }
            if x <= boundary(t) {
                return stop(t, x);
            }
            next_jump = t + rng.sample::<f64, _>(Exp1) / jump_rate;
        }
    }
    RealizedStop {
        stopped: false,
        tau: horizon,
        v_tau: v * x.exp(),
        payoff: 0.0,
    }
}

/// Simulates `V = v e^X` and stops the first time `V_t <= B_c e^{m t}`,
/// scoring the payoff of the original problem.
pub fn stopping_time_realization(
    model: &ModelSpec,
    solution: &ThresholdSolution,
    v: f64,
    n_paths: usize,
    seed: u64,
    config: &RealizationConfig,
) -> Result<RealizationReport> {
    model.validate()?;
    check_assumptions(model).require()?;
    if !(v > 0.0) || !v.is_finite() {
        return domain(format!("v must be finite and > 0, got {v}"));
    }
    if n_paths < 2 {
        return domain("realization needs at least 2 paths");
    }
    if !(config.step > 0.0 && config.resolution > 0.0) {
        return domain("step and resolution must be > 0");
    }
    let horizon = config
        .horizon
        .unwrap_or_else(|| horizon_for(model.q(), 0.5 / (n_paths as f64).sqrt()));
    let level = solution.boundary.level;
    let samples = mc::collect_paths(n_paths, seed, |rng| realize_path(model, level, v, horizon, config, rng));
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.payoff).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.payoff - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(RealizationReport {
        v,
        boundary_level: level,
        boundary_growth: solution.boundary.growth,
        horizon,
        samples,
        mean_payoff: Estimate {
            value: mean,
            se: (var / n).sqrt(),
        },
    })
}
