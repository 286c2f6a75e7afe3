//! The end-to-end verification suite run by `levystop verify`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mc::derive_seed;
use crate::model::{check_assumptions, is_downward_regular, ModelSpec};
use crate::oracle::{
    stopping_time_realization, supermartingale_check, sweep_thresholds, RealizationConfig, ValueFunction,
};
use crate::threshold::{pasting_residual, smooth_pasting_inequality_check, solve, Method, SolverConfig};
use crate::value::{
    default_value_grid, mc_value, optimal_value, reward_plus, s_b, Estimate, McSettings,
};
use crate::laplace::left_limits;
use crate::passage::horizon_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub solver: SolverConfig,
    pub sweep_grid: usize,
    pub sweep_paths: usize,
    pub value_paths: usize,
    pub curve_paths: usize,
    pub supermartingale_paths: usize,
    pub realization_paths: usize,
    pub step_h: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            solver: SolverConfig::default(),
            sweep_grid: 97,
            sweep_paths: 100_000,
            value_paths: 1_000_000,
            curve_paths: 200_000,
            supermartingale_paths: 200_000,
            realization_paths: 200_000,
            step_h: 0.1,
        }
    }
}

impl VerifyConfig {
    /// Overrides every Monte Carlo path count.
    pub fn with_paths(mut self, n: usize) -> Self {
        self.sweep_paths = n;
        self.value_paths = n;
        self.curve_paths = n;
        self.supermartingale_paths = n;
        self.realization_paths = n;
        self.solver.convexity_paths = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub b_c: Option<f64>,
    pub checks: Vec<CheckResult>,
    /// `(file name, CSV contents)`.
    pub artifacts: Vec<(String, String)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn checks_csv(&self) -> String {
        let mut out = String::from("check,passed,detail\n");
        for c in &self.checks {
            let _ = writeln!(out, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"));
        }
        out
    }
}

struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    fn record(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

fn fmt_est(e: &Estimate) -> String {
    format!("{:.6} ± {:.2e}", e.value, e.se)
}

/// Runs every verification check for `model`. Stops early only when the
/// model is refused or the solver fails.
pub fn run_suite(model: &ModelSpec, config: &VerifyConfig, seed: u64) -> Result<VerifyReport> {
    let mut suite = Suite { checks: Vec::new() };
    let mut artifacts = Vec::new();
    let c = model.c;

    let report = check_assumptions(model);
    suite.record(
        "assumptions",
        report.admissible(),
        format!("remark_mode={} margin={:?}", report.remark_mode(), report.margin),
    );
    report.require()?;

    let solution = match solve(model, &config.solver, seed) {
        Ok(s) => s,
        Err(e) => {
            suite.record("solve", false, e.to_string());
            return Ok(VerifyReport {
                b_c: None,
                checks: suite.checks,
                artifacts,
            });
        }
    };
    let b_c = solution.b_c;
    suite.record(
        "solve",
        solution.verified,
        format!("B_c={b_c} method={}", solution.method.as_str()),
    );

    // threshold characterization on fresh seeds
    let fresh = left_limits(model, &config.solver.limits, derive_seed(seed, 1))?;
    match solution.method {
        Method::ContinuousPasting => {
            let r = pasting_residual(model, b_c, &fresh)?;
            suite.record(
                "pasting_residual",
                r.value.abs() <= 3.0 * r.se.max(1e-12),
                format!("residual {}", fmt_est(&r)),
            );
        }
        Method::SmoothPastingLimit => {
            let at = smooth_pasting_inequality_check(model, b_c, &fresh)?;
            let below = smooth_pasting_inequality_check(model, 0.8 * b_c, &fresh)?;
            let saturated = at.slack.abs() < (5.0 * at.se).max(1e-9);
            suite.record(
                "smooth_pasting_inequality",
                at.holds && saturated && !below.holds,
                format!(
                    "slack at B_c {:.3e} (se {:.2e}); at 0.8 B_c {:.3e} holds={}",
                    at.slack, at.se, below.slack, below.holds
                ),
            );
        }
    }

    let scaled = solve(&model.with_c(2.0 * c), &config.solver, seed)?;
    suite.record(
        "scale_equivariance",
        (scaled.b_c - 2.0 * b_c).abs() <= 1e-12 * b_c,
        format!("B_c(2c) / B_c(c) = {}", scaled.b_c / b_c),
    );

    // threshold sweep oracle
    for (i, k) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
        let v = k * c;
        let sweep = sweep_thresholds(model, v, config.sweep_grid, config.sweep_paths, derive_seed(seed, 10 + i as u64))?;
        suite.record(
            format!("sweep_plateau_v{k}c"),
            sweep.plateau_contains(b_c),
            format!(
                "plateau [{:.4}, {:.4}] argmax {:.4}",
                sweep.plateau.0, sweep.plateau.1, sweep.argmax_b
            ),
        );
        if k == 1.0 {
            suite.record(
                "sweep_argmax",
                (sweep.argmax_b - b_c).abs() <= sweep.grid_step,
                format!("|argmax - B_c| = {:.4}, step {:.4}", (sweep.argmax_b - b_c).abs(), sweep.grid_step),
            );
        }
        artifacts.push((format!("sweep_v{k}c.csv"), sweep.to_csv()));
    }

    // representation against direct simulation
    let horizon = horizon_for(model.q(), 0.5 / (config.value_paths as f64).sqrt());
    for (i, k) in [0.75, 1.0, 2.0].into_iter().enumerate() {
        let v = k * c;
        let direct = mc_value(model, b_c, v, config.value_paths, horizon, derive_seed(seed, 20 + i as u64))?;
        let rep = s_b(
            model,
            b_c,
            v,
            &McSettings::new(config.value_paths, derive_seed(seed, 30 + i as u64)).forced(),
        )?;
        suite.record(
            format!("representation_v{k}c"),
            direct.agrees_with(&rep, 3.0),
            format!("direct {} representation {}", fmt_est(&direct), fmt_est(&rep)),
        );
    }

    // value curve properties
    let grid = default_value_grid(b_c, c);
    let curve = optimal_value(
        model,
        &solution,
        &grid,
        &McSettings::new(config.curve_paths, derive_seed(seed, 40)),
    )?;
    artifacts.push(("value.csv".into(), curve.to_csv()));
    let dominance = curve
        .points
        .iter()
        .all(|p| p.value + 3.0 * p.se >= reward_plus(model, p.v) && p.value - 3.0 * p.se <= c && p.value + 3.0 * p.se > 0.0);
    suite.record("dominance_and_bounds", dominance, "f+ <= s <= c on the grid");
    let stop_exact = curve
        .points
        .iter()
        .filter(|p| p.v <= b_c)
        .all(|p| p.value == c - p.v && p.se == 0.0);
    suite.record("stopping_branch_exact", stop_exact, "s(v) = c - v for v <= B_c");
    let convex = curve.convexity_increments().iter().all(|d| d.value >= -3.0 * d.se - 1e-12);
    suite.record("convexity", convex, "slope increments >= -3 se");
    let monotone = curve.first_differences().iter().all(|d| d.value <= 3.0 * d.se + 1e-12);
    suite.record("monotonicity", monotone, "first differences <= 3 se");

    let pasting_settings = McSettings::new(config.value_paths, derive_seed(seed, 41));
    let eps = 1e-6;
    let below = s_b(model, b_c, b_c * (1.0 - eps), &pasting_settings)?;
    let above = s_b(model, b_c, b_c * (1.0 + eps), &pasting_settings)?;
    let gap = (above.value - below.value).abs();
    // |s'| <= 1, so the probe points alone may differ by 2 eps b
    let tol = (3.0 * above.joint_se(&below)).max(1e-6) + 2.0 * eps * b_c;
    suite.record(
        "value_pasting",
        gap <= tol,
        format!("|s(B_c+) - s(B_c-)| = {gap:.3e}, tolerance {tol:.3e}"),
    );

    // Snell envelope: one-step supermartingale
    let starts = [b_c / 4.0, b_c, 2.0 * c];
    let value_fn = ValueFunction::for_solution(
        model,
        &solution,
        40.0 * c,
        &McSettings::new(config.curve_paths, derive_seed(seed, 50)),
    )?;
    let sm = supermartingale_check(
        model,
        &solution,
        &value_fn,
        &starts,
        config.step_h,
        config.supermartingale_paths,
        derive_seed(seed, 51),
    )?;
    artifacts.push(("supermartingale.csv".into(), sm.to_csv()));
    suite.record(
        "supermartingale",
        sm.all_hold(),
        sm.rows
            .iter()
            .map(|r| format!("v={:.4}: {:.6} <= {:.6}", r.v, r.lhs.value, r.rhs.value))
            .collect::<Vec<_>>()
            .join("; "),
    );
    let last = sm.rows.last().expect("three start points");
    suite.record(
        "martingale_in_continuation",
        last.equal_within_noise,
        format!("v={}: lhs {} rhs {}", last.v, fmt_est(&last.lhs), fmt_est(&last.rhs)),
    );

    // the rule applied to the original problem
    let v = c;
    let realized = stopping_time_realization(
        model,
        &solution,
        v,
        config.realization_paths,
        derive_seed(seed, 60),
        &RealizationConfig::default(),
    )?;
    let target = value_fn.eval(model, v);
    let joint = realized.mean_payoff.se.hypot(value_fn.max_se());
    suite.record(
        "original_problem_equivalence",
        (realized.mean_payoff.value - target.value).abs() <= (3.0 * joint).max(1e-12),
        format!("realized {} vs s(v) {}", fmt_est(&realized.mean_payoff), fmt_est(&target)),
    );
    let mut summary = String::from("v,boundary_level,boundary_growth,mean_payoff,se,s_v\n");
    let _ = writeln!(
        summary,
        "{},{},{},{},{},{}",
        v, realized.boundary_level, realized.boundary_growth, realized.mean_payoff.value, realized.mean_payoff.se, target.value
    );
    artifacts.push(("realization.csv".into(), summary));

    if is_downward_regular(model) {
        if let Some(cv) = &solution.convexity {
            suite.record("strict_convexity", cv.passed, format!("worst increment score {}", cv.worst));
        }
    }

    let report = VerifyReport {
        b_c: Some(b_c),
        checks: suite.checks,
        artifacts,
    };
    let mut artifacts = report.artifacts.clone();
    artifacts.push(("checks.csv".into(), report.checks_csv()));
    Ok(VerifyReport { artifacts, ..report })
}
