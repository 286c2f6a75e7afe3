//! The optimal threshold `B_c`: the smallest optimal rule stops the first
//! time `V_t <= B_c e^{m t}`, equivalently the first time
//! `nu_t = v e^{Xbar_t} <= B_c`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::laplace::{left_limits, LeftLimitEstimate, LimitConfig, Source};
use crate::mc::derive_seed;
use crate::model::{check_assumptions, is_downward_regular, ModelSpec};
use crate::value::{geometric_grid, threshold_curve, CurveSource, Estimate, McSettings};

const LIMITS_STREAM: u64 = 0x4c49_4d49_5453;
const CONVEXITY_STREAM: u64 = 0x434f_4e56_4558;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// `G` jumps at `0`: value continuity at the threshold pins `B_c`.
    ContinuousPasting,
    /// `G` continuous at `0`: `B_c = c L'(0-) / G'(0-)`.
    SmoothPastingLimit,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ContinuousPasting => "ContinuousPasting",
            Method::SmoothPastingLimit => "SmoothPastingLimit",
        }
    }
}

/// The stopping boundary `t -> level * e^{growth * t}` for `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBoundary {
    pub level: f64,
    pub growth: f64,
}

impl ExponentialBoundary {
    pub fn at(&self, t: f64) -> f64 {
        self.level * (self.growth * t).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub grid: Vec<f64>,
    /// Slope increments of `s_b` between consecutive grid cells.
    pub increments: Vec<Estimate>,
    /// Smallest `increment / se` (or the smallest increment when exact).
    pub worst: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    pub b_c: f64,
    pub method: Method,
    pub boundary: ExponentialBoundary,
    pub diagnostics: LeftLimitEstimate,
    pub convexity: Option<ConvexityCheck>,
    /// `[b_tilde, c)` for smooth pasting.
    pub bracket: Option<(f64, f64)>,
    /// False when the strict-convexity side condition could not be confirmed.
    pub verified: bool,
    pub note: Option<String>,
}

impl ThresholdSolution {
    /// Standard error of `B_c` inherited from the limit estimates.
    pub fn se(&self, c: f64) -> f64 {
        c * self.diagnostics.ratio_se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub limits: LimitConfig,
    pub convexity_points: usize,
    /// The convexity grid spans `(b, span * b]`.
    pub convexity_span: f64,
    pub convexity_paths: usize,
    /// Reject `G'(0-)` within this many standard errors of zero.
    pub derivative_z: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            limits: LimitConfig::default(),
            convexity_points: 64,
            convexity_span: 20.0,
            convexity_paths: 200_000,
            derivative_z: 5.0,
        }
    }
}

/// Checks strict convexity of `s_b` on `(b, span * b]`.
pub fn convexity_check(model: &ModelSpec, b: f64, config: &SolverConfig, seed: u64) -> Result<ConvexityCheck> {
    let n = config.convexity_points.max(3);
    let hi = config.convexity_span * b;
    let lo = b * config.convexity_span.powf(1.0 / n as f64);
    let grid = geometric_grid(lo, hi, n);
    let mut settings = McSettings::new(config.convexity_paths, seed);
    settings.force_monte_carlo = config.limits.force_monte_carlo;
    let curve = threshold_curve(model, b, &grid, &settings)?;
    let increments = curve.convexity_increments();
    let (worst, passed) = if curve.source == CurveSource::AnalyticBrownian {
        let worst = increments.iter().map(|d| d.value).fold(f64::INFINITY, f64::min);
        (worst, worst > 0.0)
    } else {
        let worst = increments
            .iter()
            .map(|d| if d.se > 0.0 { d.value / d.se } else { d.value.signum() * f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        // overall slope gain must be significant, no cell may be significantly concave
        let total = Estimate {
            value: increments.iter().map(|d| d.value).sum(),
            se: increments.iter().map(|d| d.se * d.se).sum::<f64>().sqrt(),
        };
        (worst, worst >= -3.0 && total.value > 3.0 * total.se)
    };
    Ok(ConvexityCheck {
        grid,
        increments,
        worst,
        passed,
    })
}

/// Solves for `B_c`, choosing continuous or smooth pasting from the model's
/// downward regularity.
pub fn solve(model: &ModelSpec, config: &SolverConfig, seed: u64) -> Result<ThresholdSolution> {
    model.validate()?;
    check_assumptions(model).require()?;
    let est = left_limits(model, &config.limits, derive_seed(seed, LIMITS_STREAM))?;
    if !est.converged {
        return Err(Error::NotConverged(format!(
            "ratio iterates {:?} did not settle within rel_tol {}",
            est.iterates, config.limits.rel_tol
        )));
    }
    let c = model.c;
    let boundary = |level| ExponentialBoundary {
        level,
        growth: model.m,
    };

    if !is_downward_regular(model) {
        let b_c = c * est.ratio_limit;
        if !(b_c > 0.0 && b_c < c) {
            return Err(Error::OutsideHypotheses(format!(
                "continuous-pasting threshold {b_c} outside (0, c)"
            )));
        }
        return Ok(ThresholdSolution {
            b_c,
            method: Method::ContinuousPasting,
            boundary: boundary(b_c),
            diagnostics: est,
            convexity: None,
            bracket: None,
            verified: true,
            note: None,
        });
    }

    let derivs = est
        .derivatives
        .ok_or_else(|| Error::OutsideHypotheses("missing left derivatives".into()))?;
    let g_prime = derivs.g;
    let zero_like = if est.source == Source::Analytic {
        g_prime == 0.0
    } else {
        g_prime.abs() < config.derivative_z * derivs.se_g()
    };
    if zero_like || !g_prime.is_finite() {
        return Err(Error::OutsideHypotheses(format!(
            "G'(0-) = {g_prime} (se {}) is indistinguishable from 0",
            derivs.se_g()
        )));
    }
    let b_tilde = c * est.ratio_limit;
    if !(b_tilde > 0.0 && b_tilde < c) {
        return Err(Error::OutsideHypotheses(format!(
            "smooth-pasting threshold {b_tilde} outside (0, c)"
        )));
    }
    let convexity = convexity_check(model, b_tilde, config, derive_seed(seed, CONVEXITY_STREAM))?;
    let verified = convexity.passed;
    Ok(ThresholdSolution {
        b_c: b_tilde,
        method: Method::SmoothPastingLimit,
        boundary: boundary(b_tilde),
        diagnostics: est,
        bracket: Some((b_tilde, c)),
        verified,
        note: (!verified).then(|| {
            format!(
                "strict convexity of s_b above b = {b_tilde} not confirmed (worst increment score {})",
                convexity.worst
            )
        }),
        convexity: Some(convexity),
    })
}

/// `(c - b) - (c L(0-) - b G(0-))`, zero at the continuous-pasting threshold.
pub fn pasting_residual_from(c: f64, b: f64, l0: f64, g0: f64) -> f64 {
    (c - b) - (-b * g0 + c * l0)
}

/// Continuity-pasting residual at `b` from the given limit estimates.
pub fn pasting_residual(model: &ModelSpec, b: f64, limits: &LeftLimitEstimate) -> Result<Estimate> {
    if is_downward_regular(model) {
        return domain("pasting residual is identically zero for downward-regular models");
    }
    if !(b > 0.0 && b < model.c) {
        return domain(format!("b must lie in (0, c), got {b}"));
    }
    let p = &limits.limits;
    Ok(Estimate {
        value: pasting_residual_from(model.c, b, p.l, p.g),
        se: p.combo_se(-model.c, b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PastingInequality {
    pub holds: bool,
    /// `G'(0-) - (c / B) L'(0-)`.
    pub slack: f64,
    pub se: f64,
}

/// Checks `-1 <= -1 + G'(0-) - (c/B) L'(0-)`, i.e. `B >= c L'(0-) / G'(0-)`,
/// allowing three standard errors of slack.
pub fn smooth_pasting_inequality_check(
    model: &ModelSpec,
    b: f64,
    limits: &LeftLimitEstimate,
) -> Result<PastingInequality> {
    let d = limits
        .derivatives
        .ok_or_else(|| Error::Domain("left derivatives are only defined for downward-regular models".into()))?;
    if !(b > 0.0) {
        return domain(format!("B must be > 0, got {b}"));
    }
    let k = model.c / b;
    let slack = d.g - k * d.l;
    let se = d.combo_se(-k, 1.0);
    Ok(PastingInequality {
        holds: slack >= -(3.0 * se).max(1e-9),
        slack,
        se,
    })
}
