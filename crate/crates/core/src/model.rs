//! Levy-type model families, the problem constants `r`, `m`, `c`, and the
//! standing-assumption checks.
//!
//! The controlled process is `V = v e^X` with `X` a Levy process started at 0.
//! Everything downstream works on the drift-adjusted process
//! `Xbar_t = X_t - m t`, discounted at the effective rate `q = r - m`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(alias = "brownian_drift", alias = "brownian")]
    BrownianDrift,
    #[serde(alias = "kou_jump_diffusion", alias = "kou")]
    KouJumpDiffusion,
    #[serde(alias = "compound_poisson_drift", alias = "compound_poisson")]
    CompoundPoissonDrift,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::BrownianDrift => "BrownianDrift",
            Family::KouJumpDiffusion => "KouJumpDiffusion",
            Family::CompoundPoissonDrift => "CompoundPoissonDrift",
        })
    }
}

fn default_eta_down() -> f64 {
    1.0
}

fn default_eta_up() -> f64 {
    2.0
}

/// Law of `X` plus the constants of the stopping problem.
///
/// Jump sizes are exponential: downward with rate `eta_down` (mean
/// `1/eta_down`), upward with rate `eta_up`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub lambda_down: f64,
    #[serde(default = "default_eta_down")]
    pub eta_down: f64,
    #[serde(default)]
    pub lambda_up: f64,
    #[serde(default = "default_eta_up")]
    pub eta_up: f64,
    pub r: f64,
    #[serde(default)]
    pub m: f64,
    pub c: f64,
}

impl ModelSpec {
    pub fn brownian(mu: f64, sigma: f64, r: f64, m: f64, c: f64) -> Self {
        ModelSpec {
            family: Family::BrownianDrift,
            mu,
            sigma,
            lambda_down: 0.0,
            eta_down: default_eta_down(),
            lambda_up: 0.0,
            eta_up: default_eta_up(),
            r,
            m,
            c,
        }
    }

    pub fn compound_poisson(mu: f64, lambda_down: f64, eta_down: f64, r: f64, m: f64, c: f64) -> Self {
        ModelSpec {
            family: Family::CompoundPoissonDrift,
            mu,
            sigma: 0.0,
            lambda_down,
            eta_down,
            lambda_up: 0.0,
            eta_up: default_eta_up(),
            r,
            m,
            c,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn kou(
        mu: f64,
        sigma: f64,
        lambda_down: f64,
        eta_down: f64,
        lambda_up: f64,
        eta_up: f64,
        r: f64,
        m: f64,
        c: f64,
    ) -> Self {
        ModelSpec {
            family: Family::KouJumpDiffusion,
            mu,
            sigma,
            lambda_down,
            eta_down,
            lambda_up,
            eta_up,
            r,
            m,
            c,
        }
    }

    /// Same model with a different reward constant.
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    /// Effective discount rate `r - m` of the reformulated problem.
    pub fn q(&self) -> f64 {
        self.r - self.m
    }

    /// Drift of `Xbar_t = X_t - m t`.
    pub fn drift_adjusted(&self) -> f64 {
        self.mu - self.m
    }

    pub fn jump_rate(&self) -> f64 {
        self.lambda_down + self.lambda_up
    }

    /// Structural validation of the parameters. Assumption checks live in
    /// [`check_assumptions`].
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("lambda_down", self.lambda_down),
            ("eta_down", self.eta_down),
            ("lambda_up", self.lambda_up),
            ("eta_up", self.eta_up),
            ("r", self.r),
            ("m", self.m),
            ("c", self.c),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return domain(format!("{name} must be finite, got {value}"));
            }
        }
        if self.r <= 0.0 {
            return domain(format!("r must be > 0, got {}", self.r));
        }
        if self.c <= 0.0 {
            return domain(format!("c must be > 0, got {}", self.c));
        }
        if self.m >= self.r {
            return domain(format!("m must be < r, got m={} r={}", self.m, self.r));
        }
        if self.sigma < 0.0 || self.lambda_down < 0.0 || self.lambda_up < 0.0 {
            return domain("sigma, lambda_down and lambda_up must be >= 0");
        }
        if self.eta_down <= 0.0 {
            return domain(format!("eta_down must be > 0, got {}", self.eta_down));
        }
        if self.eta_up <= 1.0 {
            return domain(format!("eta_up must be > 1, got {}", self.eta_up));
        }
        match self.family {
            Family::BrownianDrift => {
                if self.sigma <= 0.0 {
                    return domain("BrownianDrift requires sigma > 0");
                }
                if self.lambda_down != 0.0 || self.lambda_up != 0.0 {
                    return domain("BrownianDrift requires lambda_down = lambda_up = 0");
                }
            }
            Family::KouJumpDiffusion => {
                if self.sigma <= 0.0 {
                    return domain("KouJumpDiffusion requires sigma > 0");
                }
            }
            Family::CompoundPoissonDrift => {
                if self.sigma != 0.0 {
                    return domain("CompoundPoissonDrift requires sigma = 0");
                }
                if self.mu <= 0.0 {
                    return domain("CompoundPoissonDrift requires mu > 0");
                }
                if self.lambda_down <= 0.0 {
                    return domain("CompoundPoissonDrift requires lambda_down > 0");
                }
                if self.lambda_up != 0.0 {
                    return domain("CompoundPoissonDrift is spectrally negative: lambda_up must be 0");
                }
            }
        }
        Ok(())
    }
}

/// Levy exponent `psi(theta) = ln E[e^{theta X_1}]`.
pub fn levy_exponent(model: &ModelSpec, theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return domain(format!("theta must be finite, got {theta}"));
    }
    if model.lambda_down > 0.0 && theta <= -model.eta_down {
        return domain(format!(
            "theta = {theta} outside the finite-moment strip (theta > -eta_down = {})",
            -model.eta_down
        ));
    }
    if model.lambda_up > 0.0 && theta >= model.eta_up {
        return domain(format!(
            "theta = {theta} outside the finite-moment strip (theta < eta_up = {})",
            model.eta_up
        ));
    }
    let mut psi = model.mu * theta + 0.5 * model.sigma * model.sigma * theta * theta;
    if model.lambda_down > 0.0 {
        psi += model.lambda_down * (model.eta_down / (model.eta_down + theta) - 1.0);
    }
    if model.lambda_up > 0.0 {
        psi += model.lambda_up * (model.eta_up / (model.eta_up - theta) - 1.0);
    }
    Ok(psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssumptionId {
    /// Right-continuity of `X` at time 0.
    A1,
    /// `e^{-rt + X_t}` is of class D.
    A2,
    /// `inf_t e^{-rt} E e^{X_t} = 0`.
    A3,
    /// The support of `X_t` is the whole real line.
    A4,
}

impl AssumptionId {
    pub fn number(self) -> u8 {
        match self {
            AssumptionId::A1 => 1,
            AssumptionId::A2 => 2,
            AssumptionId::A3 => 3,
            AssumptionId::A4 => 4,
        }
    }
}

impl fmt::Display for AssumptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Assumption {}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    /// Support condition replaced by the bounded-above alternative
    /// (no upward jumps, no diffusion).
    RemarkMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub id: AssumptionId,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    /// `psi(1)`, or `None` when `E e^{X_1}` is infinite.
    pub psi_one: Option<f64>,
    /// `r - psi(1)`; positive when the class-D and `inf = 0` conditions hold.
    pub margin: Option<f64>,
}

impl AssumptionReport {
    pub fn verdict(&self, id: AssumptionId) -> Verdict {
        self.checks
            .iter()
            .find(|c| c.id == id)
            .map(|c| c.verdict)
            .unwrap_or(Verdict::Fail)
    }

    pub fn first_failure(&self) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.verdict == Verdict::Fail)
    }

    /// True when every assumption passes or is in Remark mode.
    pub fn admissible(&self) -> bool {
        self.first_failure().is_none()
    }

    pub fn remark_mode(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::RemarkMode)
    }

    pub fn failures(&self) -> Vec<AssumptionId> {
        self.checks
            .iter()
            .filter(|c| c.verdict == Verdict::Fail)
            .map(|c| c.id)
            .collect()
    }

    pub fn require(&self) -> Result<()> {
        match self.first_failure() {
            None => Ok(()),
            Some(check) => Err(Error::AssumptionFailed {
                assumptions: self.failures(),
                detail: check.detail.clone(),
            }),
        }
    }
}

/// Checks the four standing assumptions for the model.
///
/// Never errors: structural problems with the parameters show up as failing
/// verdicts so the report can always be printed.
pub fn check_assumptions(model: &ModelSpec) -> AssumptionReport {
    let structural = model.validate();
    let psi_one = levy_exponent(model, 1.0).ok();
    let margin = psi_one.map(|p| model.r - p);

    let mut checks = Vec::with_capacity(4);
    checks.push(AssumptionCheck {
        id: AssumptionId::A1,
        verdict: Verdict::Pass,
        detail: "Levy paths are right-continuous at 0".into(),
    });

    let moment = match (&structural, psi_one, margin) {
        (Err(e), _, _) => (Verdict::Fail, format!("invalid model: {e}")),
        (Ok(()), Some(p), Some(gap)) if gap > 0.0 => (
            Verdict::Pass,
            format!("psi(1) = {p} < r = {}, margin {gap}", model.r),
        ),
        (Ok(()), Some(p), _) => (
            Verdict::Fail,
            format!("psi(1) = {p} >= r = {}", model.r),
        ),
        (Ok(()), None, _) => (Verdict::Fail, "E e^{X_1} is infinite".into()),
    };
    checks.push(AssumptionCheck {
        id: AssumptionId::A2,
        verdict: moment.0,
        detail: moment.1.clone(),
    });
    checks.push(AssumptionCheck {
        id: AssumptionId::A3,
        verdict: moment.0,
        detail: moment.1,
    });

    let support = if structural.is_err() {
        (Verdict::Fail, "invalid model".to_string())
    } else if model.sigma > 0.0 {
        (Verdict::Pass, "diffusion component gives full support".into())
    } else if model.lambda_down > 0.0 && model.lambda_up > 0.0 {
        (Verdict::Pass, "jumps in both directions give full support".into())
    } else if model.lambda_up == 0.0 {
        (
            Verdict::RemarkMode,
            "support of X_t bounded above by mu*t (spectrally negative); \
             bounded-support alternative replaces the full-support condition"
                .into(),
        )
    } else {
        (Verdict::Fail, "support of X_t is bounded below".into())
    };
    checks.push(AssumptionCheck {
        id: AssumptionId::A4,
        verdict: support.0,
        detail: support.1,
    });

    AssumptionReport {
        checks,
        psi_one,
        margin,
    }
}

/// Whether `Xbar` enters `(-inf, 0)` immediately, i.e. whether `G` is
/// continuous at `0`. Decides between the continuous-pasting and the
/// smooth-pasting characterizations.
pub fn is_downward_regular(model: &ModelSpec) -> bool {
    model.sigma > 0.0 || model.drift_adjusted() < 0.0
}
