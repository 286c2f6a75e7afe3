//! Closed-form first-passage transforms used as test oracles.
#![allow(dead_code)]

use levystop::ModelSpec;

/// `(L, G, L'(0-), G'(0-))` style oracle for a model with exponential
/// downward jumps: `L(x) = E e^{-q tau_x}`, `G(x) = E e^{-q tau_x + Xbar_tau}`.
pub trait Pair {
    fn l(&self, x: f64) -> f64;
    fn g(&self, x: f64) -> f64;
    fn threshold(&self, c: f64) -> f64;
}

/// Drift `d > 0` minus exponential jumps: passage only by a jump, so the
/// undershoot is `Exp(eta)` independent of the time and
/// `L(x) = (1 - rho/eta) e^{rho x}` with `rho` the positive root of
/// `d rho^2 + (lambda + q - d eta) rho - q eta = 0`.
pub struct CompoundPoissonOracle {
    pub rho: f64,
    pub eta: f64,
}

impl CompoundPoissonOracle {
    pub fn new(model: &ModelSpec) -> Self {
        let d = model.drift_adjusted();
        let (lam, eta, q) = (model.lambda_down, model.eta_down, model.q());
        let b = lam + q - d * eta;
        let rho = (-b + (b * b + 4.0 * d * q * eta).sqrt()) / (2.0 * d);
        CompoundPoissonOracle { rho, eta }
    }
}

impl Pair for CompoundPoissonOracle {
    fn l(&self, x: f64) -> f64 {
        (1.0 - self.rho / self.eta) * (self.rho * x).exp()
    }

    fn g(&self, x: f64) -> f64 {
        self.l(x) * x.exp() * self.eta / (self.eta + 1.0)
    }

    /// Continuous pasting: `c (1 - L(0-)) / (1 - G(0-))`.
    fn threshold(&self, c: f64) -> f64 {
        c * (1.0 - self.l(0.0)) / (1.0 - self.g(0.0))
    }
}

/// Double-exponential jump diffusion. With `0 < b1 < eta_down < b2` the
/// roots of `psibar(-b) = q`, passage splits into creeping and a jump with
/// `Exp(eta_down)` undershoot.
pub struct KouOracle {
    pub b1: f64,
    pub b2: f64,
    pub eta: f64,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl KouOracle {
    pub fn new(model: &ModelSpec) -> Self {
        let (mu, s) = (model.drift_adjusted(), model.sigma);
        let (ld, ed, lu, eu, q) = (model.lambda_down, model.eta_down, model.lambda_up, model.eta_up, model.q());
        let f = |b: f64| -mu * b + 0.5 * s * s * b * b + ld * (ed / (ed - b) - 1.0) + lu * (eu / (eu + b) - 1.0) - q;
        let eps = 1e-12;
        let b1 = bisect(f, 0.0, ed * (1.0 - eps));
        let mut hi = 2.0 * ed + 1.0;
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        let b2 = bisect(f, ed * (1.0 + eps), hi);
        KouOracle { b1, b2, eta: ed }
    }

    fn creep(&self, x: f64) -> f64 {
        let (b1, b2, e) = (self.b1, self.b2, self.eta);
        ((e - b1) * (b1 * x).exp() + (b2 - e) * (b2 * x).exp()) / (b2 - b1)
    }

    fn jump(&self, x: f64) -> f64 {
        let (b1, b2, e) = (self.b1, self.b2, self.eta);
        (e - b1) * (b2 - e) / (e * (b2 - b1)) * ((b1 * x).exp() - (b2 * x).exp())
    }

    pub fn l_deriv0(&self) -> f64 {
        let (b1, b2, e) = (self.b1, self.b2, self.eta);
        let creep = ((e - b1) * b1 + (b2 - e) * b2) / (b2 - b1);
        let jump = (e - b1) * (b2 - e) / (e * (b2 - b1)) * (b1 - b2);
        creep + jump
    }

    pub fn g_deriv0(&self) -> f64 {
        let (b1, b2, e) = (self.b1, self.b2, self.eta);
        let creep = ((e - b1) * b1 + (b2 - e) * b2) / (b2 - b1);
        let jump = (e - b1) * (b2 - e) / (e * (b2 - b1)) * (b1 - b2);
        1.0 + creep + jump * e / (e + 1.0)
    }
}

impl Pair for KouOracle {
    fn l(&self, x: f64) -> f64 {
        self.creep(x) + self.jump(x)
    }

    fn g(&self, x: f64) -> f64 {
        x.exp() * (self.creep(x) + self.jump(x) * self.eta / (self.eta + 1.0))
    }

    /// Smooth pasting: `c L'(0-) / G'(0-)`.
    fn threshold(&self, c: f64) -> f64 {
        c * self.l_deriv0() / self.g_deriv0()
    }
}

pub fn brownian_desk() -> ModelSpec {
    ModelSpec::brownian(0.0, 0.3, 0.05, 0.0, 1.0)
}

pub fn brownian_growing() -> ModelSpec {
    ModelSpec::brownian(0.0, 0.3, 0.05, 0.02, 1.0)
}

pub fn cpd_desk() -> ModelSpec {
    ModelSpec::compound_poisson(0.2, 1.0, 2.0, 0.1, 0.0, 1.0)
}

pub fn kou_desk() -> ModelSpec {
    ModelSpec::kou(0.0, 0.2, 0.5, 5.0, 0.3, 8.0, 0.08, 0.0, 1.0)
}

/// `gamma` for Brownian motion with drift.
pub fn gamma(model: &ModelSpec) -> f64 {
    let (mu, s, q) = (model.drift_adjusted(), model.sigma, model.q());
    (mu + (mu * mu + 2.0 * q * s * s).sqrt()) / (s * s)
}
