//! Optimal stopping thresholds for `sup_tau E[e^{-r tau}(-V_tau + c e^{m tau})]`
//! with `V = v e^X` and `X` an exponential Levy-type model.
//!
//! The smallest optimal rule stops the first time `V_t <= B_c e^{m t}`. The
//! threshold `B_c` is read off the Laplace pair
//! `L(x) = E[e^{-(r-m) tau_x}]`, `G(x) = E[e^{-(r-m) tau_x + Xbar_{tau_x}}]`
//! of the drift-adjusted process `Xbar_t = X_t - m t`:
//!
//! * when `G` jumps at `0` (passage only by jumps), continuous pasting gives
//!   `B_c = c (1 - L(0-)) / (1 - G(0-))`;
//! * when `G` is continuous at `0`, smooth pasting gives
//!   `B_c = c L'(0-) / G'(0-)`, accepted once `s_{B_c}` is checked to be
//!   strictly convex above the threshold.
//!
//! [`oracle`] holds brute-force checks that share nothing with the solver
//! except the path sampler.

pub mod error;
pub mod laplace;
pub mod mc;
pub mod model;
pub mod oracle;
pub mod passage;
pub mod threshold;
pub mod value;
pub mod verify;

pub use error::{Error, Result};
pub use laplace::{
    analytic_pair_brownian, left_limits, mc_pair, LaplaceEstimate, LeftLimitEstimate, LimitConfig, PairEstimate,
    Source,
};
pub use model::{
    check_assumptions, is_downward_regular, levy_exponent, AssumptionCheck, AssumptionId, AssumptionReport, Family,
    ModelSpec, Verdict,
};
pub use passage::{simulate_first_passage, FirstPassageSample, PassageSampler};
pub use threshold::{
    pasting_residual, smooth_pasting_inequality_check, solve, Method, SolverConfig, ThresholdSolution,
};
pub use value::{mc_value, optimal_value, reward, reward_plus, s_b, Estimate, ValueCurve};
