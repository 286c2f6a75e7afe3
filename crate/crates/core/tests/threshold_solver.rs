mod common;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use common::{brownian_desk, brownian_growing, cpd_desk, gamma, kou_desk, CompoundPoissonOracle, KouOracle, Pair};
use levystop::mc::derive_seed;
use levystop::threshold::pasting_residual_from;
use levystop::{
    left_limits, pasting_residual, smooth_pasting_inequality_check, solve, Error, LimitConfig, Method, ModelSpec,
    SolverConfig,
};
use proptest::prelude::*;

#[test]
fn brownian_desk_threshold() {
    let sol = solve(&brownian_desk(), &SolverConfig::default(), 1).unwrap();
    let g = gamma(&brownian_desk());
    assert_abs_diff_eq!(sol.b_c, 0.5132, epsilon = 1e-4);
    assert_relative_eq!(sol.b_c, g / (g + 1.0), max_relative = 1e-14);
    assert_eq!(sol.method, Method::SmoothPastingLimit);
    assert!(sol.verified && sol.note.is_none());
    assert!(sol.convexity.as_ref().unwrap().passed);
    assert_eq!(sol.bracket, Some((sol.b_c, 1.0)));
    assert_eq!(sol.se(1.0), 0.0);
}

#[test]
fn growing_reward_boundary() {
    let sol = solve(&brownian_growing(), &SolverConfig::default(), 1).unwrap();
    assert_abs_diff_eq!(sol.b_c, 0.384227, epsilon = 1e-6);
    assert_eq!(sol.boundary.growth, 0.02);
    assert_relative_eq!(sol.boundary.at(10.0), sol.b_c * 0.2f64.exp(), max_relative = 1e-15);
}

#[test]
fn scale_equivariance_is_exact() {
    for model in [brownian_desk(), cpd_desk()] {
        let base = solve(&model, &SolverConfig::default(), 9).unwrap();
        for k in [0.5, 2.0, 10.0] {
            let scaled = solve(&model.with_c(k * model.c), &SolverConfig::default(), 9).unwrap();
            assert_relative_eq!(scaled.b_c, k * base.b_c, max_relative = 1e-15);
            assert_eq!(scaled.method, base.method);
        }
    }
}

#[test]
fn compound_poisson_continuous_pasting() {
    let model = cpd_desk();
    let oracle = CompoundPoissonOracle::new(&model);
    let sol = solve(&model, &SolverConfig::default(), 2).unwrap();
    assert_eq!(sol.method, Method::ContinuousPasting);
    assert!(sol.verified && sol.bracket.is_none() && sol.convexity.is_none());
    let se = sol.se(model.c);
    assert!((sol.b_c - oracle.threshold(model.c)).abs() < 3.0 * se, "{} vs {}", sol.b_c, oracle.threshold(1.0));

    // residual on limits from fresh random numbers
    let fresh = left_limits(&model, &LimitConfig::default(), derive_seed(2, 77)).unwrap();
    let res = pasting_residual(&model, sol.b_c, &fresh).unwrap();
    let joint = res.se.hypot(se * (1.0 - fresh.limits.g));
    assert!(res.value.abs() < 3.0 * joint, "residual {} (se {joint})", res.value);
}

#[test]
fn residual_arithmetic() {
    assert_abs_diff_eq!(pasting_residual_from(1.0, 0.5, 0.8, 0.6), 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(pasting_residual_from(1.0, 0.25, 0.8, 0.6), 0.1, epsilon = 1e-15);
    // the ratio (1 - 0.8) / (1 - 0.6) is the root
    assert_abs_diff_eq!(pasting_residual_from(2.0, 2.0 * 0.5, 0.8, 0.6), 0.0, epsilon = 1e-15);
}

#[test]
fn residual_undefined_for_regular_models() {
    let lim = left_limits(&brownian_desk(), &LimitConfig::default(), 0).unwrap();
    assert!(matches!(pasting_residual(&brownian_desk(), 0.5, &lim), Err(Error::Domain(_))));
}

#[test]
fn kou_smooth_pasting() {
    let model = kou_desk();
    let oracle = KouOracle::new(&model);
    let sol = solve(&model, &SolverConfig::default(), 3).unwrap();
    assert_eq!(sol.method, Method::SmoothPastingLimit);
    assert!(sol.verified);
    let (lo, hi) = sol.bracket.unwrap();
    assert!(lo == sol.b_c && sol.b_c < hi && hi == model.c);
    let want = oracle.threshold(model.c);
    assert!((sol.b_c - want).abs() < 3.0 * sol.se(model.c), "{} vs {want}", sol.b_c);
}

#[test]
fn pasting_inequality_examples() {
    let model = brownian_desk();
    let lim = left_limits(&model, &LimitConfig::default(), 0).unwrap();
    let b_tilde = model.c * lim.ratio_limit;
    let at = smooth_pasting_inequality_check(&model, b_tilde, &lim).unwrap();
    assert!(at.holds);
    assert_abs_diff_eq!(at.slack, 0.0, epsilon = 1e-12);
    assert!(smooth_pasting_inequality_check(&model, 0.5132, &lim).unwrap().holds);
    let above = smooth_pasting_inequality_check(&model, 0.6, &lim).unwrap();
    assert!(above.holds && above.slack > 0.0);
    let below = smooth_pasting_inequality_check(&model, 0.4, &lim).unwrap();
    assert!(!below.holds && below.slack < 0.0);
}

#[test]
fn refuses_failing_models() {
    let bad = ModelSpec::brownian(0.2, 0.3, 0.05, 0.0, 1.0);
    match solve(&bad, &SolverConfig::default(), 0) {
        Err(Error::AssumptionFailed { assumptions, .. }) => {
            assert!(assumptions.iter().any(|a| a.number() == 3));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn convergence_means_settled_iterates() {
    let small = LimitConfig {
        paths_per_level: 2_000,
        ladder_levels: 5,
        ..LimitConfig::default()
    };
    for seed in 0..16 {
        let est = left_limits(&cpd_desk(), &small, seed).unwrap();
        assert!(est.converged);
        let it = &est.iterates;
        let (a, b) = (it[it.len() - 2], it[it.len() - 1]);
        assert!(est.noise_limited || (b - a).abs() < small.rel_tol * b.abs(), "{it:?}");
        assert_eq!(b, est.ratio_limit);
    }
}

#[test]
fn bias_dominated_ladder_is_refused() {
    // far from 0 with two levels the extrapolation error dwarfs the noise
    let cfg = LimitConfig {
        ladder_start: 2.0,
        ladder_levels: 2,
        paths_per_level: 200_000,
        rel_tol: 1e-6,
        force_monte_carlo: false,
    };
    let est = left_limits(&cpd_desk(), &cfg, 1).unwrap();
    assert!(!est.converged, "{:?}", est.iterates);
    assert_eq!(est.iterates.len(), 2);
    let solver = SolverConfig {
        limits: cfg,
        ..SolverConfig::default()
    };
    assert!(matches!(solve(&cpd_desk(), &solver, 1), Err(Error::NotConverged(_))));
}

proptest! {
    #[test]
    fn brownian_threshold_scales(mu in -0.5..0.5f64, sigma in 0.05..1.0f64, r in 0.01..1.0f64, c in 0.01..100.0f64, k in 0.1..10.0f64) {
        let model = ModelSpec::brownian(mu, sigma, r, 0.0, c);
        prop_assume!(levystop::check_assumptions(&model).admissible());
        let mut cfg = SolverConfig::default();
        cfg.convexity_points = 16;
        let a = solve(&model, &cfg, 0).unwrap();
        let b = solve(&model.with_c(k * c), &cfg, 0).unwrap();
        prop_assert!(a.b_c > 0.0 && a.b_c < c);
        prop_assert!((b.b_c - k * a.b_c).abs() <= 1e-13 * b.b_c);
    }
}
