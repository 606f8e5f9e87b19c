use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigexec_core::impact::DensityFn;
use sigexec_core::{ImpactCurve, MarketParams, MarketState, ShockTriple};

/// Composite Simpson rule; exact for the cubic integrands used here.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * h;
            h / 6.0 * (f(lo) + 4.0 * f(lo + 0.5 * h) + f(lo + h))
        })
        .sum()
}

fn oracle_impact(p: &MarketParams, delta: f64, lambda: f64) -> f64 {
    delta.signum() * simpson(|z| p.theta_iota + p.kappa_iota * (lambda - z), 0.0, delta.abs(), 16)
}

fn oracle_cost(p: &MarketParams, delta: f64, lambda: f64) -> f64 {
    simpson(|z| oracle_impact(p, z, lambda), 0.0, delta.abs(), 16)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn closed_forms_match_quadrature() {
    let p = MarketParams::benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.random_range(p.lambda_lower..p.lambda_upper);
        let room = lambda - p.lambda_lower;
        let delta = rng.random_range(0.01..room.max(0.02)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        worst = worst
            .max(rel(p.price_impact(delta, lambda), oracle_impact(&p, delta, lambda)))
            .max(rel(p.impact_cost(delta, lambda), oracle_cost(&p, delta, lambda)));
    }
    assert!(worst < 1e-10, "worst relative error {worst}");
}

#[test]
fn generic_quadrature_matches_closed_forms() {
    let p = MarketParams::benchmark();
    let curve = DensityFn(|l: f64| p.iota(l));
    for &(d, l) in &[(3.0, 0.0), (-7.5, 12.0), (20.0, -15.0), (0.25, 39.0)] {
        assert!(rel(curve.impact(d, l), p.price_impact(d, l)) < 1e-12);
        assert!(rel(curve.cost(d, l), p.impact_cost(d, l)) < 1e-12);
    }
}

#[test]
fn generic_quadrature_nonlinear_density() {
    let curve = DensityFn(|l: f64| 0.02 * (-0.03 * l).exp());
    let (d, l) = (6.0f64, 5.0f64);
    let exact = 0.02 * (-0.03 * l).exp() * ((0.03 * d).exp() - 1.0) / 0.03;
    assert!(rel(curve.impact(d, l), exact) < 1e-12);
    let cost = simpson(|z| curve.impact(z, l), 0.0, d, 400);
    assert!(rel(curve.cost(d, l), cost) < 1e-10);
}

#[test]
fn zero_trade_is_free() {
    let p = MarketParams::benchmark();
    assert_eq!(p.price_impact(0.0, 3.0), 0.0);
    assert_eq!(p.impact_cost(0.0, 3.0), 0.0);
}

fn roundtrip_cash(p: &MarketParams, delta: f64, lambda: f64) -> f64 {
    let s0 = MarketState::new(lambda, 0.0, 100.0, 0.0);
    let s1 = p.apply_shock(&s0, ShockTriple::trade(delta), false).unwrap();
    let s2 = p.apply_shock(&s1, ShockTriple::trade(-delta), false).unwrap();
    assert_eq!(s2.q, 0.0);
    s2.x
}

#[test]
fn roundtrips_lose_money_on_the_grid() {
    let p = MarketParams::benchmark();
    for lots in 1..=5 {
        let delta = lots as f64 * p.lot_size;
        let mut lambda = p.lambda_lower + 2.0 * delta;
        while lambda <= p.lambda_upper {
            assert!(roundtrip_cash(&p, delta, lambda) < 0.0, "buy-sell {delta} at {lambda}");
            assert!(roundtrip_cash(&p, -delta, lambda) < 0.0, "sell-buy {delta} at {lambda}");
            lambda += 1.0;
        }
    }
}

#[test]
fn roundtrip_loss_without_spread() {
    let p = MarketParams { zeta: 0.0, ..MarketParams::benchmark() };
    let delta = 4.0;
    let lambda = 0.0;
    // buy at lambda, sell at lambda - delta: the sale moves the price further
    let i1 = p.price_impact(delta, lambda);
    let i2 = p.price_impact(delta, lambda - delta);
    let loss = p.impact_cost(delta, lambda) + p.impact_cost(delta, lambda - delta) - i1 * delta;
    assert!(i2 > i1);
    assert!((roundtrip_cash(&p, delta, lambda) + loss).abs() < 1e-9);
    assert!(loss > 0.0);
}

proptest! {
    #[test]
    fn impact_is_additive_when_split(a in 0.0f64..20.0, b in 0.0f64..20.0, lambda in -40.0f64..40.0, buy in any::<bool>()) {
        let p = MarketParams::benchmark();
        let s = if buy { 1.0 } else { -1.0 };
        let whole = p.price_impact(s * (a + b), lambda);
        let split = p.price_impact(s * a, lambda) + p.price_impact(s * b, lambda - a);
        prop_assert!((whole - split).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn cost_splits_with_carried_impact(a in 0.0f64..20.0, b in 0.0f64..20.0, lambda in -40.0f64..40.0, buy in any::<bool>()) {
        let p = MarketParams::benchmark();
        let s = if buy { 1.0 } else { -1.0 };
        let whole = p.impact_cost(s * (a + b), lambda);
        let split = p.impact_cost(s * a, lambda)
            + b * p.price_impact(s * a, lambda).abs()
            + p.impact_cost(s * b, lambda - a);
        prop_assert!((whole - split).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn impact_is_odd_and_cost_even(d in -30.0f64..30.0, lambda in -40.0f64..40.0) {
        let p = MarketParams::benchmark();
        prop_assert_eq!(p.price_impact(-d, lambda), -p.price_impact(d, lambda));
        prop_assert_eq!(p.impact_cost(-d, lambda), p.impact_cost(d, lambda));
        prop_assert!(p.impact_cost(d, lambda) >= 0.0);
    }
}
