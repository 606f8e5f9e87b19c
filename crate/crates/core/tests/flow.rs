use std::sync::atomic::{AtomicUsize, Ordering};

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigexec_core::eval::{mean, simulate_paths, variance, Experiment};
use sigexec_core::{
    check_elasticity, simulate_path, vbar_bound, Agent, DoNothing, Exec, ImmediateExecution, MarkModel,
    MarketParams, MarketState, PathSeed, SimOptions,
};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn start(q: f64) -> MarketState {
    MarketState::new(0.0, q, 100.0, 0.0)
}

fn se(xs: &[f64]) -> f64 {
    (variance(xs) / (xs.len() - 1) as f64).sqrt()
}

/// Small-step Bernoulli discretisation of the uncontrolled liquidity
/// process with the breaker.
fn euler_lambda(p: &MarketParams, m: &MarkModel, dt: f64, rng: &mut ChaCha8Rng) -> (f64, usize) {
    let market = WeightedIndex::new(m.market_orders.iter().map(|x| x.prob)).unwrap();
    let limit = WeightedIndex::new(m.limit_orders.iter().map(|x| x.prob)).unwrap();
    let steps = (p.horizon / dt).round() as usize;
    let mut lambda = 0.0;
    let mut live = 0;
    for _ in 0..steps {
        let u: f64 = rng.random();
        let (f, g) = p.arrival_rates(lambda);
        let change = if u < f * dt {
            -m.market_orders[market.sample(rng)].volume.abs()
        } else if u < (f + g) * dt {
            m.limit_orders[limit.sample(rng)].volume
        } else {
            continue;
        };
        live += 1;
        lambda += change;
        if lambda < p.lambda_lower {
            return (p.lambda_lower, live);
        }
    }
    (lambda, live)
}

#[test]
fn terminal_liquidity_matches_euler_oracle() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let n = 4000;
    let exp = Experiment::new(n, 3, start(0.0));
    let paths = simulate_paths(&p, &m, &DoNothing, &exp).unwrap();
    let exact_l: Vec<f64> = paths.iter().map(|r| r.terminal_state.lambda).collect();
    let exact_n: Vec<f64> = paths
        .iter()
        .map(|r| (r.live_market + r.live_post + r.live_cancel) as f64)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (euler_l, euler_n): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|_| {
            let (l, k) = euler_lambda(&p, &m, 1e-4, &mut rng);
            (l, k as f64)
        })
        .unzip();

    for (a, b, what) in [(&exact_l, &euler_l, "terminal liquidity"), (&exact_n, &euler_n, "live events")] {
        let gap = (mean(a) - mean(b)).abs();
        let tol = 4.0 * (se(a).powi(2) + se(b).powi(2)).sqrt();
        assert!(gap < tol, "{what}: {} vs {} (tol {tol})", mean(a), mean(b));
    }
    let ratio = variance(&exact_l) / variance(&euler_l);
    assert!((0.85..1.15).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn constant_rates_give_poisson_counts() {
    let p = MarketParams { kappa_f: 0.0, kappa_g: 0.0, lambda_lower: -1e6, ..MarketParams::benchmark() };
    let m = MarkModel::benchmark();
    let n = 5000;
    let exp = Experiment::new(n, 21, start(0.0));
    let paths = simulate_paths(&p, &m, &DoNothing, &exp).unwrap();
    let pois = Poisson::new(p.theta_f * p.horizon).unwrap();

    let edges: Vec<u64> = (12..=28).collect();
    let mut observed = vec![0.0; edges.len() + 1];
    for r in &paths {
        let k = r.live_market as u64;
        let bin = edges.iter().position(|&e| k < e).unwrap_or(edges.len());
        observed[bin] += 1.0;
    }
    let mut expected = Vec::new();
    let mut lo = 0;
    for &e in &edges {
        expected.push((lo..e).map(|k| pois.pmf(k)).sum::<f64>() * n as f64);
        lo = e;
    }
    expected.push(n as f64 - expected.iter().sum::<f64>());
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let pvalue = 1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(stat);
    assert!(pvalue > 1e-3, "chi-square {stat}, p = {pvalue}");
}

#[derive(Default)]
struct SignalCounter {
    minus: AtomicUsize,
    plus: AtomicUsize,
}

impl Agent for SignalCounter {
    fn on_signal(&self, _: f64, _: &MarketState, z: i8) -> f64 {
        if z < 0 { &self.minus } else { &self.plus }.fetch_add(1, Ordering::Relaxed);
        0.0
    }

    fn on_state(&self, _: f64, _: &MarketState) -> f64 {
        0.0
    }
}

#[test]
fn signals_announce_a_share_of_live_events() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let agent = SignalCounter::default();
    let exp = Experiment::new(2000, 5, start(0.0));
    let paths = simulate_paths(&p, &m, &agent, &exp).unwrap();
    let taking: usize = paths.iter().map(|r| r.live_market + r.live_cancel).sum();
    let posts: usize = paths.iter().map(|r| r.live_post).sum();
    for (k, total) in [(agent.minus.load(Ordering::Relaxed), taking), (agent.plus.load(Ordering::Relaxed), posts)] {
        let phat = k as f64 / total as f64;
        let sd = (0.2 * 0.8 / total as f64).sqrt();
        assert!((phat - 0.2).abs() < 4.0 * sd, "signal share {phat}");
    }
}

#[test]
fn signal_free_agents_see_identical_paths() {
    let p = MarketParams::benchmark();
    let exp = Experiment::new(200, 8, start(-8.0));
    let a = simulate_paths(&p, &MarkModel::benchmark(), &DoNothing, &exp).unwrap();
    let b = simulate_paths(&p, &MarkModel::benchmark().with_signal_prob(0.0), &DoNothing, &exp).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.terminal_wealth, y.terminal_wealth);
        assert_eq!(x.candidates, y.candidates);
    }
}

#[test]
fn execution_mode_does_not_change_results() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let agent = ImmediateExecution::new(&p, 0.0);
    let mut exp = Experiment::new(300, 13, start(-8.0));
    exp.exec = Exec::Sequential;
    let a = simulate_paths(&p, &m, &agent, &exp).unwrap();
    exp.exec = Exec::Parallel;
    let b = simulate_paths(&p, &m, &agent, &exp).unwrap();
    assert_eq!(a, b);
}

#[test]
fn paths_are_reproducible_from_their_seed() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let opts = SimOptions { log_events: true, ..Default::default() };
    let seed = PathSeed::new(42, 17);
    let a = simulate_path(&p, &m, &DoNothing, &start(0.0), seed, &opts).unwrap();
    let b = simulate_path(&p, &m, &DoNothing, &start(0.0), seed, &opts).unwrap();
    assert_eq!(a, b);
    let c = simulate_path(&p, &m, &DoNothing, &start(0.0), PathSeed::new(42, 18), &opts).unwrap();
    assert_ne!(a.events, c.events);
}

#[test]
fn liquidity_variation_is_dominated_pathwise() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let exp = Experiment::new(1000, 2, start(-8.0));
    let agents: [&dyn Agent; 2] = [&DoNothing, &ImmediateExecution::new(&p, 30.0)];
    for agent in agents {
        for r in simulate_paths(&p, &m, agent, &exp).unwrap() {
            let bound = vbar_bound(exp.initial.lambda, &r, &p);
            assert!(r.total_variation() <= bound + 1e-9, "{} > {bound}", r.total_variation());
        }
    }
}

#[test]
fn total_variation_moments_respect_bound() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let exp = Experiment::new(10_000, 1, start(-8.0));
    let paths = simulate_paths(&p, &m, &DoNothing, &exp).unwrap();
    let tv: Vec<f64> = paths.iter().map(|r| r.total_variation()).collect();
    let cap = p.limit_rate(p.lambda_lower) * p.horizon;
    for n in [1, 2] {
        let moments: Vec<f64> = tv.iter().map(|v| v.powi(n)).collect();
        let bound = (n + 1) as f64 * (exp.initial.lambda - p.lambda_lower).powi(n)
            + (n + 1) as f64 * cap.powi(n) * m.limit_mass().powi(n - 1) * m.positive_limit_moment(n);
        assert!(mean(&moments) <= bound + 3.0 * se(&moments), "moment {n}: {} > {bound}", mean(&moments));
    }
}

#[test]
fn realized_quadratic_variation_matches_compensator() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let exp = Experiment::new(10_000, 4, start(-8.0));
    let paths = simulate_paths(&p, &m, &DoNothing, &exp).unwrap();
    let diff: Vec<f64> = paths.iter().map(|r| r.realized_qv - r.compensator).collect();
    assert!(mean(&diff).abs() <= 3.0 * se(&diff), "{} +- {}", mean(&diff), se(&diff));
}

#[test]
fn volatility_falls_with_liquidity() {
    let p = MarketParams::benchmark();
    let m = MarkModel::benchmark();
    let grid: Vec<f64> = (-40..=40).map(f64::from).collect();
    assert!(check_elasticity(&p, &m, &grid).unwrap().iter().all(|v| v.passed));
    let sigma: Vec<f64> = grid.iter().map(|&l| p.price_volatility(l, &m)).collect();
    assert!(sigma.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn zero_horizon_liquidates_immediately() {
    let p = MarketParams { horizon: 0.0, ..MarketParams::benchmark() };
    let r = simulate_path(&p, &MarkModel::benchmark(), &DoNothing, &start(-2.0), PathSeed::new(0, 0), &Default::default())
        .unwrap();
    assert_eq!(r.candidates, 0);
    assert_eq!(r.trades, vec![2.0]);
    let expected = -200.0 - p.zeta * 2.0 - p.impact_cost(2.0, 0.0);
    assert!((r.terminal_wealth - expected).abs() < 1e-12);
}

#[test]
fn initial_liquidity_must_be_live() {
    let p = MarketParams::benchmark();
    let s = MarketState::new(-41.0, 0.0, 100.0, 0.0);
    assert!(simulate_path(&p, &MarkModel::benchmark(), &DoNothing, &s, PathSeed::new(0, 0), &Default::default()).is_err());
}
