//! Monte-Carlo evaluation of agents on common random numbers.

use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::exec::{pairwise_sum, Exec};
use crate::flow::{simulate_path, Agent, PathRecord, SimOptions};
use crate::hjb::ValueSurface;
use crate::market::{MarketParams, MarketState};
use crate::marks::MarkModel;
use crate::rng::PathSeed;

/// Default bin width of wealth histograms.
pub const HISTOGRAM_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experiment {
    pub n_sim: usize,
    pub base_seed: u64,
    pub initial: MarketState,
    pub sim: SimOptions,
    pub exec: Exec,
    pub histogram_width: f64,
}

impl Experiment {
    pub fn new(n_sim: usize, base_seed: u64, initial: MarketState) -> Self {
        Experiment {
            n_sim,
            base_seed,
            initial,
            sim: SimOptions::default(),
            exec: Exec::default(),
            histogram_width: HISTOGRAM_WIDTH,
        }
    }
}

/// Simulates `n_sim` paths of one agent. Path `n` always uses seed index
/// `n`, so two agents run on the same seed see the same order flow.
pub fn simulate_paths<A: Agent + ?Sized>(
    params: &MarketParams,
    marks: &MarkModel,
    agent: &A,
    exp: &Experiment,
) -> Result<Vec<PathRecord>> {
    exp.exec
        .map(exp.n_sim, |n| {
            let seed = PathSeed::new(exp.base_seed, n as u64);
            simulate_path(params, marks, agent, &exp.initial, seed, &exp.sim).map_err(|e| {
                ModelError::PathFailure {
                    seed: exp.base_seed,
                    path: n as u64,
                    source: Box::new(e),
                }
            })
        })
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub origin: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins are `[origin + k width, origin + (k + 1) width)`, with the
    /// origin a multiple of the width.
    pub fn new(xs: &[f64], width: f64) -> Self {
        let finite = xs.iter().copied().filter(|x| x.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo > hi {
            return Histogram { origin: 0.0, width, counts: Vec::new() };
        }
        let origin = (lo / width).floor() * width;
        let bins = ((hi - origin) / width).floor() as usize + 1;
        let mut counts = vec![0; bins];
        for &x in xs.iter().filter(|x| x.is_finite()) {
            let k = (((x - origin) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram { origin, width, counts }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / xs.len() as f64
}

/// Whether a path both bought and sold.
pub fn is_speculative(trades: &[f64]) -> bool {
    trades.iter().any(|&d| d > 0.0) && trades.iter().any(|&d| d < 0.0)
}

/// Whether the trader left the monotone route to `target_q`. Any path that
/// trades both ways does, whatever the target.
pub fn detect_speculation(path: &PathRecord, _target_q: f64) -> bool {
    is_speculative(&path.trades)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub agent: String,
    pub n_sim: usize,
    pub base_seed: u64,
    pub params: MarketParams,
    pub marks: MarkModel,
    pub initial: MarketState,
    pub mean: f64,
    pub variance: f64,
    pub speculation_fraction: f64,
    pub breaker_fraction: f64,
    /// Signal-Sharpe ratio against a no-signal reference run.
    pub ssr: Option<f64>,
    pub histogram: Histogram,
    #[serde(skip)]
    pub wealth: Vec<f64>,
}

impl EvalReport {
    pub fn from_paths(agent: &str, params: &MarketParams, marks: &MarkModel, exp: &Experiment, paths: &[PathRecord]) -> Self {
        let wealth: Vec<f64> = paths.iter().map(|p| p.terminal_wealth).collect();
        let n = paths.len().max(1) as f64;
        let spec = paths.iter().filter(|p| is_speculative(&p.trades)).count();
        let halted = paths.iter().filter(|p| p.breaker_time.is_some()).count();
        EvalReport {
            agent: agent.to_string(),
            n_sim: paths.len(),
            base_seed: exp.base_seed,
            params: *params,
            marks: marks.clone(),
            initial: exp.initial,
            mean: mean(&wealth),
            variance: variance(&wealth),
            speculation_fraction: spec as f64 / n,
            breaker_fraction: halted as f64 / n,
            ssr: None,
            histogram: Histogram::new(&wealth, exp.histogram_width),
            wealth,
        }
    }

    /// Fills in the Signal-Sharpe ratio against `reference`, which must
    /// share this run's seeds.
    pub fn with_reference(mut self, reference: &EvalReport) -> Result<Self> {
        if reference.base_seed != self.base_seed || reference.n_sim != self.n_sim {
            return Err(ModelError::Mismatch("reference run uses other seeds".into()));
        }
        self.ssr = Some(signal_sharpe_ratio(&self.wealth, &reference.wealth)?);
        Ok(self)
    }
}

/// Runs every agent on the same seeds.
pub fn run_experiment(
    params: &MarketParams,
    marks: &MarkModel,
    agents: &[(&str, &dyn Agent)],
    exp: &Experiment,
) -> Result<Vec<EvalReport>> {
    params.validate()?;
    marks.validate()?;
    if exp.n_sim == 0 {
        return Err(ModelError::param("n_sim", "must be at least 1"));
    }
    if exp.histogram_width.is_nan() || exp.histogram_width <= 0.0 {
        return Err(ModelError::param("histogram_width", "must be positive"));
    }
    agents
        .iter()
        .map(|(name, agent)| {
            let paths = simulate_paths(params, marks, *agent, exp)?;
            Ok(EvalReport::from_paths(name, params, marks, exp, &paths))
        })
        .collect()
}

/// Mean gain from the signal in units of the signal strategy's standard
/// deviation.
pub fn signal_sharpe_ratio(with: &[f64], without: &[f64]) -> Result<f64> {
    if with.is_empty() || without.is_empty() {
        return Err(ModelError::Undefined("empty sample".into()));
    }
    let sd = variance(with).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(ModelError::Undefined("zero wealth dispersion".into()));
    }
    Ok((mean(with) - mean(without)) / sd)
}

/// Mean and standard error of `a - b` over paired samples.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(ModelError::Mismatch(format!("paired samples of {} and {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok((mean(&d), (variance(&d) / (d.len() - 1) as f64).sqrt()))
}

/// Paired difference of squared deviations from each sample's mean, so a
/// positive mean says `a` is more dispersed than `b`.
pub fn variance_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let (ma, mb) = (mean(a), mean(b));
    let sa: Vec<f64> = a.iter().map(|x| (x - ma).powi(2)).collect();
    let sb: Vec<f64> = b.iter().map(|x| (x - mb).powi(2)).collect();
    paired_difference(&sa, &sb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Consistency {
    pub simulated: f64,
    pub std_error: f64,
    pub solver: f64,
    pub discrepancy: f64,
    pub allowance: f64,
    pub passed: bool,
}

/// Compares the simulated reduced utility of the solved agent with the
/// solver's value at the initial node. The allowance is three standard
/// errors plus `rel_tol` of the solver value.
pub fn consistency_check(surface: &ValueSurface, report: &EvalReport, rel_tol: f64) -> Result<Consistency> {
    if surface.params != report.params || surface.marks != report.marks {
        return Err(ModelError::Mismatch("report was simulated under another model".into()));
    }
    if report.wealth.len() < 2 {
        return Err(ModelError::Undefined("fewer than two paths".into()));
    }
    let init = &report.initial;
    let solver = surface.at(surface.grid.n_t, init.lambda, init.q)?;
    let book = init.book_value();
    let alpha = surface.params.alpha;
    let u: Vec<f64> = report
        .wealth
        .iter()
        .map(|&x| if alpha > 0.0 { -(-alpha * (x - book)).exp() } else { x - book })
        .collect();
    let simulated = mean(&u);
    let std_error = (variance(&u) / (u.len() - 1) as f64).sqrt();
    let discrepancy = (simulated - solver).abs();
    let allowance = 3.0 * std_error + rel_tol * solver.abs();
    Ok(Consistency {
        simulated,
        std_error,
        solver,
        discrepancy,
        allowance,
        passed: discrepancy <= allowance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        let h = Histogram::new(&[0.01, 0.04, 0.05, 0.12, -0.01], 0.05);
        assert!((h.origin + 0.05).abs() < 1e-12);
        assert_eq!(h.counts, vec![1, 2, 1, 1]);
        assert_eq!(h.counts.iter().sum::<u64>(), 5);
    }

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_eq!(variance(&xs), 1.25);
        let (d, se) = paired_difference(&[2.0, 3.0, 5.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((d - 7.0 / 3.0).abs() < 1e-12);
        assert!(se > 0.0);
    }

    #[test]
    fn sharpe_ratio() {
        assert_eq!(signal_sharpe_ratio(&[1.0, 3.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(signal_sharpe_ratio(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert!(signal_sharpe_ratio(&[0.0, 0.0], &[1.0, 3.0]).is_err());
        assert!(signal_sharpe_ratio(&[], &[1.0]).is_err());
    }

    #[test]
    fn speculation() {
        assert!(!is_speculative(&[1.0, 2.0, 3.0]));
        assert!(is_speculative(&[3.0, -1.0]));
        assert!(!is_speculative(&[]));
    }
}
