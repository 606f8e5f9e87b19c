//! Trading agents: the solved feedback policy and simple baselines.

use crate::flow::Agent;
use crate::hjb::Policy;
use crate::market::{clip_to_liquidity, MarketParams, MarketState};

/// Executes a solved policy by nearest-node lookup.
///
/// Trades stay on the lot lattice. A trade the book cannot fully absorb is
/// cut to the available liquidity, unless the table itself asks for a
/// trade that runs through the trigger; that one is passed on unchanged so
/// the breaker fires as the solver assumed.
#[derive(Debug, Clone, Copy)]
pub struct SolvedAgent<'a> {
    policy: &'a Policy,
}

impl<'a> SolvedAgent<'a> {
    pub fn new(policy: &'a Policy) -> Self {
        SolvedAgent { policy }
    }

    fn node(&self, t: f64, state: &MarketState) -> Option<(usize, usize, usize)> {
        let g = &self.policy.grid;
        let horizon = self.policy.params.horizon;
        if t >= horizon || state.halted {
            return None;
        }
        let k = g.nearest_t(horizon - t);
        Some((k, g.nearest_lambda(state.lambda), g.nearest_q(state.q)))
    }

    fn admissible(&self, j: usize, trade: f64, state: &MarketState) -> f64 {
        let g = &self.policy.grid;
        if trade == 0.0 {
            return 0.0;
        }
        if g.lambda(j) - trade.abs() < g.lambda_lower {
            return trade;
        }
        clip_to_liquidity(trade, state.lambda, g.lambda_lower)
    }
}

impl Agent for SolvedAgent<'_> {
    fn on_signal(&self, t: f64, state: &MarketState, z: i8) -> f64 {
        match self.node(t, state) {
            Some((k, j, i)) if z != 0 => {
                let a = self.policy.gamma_star(k.max(1), j, i, z);
                self.admissible(j, a, state)
            }
            _ => 0.0,
        }
    }

    fn on_state(&self, t: f64, state: &MarketState) -> f64 {
        match self.node(t, state) {
            Some((k, j, i)) if k > 0 => {
                let a = self.policy.delta_star(k, j, i).unwrap_or(0.0);
                self.admissible(j, a, state)
            }
            _ => 0.0,
        }
    }

    fn decision_interval(&self) -> Option<f64> {
        Some(self.policy.grid.dt)
    }
}

/// Trades towards `target_q` at once, as far as liquidity allows.
#[derive(Debug, Clone, Copy)]
pub struct ImmediateExecution {
    pub target_q: f64,
    pub lambda_lower: f64,
}

impl ImmediateExecution {
    pub fn new(params: &MarketParams, target_q: f64) -> Self {
        ImmediateExecution {
            target_q,
            lambda_lower: params.lambda_lower,
        }
    }
}

impl Agent for ImmediateExecution {
    fn on_signal(&self, _: f64, _: &MarketState, _: i8) -> f64 {
        0.0
    }

    fn on_state(&self, _: f64, state: &MarketState) -> f64 {
        clip_to_liquidity(self.target_q - state.q, state.lambda, self.lambda_lower)
    }
}

/// Splits the programme into `slices` equal lot-rounded child orders at
/// evenly spaced times.
#[derive(Debug, Clone, Copy)]
pub struct Twap {
    pub start_q: f64,
    pub target_q: f64,
    pub slices: u32,
    pub horizon: f64,
    pub lot_size: f64,
    pub lambda_lower: f64,
}

impl Twap {
    pub fn new(params: &MarketParams, start_q: f64, target_q: f64, slices: u32) -> Self {
        Twap {
            start_q,
            target_q,
            slices: slices.max(1),
            horizon: params.horizon,
            lot_size: params.lot_size,
            lambda_lower: params.lambda_lower,
        }
    }

    fn scheduled(&self, t: f64) -> f64 {
        let n = self.slices as f64;
        let done = ((t / self.horizon * n + 1e-9).floor() + 1.0).min(n);
        let lots = ((self.target_q - self.start_q) * done / n / self.lot_size).round();
        self.start_q + lots * self.lot_size
    }
}

impl Agent for Twap {
    fn on_signal(&self, _: f64, _: &MarketState, _: i8) -> f64 {
        0.0
    }

    fn on_state(&self, t: f64, state: &MarketState) -> f64 {
        clip_to_liquidity(self.scheduled(t) - state.q, state.lambda, self.lambda_lower)
    }

    fn decision_interval(&self) -> Option<f64> {
        Some(self.horizon / self.slices as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twap_schedule() {
        let p = MarketParams::benchmark();
        let a = Twap::new(&p, -8.0, 0.0, 4);
        assert_eq!(a.scheduled(0.0), -6.0);
        assert_eq!(a.scheduled(0.25), -4.0);
        assert_eq!(a.scheduled(0.99), 0.0);
        let s = MarketState::new(0.0, -8.0, 100.0, 0.0);
        assert_eq!(a.on_state(0.0, &s), 2.0);
        assert_eq!(a.decision_interval(), Some(0.25));
    }

    #[test]
    fn immediate_execution_respects_liquidity() {
        let p = MarketParams::benchmark();
        let a = ImmediateExecution::new(&p, 0.0);
        let s = MarketState::new(-35.0, -8.0, 100.0, 0.0);
        assert_eq!(a.on_state(0.0, &s), 5.0);
        let s = MarketState::new(10.0, -8.0, 100.0, 0.0);
        assert_eq!(a.on_state(0.0, &s), 8.0);
    }
}
