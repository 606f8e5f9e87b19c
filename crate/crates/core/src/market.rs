//! Closed-form model primitives: impact, impact cost, arrival rates,
//! volatility, the liquidity clip and the one-event state updates.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::impact::ImpactCurve;
use crate::marks::MarkModel;

/// All model coefficients.
///
/// Rates are `f(l) = theta_f exp(kappa_f l)` for market orders and
/// `g(l) = theta_g exp(-kappa_g l)` for limit-order events; the impact
/// density is `iota(l) = theta_iota + kappa_iota l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketParams {
    pub theta_f: f64,
    pub kappa_f: f64,
    pub theta_g: f64,
    pub kappa_g: f64,
    pub theta_iota: f64,
    pub kappa_iota: f64,
    /// Half-spread.
    pub zeta: f64,
    pub sigma_auction: f64,
    pub alpha: f64,
    /// Liquidity trigger of the circuit breaker.
    pub lambda_lower: f64,
    /// Numerical cap on liquidity.
    pub lambda_upper: f64,
    pub lot_size: f64,
    pub horizon: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl MarketParams {
    pub fn benchmark() -> Self {
        MarketParams {
            theta_f: 20.0,
            kappa_f: 0.01,
            theta_g: 40.0,
            kappa_g: 0.01,
            theta_iota: 0.01,
            kappa_iota: -0.0002,
            zeta: 0.005,
            sigma_auction: 0.3,
            alpha: 0.1,
            lambda_lower: -40.0,
            lambda_upper: 40.0,
            lot_size: 1.0,
            horizon: 1.0,
        }
    }

    /// Sets the half-spread from a full bid-ask spread.
    pub fn with_spread(mut self, spread: f64) -> Self {
        self.zeta = 0.5 * spread;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("theta_f", self.theta_f),
            ("kappa_f", self.kappa_f),
            ("theta_g", self.theta_g),
            ("kappa_g", self.kappa_g),
            ("theta_iota", self.theta_iota),
            ("kappa_iota", self.kappa_iota),
            ("zeta", self.zeta),
            ("sigma_auction", self.sigma_auction),
            ("alpha", self.alpha),
            ("lambda_lower", self.lambda_lower),
            ("lambda_upper", self.lambda_upper),
            ("lot_size", self.lot_size),
            ("horizon", self.horizon),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ModelError::param(name, "must be finite"));
            }
        }
        // Zero rates are allowed; they switch the order flow off.
        if self.theta_f < 0.0 || self.theta_g < 0.0 {
            return Err(ModelError::param("theta_f/theta_g", "must be nonnegative"));
        }
        if self.kappa_f < 0.0 || self.kappa_g < 0.0 {
            return Err(ModelError::param("kappa_f/kappa_g", "must be nonnegative"));
        }
        if self.kappa_iota > 0.0 {
            return Err(ModelError::param("kappa_iota", "impact density must be non-increasing"));
        }
        if self.lambda_lower >= self.lambda_upper {
            return Err(ModelError::param("lambda_lower", "must be below lambda_upper"));
        }
        for l in [self.lambda_lower, self.lambda_upper] {
            if self.iota(l) < 0.0 {
                return Err(ModelError::param(
                    "kappa_iota",
                    format!("impact density iota({l}) = {} is negative", self.iota(l)),
                ));
            }
        }
        if self.lot_size <= 0.0 {
            return Err(ModelError::param("lot_size", "must be positive"));
        }
        if self.zeta < 0.0 {
            return Err(ModelError::param("zeta", "must be nonnegative"));
        }
        if self.sigma_auction <= 0.0 {
            return Err(ModelError::param("sigma_auction", "must be positive"));
        }
        if self.alpha < 0.0 {
            return Err(ModelError::param("alpha", "must be nonnegative"));
        }
        if self.horizon < 0.0 {
            return Err(ModelError::param("horizon", "must be nonnegative"));
        }
        Ok(())
    }

    #[inline]
    pub fn iota(&self, lambda: f64) -> f64 {
        self.theta_iota + self.kappa_iota * lambda
    }

    /// `I(delta, lambda) = sgn(delta) int_0^|delta| iota(lambda - z) dz`.
    #[inline]
    pub fn price_impact(&self, delta: f64, lambda: f64) -> f64 {
        let a = delta.abs();
        if a == 0.0 {
            return 0.0;
        }
        delta.signum() * (self.iota(lambda) * a - 0.5 * self.kappa_iota * a * a)
    }

    /// `Xi(delta, lambda) = int_0^|delta| I(z, lambda) dz`.
    #[inline]
    pub fn impact_cost(&self, delta: f64, lambda: f64) -> f64 {
        let a = delta.abs();
        0.5 * self.iota(lambda) * a * a - self.kappa_iota * a * a * a / 6.0
    }

    #[inline]
    pub fn market_rate(&self, lambda: f64) -> f64 {
        self.theta_f * (self.kappa_f * lambda).exp()
    }

    #[inline]
    pub fn limit_rate(&self, lambda: f64) -> f64 {
        self.theta_g * (-self.kappa_g * lambda).exp()
    }

    /// `(f(lambda), g(lambda))`.
    pub fn arrival_rates(&self, lambda: f64) -> (f64, f64) {
        (self.market_rate(lambda), self.limit_rate(lambda))
    }

    /// Largest total event rate on the live liquidity range.
    pub fn max_total_rate(&self) -> f64 {
        self.market_rate(self.lambda_upper) + self.limit_rate(self.lambda_lower)
    }

    /// `Upsilon`: the part of `delta` the book can fill without pushing
    /// liquidity below the trigger.
    #[inline]
    pub fn clip(&self, delta: f64, lambda: f64) -> f64 {
        clip_to_liquidity(delta, lambda, self.lambda_lower)
    }

    /// Squared L2 norm of market-order impact at `lambda`.
    pub fn squared_impact_norm(&self, lambda: f64, marks: &MarkModel) -> f64 {
        marks
            .market_orders
            .iter()
            .map(|m| m.prob * self.price_impact(m.volume, lambda).powi(2))
            .sum()
    }

    /// Instantaneous price volatility `sigma(lambda)`.
    pub fn price_volatility(&self, lambda: f64, marks: &MarkModel) -> f64 {
        (self.market_rate(lambda) * self.squared_impact_norm(lambda, marks)).sqrt()
    }

    /// Exponential (or linear for `alpha = 0`) utility of wealth.
    #[inline]
    pub fn utility(&self, wealth: f64) -> f64 {
        utility(self.alpha, wealth)
    }

    /// One external or trader event, with or without the circuit breaker.
    ///
    /// Sequencing: the trade `gamma` executes at the pre-trade liquidity and
    /// price, the external market order `eta` then hits the book at
    /// `lambda - |gamma|`, and the limit flow `rho` finally adjusts
    /// liquidity. With the breaker all liquidity-taking volumes are clipped
    /// at the trigger, the state is flagged halted, and halted states never
    /// change again.
    pub fn apply_shock(
        &self,
        state: &MarketState,
        shock: ShockTriple,
        breaker: bool,
    ) -> Result<MarketState> {
        let ShockTriple { gamma, eta, rho } = shock;
        if eta != 0.0 && rho != 0.0 {
            return Err(ModelError::SimultaneousOrders { eta, rho });
        }
        if !breaker {
            let l0 = state.lambda;
            return Ok(MarketState {
                lambda: l0 - gamma.abs() - eta.abs() + rho,
                q: state.q + gamma,
                p: state.p + self.price_impact(gamma, l0) + self.price_impact(eta, l0 - gamma.abs()),
                x: state.x
                    - state.p * gamma
                    - self.zeta * gamma.abs()
                    - self.impact_cost(gamma, l0),
                halted: state.halted,
            });
        }
        if state.halted || state.lambda < self.lambda_lower {
            return Ok(*state);
        }

        let l0 = state.lambda;
        let lower = self.lambda_lower;
        let traded = self.clip(gamma, l0);
        let mut next = MarketState {
            lambda: l0 - traded.abs(),
            q: state.q + traded,
            p: state.p + self.price_impact(traded, l0),
            x: state.x - state.p * traded - self.zeta * traded.abs() - self.impact_cost(traded, l0),
            halted: false,
        };
        if l0 - gamma.abs() < lower {
            next.halted = true;
            return Ok(next);
        }

        let l1 = next.lambda;
        if eta != 0.0 {
            let filled = self.clip(eta, l1);
            next.p += self.price_impact(filled, l1);
            next.lambda = l1 - filled.abs();
            next.halted = l1 - eta.abs() < lower;
        } else if rho > 0.0 {
            next.lambda = l1 + rho;
        } else if rho < 0.0 {
            let cancelled = self.clip(rho, l1);
            next.lambda = l1 - cancelled.abs();
            next.halted = l1 - rho.abs() < lower;
        }
        Ok(next)
    }

    /// Terminal wealth: cash plus liquidation of the remaining inventory,
    /// with the part the book cannot absorb cleared in an auction at price
    /// `p + sigma Y`.
    pub fn terminal_wealth(&self, state: &MarketState, auction_draw: f64) -> f64 {
        let q = state.q;
        let room = (state.lambda - self.lambda_lower).max(0.0);
        let auctioned = (q.abs() - room).max(0.0);
        state.x + state.p * q + self.sigma_auction * auction_draw * q.signum() * auctioned
            - self.zeta * q.abs()
            - self.impact_cost(-q, state.lambda)
    }
}

impl ImpactCurve for MarketParams {
    fn density(&self, lambda: f64) -> f64 {
        self.iota(lambda)
    }

    fn impact(&self, delta: f64, lambda: f64) -> f64 {
        self.price_impact(delta, lambda)
    }

    fn cost(&self, delta: f64, lambda: f64) -> f64 {
        self.impact_cost(delta, lambda)
    }
}

/// Returns `delta` if the book holds enough liquidity above `lower`,
/// otherwise the signed remaining room `sgn(delta) (lambda - lower)^+`.
#[inline]
pub fn clip_to_liquidity(delta: f64, lambda: f64, lower: f64) -> f64 {
    if lambda - delta.abs() >= lower {
        delta
    } else if delta == 0.0 {
        0.0
    } else {
        delta.signum() * (lambda - lower).max(0.0)
    }
}

#[inline]
pub fn utility(alpha: f64, wealth: f64) -> f64 {
    if alpha > 0.0 {
        -(-alpha * wealth).exp()
    } else {
        wealth
    }
}

/// Liquidity, inventory, price and cash at one instant. `halted` records
/// that the circuit breaker has fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub lambda: f64,
    pub q: f64,
    pub p: f64,
    pub x: f64,
    #[serde(default)]
    pub halted: bool,
}

impl MarketState {
    pub fn new(lambda: f64, q: f64, p: f64, x: f64) -> Self {
        MarketState {
            lambda,
            q,
            p,
            x,
            halted: false,
        }
    }

    /// Mark-to-market wealth `x + p q`.
    pub fn book_value(&self) -> f64 {
        self.x + self.p * self.q
    }
}

/// Volumes arriving in one event: the trader's signal-based trade, the
/// external market order and the limit-order flow.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShockTriple {
    pub gamma: f64,
    pub eta: f64,
    pub rho: f64,
}

impl ShockTriple {
    pub fn trade(gamma: f64) -> Self {
        ShockTriple {
            gamma,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityVerdict {
    pub lambda: f64,
    /// `(f'/f) / (-d/dl I^2 / I^2)`.
    pub ratio: f64,
    pub passed: bool,
    /// The impact norm does not move with liquidity.
    pub degenerate: bool,
}

const ELASTICITY_STEP: f64 = 1e-4;

/// Evaluates `0 < (f'/f) / (-(I^2)'/I^2) < 1` on each grid point, with the
/// liquidity derivative of the squared impact norm taken by central
/// differences.
pub fn check_elasticity(
    params: &MarketParams,
    marks: &MarkModel,
    lambda_grid: &[f64],
) -> Result<Vec<ElasticityVerdict>> {
    lambda_grid
        .iter()
        .map(|&lambda| {
            let norm = params.squared_impact_norm(lambda, marks);
            if norm <= 0.0 {
                return Err(ModelError::DegenerateImpactNorm { lambda });
            }
            let up = params.squared_impact_norm(lambda + ELASTICITY_STEP, marks);
            let down = params.squared_impact_norm(lambda - ELASTICITY_STEP, marks);
            let slope = -(up - down) / (2.0 * ELASTICITY_STEP) / norm;
            let degenerate = slope == 0.0;
            let ratio = if degenerate { f64::NAN } else { params.kappa_f / slope };
            Ok(ElasticityVerdict {
                lambda,
                ratio,
                passed: !degenerate && ratio > 0.0 && ratio < 1.0,
                degenerate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bench() -> MarketParams {
        MarketParams::benchmark()
    }

    #[test]
    fn impact_examples() {
        let p = bench();
        assert_eq!(p.price_impact(0.0, 12.0), 0.0);
        assert!((p.price_impact(1.0, 0.0) - 0.0101).abs() < 1e-15);
        assert!((p.price_impact(-1.0, 0.0) + 0.0101).abs() < 1e-15);
        assert_eq!(p.impact_cost(0.0, 3.0), 0.0);
        let xi = 0.01 * 4.0 / 2.0 + 0.0002 * 8.0 / 6.0;
        assert!((p.impact_cost(2.0, 0.0) - xi).abs() < 1e-15);
        assert_eq!(p.impact_cost(-2.0, 0.0), p.impact_cost(2.0, 0.0));
    }

    #[test]
    fn rates() {
        let p = bench();
        assert_eq!(p.arrival_rates(0.0), (20.0, 40.0));
        let (f, g) = p.arrival_rates(40.0);
        assert!((f - 20.0 * 0.4f64.exp()).abs() < 1e-12);
        assert!((g - 40.0 * (-0.4f64).exp()).abs() < 1e-12);
        let flat = MarketParams {
            kappa_f: 0.0,
            kappa_g: 0.0,
            ..p
        };
        assert_eq!(flat.arrival_rates(17.0), (20.0, 40.0));
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_to_liquidity(2.0, 0.0, -40.0), 2.0);
        assert_eq!(clip_to_liquidity(5.0, -38.0, -40.0), 2.0);
        assert_eq!(clip_to_liquidity(-5.0, -41.0, -40.0), 0.0);
        assert_eq!(clip_to_liquidity(-5.0, -38.0, -40.0), -2.0);
    }

    #[test]
    fn zero_shock_is_identity() {
        let p = bench();
        let s = MarketState::new(3.0, -2.0, 100.0, 7.0);
        for breaker in [false, true] {
            assert_eq!(p.apply_shock(&s, ShockTriple::default(), breaker).unwrap(), s);
        }
    }

    #[test]
    fn buy_one_lot_without_breaker() {
        let p = bench();
        let s = MarketState::new(0.0, 0.0, 100.0, 0.0);
        let n = p.apply_shock(&s, ShockTriple::trade(1.0), false).unwrap();
        assert_eq!(n.lambda, -1.0);
        assert_eq!(n.q, 1.0);
        assert!((n.p - 100.0101).abs() < 1e-12);
        let xi = 0.01 / 2.0 + 0.0002 / 6.0;
        assert!((n.x - (-100.0 - 0.005 - xi)).abs() < 1e-12);
    }

    #[test]
    fn breaker_clips_market_order() {
        let p = bench();
        let s = MarketState::new(-39.0, 0.0, 100.0, 0.0);
        let shock = ShockTriple {
            gamma: 0.0,
            eta: -3.0,
            rho: 0.0,
        };
        let n = p.apply_shock(&s, shock, true).unwrap();
        assert_eq!(n.lambda, -40.0);
        assert!(n.halted);
        assert!((n.p - (100.0 + p.price_impact(-1.0, -39.0))).abs() < 1e-12);
        // Frozen afterwards.
        let again = p.apply_shock(&n, ShockTriple { gamma: 0.0, eta: 0.0, rho: 3.0 }, true).unwrap();
        assert_eq!(again, n);
    }

    #[test]
    fn exact_depletion_does_not_halt() {
        let p = bench();
        let s = MarketState::new(-38.0, 0.0, 100.0, 0.0);
        let n = p.apply_shock(&s, ShockTriple::trade(2.0), true).unwrap();
        assert_eq!(n.lambda, -40.0);
        assert!(!n.halted);
    }

    #[test]
    fn trader_breach_skips_external_orders() {
        let p = bench();
        let s = MarketState::new(-38.0, 0.0, 100.0, 0.0);
        let shock = ShockTriple { gamma: 3.0, eta: 0.0, rho: 2.0 };
        let n = p.apply_shock(&s, shock, true).unwrap();
        assert!(n.halted);
        assert_eq!(n.q, 2.0);
        assert_eq!(n.lambda, -40.0);
    }

    #[test]
    fn rejects_simultaneous_orders() {
        let p = bench();
        let s = MarketState::new(0.0, 0.0, 100.0, 0.0);
        let shock = ShockTriple { gamma: 0.0, eta: 1.0, rho: 1.0 };
        assert!(matches!(
            p.apply_shock(&s, shock, true),
            Err(ModelError::SimultaneousOrders { .. })
        ));
    }

    #[test]
    fn terminal_wealth_examples() {
        let p = bench();
        let s = MarketState::new(5.0, 0.0, 100.0, 12.5);
        assert_eq!(p.terminal_wealth(&s, 3.0), 12.5);
        let s = MarketState::new(10.0, 2.0, 100.0, 1.0);
        let expect = 1.0 + 200.0 - 2.0 * p.zeta - p.impact_cost(-2.0, 10.0);
        assert!((p.terminal_wealth(&s, 2.5) - expect).abs() < 1e-12);
        let s = MarketState::new(-40.0, 2.0, 100.0, 1.0);
        let expect = 1.0 + 200.0 + 2.0 * 0.3 - 2.0 * p.zeta - p.impact_cost(-2.0, -40.0);
        assert!((p.terminal_wealth(&s, 1.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn elasticity_benchmark_and_degenerate_cases() {
        let p = bench();
        let marks = MarkModel::benchmark();
        let grid: Vec<f64> = (-40..=40).map(f64::from).collect();
        assert!(check_elasticity(&p, &marks, &grid).unwrap().iter().all(|v| v.passed));

        let no_feedback = MarketParams { kappa_f: 0.0, ..p };
        let v = check_elasticity(&no_feedback, &marks, &[0.0]).unwrap();
        assert!(!v[0].passed && v[0].ratio == 0.0);

        let flat_impact = MarketParams { kappa_iota: 0.0, ..p };
        let v = check_elasticity(&flat_impact, &marks, &[0.0]).unwrap();
        assert!(!v[0].passed && v[0].degenerate);

        let no_market = MarkModel {
            market_orders: vec![],
            ..marks
        };
        assert!(check_elasticity(&p, &no_market, &[0.0]).is_err());
    }

    #[test]
    fn volatility_vanishes_without_market_orders() {
        let p = MarketParams { theta_f: 0.0, ..bench() };
        let marks = MarkModel::benchmark();
        for l in [-40.0, 0.0, 40.0] {
            assert_eq!(p.price_volatility(l, &marks), 0.0);
        }
        let b = bench();
        assert!(b.price_volatility(-10.0, &marks) > b.price_volatility(10.0, &marks));
    }

    #[test]
    fn validation() {
        bench().validate().unwrap();
        let bad = MarketParams { kappa_iota: -0.001, ..bench() };
        assert!(bad.validate().is_err());
        let bad = MarketParams { lambda_lower: 50.0, ..bench() };
        assert!(bad.validate().is_err());
        assert_eq!(bench().with_spread(0.002).zeta, 0.001);
    }
}
