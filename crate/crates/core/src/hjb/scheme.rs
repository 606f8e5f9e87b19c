//! Explicit backward scheme for the reduced value function.
//!
//! With exponential utility the value factors as
//! `v(T', lambda, q, p, x) = |U(x + p q)| w(T', lambda, q)`, so any event or
//! trade that moves mark-to-market wealth by `J` enters as the factor
//! `|U(J)| = exp(-alpha J)`. For `alpha = 0` the ansatz is additive and the
//! factor becomes `+ J`.

use crate::error::Result;
use crate::exec::Exec;
use crate::market::{clip_to_liquidity, MarketParams};
use crate::marks::{MarkModel, OrderKind};

use super::grid::{interpolate_lambda, Grid};
use super::surface::{Policy, Solution, SolveStats, ValueSurface};

/// Slack when comparing liquidity levels built from grid arithmetic.
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    pub exec: Exec,
    /// Allow trading on signals.
    pub signal_trades: bool,
    /// Allow impulse trades between events.
    pub impulses: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            exec: Exec::default(),
            signal_trades: true,
            impulses: true,
        }
    }
}

#[inline]
fn combine(alpha: f64, w: f64, jump: f64) -> f64 {
    if alpha > 0.0 {
        w * (-alpha * jump).exp()
    } else {
        w + jump
    }
}

/// Reduced value once the breaker has fired with inventory `q`: the whole
/// position clears in the auction at the trigger.
pub fn breaker_value(params: &MarketParams, q: f64) -> f64 {
    let cost = params.zeta * q.abs() + params.impact_cost(q, params.lambda_lower);
    let a = params.alpha;
    if a > 0.0 {
        -(a * cost).exp() * (0.5 * a * a * params.sigma_auction.powi(2) * q * q).exp()
    } else {
        -cost
    }
}

/// Reduced value at the horizon. Liquidity below the trigger means the
/// breaker has fired.
pub fn terminal_condition(params: &MarketParams, lambda: f64, q: f64) -> f64 {
    if lambda < params.lambda_lower {
        return breaker_value(params, q);
    }
    let cost = params.zeta * q.abs() + params.impact_cost(q, lambda);
    let a = params.alpha;
    if a > 0.0 {
        let auctioned = (q.abs() - (lambda - params.lambda_lower)).max(0.0);
        -(a * cost).exp() * (0.5 * a * a * params.sigma_auction.powi(2) * auctioned * auctioned).exp()
    } else {
        -cost
    }
}

fn terminal_slice(params: &MarketParams, grid: &Grid) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.slice_len());
    for j in 0..grid.n_lambda {
        for i in 0..grid.n_q {
            out.push(terminal_condition(params, grid.lambda(j), grid.q(i)));
        }
    }
    out
}

/// State right after a trade of `n` lots.
#[derive(Debug, Clone, Copy)]
struct Traded {
    halted: bool,
    lambda: f64,
    q: f64,
    qi: usize,
    jump: f64,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    kind: OrderKind,
    volume: f64,
    /// Rate times conditional probability at the current row.
    weight: f64,
}

struct Kernel<'a> {
    params: &'a MarketParams,
    grid: &'a Grid,
}

impl Kernel<'_> {
    fn trade(&self, lambda: f64, q: f64, qi: usize, n: isize) -> Traded {
        let p = self.params;
        let delta = n as f64 * self.grid.dq;
        if lambda - delta.abs() < p.lambda_lower - TOL {
            let done = clip_to_liquidity(delta, lambda, p.lambda_lower);
            let q1 = q + done;
            return Traded {
                halted: true,
                lambda: p.lambda_lower,
                q: q1,
                qi,
                jump: -p.zeta * done.abs() - p.impact_cost(done, lambda)
                    + p.price_impact(done, lambda) * q1,
            };
        }
        let q1 = q + delta;
        Traded {
            halted: false,
            lambda: lambda - delta.abs(),
            q: q1,
            qi: (qi as isize + n) as usize,
            jump: -p.zeta * delta.abs() - p.impact_cost(delta, lambda) + p.price_impact(delta, lambda) * q1,
        }
    }

    fn after_trade(&self, slice: &[f64], t: &Traded) -> f64 {
        let a = self.params.alpha;
        if t.halted {
            combine(a, breaker_value(self.params, t.q), t.jump)
        } else {
            combine(a, interpolate_lambda(self.grid, slice, t.lambda, t.qi), t.jump)
        }
    }

    fn after_event(&self, prev: &[f64], t: &Traded, e: &Event, clamped: &mut usize) -> f64 {
        let p = self.params;
        let a = p.alpha;
        if t.halted {
            return combine(a, breaker_value(p, t.q), t.jump);
        }
        let l1 = t.lambda;
        let lower = p.lambda_lower;
        match e.kind {
            OrderKind::Market => {
                let eta = e.volume;
                if l1 - eta.abs() < lower - TOL {
                    let done = clip_to_liquidity(eta, l1, lower);
                    combine(a, breaker_value(p, t.q), t.jump + p.price_impact(done, l1) * t.q)
                } else {
                    let w = interpolate_lambda(self.grid, prev, l1 - eta.abs(), t.qi);
                    combine(a, w, t.jump + p.price_impact(eta, l1) * t.q)
                }
            }
            OrderKind::Post => {
                let l2 = l1 + e.volume;
                if l2 > p.lambda_upper + TOL {
                    *clamped += 1;
                }
                combine(a, interpolate_lambda(self.grid, prev, l2, t.qi), t.jump)
            }
            OrderKind::Cancel => {
                let l2 = l1 - e.volume.abs();
                if l2 < lower - TOL {
                    combine(a, breaker_value(p, t.q), t.jump)
                } else {
                    combine(a, interpolate_lambda(self.grid, prev, l2, t.qi), t.jump)
                }
            }
        }
    }

    /// Feasible trades in lots, ordered `0, -1, 1, -2, 2, ...`.
    fn actions(&self, lambda: f64, qi: usize) -> impl Iterator<Item = isize> {
        let g = self.grid;
        let room = lambda - g.lambda_lower + g.d_lambda + TOL;
        let lo = -(qi as isize);
        let hi = (g.n_q - 1 - qi) as isize;
        let span = lo.unsigned_abs().max(hi.unsigned_abs()) as isize;
        let dq = g.dq;
        std::iter::once(0).chain((1..=span).flat_map(move |n| [-n, n]).filter(move |&n| {
            n >= lo && n <= hi && (n as f64 * dq).abs() <= room
        }))
    }

    fn events(&self, marks: &MarkModel, lambda: f64) -> Vec<Event> {
        let (f, g) = self.params.arrival_rates(lambda);
        let market = marks.market_orders.iter().map(|m| Event {
            kind: OrderKind::Market,
            volume: m.volume,
            weight: f * m.prob,
        });
        let limit = marks.limit_orders.iter().map(|m| Event {
            kind: MarkModel::limit_kind(m.volume),
            volume: m.volume,
            weight: g * m.prob,
        });
        market.chain(limit).collect()
    }
}

/// Output of one generator step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportStep {
    pub values: Vec<f64>,
    pub gamma: Vec<[i16; 2]>,
    pub clamped: usize,
}

/// One explicit step of the generator: `w + dT (jump terms)`, taking the
/// best signal trade for each signal sign.
pub fn transport_step(
    prev: &[f64],
    grid: &Grid,
    params: &MarketParams,
    marks: &MarkModel,
    opts: &SolverOptions,
) -> TransportStep {
    let kernel = Kernel { params, grid };
    let n_q = grid.n_q;
    let p_hat = marks.signal_prob;
    let trade_on_signals = opts.signal_trades && p_hat > 0.0;

    let rows = opts.exec.map(grid.n_lambda, |j| {
        let mut vals = vec![0.0; n_q];
        let mut gamma = vec![[0i16; 2]; n_q];
        let mut clamped = 0;
        if j == 0 {
            vals.copy_from_slice(&prev[..n_q]);
            return (vals, gamma, clamped);
        }
        let lambda = grid.lambda(j);
        let events = kernel.events(marks, lambda);
        // Events announced with z = -1 (taking) and z = +1 (providing).
        let side = |e: &Event| usize::from(e.kind == OrderKind::Post);
        for i in 0..n_q {
            let q = grid.q(i);
            let w0 = prev[grid.node(j, i)];
            let sums = |t: &Traded, clamped: &mut usize| {
                let mut s = [0.0; 2];
                for e in &events {
                    s[side(e)] += e.weight * (kernel.after_event(prev, t, e, clamped) - w0);
                }
                s
            };
            let idle = sums(&kernel.trade(lambda, q, i, 0), &mut clamped);
            let mut best = idle;
            if trade_on_signals {
                for n in kernel.actions(lambda, i).skip(1) {
                    let s = sums(&kernel.trade(lambda, q, i, n), &mut 0);
                    for z in 0..2 {
                        if s[z] > best[z] {
                            best[z] = s[z];
                            gamma[i][z] = n as i16;
                        }
                    }
                }
            }
            let drift = (1.0 - p_hat) * (idle[0] + idle[1]) + p_hat * (best[0] + best[1]);
            vals[i] = w0 + grid.dt * drift;
        }
        (vals, gamma, clamped)
    });

    let mut out = TransportStep {
        values: Vec::with_capacity(grid.slice_len()),
        gamma: Vec::with_capacity(grid.slice_len()),
        clamped: 0,
    };
    for (vals, gamma, clamped) in rows {
        out.values.extend(vals);
        out.gamma.extend(gamma);
        out.clamped += clamped;
    }
    out
}

/// `max(w, M w)`: the best immediate trade from every node, with the trade
/// recorded where it strictly improves on waiting.
pub fn impulse_step(slice: &[f64], grid: &Grid, params: &MarketParams, exec: Exec) -> (Vec<f64>, Vec<i16>) {
    let kernel = Kernel { params, grid };
    let n_q = grid.n_q;
    let rows = exec.map(grid.n_lambda, |j| {
        let mut vals = slice[j * n_q..(j + 1) * n_q].to_vec();
        let mut delta = vec![0i16; n_q];
        if j == 0 {
            return (vals, delta);
        }
        let lambda = grid.lambda(j);
        for i in 0..n_q {
            let q = grid.q(i);
            for n in kernel.actions(lambda, i).skip(1) {
                let v = kernel.after_trade(slice, &kernel.trade(lambda, q, i, n));
                if v > vals[i] {
                    vals[i] = v;
                    delta[i] = n as i16;
                }
            }
        }
        (vals, delta)
    });
    let mut values = Vec::with_capacity(grid.slice_len());
    let mut deltas = Vec::with_capacity(grid.slice_len());
    for (v, d) in rows {
        values.extend(v);
        deltas.extend(d);
    }
    (values, deltas)
}

/// Runs the scheme from the terminal condition to the full horizon.
pub fn solve(params: &MarketParams, marks: &MarkModel, grid: &Grid, opts: &SolverOptions) -> Result<Solution> {
    params.validate()?;
    marks.validate()?;
    grid.check_stability(params, marks)?;

    let len = grid.slice_len();
    let mut values = Vec::with_capacity((grid.n_t + 1) * len);
    values.extend(terminal_slice(params, grid));
    let mut gamma = vec![[0i16; 2]; len];
    let mut delta = vec![0i16; len];
    let mut stats = SolveStats::default();

    for k in 1..=grid.n_t {
        let prev = &values[(k - 1) * len..k * len];
        let step = transport_step(prev, grid, params, marks, opts);
        stats.clamped += step.clamped;
        let (next, impulses) = if opts.impulses {
            impulse_step(&step.values, grid, params, opts.exec)
        } else {
            (step.values, vec![0; len])
        };
        for (node, (g, d)) in step.gamma.iter().zip(&impulses).enumerate() {
            let i = node % grid.n_q;
            for n in g.iter().chain(std::iter::once(d)) {
                let end = i as isize + *n as isize;
                if *n != 0 && (end == 0 || end == grid.n_q as isize - 1) {
                    stats.saturated += 1;
                }
            }
        }
        values.extend(next);
        gamma.extend(step.gamma);
        delta.extend(impulses);
    }
    if stats.saturated > 0 {
        log::info!("{} optimal actions end on the inventory boundary", stats.saturated);
    }

    Ok(Solution {
        surface: ValueSurface {
            grid: *grid,
            params: *params,
            marks: marks.clone(),
            values,
        },
        policy: Policy {
            grid: *grid,
            params: *params,
            gamma,
            delta,
        },
        stats,
    })
}
