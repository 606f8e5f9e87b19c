//! Event-driven simulation of the external order flow, the trader's
//! reactions and the circuit breaker.
//!
//! Each band (market orders, limit-order events) is a Poisson random
//! measure on `[0, T] x E x R+`. The `y`-axis is cut into layers of height
//! `f(lambda_upper)` resp. `g(lambda_lower)`; layer `k` covers
//! `(k h, (k + 1) h]` and has its own random stream. A candidate point is a
//! live event iff `y <= rate(lambda-)`. Layers above the first are only
//! generated once the rate actually reaches them, which keeps thinning
//! exact while liquidity wanders above the cap. Because candidate points
//! depend only on `(seed, path)`, different agents see the same order flow.

use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};

use crate::error::{ModelError, Result};
use crate::marks::{emit_signal, Mark, MarkModel, OrderKind};
use crate::market::{MarketParams, MarketState, ShockTriple};
use crate::rng::{stream, PathSeed, StreamTag, MAX_LAYERS};

/// Something that trades along a simulated path.
pub trait Agent: Sync {
    /// Trade placed when an event with visible signal `z` is announced.
    fn on_signal(&self, t: f64, state: &MarketState, z: i8) -> f64;

    /// Trade placed after the state has been revealed.
    fn on_state(&self, t: f64, state: &MarketState) -> f64;

    /// Spacing of scheduled decision times between events.
    fn decision_interval(&self) -> Option<f64> {
        None
    }
}

/// Never trades before the terminal liquidation.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoNothing;

impl Agent for DoNothing {
    fn on_signal(&self, _: f64, _: &MarketState, _: i8) -> f64 {
        0.0
    }

    fn on_state(&self, _: f64, _: &MarketState) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Market,
    Post,
    Cancel,
    Thinned,
    /// Scheduled trade between events.
    Trade,
    Terminal,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Market => "market",
            EventKind::Post => "post",
            EventKind::Cancel => "cancel",
            EventKind::Thinned => "thinned",
            EventKind::Trade => "trade",
            EventKind::Terminal => "terminal",
        }
    }
}

impl From<OrderKind> for EventKind {
    fn from(k: OrderKind) -> Self {
        match k {
            OrderKind::Market => EventKind::Market,
            OrderKind::Post => EventKind::Post,
            OrderKind::Cancel => EventKind::Cancel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
    /// Thinning coordinate of the candidate point.
    pub y: f64,
    pub z: i8,
    /// Executed signal-based trade.
    pub gamma: f64,
    /// Nominal external volumes of the mark.
    pub eta: f64,
    pub rho: f64,
    /// Executed state-based trade.
    pub delta_r: f64,
    pub pre: MarketState,
    pub post: MarketState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub seed: PathSeed,
    /// Full event log; empty unless requested.
    pub events: Vec<EventRecord>,
    /// Executed trader trades in time order, terminal liquidation last.
    pub trades: Vec<f64>,
    pub candidates: usize,
    pub live_market: usize,
    pub live_post: usize,
    pub live_cancel: usize,
    pub breaker_time: Option<f64>,
    pub terminal_state: MarketState,
    pub auction_draw: f64,
    pub terminal_wealth: f64,
    /// Total variation of the trader's inventory, external market orders
    /// and cancellations actually executed.
    pub inventory_variation: f64,
    pub market_variation: f64,
    pub cancel_variation: f64,
    /// Sum of squared price jumps.
    pub realized_qv: f64,
    /// `int sigma^2(lambda_t) dt` up to the halt.
    pub compensator: f64,
    /// `(y, |rho|)` of every first-layer limit-order candidate on `[0, T]`.
    pub limit_candidates: Vec<(f64, f64)>,
}

impl PathRecord {
    pub fn total_variation(&self) -> f64 {
        self.inventory_variation + self.market_variation + self.cancel_variation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub log_events: bool,
    /// Hard cap on candidate points per path.
    pub candidate_budget: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            log_events: false,
            candidate_budget: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    t: f64,
    y: f64,
    mark: usize,
    visibility: f64,
}

struct Band {
    id: u8,
    height: f64,
    weights: Option<WeightedIndex<f64>>,
    layers: Vec<(Vec<Candidate>, usize)>,
}

impl Band {
    fn new(id: u8, marks: &[Mark], height: f64) -> Result<Self> {
        let weights = if marks.is_empty() || height <= 0.0 {
            None
        } else {
            Some(
                WeightedIndex::new(marks.iter().map(|m| m.prob))
                    .map_err(|e| ModelError::param("marks", e.to_string()))?,
            )
        };
        Ok(Band {
            id,
            height,
            weights,
            layers: Vec::new(),
        })
    }

    /// Makes sure all layers below `rate` exist, skipping their points up
    /// to time `now`.
    fn cover(&mut self, rate: f64, now: f64, ctx: &mut Budget) -> Result<()> {
        let Some(weights) = &self.weights else {
            return Ok(());
        };
        let needed = ((rate / self.height).ceil() as usize).max(1);
        while self.layers.len() < needed {
            let k = self.layers.len();
            if k >= MAX_LAYERS as usize {
                return Err(ctx.exhausted());
            }
            let mut rng = stream(
                ctx.seed,
                StreamTag::Layer {
                    band: self.id,
                    layer: k as u16,
                },
            );
            let points = layer_points(&mut rng, self.height, k, ctx.horizon, weights);
            ctx.spend(points.len())?;
            let cursor = points.partition_point(|c| c.t <= now);
            self.layers.push((points, cursor));
        }
        Ok(())
    }

    fn peek(&self) -> Option<(f64, usize)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(k, (pts, cur))| pts.get(*cur).map(|c| (c.t, k)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

fn layer_points(
    rng: &mut ChaCha8Rng,
    height: f64,
    layer: usize,
    horizon: f64,
    weights: &WeightedIndex<f64>,
) -> Vec<Candidate> {
    let gaps = Exp::new(height).expect("positive layer height");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > horizon {
            return out;
        }
        let u: f64 = rng.random();
        out.push(Candidate {
            t,
            y: height * (layer as f64 + u),
            mark: weights.sample(rng),
            visibility: rng.random(),
        });
    }
}

struct Budget {
    seed: PathSeed,
    horizon: f64,
    used: usize,
    limit: usize,
}

impl Budget {
    fn spend(&mut self, n: usize) -> Result<()> {
        self.used += n;
        if self.used > self.limit {
            Err(self.exhausted())
        } else {
            Ok(())
        }
    }

    fn exhausted(&self) -> ModelError {
        ModelError::CandidateBudgetExhausted {
            path: self.seed.index,
            budget: self.limit,
        }
    }
}

const MARKET_BAND: u8 = 0;
const LIMIT_BAND: u8 = 1;

struct Sim<'a, A: ?Sized> {
    params: &'a MarketParams,
    marks: &'a MarkModel,
    agent: &'a A,
    log: bool,
    state: MarketState,
    rec: PathRecord,
}

impl<A: Agent + ?Sized> Sim<'_, A> {
    fn trade(&mut self, t: f64, delta: f64) -> Result<f64> {
        if delta == 0.0 || self.state.halted {
            return Ok(0.0);
        }
        let pre = self.state;
        self.state = self.params.apply_shock(&pre, ShockTriple::trade(delta), true)?;
        let done = self.state.q - pre.q;
        self.book_trade(done);
        self.rec.realized_qv += (self.state.p - pre.p).powi(2);
        self.note_halt(t);
        Ok(done)
    }

    fn book_trade(&mut self, done: f64) {
        if done != 0.0 {
            self.rec.trades.push(done);
            self.rec.inventory_variation += done.abs();
        }
    }

    fn note_halt(&mut self, t: f64) {
        if self.state.halted && self.rec.breaker_time.is_none() {
            self.rec.breaker_time = Some(t);
        }
    }

    fn scheduled(&mut self, t: f64, kind: EventKind) -> Result<()> {
        let pre = self.state;
        let want = self.agent.on_state(t, &pre);
        let done = self.trade(t, want)?;
        if self.log && done != 0.0 {
            self.push(t, kind, 0.0, 0, 0.0, 0.0, 0.0, done, pre);
        }
        Ok(())
    }

    fn event(&mut self, band: u8, c: Candidate) -> Result<()> {
        let pre = self.state;
        let params = self.params;
        let (mark, rate) = if band == MARKET_BAND {
            (self.marks.market_orders[c.mark], params.market_rate(pre.lambda))
        } else {
            (self.marks.limit_orders[c.mark], params.limit_rate(pre.lambda))
        };
        let kind = if band == MARKET_BAND {
            OrderKind::Market
        } else {
            MarkModel::limit_kind(mark.volume)
        };
        let (eta, rho) = match kind {
            OrderKind::Market => (mark.volume, 0.0),
            _ => (0.0, mark.volume),
        };
        if c.y > rate {
            if self.log {
                self.push(c.t, EventKind::Thinned, c.y, 0, 0.0, eta, rho, 0.0, pre);
            }
            return Ok(());
        }
        match kind {
            OrderKind::Market => self.rec.live_market += 1,
            OrderKind::Post => self.rec.live_post += 1,
            OrderKind::Cancel => self.rec.live_cancel += 1,
        }

        let z = emit_signal(kind, c.visibility < self.marks.signal_prob);
        let gamma = if z != 0 {
            self.agent.on_signal(c.t, &pre, z)
        } else {
            0.0
        };
        self.state = params.apply_shock(&pre, ShockTriple { gamma, eta, rho }, true)?;
        let gamma_done = self.state.q - pre.q;
        self.book_trade(gamma_done);
        let external = (pre.lambda - gamma_done.abs() - self.state.lambda).max(0.0);
        match kind {
            OrderKind::Market => self.rec.market_variation += external,
            OrderKind::Cancel => self.rec.cancel_variation += external,
            OrderKind::Post => {}
        }
        self.rec.realized_qv += (self.state.p - pre.p).powi(2);
        self.note_halt(c.t);

        let mid = self.state;
        let delta_r = if mid.halted {
            0.0
        } else {
            let want = self.agent.on_state(c.t, &mid);
            self.trade(c.t, want)?
        };
        if self.log {
            self.push(c.t, kind.into(), c.y, z, gamma_done, eta, rho, delta_r, pre);
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        t: f64,
        kind: EventKind,
        y: f64,
        z: i8,
        gamma: f64,
        eta: f64,
        rho: f64,
        delta_r: f64,
        pre: MarketState,
    ) {
        self.rec.events.push(EventRecord {
            t,
            kind,
            y,
            z,
            gamma,
            eta,
            rho,
            delta_r,
            pre,
            post: self.state,
        });
    }
}

/// Simulates one path on `[0, T]` and liquidates at the horizon.
pub fn simulate_path<A: Agent + ?Sized>(
    params: &MarketParams,
    marks: &MarkModel,
    agent: &A,
    initial: &MarketState,
    seed: PathSeed,
    opts: &SimOptions,
) -> Result<PathRecord> {
    if !(initial.lambda >= params.lambda_lower && initial.lambda <= params.lambda_upper) {
        return Err(ModelError::LiquidityOutOfBounds {
            lambda: initial.lambda,
            lower: params.lambda_lower,
            upper: params.lambda_upper,
        });
    }
    let horizon = params.horizon;
    let mut budget = Budget {
        seed,
        horizon,
        used: 0,
        limit: opts.candidate_budget,
    };
    let mut bands = [
        Band::new(MARKET_BAND, &marks.market_orders, params.market_rate(params.lambda_upper))?,
        Band::new(LIMIT_BAND, &marks.limit_orders, params.limit_rate(params.lambda_lower))?,
    ];

    let mut sim = Sim {
        params,
        marks,
        agent,
        log: opts.log_events,
        state: *initial,
        rec: PathRecord {
            seed,
            events: Vec::new(),
            trades: Vec::new(),
            candidates: 0,
            live_market: 0,
            live_post: 0,
            live_cancel: 0,
            breaker_time: None,
            terminal_state: *initial,
            auction_draw: 0.0,
            terminal_wealth: 0.0,
            inventory_variation: 0.0,
            market_variation: 0.0,
            cancel_variation: 0.0,
            realized_qv: 0.0,
            compensator: 0.0,
            limit_candidates: Vec::new(),
        },
    };

    bands[0].cover(params.market_rate(initial.lambda), 0.0, &mut budget)?;
    bands[1].cover(params.limit_rate(initial.lambda), 0.0, &mut budget)?;
    if let Some((first, _)) = bands[1].layers.first() {
        sim.rec.limit_candidates = first
            .iter()
            .map(|c| (c.y, marks.limit_orders[c.mark].volume.abs()))
            .collect();
    }

    let interval = agent.decision_interval().filter(|h| *h > 0.0);
    let mut epoch = 1u64;
    let mut t = 0.0;
    if horizon > 0.0 {
        sim.scheduled(0.0, EventKind::Trade)?;
    }

    while !sim.state.halted {
        let next_epoch = interval
            .map(|h| epoch as f64 * h)
            .filter(|&e| e < horizon * (1.0 - 1e-12));
        let next_event = bands
            .iter()
            .enumerate()
            .filter_map(|(b, band)| band.peek().map(|(ct, k)| (ct, b, k)))
            .min_by(|a, b| a.0.total_cmp(&b.0));

        let until = match (next_event, next_epoch) {
            (Some((ct, _, _)), Some(e)) => ct.min(e),
            (Some((ct, _, _)), None) => ct,
            (None, Some(e)) => e,
            (None, None) => break,
        };
        let sigma = params.price_volatility(sim.state.lambda, marks);
        sim.rec.compensator += sigma * sigma * (until - t);
        t = until;

        match (next_event, next_epoch) {
            (Some((ct, b, k)), e) if e.is_none_or(|e| ct < e) => {
                let layer = &mut bands[b].layers[k];
                let c = layer.0[layer.1];
                layer.1 += 1;
                sim.rec.candidates += 1;
                sim.event(bands[b].id, c)?;
            }
            _ => {
                epoch += 1;
                sim.scheduled(t, EventKind::Trade)?;
            }
        }

        if !sim.state.halted {
            let lambda = sim.state.lambda;
            bands[0].cover(params.market_rate(lambda), t, &mut budget)?;
            bands[1].cover(params.limit_rate(lambda), t, &mut budget)?;
        }
    }
    if !sim.state.halted {
        let sigma = params.price_volatility(sim.state.lambda, marks);
        sim.rec.compensator += sigma * sigma * (horizon - t);
    }

    let auction_draw: f64 = stream(seed, StreamTag::Auction).sample(StandardNormal);
    let last = sim.state;
    if last.q != 0.0 {
        sim.rec.trades.push(-last.q);
        if sim.log {
            let mut post = last;
            post.q = 0.0;
            sim.rec.events.push(EventRecord {
                t: horizon,
                kind: EventKind::Terminal,
                y: 0.0,
                z: 0,
                gamma: 0.0,
                eta: 0.0,
                rho: 0.0,
                delta_r: -last.q,
                pre: last,
                post,
            });
        }
    }
    sim.rec.terminal_state = last;
    sim.rec.auction_draw = auction_draw;
    sim.rec.terminal_wealth = params.terminal_wealth(&last, auction_draw);
    Ok(sim.rec)
}

/// Pathwise dominating bound for the liquidity-removing variation:
/// `lambda_0 - lambda_lower` plus every limit-order volume whose candidate
/// point lies below `g(lambda_lower)`.
pub fn vbar_bound(initial_lambda: f64, path: &PathRecord, params: &MarketParams) -> f64 {
    let cap = params.limit_rate(params.lambda_lower);
    let added: f64 = path
        .limit_candidates
        .iter()
        .filter(|(y, _)| *y <= cap)
        .map(|(_, v)| v)
        .sum();
    initial_lambda - params.lambda_lower + added
}

pub const PATH_LOG_HEADER: &str = "path_id,t,kind,z,gamma,eta,rho,lambda,q,p,x";

/// Writes one CSV row per logged event, with the post-event state.
pub fn write_path_log<W: Write>(out: &mut W, paths: &[PathRecord]) -> io::Result<()> {
    writeln!(out, "{PATH_LOG_HEADER}")?;
    for path in paths {
        for e in &path.events {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                path.seed.index,
                e.t,
                e.kind.as_str(),
                e.z,
                e.gamma,
                e.eta,
                e.rho,
                e.post.lambda,
                e.post.q,
                e.post.p,
                e.post.x
            )?;
        }
    }
    Ok(())
}
