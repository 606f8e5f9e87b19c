//! Run configuration: one JSON document, every key optional, benchmark
//! values for anything left out.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigexec_core::hjb::{Grid, GridSpec};
use sigexec_core::{MarkModel, MarketParams, MarketState};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Simulate,
    Evaluate,
    Sweep,
    Check,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Simulate => "simulate",
            Mode::Evaluate => "evaluate",
            Mode::Sweep => "sweep",
            Mode::Check => "check",
        }
    }
}

/// Benchmark strategies run next to the solved policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    DoNothing,
    Immediate {
        #[serde(default)]
        target_q: f64,
    },
    Twap {
        #[serde(default)]
        target_q: f64,
        slices: u32,
    },
}

impl AgentSpec {
    pub fn label(&self) -> String {
        match self {
            AgentSpec::DoNothing => "do_nothing".into(),
            AgentSpec::Immediate { .. } => "immediate".into(),
            AgentSpec::Twap { slices, .. } => format!("twap_{slices}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub lambda: f64,
    pub q: f64,
    pub p: f64,
    pub x: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState { lambda: 0.0, q: -8.0, p: 100.0, x: 0.0 }
    }
}

impl InitialState {
    pub fn state(&self) -> MarketState {
        MarketState::new(self.lambda, self.q, self.p, self.x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Mode used by `sigexec run`.
    pub mode: Mode,
    pub n_sim: usize,
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
    /// Signal probabilities visited by the sweep.
    pub signal_probs: Vec<f64>,
    /// Full bid-ask spread; overrides `market.zeta` when set.
    pub spread: Option<f64>,
    pub histogram_width: f64,
    /// Relative allowance of the solver-vs-simulation check.
    pub consistency_tolerance: f64,
    /// Number of paths written to the event log.
    pub log_paths: usize,
    /// Policy dump read by `simulate`.
    pub policy: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Evaluate,
            n_sim: 10_000,
            seed: 1,
            agents: Vec::new(),
            signal_probs: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            spread: None,
            histogram_width: sigexec_core::eval::HISTOGRAM_WIDTH,
            consistency_tolerance: 0.02,
            log_paths: 0,
            policy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub market: MarketParams,
    pub marks: MarkModel,
    pub grid: GridSpec,
    pub initial: InitialState,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            market: MarketParams::benchmark(),
            marks: MarkModel::benchmark(),
            grid: GridSpec::default(),
            initial: InitialState::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {reason}"))
}

impl RunConfig {
    /// Market parameters with the spread override applied.
    pub fn params(&self) -> MarketParams {
        match self.experiment.spread {
            Some(s) => self.market.with_spread(s),
            None => self.market,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid("version", format!("expected {CONFIG_VERSION}, found {}", self.version)));
        }
        if let Some(s) = self.experiment.spread {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("experiment.spread", "must be a nonnegative number"));
            }
        }
        let params = self.params();
        params.validate().map_err(|e| invalid("market", e))?;
        self.marks.validate().map_err(|e| invalid("marks", e))?;
        let grid = Grid::new(&params, &self.grid).map_err(|e| invalid("grid", e))?;

        let init = &self.initial;
        if !(init.lambda >= params.lambda_lower && init.lambda <= params.lambda_upper) {
            return Err(invalid("initial.lambda", "outside [lambda_lower, lambda_upper]"));
        }
        if grid.q_index(init.q).is_none() {
            return Err(invalid("initial.q", "not an inventory node of the grid"));
        }
        let e = &self.experiment;
        if e.n_sim == 0 {
            return Err(invalid("experiment.n_sim", "must be at least 1"));
        }
        if let Some(p) = e.signal_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid("experiment.signal_probs", format!("{p} is not a probability")));
        }
        if e.histogram_width.is_nan() || e.histogram_width <= 0.0 {
            return Err(invalid("experiment.histogram_width", "must be positive"));
        }
        if e.consistency_tolerance.is_nan() || e.consistency_tolerance < 0.0 {
            return Err(invalid("experiment.consistency_tolerance", "must be nonnegative"));
        }
        for a in &e.agents {
            if let AgentSpec::Twap { slices: 0, .. } = a {
                return Err(invalid("experiment.agents", "twap needs at least one slice"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of everything that shapes results.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.mode = Mode::Evaluate;
        canonical.experiment.policy = None;
        let json = serde_json::to_string(&canonical).expect("config serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses a config document; an empty document is the benchmark.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = if text.trim().is_empty() {
        RunConfig::default()
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| invalid(&e.path().to_string(), e.inner()))?
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| invalid(&path.display().to_string(), e))?;
    parse_config(&text)
}
