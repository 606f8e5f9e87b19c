//! Mode drivers. Every artifact starts with the config hash and seed: CSV
//! files as `#` comment lines, JSON files in a `meta` object.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sigexec_core::eval::{
    consistency_check, run_experiment, simulate_paths, variance, EvalReport, Experiment,
};
use sigexec_core::flow::write_path_log;
use sigexec_core::hjb::{
    certainty_equivalent, read_policy, solve, write_policy, write_surface, Grid, Policy, Solution, SolverOptions,
    ValueSurface,
};
use sigexec_core::{
    check_elasticity, vbar_bound, Agent, DoNothing, ImmediateExecution, MarkModel, MarketParams, MarketState,
    ShockTriple, SimOptions, SolvedAgent, Twap,
};

use crate::config::{AgentSpec, Mode, RunConfig};
use crate::error::CliError;

pub const OUTPUT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Invocation {
    pub mode: Mode,
    pub config: RunConfig,
    pub out: PathBuf,
    /// Overrides `experiment.policy`.
    pub policy: Option<PathBuf>,
}

/// What a run produced: summary lines for the terminal and the files
/// written, in order.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

struct Sink {
    dir: PathBuf,
    hash: String,
    seed: u64,
    summary: Summary,
}

impl Sink {
    fn new(dir: &Path, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            hash: config.hash(),
            seed: config.experiment.seed,
            summary: Summary::default(),
        })
    }

    fn header(&self) -> Vec<String> {
        vec![format!("config_hash {}", self.hash), format!("seed {}", self.seed)]
    }

    fn meta(&self, format: &str) -> Value {
        json!({ "format": format, "version": OUTPUT_VERSION, "config_hash": self.hash, "seed": self.seed })
    }

    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        body(&mut out)?;
        out.flush().map_err(|e| CliError::io(&path, e))?;
        self.summary.files.push(path);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, columns: &str, rows: &[String]) -> Result<(), CliError> {
        let header = self.header();
        let path = self.dir.join(name);
        self.write(name, |out| {
            let io = |e| CliError::io(&path, e);
            for line in &header {
                writeln!(out, "# {line}").map_err(io)?;
            }
            writeln!(out, "{columns}").map_err(io)?;
            for row in rows {
                writeln!(out, "{row}").map_err(io)?;
            }
            Ok(())
        })
    }

    fn write_json(&mut self, name: &str, format: &str, mut body: Value) -> Result<(), CliError> {
        body["meta"] = self.meta(format);
        let path = self.dir.join(name);
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, &body).map_err(|e| CliError::io(&path, e.into()))?;
            writeln!(out).map_err(|e| CliError::io(&path, e))
        })
    }

    fn say(&mut self, line: String) {
        self.summary.lines.push(line);
    }
}

pub fn execute(inv: &Invocation) -> Result<Summary, CliError> {
    let mut sink = Sink::new(&inv.out, &inv.config)?;
    match inv.mode {
        Mode::Solve => run_solve(&inv.config, &mut sink)?,
        Mode::Simulate => run_simulate(&inv.config, inv.policy.as_deref(), &mut sink)?,
        Mode::Evaluate => run_evaluate(&inv.config, &mut sink)?,
        Mode::Sweep => run_sweep(&inv.config, &mut sink)?,
        Mode::Check => run_check(&inv.config, &mut sink)?,
    }
    Ok(sink.summary)
}

fn grid(config: &RunConfig) -> Result<Grid, CliError> {
    Ok(Grid::new(&config.params(), &config.grid)?)
}

fn solve_with(config: &RunConfig, signal_prob: f64) -> Result<Solution, CliError> {
    let marks = config.marks.clone().with_signal_prob(signal_prob);
    let sol = solve(&config.params(), &marks, &grid(config)?, &SolverOptions::default())?;
    Ok(sol)
}

fn experiment(config: &RunConfig) -> Experiment {
    let mut exp = Experiment::new(config.experiment.n_sim, config.experiment.seed, config.initial.state());
    exp.histogram_width = config.experiment.histogram_width;
    exp
}

fn baselines(config: &RunConfig) -> Vec<(String, Box<dyn Agent>)> {
    let p = config.params();
    let q0 = config.initial.q;
    config
        .experiment
        .agents
        .iter()
        .map(|spec| {
            let agent: Box<dyn Agent> = match *spec {
                AgentSpec::DoNothing => Box::new(DoNothing),
                AgentSpec::Immediate { target_q } => Box::new(ImmediateExecution::new(&p, target_q)),
                AgentSpec::Twap { target_q, slices } => Box::new(Twap::new(&p, q0, target_q, slices)),
            };
            (spec.label(), agent)
        })
        .collect()
}

/// Largest certainty equivalent over the surface and where it sits.
struct CeMax {
    value: f64,
    t_index: usize,
    lambda: f64,
    q: f64,
}

fn ce_max(grid: &Grid, ce: &[f64]) -> CeMax {
    let n = grid.slice_len();
    let mut best = CeMax { value: f64::NEG_INFINITY, t_index: 0, lambda: 0.0, q: 0.0 };
    for (idx, &v) in ce.iter().enumerate() {
        let node = idx % n;
        let j = node / grid.n_q;
        if j > 0 && v > best.value {
            best = CeMax { value: v, t_index: idx / n, lambda: grid.lambda(j), q: grid.q(node % grid.n_q) };
        }
    }
    best
}

fn write_solution(sink: &mut Sink, sol: &Solution) -> Result<(), CliError> {
    let header = sink.header();
    sink.write("surface.csv", |out| {
        write_surface(out, &sol.surface, &header).map_err(CliError::from)
    })?;
    sink.write("policy.csv", |out| write_policy(out, &sol.policy, &header).map_err(CliError::from))
}

fn surface_json(surface: &ValueSurface, initial: &MarketState) -> Result<Value, CliError> {
    let (in_lambda, in_time) = surface.monotonicity_violations(1e-12);
    Ok(json!({
        "w0": surface.at(surface.grid.n_t, initial.lambda, initial.q)?,
        "value0": surface.initial_value(initial)?,
        "q_symmetry_residual": surface.symmetry_residual(),
        "lambda_monotonicity_violations": in_lambda,
        "time_monotonicity_violations": in_time,
    }))
}

/// Writes the full-horizon CE slice and returns the surface-wide maximum.
fn write_ce(sink: &mut Sink, with: &ValueSurface, without: &ValueSurface) -> Result<CeMax, CliError> {
    let ce = certainty_equivalent(with, without)?;
    let g = &with.grid;
    let top = &ce[g.n_t * g.slice_len()..];
    let rows: Vec<String> = (1..g.n_lambda)
        .flat_map(|j| (0..g.n_q).map(move |i| (j, i)))
        .map(|(j, i)| format!("{},{},{}", g.lambda(j), g.q(i), top[g.node(j, i)]))
        .collect();
    sink.write_csv("ce.csv", "lambda,q,ce", &rows)?;
    Ok(ce_max(g, &ce))
}

fn run_solve(config: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let sol = solve_with(config, config.marks.signal_prob)?;
    write_solution(sink, &sol)?;
    let initial = config.initial.state();
    let mut body = json!({
        "mode": "solve",
        "surface": surface_json(&sol.surface, &initial)?,
        "clamped": sol.stats.clamped,
        "saturated": sol.stats.saturated,
    });
    sink.say(format!("w(T, lambda0, q0)      {:.8}", body["surface"]["w0"].as_f64().unwrap_or(f64::NAN)));
    sink.say(format!("q-symmetry residual    {:.3e}", sol.surface.symmetry_residual()));
    if config.marks.signal_prob > 0.0 {
        let blind = solve_with(config, 0.0)?;
        let m = write_ce(sink, &sol.surface, &blind.surface)?;
        body["max_ce"] = json!({ "value": m.value, "t_index": m.t_index, "lambda": m.lambda, "q": m.q });
        sink.say(format!("max CE                 {:.5} at lambda {} q {}", m.value, m.lambda, m.q));
    }
    sink.write_json("summary.json", "sigexec-summary", body)
}

fn load_policy(config: &RunConfig, explicit: Option<&Path>) -> Result<Policy, CliError> {
    let path = explicit
        .or(config.experiment.policy.as_deref())
        .ok_or_else(|| CliError::Config("simulate needs a policy file (--policy or experiment.policy)".into()))?;
    let file = File::open(path).map_err(|e| CliError::Config(format!("policy file {}: {e}", path.display())))?;
    let policy = read_policy(BufReader::new(file))?;
    if policy.params != config.params() {
        return Err(CliError::Config(format!("policy file {} was solved for other market parameters", path.display())));
    }
    Ok(policy)
}

fn report_json(r: &EvalReport) -> Value {
    json!({
        "agent": r.agent,
        "n_sim": r.n_sim,
        "mean": r.mean,
        "variance": r.variance,
        "ssr": r.ssr,
        "speculation_fraction": r.speculation_fraction,
        "breaker_fraction": r.breaker_fraction,
    })
}

fn write_reports(sink: &mut Sink, reports: &[EvalReport]) -> Result<(), CliError> {
    let n = reports.first().map_or(0, |r| r.wealth.len());
    let columns = std::iter::once("path".to_string())
        .chain(reports.iter().map(|r| r.agent.clone()))
        .collect::<Vec<_>>()
        .join(",");
    let rows: Vec<String> = (0..n)
        .map(|k| {
            std::iter::once(k.to_string())
                .chain(reports.iter().map(|r| r.wealth[k].to_string()))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    sink.write_csv("wealth.csv", &columns, &rows)?;

    let mut rows = Vec::new();
    for r in reports {
        let h = &r.histogram;
        for (k, c) in h.counts.iter().enumerate() {
            let lo = h.origin + k as f64 * h.width;
            rows.push(format!("{},{},{},{c}", r.agent, lo, lo + h.width));
        }
    }
    sink.write_csv("histogram.csv", "agent,bin_lo,bin_hi,count", &rows)?;

    let full: Vec<Value> = reports.iter().map(|r| serde_json::to_value(r).expect("report serialises")).collect();
    sink.write_json("reports.json", "sigexec-reports", json!({ "reports": full }))?;
    for r in reports {
        let ssr = r.ssr.map_or("-".to_string(), |s| format!("{s:.4}"));
        sink.say(format!(
            "{:<16} mean {:.5}  sd {:.5}  SSR {}  speculation {:.2}%",
            r.agent,
            r.mean,
            r.variance.sqrt(),
            ssr,
            100.0 * r.speculation_fraction
        ));
    }
    Ok(())
}

fn write_path_sample(
    sink: &mut Sink,
    config: &RunConfig,
    marks: &MarkModel,
    agent: &dyn Agent,
) -> Result<(), CliError> {
    let n = config.experiment.log_paths.min(config.experiment.n_sim);
    if n == 0 {
        return Ok(());
    }
    let mut exp = experiment(config);
    exp.n_sim = n;
    exp.sim = SimOptions { log_events: true, ..exp.sim };
    let paths = simulate_paths(&config.params(), marks, agent, &exp)?;
    let header = sink.header();
    let path = sink.dir.join("paths.csv");
    sink.write("paths.csv", |out| {
        for line in &header {
            writeln!(out, "# {line}").map_err(|e| CliError::io(&path, e))?;
        }
        write_path_log(out, &paths).map_err(|e| CliError::io(&path, e))
    })
}

fn run_simulate(config: &RunConfig, policy: Option<&Path>, sink: &mut Sink) -> Result<(), CliError> {
    let policy = load_policy(config, policy)?;
    let solved = SolvedAgent::new(&policy);
    let extra = baselines(config);
    let mut agents: Vec<(&str, &dyn Agent)> = vec![("solved", &solved)];
    agents.extend(extra.iter().map(|(n, a)| (n.as_str(), a.as_ref())));
    let reports = run_experiment(&config.params(), &config.marks, &agents, &experiment(config))?;
    write_reports(sink, &reports)?;
    write_path_sample(sink, config, &config.marks, &solved)?;
    let body = json!({ "mode": "simulate", "reports": reports.iter().map(report_json).collect::<Vec<_>>() });
    sink.write_json("summary.json", "sigexec-summary", body)
}

fn run_evaluate(config: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let params = config.params();
    let p_hat = config.marks.signal_prob;
    let exp = experiment(config);
    let with = solve_with(config, p_hat)?;
    write_solution(sink, &with)?;

    let solved = SolvedAgent::new(&with.policy);
    let extra = baselines(config);
    let mut agents: Vec<(&str, &dyn Agent)> = vec![("solved", &solved)];
    agents.extend(extra.iter().map(|(n, a)| (n.as_str(), a.as_ref())));
    let mut reports = run_experiment(&params, &config.marks, &agents, &exp)?;

    let mut body = json!({ "mode": "evaluate", "surface": surface_json(&with.surface, &exp.initial)? });
    if p_hat > 0.0 {
        let blind_marks = config.marks.clone().with_signal_prob(0.0);
        let blind = solve_with(config, 0.0)?;
        let blind_agent = SolvedAgent::new(&blind.policy);
        let reference = run_experiment(&params, &blind_marks, &[("solved_no_signal", &blind_agent)], &exp)?.remove(0);
        reports[0] = reports[0].clone().with_reference(&reference)?;
        let m = write_ce(sink, &with.surface, &blind.surface)?;
        body["max_ce"] = json!({ "value": m.value, "t_index": m.t_index, "lambda": m.lambda, "q": m.q });
        sink.say(format!("max CE                 {:.5} at lambda {} q {}", m.value, m.lambda, m.q));
        reports.push(reference);
    }
    write_reports(sink, &reports)?;
    write_path_sample(sink, config, &config.marks, &solved)?;

    let c = consistency_check(&with.surface, &reports[0], config.experiment.consistency_tolerance)?;
    body["consistency"] = serde_json::to_value(c).expect("consistency serialises");
    body["reports"] = reports.iter().map(report_json).collect();
    sink.say(format!(
        "consistency            simulated {:.6} vs solver {:.6} (gap {:.2e}, allowance {:.2e}) {}",
        c.simulated,
        c.solver,
        c.discrepancy,
        c.allowance,
        if c.passed { "ok" } else { "FAILED" }
    ));
    sink.write_json("summary.json", "sigexec-summary", body)?;
    if !c.passed {
        return Err(CliError::Consistency(format!(
            "|{} - {}| = {} exceeds {}",
            c.simulated, c.solver, c.discrepancy, c.allowance
        )));
    }
    Ok(())
}

fn run_sweep(config: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let params = config.params();
    let exp = experiment(config);
    let blind = solve_with(config, 0.0)?;
    let blind_marks = config.marks.clone().with_signal_prob(0.0);
    let reference =
        run_experiment(&params, &blind_marks, &[("p0", &SolvedAgent::new(&blind.policy))], &exp)?.remove(0);

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for &p_hat in &config.experiment.signal_probs {
        let (sol, report, ce) = if p_hat == 0.0 {
            (None, reference.clone(), 0.0)
        } else {
            let marks = config.marks.clone().with_signal_prob(p_hat);
            let sol = solve_with(config, p_hat)?;
            let r = run_experiment(&params, &marks, &[("solved", &SolvedAgent::new(&sol.policy))], &exp)?.remove(0);
            let ce = ce_max(&sol.surface.grid, &certainty_equivalent(&sol.surface, &blind.surface)?).value;
            (Some(sol), r, ce)
        };
        let ssr = if variance(&report.wealth) > 0.0 {
            report.clone().with_reference(&reference)?.ssr
        } else {
            None
        };
        let surface = sol.as_ref().map_or(&blind.surface, |s| &s.surface);
        let w0 = surface.at(surface.grid.n_t, exp.initial.lambda, exp.initial.q)?;
        rows.push(format!(
            "{p_hat},{},{},{},{},{},{}",
            report.mean,
            report.variance,
            ssr.map_or(String::new(), |s| s.to_string()),
            report.speculation_fraction,
            ce,
            w0
        ));
        sink.say(format!(
            "p_hat {p_hat:<4} mean {:.5}  SSR {}  speculation {:.2}%  max CE {:.5}",
            report.mean,
            ssr.map_or("-".into(), |s| format!("{s:.4}")),
            100.0 * report.speculation_fraction,
            ce
        ));
        entries.push(json!({ "p_hat": p_hat, "mean": report.mean, "variance": report.variance, "ssr": ssr,
            "speculation_fraction": report.speculation_fraction, "max_ce": ce, "w0": w0 }));
    }
    sink.write_csv("sweep.csv", "p_hat,mean,variance,ssr,speculation_fraction,max_ce,w0", &rows)?;
    sink.write_json("summary.json", "sigexec-summary", json!({ "mode": "sweep", "sweep": entries }))
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn roundtrip_losses(p: &MarketParams) -> Result<bool, CliError> {
    for lots in 1..=5 {
        let d = lots as f64 * p.lot_size;
        let mut lambda = p.lambda_lower + 2.0 * d;
        while lambda <= p.lambda_upper {
            let s0 = MarketState::new(lambda, 0.0, 100.0, 0.0);
            let s1 = p.apply_shock(&s0, ShockTriple::trade(d), false)?;
            let s2 = p.apply_shock(&s1, ShockTriple::trade(-d), false)?;
            if s2.x >= 0.0 {
                return Ok(false);
            }
            lambda += 1.0;
        }
    }
    Ok(true)
}

fn run_check(config: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let params = config.params();
    let marks = &config.marks;
    let g = grid(config)?;
    let mut checks = Vec::new();

    let lambdas: Vec<f64> = (1..g.n_lambda).map(|j| g.lambda(j)).collect();
    let verdicts = check_elasticity(&params, marks, &lambdas)?;
    let failing = verdicts.iter().filter(|v| !v.passed).count();
    checks.push(Check { name: "elasticity", passed: failing == 0, detail: format!("{failing} failing rows") });

    let (_, product) = g.stability_product(&params, marks);
    checks.push(Check { name: "stability", passed: product <= 1.0, detail: format!("dT * max rate = {product:.4}") });

    checks.push(Check { name: "roundtrip_loss", passed: roundtrip_losses(&params)?, detail: "1-5 lots on every row".into() });

    let sol = solve(&params, marks, &g, &SolverOptions::default())?;
    let residual = sol.surface.symmetry_residual();
    checks.push(Check { name: "q_symmetry", passed: residual <= 1e-8, detail: format!("residual {residual:.3e}") });
    let (in_lambda, in_time) = sol.surface.monotonicity_violations(1e-12);
    checks.push(Check {
        name: "monotonicity",
        passed: in_lambda == 0 && in_time == 0,
        detail: format!("{in_lambda} in liquidity and {in_time} in time"),
    });

    let mut exp = experiment(config);
    exp.n_sim = exp.n_sim.min(2000);
    let paths = simulate_paths(&params, marks, &DoNothing, &exp)?;
    let dominated = paths.iter().all(|r| r.total_variation() <= vbar_bound(exp.initial.lambda, r, &params) + 1e-9);
    checks.push(Check { name: "variation_bound", passed: dominated, detail: format!("{} paths", paths.len()) });
    let diff: Vec<f64> = paths.iter().map(|r| r.realized_qv - r.compensator).collect();
    let m = sigexec_core::eval::mean(&diff);
    let se = (variance(&diff) / (diff.len().max(2) - 1) as f64).sqrt();
    checks.push(Check {
        name: "quadratic_variation",
        passed: m.abs() <= 3.0 * se,
        detail: format!("mean gap {m:.3e} with se {se:.3e}"),
    });

    let rows: Vec<String> = checks
        .iter()
        .map(|c| format!("{},{},{}", c.name, if c.passed { "pass" } else { "fail" }, c.detail))
        .collect();
    sink.write_csv("check.csv", "check,result,detail", &rows)?;
    for c in &checks {
        sink.say(format!("{} {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join(", ")))
    }
}
