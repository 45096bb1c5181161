//! Scenario files, commands and artifacts behind the `logsync` binary.
//!
//! A command turns a validated [`Scenario`] into a set of named artifacts
//! held in memory ([`run_command`]); [`execute`] adds loading, sweeps, the
//! manifest and the diagnostics file around it.

mod cli;
mod scenario;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arrange::{
    add_fifth, is_frozen, max_bitrate, min_period, minimax_sweep, phase_at_separation, solve_ring5, solve_tetrahedron,
    ArrangeError, Arrangement, DeclaredChannel, MinimaxConfig, RingConfig,
};
use crate::channel::{
    channel_from_log, echo_counts, export_occurrence_graph, ChannelError, PhaseTolerance, PhaseWindow,
};
use crate::machine::{self, EventRecord, MachineError, OpenMachine, RateSchedule};
use crate::spacetime::{Metric, SpacetimeError, Vec3, Worldline};
use crate::steer::{
    check_aiming_point, estimate_mu_from_phases, run_closed_loop, write_deviation_csv, AimingPoint, Controller,
    DriftModel, LoopScenario, PhaseModel, ResidualTolerance, RingObservation, SteerError,
};

pub use cli::{cli_main, Cli};
pub use scenario::{
    emit_scenario, validate_scenario, BitrateParams, ChannelSpec, EstimateParams, Issue, MachineSpec, MinimaxParams,
    ModelSpec, Params, Scenario, SteerParams, SyntheticSpec, SCHEMA_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShellError {
    #[error("invalid scenario:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Issue>),
    #[error("{command} failed: {message}")]
    Numerical { command: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl ShellError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ShellError::Validation(_) => 2,
            ShellError::Numerical { .. } => 3,
            ShellError::Io(_) => 1,
        }
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ShellError::Validation(vec![Issue {
            field: field.into(),
            message: message.into(),
        }])
    }
}

pub type Result<T> = std::result::Result<T, ShellError>;

/// Numerical failures from the solver modules.
trait Numerical<T> {
    fn numerical(self, command: Command) -> Result<T>;
}

macro_rules! numerical_from {
    ($($e:ty),*) => {$(
        impl<T> Numerical<T> for std::result::Result<T, $e> {
            fn numerical(self, command: Command) -> Result<T> {
                self.map_err(|e| ShellError::Numerical {
                    command: command.name().into(),
                    message: e.to_string(),
                })
            }
        }
    )*};
}
numerical_from!(ArrangeError, MachineError, SteerError, SpacetimeError, ChannelError);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    SolveTetra,
    SolveRing5,
    Minimax,
    Frozen,
    Bitrate,
    Steer,
    EstimateMu,
    ExportGraph,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SolveTetra => "solve-tetra",
            Command::SolveRing5 => "solve-ring5",
            Command::Minimax => "minimax",
            Command::Frozen => "frozen",
            Command::Bitrate => "bitrate",
            Command::Steer => "steer",
            Command::EstimateMu => "estimate-mu",
            Command::ExportGraph => "export-graph",
        }
    }
}

/// Series format; without one every applicable format is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Dot,
}

/// Named output files, kept in memory until written.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    fn json(&mut self, name: &str, v: &impl Serialize) {
        let mut text = serde_json::to_vec_pretty(v).expect("report serializes");
        text.push(b'\n');
        self.files.insert(name.into(), text);
    }

    fn text(&mut self, name: &str, s: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), s.into());
    }

    fn report(&self) -> Option<Value> {
        self.files
            .get("report.json")
            .and_then(|b| serde_json::from_slice(b).ok())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| ShellError::Io(format!("{}: {e}", dir.display())))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| ShellError::Io(format!("{}: {e}", parent.display())))?;
            }
            fs::write(&path, bytes).map_err(|e| ShellError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn wants(format: Option<Format>, f: Format) -> bool {
    format.is_none_or(|x| x == f)
}

fn metric_of(s: &Scenario) -> Result<Metric> {
    if s.mu == 0.0 {
        Ok(Metric::flat(s.constants))
    } else {
        Metric::fermi_normal(s.mu, s.constants).map_err(|e| ShellError::invalid("metric.mu", e.to_string()))
    }
}

fn require_p_tau(s: &Scenario) -> Result<f64> {
    s.p_tau()
        .ok_or_else(|| ShellError::invalid("params.p_tau", "required: give params.p_tau or an anchor"))
}

fn ring_config(s: &Scenario) -> Result<RingConfig> {
    RingConfig::new(s.params.n, require_p_tau(s)?, s.mu, s.constants)
        .map_err(|e| ShellError::invalid("params", e.to_string()))
}

/// Static machines built from the scenario. Machines without their own
/// period or rate tick with the first anchor's coordinate period.
pub fn build_machines(s: &Scenario, metric: &Metric) -> Result<Vec<OpenMachine>> {
    let cmd = Command::Simulate;
    let shared = match s.anchors.first() {
        Some(a) => {
            let spec = s
                .machines
                .iter()
                .find(|m| m.id == a.machine)
                .ok_or_else(|| ShellError::invalid("anchors", format!("unknown machine {}", a.machine)))?;
            let rate = metric.proper_rate(&Vec3::from(spec.position)).numerical(cmd)?;
            Some(a.proper_period / rate)
        }
        None => None,
    };
    let mut out = Vec::with_capacity(s.machines.len());
    for (i, m) in s.machines.iter().enumerate() {
        let pos = Vec3::from(m.position);
        let mut machine = if !m.rate_knots.is_empty() {
            let rate = RateSchedule::piecewise_linear(0.0, &m.rate_knots).numerical(cmd)?;
            OpenMachine::new(m.id.clone(), Worldline::at(pos), rate)
        } else if let Some(p) = m.proper_period {
            OpenMachine::new(
                m.id.clone(),
                Worldline::at(pos),
                RateSchedule::uniform(1.0 / p, 0.0).numerical(cmd)?,
            )
        } else if let Some(period) = shared {
            OpenMachine::static_coordinate_period(m.id.clone(), pos, period, metric).numerical(cmd)?
        } else {
            return Err(ShellError::invalid(
                &format!("machines[{i}]"),
                "needs a proper_period, a rate, or an anchored machine to tick with",
            ));
        };
        if let Some(a) = s.anchors.iter().find(|a| a.machine == m.id) {
            machine = machine.with_proper_period(a.proper_period);
        }
        out.push(machine);
    }
    Ok(out)
}

/// The scenario's machines and declared channels as an arrangement.
/// Channels without an echo count take the simulated one.
pub fn build_arrangement(s: &Scenario) -> Result<Arrangement> {
    let cmd = Command::Frozen;
    let metric = metric_of(s)?;
    let machines = build_machines(s, &metric)?;
    if s.anchors.is_empty() {
        return Err(ShellError::invalid(
            "anchors",
            "an arrangement needs an anchored proper period",
        ));
    }
    let mut arr = Arrangement::new(metric, machines, Vec::new(), s.anchors.clone()).numerical(cmd)?;
    let period = arr.coordinate_period().numerical(cmd)?;
    let pos = arr.positions().numerical(cmd)?;
    for c in &s.channels {
        let echo = match c.echo {
            Some(e) => e,
            None => {
                let (i, j) = (arr.index_of(&c.a).numerical(cmd)?, arr.index_of(&c.b).numerical(cmd)?);
                2.0 * metric.coordinate_light_delay(&pos[i], &pos[j]).numerical(cmd)? / period
            }
        };
        arr.channels.push(DeclaredChannel {
            a: c.a.clone(),
            b: c.b.clone(),
            echo,
            phase: 0.0,
        });
    }
    Ok(arr)
}

fn simulate_log(s: &Scenario, cmd: Command) -> Result<Vec<EventRecord>> {
    if s.machines.is_empty() || s.transmissions.is_empty() {
        return Err(ShellError::invalid(
            "transmissions",
            "simulation needs machines and at least one transmission",
        ));
    }
    let metric = metric_of(s)?;
    let machines = build_machines(s, &metric)?;
    machine::simulate_signals(&machines, &metric, &s.transmissions).numerical(cmd)
}

fn simulate(s: &Scenario, format: Option<Format>) -> Result<Artifacts> {
    let cmd = Command::Simulate;
    let log = simulate_log(s, cmd)?;
    let tol = PhaseTolerance::new(s.params.eta).numerical(cmd)?;
    let mut pairs: Vec<(_, _)> = s
        .transmissions
        .iter()
        .flat_map(|t| [(t.from.clone(), t.to.clone()), (t.to.clone(), t.from.clone())])
        .collect();
    pairs.sort();
    pairs.dedup();
    let channels: Vec<Value> = pairs
        .iter()
        .filter_map(|(a, b)| {
            let ch = channel_from_log(&log, a, b);
            if ch.is_empty() {
                return None;
            }
            let echoes: Vec<f64> = echo_counts(&log, a, b).iter().map(|e| e.value()).collect();
            Some(json!({
                "from": a,
                "to": b,
                "signals": ch.len(),
                "echo_counts": echoes,
                "arrival_phases": ch.arrival_phases().collect::<Vec<_>>(),
                "synchronized": ch.is_synchronized(tol, PhaseWindow::Coincident),
            }))
        })
        .collect();
    let mut out = Artifacts::default();
    out.json(
        "report.json",
        &json!({ "command": cmd.name(), "events": log.len(), "channels": channels }),
    );
    if wants(format, Format::Json) {
        let mut buf = Vec::new();
        machine::write_jsonl(&log, &mut buf).numerical(cmd)?;
        out.text("events.jsonl", buf);
    }
    if wants(format, Format::Csv) {
        let mut buf = Vec::new();
        machine::write_csv(&log, &mut buf).numerical(cmd)?;
        out.text("events.csv", buf);
    }
    if wants(format, Format::Dot) {
        out.text("graph.dot", export_occurrence_graph(&log).to_dot());
    }
    Ok(out)
}

fn export_graph(s: &Scenario) -> Result<Artifacts> {
    let cmd = Command::ExportGraph;
    let log = simulate_log(s, cmd)?;
    let graph = export_occurrence_graph(&log);
    let signal = graph.signal_edges().count();
    let mut out = Artifacts::default();
    out.json(
        "report.json",
        &json!({
            "command": cmd.name(),
            "nodes": graph.nodes.len(),
            "signal_edges": signal,
            "succession_edges": graph.edges.len() - signal,
        }),
    );
    out.text("graph.dot", graph.to_dot());
    Ok(out)
}

fn checks_csv(arr: &Arrangement, cmd: Command) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in arr.verify().numerical(cmd)? {
        w.serialize(&c).map_err(|e| ShellError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| ShellError::Io(e.to_string()))
}

fn positions_json(arr: &Arrangement, cmd: Command) -> Result<Value> {
    let pos = arr.positions().numerical(cmd)?;
    Ok(arr
        .machines
        .iter()
        .zip(pos)
        .map(|(m, p)| (m.id.0.clone(), json!([p.x, p.y, p.z])))
        .collect::<serde_json::Map<_, _>>()
        .into())
}

fn solve_tetra(s: &Scenario, format: Option<Format>) -> Result<Artifacts> {
    let cmd = Command::SolveTetra;
    let metric = metric_of(s)?;
    let p_tau = require_p_tau(s)?;
    let arr = solve_tetrahedron(&metric, p_tau, s.params.n).numerical(cmd)?;
    let checks = arr.verify().numerical(cmd)?;
    let frozen = is_frozen(&arr).numerical(cmd)?;
    let mut out = Artifacts::default();
    out.json(
        "report.json",
        &json!({
            "command": cmd.name(),
            "n": s.params.n,
            "p_tau": p_tau,
            "mu": s.mu,
            "edge_flat": s.params.n as f64 * p_tau * s.constants.c,
            "coordinate_period": arr.coordinate_period().numerical(cmd)?,
            "positions": positions_json(&arr, cmd)?,
            "max_phase": checks.iter().map(|c| c.max_phase()).fold(0.0, f64::max),
            "channels": checks,
            "frozen": frozen.frozen,
            "rank": frozen.rank,
        }),
    );
    if wants(format, Format::Csv) {
        out.text("channels.csv", checks_csv(&arr, cmd)?);
    }
    Ok(out)
}

fn solve_ring(s: &Scenario) -> Result<Artifacts> {
    let cmd = Command::SolveRing5;
    let cfg = ring_config(s)?;
    let sol = solve_ring5(&cfg).numerical(cmd)?;
    let mut out = Artifacts::default();
    out.json(
        "report.json",
        &json!({
            "command": cmd.name(),
            "n": cfg.n,
            "p_tau": cfg.p_tau,
            "mu": cfg.mu,
            "validity": cfg.validity(),
            "phase": sol.phase,
            "predicted_phase": cfg.predicted_phase(),
            "aa_phases": sol.aa_phases,
            "half_separation": sol.half_separation,
            "radius": sol.radius,
            "coordinate_period": sol.period,
            "positions": positions_json(&sol.arrangement, cmd)?,
        }),
    );
    Ok(out)
}

fn minimax(s: &Scenario, seed: u64, format: Option<Format>) -> Result<Artifacts> {
    let cmd = Command::Minimax;
    let mp = &s.params.minimax;
    let mut cfg = MinimaxConfig::new(ring_config(s)?, mp.template);
    cfg.restarts = mp.restarts;
    cfg.max_evals = mp.max_evals;
    cfg.weight = mp.weight;
    cfg.seed = seed;
    let sweep = minimax_sweep(&cfg, mp.m_max).numerical(cmd)?;
    let mut out = Artifacts::default();
    out.json(
        "report.json",
        &json!({
            "command": cmd.name(),
            "config": cfg,
            "non_increasing": sweep.windows(2).all(|w| w[1].value <= w[0].value),
            "results": sweep,
        }),
    );
    if wants(format, Format::Csv) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m", "value", "max_designated", "max_other", "evaluations"])
            .map_err(|e| ShellError::Io(e.to_string()))?;
        for r in &sweep {
            w.write_record([
                r.m.to_string(),
                r.value.to_string(),
                r.max_designated.to_string(),
                r.max_other.to_string(),
                r.evaluations.to_string(),
            ])
            .map_err(|e| ShellError::Io(e.to_string()))?;
        }
        out.text(
            "minimax.csv",
            w.into_inner().map_err(|e| ShellError::Io(e.to_string()))?,
        );
    }
    Ok(out)
}

fn frozen(s: &Scenario) -> Result<Artifacts> {
    let cmd = Command::Frozen;
    let cases: Vec<(String, Arrangement)> = if !s.channels.is_empty() {
        vec![("scenario".into(), build_arrangement(s)?)]
    } else {
        // the canonical ladder: tetrahedron, five machines, complete graph
        let metric = metric_of(s)?;
        let p_tau = require_p_tau(s)?;
        let tetra = solve_tetrahedron(&metric, p_tau, s.params.n).numerical(cmd)?;
        let five = add_fifth(&metric, &tetra, s.params.n).numerical(cmd)?;
        let pos = five.positions().numerical(cmd)?;
        let echo = 2.0 * metric.coordinate_light_delay(&pos[0], &pos[4]).numerical(cmd)?
            / five.coordinate_period().numerical(cmd)?;
        let full = five.clone().with_channel("V1", "V5", echo).numerical(cmd)?;
        vec![
            ("tetrahedron".into(), tetra),
            ("five_nine_channels".into(), five),
            ("five_complete".into(), full),
        ]
    };
    let reports: Vec<Value> = cases
        .iter()
        .map(|(name, arr)| {
            let r = is_frozen(arr).numerical(cmd)?;
            Ok(json!({ "name": name, "machines": arr.machines.len(), "report": r }))
        })
        .collect::<Result<_>>()?;
    let mut out = Artifacts::default();
    out.json(
        "report.json",
        &json!({ "command": cmd.name(), "mu": s.mu, "arrangements": reports }),
    );
    Ok(out)
}

fn bitrate(s: &Scenario) -> Result<Artifacts> {
    let cmd = Command::Bitrate;
    let b = s
        .params
        .bitrate
        .as_ref()
        .ok_or_else(|| ShellError::invalid("params.bitrate", "required for bitrate"))?;
    let gm = s.constants.g * b.mass;
    let p_min = min_period(gm, b.separation, b.radius, s.constants.c);
    let mut report = json!({
        "command": cmd.name(),
        "gm": gm,
        "separation": b.separation,
        "radius": b.radius,
        "min_period": p_min,
        "max_bitrate": max_bitrate(b.bits_per_character, p_min),
        "bits_per_character": b.bits_per_character,
    });
    if let Some(p) = s.params.p_tau {
        report["p_tau"] = json!(p);
        report["phase_at_p_tau"] = json!(phase_at_separation(gm, b.separation, b.radius, s.constants.c, p));
    }
    let mut out = Artifacts::default();
    out.json("report.json", &report);
    Ok(out)
}

fn steer(s: &Scenario, seed: u64, format: Option<Format>) -> Result<Artifacts> {
    let cmd = Command::Steer;
    let p = &s.params.steer;
    let aiming = AimingPoint::single(p.phi0, s.params.eta).numerical(cmd)?;
    let drift = DriftModel::new(p.sigma_white, p.sigma_rw, seed).numerical(cmd)?;
    let mut ctl = Controller::new(p.kp, p.ki, p.horizon).numerical(cmd)?;
    ctl.alpha = p.alpha;
    let scenario = LoopScenario {
        aiming,
        initial_error: p.initial_error,
        frequency_offset: p.frequency_offset,
        steps: p.steps,
    };
    let run = run_closed_loop(&scenario, &drift, &ctl).numerical(cmd)?;
    let deltas: Vec<f64> = run.deviations.iter().map(|d| d.delta).collect();
    let advice = check_aiming_point(
        &deltas,
        &ResidualTolerance {
            budget: PhaseTolerance::new(s.params.eta).numerical(cmd)?.bound(),
            window: 1000,
        },
    );
    let mut out = Artifacts::default();
    out.json(
        "summary.json",
        &json!({
            "command": cmd.name(),
            "seed": seed,
            "controller": ctl,
            "drift": drift,
            "summary": run.summary,
            "advice": advice,
        }),
    );
    if wants(format, Format::Csv) {
        let mut buf = Vec::new();
        write_deviation_csv(&run.deviations, &mut buf).numerical(cmd)?;
        out.text("deviations.csv", buf);
    }
    if format == Some(Format::Json) {
        out.json("deviations.json", &run.deviations);
    }
    Ok(out)
}

fn estimate(s: &Scenario, seed: u64, format: Option<Format>) -> Result<Artifacts> {
    let cmd = Command::EstimateMu;
    let e = &s.params.estimate;
    let model = match e.model {
        ModelSpec::Fixed(m) => m,
        ModelSpec::Calibrated => PhaseModel::calibrate(&ring_config(s)?).numerical(cmd)?,
    };
    let mut obs = e.observations.clone();
    if let Some(syn) = &e.synthetic {
        if s.mu <= 0.0 {
            return Err(ShellError::invalid(
                "metric.mu",
                "synthetic observations need an injected mu > 0",
            ));
        }
        let p0 = require_p_tau(s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..syn.count {
            let n = rng.random_range(syn.n_range.0..=syn.n_range.1);
            let p_tau = p0 * rng.random_range(syn.period_scale.0..=syn.period_scale.1);
            let noise: f64 = StandardNormal.sample(&mut rng);
            let clean = -model.coefficient() * s.mu * (s.constants.c * p_tau).powi(2) * (n as f64).powi(3);
            obs.push(RingObservation {
                n,
                p_tau,
                phase: clean * (1.0 + syn.noise * noise),
            });
        }
    }
    if obs.len() < 3 {
        return Err(ShellError::invalid(
            "params.estimate",
            format!("need at least 3 observations, got {}", obs.len()),
        ));
    }
    let est = estimate_mu_from_phases(&obs, model, e.weighting, s.constants.c, e.confidence).numerical(cmd)?;
    let mut report = json!({
        "command": cmd.name(),
        "model": model,
        "estimate": est,
        "tidal": est.tidal(s.constants.c),
    });
    if s.mu > 0.0 {
        report["injected_mu"] = json!(s.mu);
        report["relative_error"] = json!((est.mu - s.mu) / s.mu);
        report["covered"] = json!(est.ci_low <= s.mu && s.mu <= est.ci_high);
    }
    let mut out = Artifacts::default();
    out.json("report.json", &report);
    if wants(format, Format::Csv) {
        let mut w = csv::Writer::from_writer(Vec::new());
        for o in &obs {
            w.serialize(o).map_err(|e| ShellError::Io(e.to_string()))?;
        }
        out.text(
            "observations.csv",
            w.into_inner().map_err(|e| ShellError::Io(e.to_string()))?,
        );
    }
    Ok(out)
}

/// Runs one command on a validated scenario. Deterministic in the scenario
/// and seed.
pub fn run_command(cmd: Command, s: &Scenario, seed: u64, format: Option<Format>) -> Result<Artifacts> {
    match cmd {
        Command::Simulate => simulate(s, format),
        Command::ExportGraph => export_graph(s),
        Command::SolveTetra => solve_tetra(s, format),
        Command::SolveRing5 => solve_ring(s),
        Command::Minimax => minimax(s, seed, format),
        Command::Frozen => frozen(s),
        Command::Bitrate => bitrate(s),
        Command::Steer => steer(s, seed, format),
        Command::EstimateMu => estimate(s, seed, format),
    }
}

/// `param=start:stop:count`, evenly spaced and inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl std::str::FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (param, range) = s.split_once('=').ok_or("expected param=start:stop:count")?;
        let parts: Vec<&str> = range.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err("expected param=start:stop:count".into());
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
        let count: usize = n.trim().parse().map_err(|e| format!("{n:?}: {e}"))?;
        if count == 0 {
            return Err("count must be at least 1".into());
        }
        Ok(Sweep {
            param: param.trim().to_string(),
            start: num(a)?,
            stop: num(b)?,
            count,
        })
    }
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + step * i as f64).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub format: Option<Format>,
    pub sweep: Option<Sweep>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load(path: &Path) -> Result<(Vec<u8>, Scenario)> {
    let bytes = fs::read(path).map_err(|e| ShellError::Io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_slice(&bytes).map_err(|e| {
        ShellError::Validation(vec![Issue {
            field: "$".into(),
            message: format!("not valid JSON: {e}"),
        }])
    })?;
    let scenario = validate_scenario(&doc).map_err(ShellError::Validation)?;
    Ok((bytes, scenario))
}

fn sweep_runs(cmd: Command, base: &Scenario, sweep: &Sweep, opts: &RunOptions) -> (Artifacts, Option<ShellError>) {
    let results: Vec<(f64, Result<Artifacts>)> = sweep
        .values()
        .into_par_iter()
        .map(|v| {
            let mut s = base.clone();
            let r = s
                .set_param(&sweep.param, v)
                .map_err(|i| ShellError::Validation(vec![i]))
                .and_then(|_| match s.check() {
                    issues if issues.is_empty() => run_command(cmd, &s, opts.seed, opts.format),
                    issues => Err(ShellError::Validation(issues)),
                });
            (v, r)
        })
        .collect();
    let mut all = Artifacts::default();
    let mut points = Vec::new();
    let mut worst: Option<ShellError> = None;
    for (i, (v, r)) in results.into_iter().enumerate() {
        let dir = format!("sweep_{i:03}");
        match r {
            Ok(a) => {
                points.push(json!({ "index": i, "value": v, "status": "ok", "dir": dir, "report": a.report() }));
                for (name, bytes) in a.files {
                    all.files.insert(format!("{dir}/{name}"), bytes);
                }
            }
            Err(e) => {
                points.push(json!({ "index": i, "value": v, "status": "failed", "error": e.to_string() }));
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    all.json(
        "sweep.json",
        &json!({ "command": cmd.name(), "param": sweep.param, "points": points }),
    );
    (all, worst)
}

/// Loads the scenario, runs the command (or sweep), and writes artifacts,
/// `manifest.json`, and on failure `diagnostics.json` under `opts.out`.
pub fn execute(cmd: Command, scenario_path: &Path, opts: &RunOptions) -> Result<Vec<String>> {
    let result = load(scenario_path).map(|(bytes, s)| {
        let (arts, err) = match &opts.sweep {
            Some(sw) => sweep_runs(cmd, &s, sw, opts),
            None => match run_command(cmd, &s, opts.seed, opts.format) {
                Ok(a) => (a, None),
                Err(e) => (Artifacts::default(), Some(e)),
            },
        };
        (bytes, arts, err)
    });
    let (bytes, mut arts, err) = match result {
        Ok(x) => x,
        Err(e) => (Vec::new(), Artifacts::default(), Some(e)),
    };
    if let Some(e) = &err {
        let issues = match e {
            ShellError::Validation(v) => v.clone(),
            _ => Vec::new(),
        };
        arts.json(
            "diagnostics.json",
            &json!({
                "command": cmd.name(),
                "exit_code": e.exit_code(),
                "error": e.to_string(),
                "issues": issues,
            }),
        );
    }
    let outputs: Vec<String> = arts.files.keys().cloned().collect();
    arts.json(
        "manifest.json",
        &json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "schema_version": SCHEMA_VERSION,
            "command": cmd.name(),
            "seed": opts.seed,
            "format": opts.format,
            "sweep": opts.sweep.as_ref().map(|s| format!("{}={}:{}:{}", s.param, s.start, s.stop, s.count)),
            "inputs": [{ "path": scenario_path.display().to_string(), "sha256": sha256_hex(&bytes) }],
            "outputs": outputs,
        }),
    );
    arts.write_to(&opts.out)?;
    match err {
        Some(e) => Err(e),
        None => Ok(arts.files.into_keys().collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_pair() -> Scenario {
        validate_scenario(&json!({
            "schema_version": 1,
            "constants": "geometric",
            "machines": [
                { "id": "A", "position": { "value": [0, 0, 0], "unit": "m" } },
                { "id": "B", "position": { "value": [1.5, 0, 0], "unit": "m" } }
            ],
            "anchors": [{ "machine": "A", "proper_period": { "value": 1, "unit": "s" } }],
            "transmissions": [{ "from": "A", "to": "B", "reading": 0, "echo": true, "repeat": 4 }]
        }))
        .unwrap()
    }

    #[test]
    fn simulate_reports_echo_three() {
        let a = run_command(Command::Simulate, &flat_pair(), 0, None).unwrap();
        let r = a.report().unwrap();
        let ab = &r["channels"][0];
        assert_eq!(ab["from"], "A");
        assert!(ab["echo_counts"]
            .as_array()
            .unwrap()
            .iter()
            .all(|e| e.as_f64() == Some(3.0)));
        assert!(a.files.contains_key("graph.dot"));
        assert!(a.files.contains_key("events.csv"));
    }

    #[test]
    fn format_restricts_series() {
        let a = run_command(Command::Simulate, &flat_pair(), 0, Some(Format::Dot)).unwrap();
        let names: Vec<&str> = a.files.keys().map(String::as_str).collect();
        assert_eq!(names, ["graph.dot", "report.json"]);
    }

    #[test]
    fn flat_ring_has_zero_phase() {
        let mut s = flat_pair();
        s.params.p_tau = Some(1.0);
        let r = run_command(Command::SolveRing5, &s, 0, None).unwrap().report().unwrap();
        assert!(r["phase"].as_f64().unwrap().abs() < 1e-12);
    }

    #[test]
    fn steering_is_byte_identical_per_seed() {
        let mut s = flat_pair();
        s.params.steer.steps = 500;
        let a = run_command(Command::Steer, &s, 9, None).unwrap();
        let b = run_command(Command::Steer, &s, 9, None).unwrap();
        assert_eq!(a, b);
        let c = run_command(Command::Steer, &s, 10, None).unwrap();
        assert_ne!(a.files["deviations.csv"], c.files["deviations.csv"]);
    }

    #[test]
    fn missing_period_is_a_validation_error() {
        let s = flat_pair();
        let mut no_anchor = s.clone();
        no_anchor.anchors.clear();
        let e = run_command(Command::SolveRing5, &no_anchor, 0, None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn sweep_parsing() {
        let sw: Sweep = "mu=0:1e-4:3".parse().unwrap();
        assert_eq!(sw.values(), vec![0.0, 5e-5, 1e-4]);
        assert!("mu=0:1".parse::<Sweep>().is_err());
        assert!("mu=0:1:0".parse::<Sweep>().is_err());
    }
}
