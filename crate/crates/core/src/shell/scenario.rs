//! Scenario documents: JSON with a schema version, physical quantities as
//! `{"value": .., "unit": ".."}`, normalized to SI on load.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::arrange::{Anchor, RingConfig, Template};
use crate::machine::{MachineId, Transmission};
use crate::spacetime::{mu_from, PhysicalConstants, VALIDITY_GUARD};
use crate::steer::{PhaseModel, RingObservation, Weighting};

pub const SCHEMA_VERSION: u64 = 1;

/// One offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dim {
    Length,
    Time,
    Mass,
    Speed,
    Gravitation,
    Curvature,
}

impl Dim {
    fn si_unit(self) -> &'static str {
        match self {
            Dim::Length => "m",
            Dim::Time => "s",
            Dim::Mass => "kg",
            Dim::Speed => "m/s",
            Dim::Gravitation => "m^3/(kg s^2)",
            Dim::Curvature => "1/m^2",
        }
    }

    fn factor(self, unit: &str) -> Option<f64> {
        let f = match (self, unit) {
            (Dim::Length, "m") => 1.0,
            (Dim::Length, "km") => 1e3,
            (Dim::Length, "cm") => 1e-2,
            (Dim::Length, "mm") => 1e-3,
            (Dim::Time, "s") => 1.0,
            (Dim::Time, "ms") => 1e-3,
            (Dim::Time, "us") => 1e-6,
            (Dim::Time, "ns") => 1e-9,
            (Dim::Time, "ps") => 1e-12,
            (Dim::Mass, "kg") => 1.0,
            (Dim::Mass, "g") => 1e-3,
            (Dim::Speed, "m/s") => 1.0,
            (Dim::Speed, "km/s") => 1e3,
            (Dim::Gravitation, "m^3/(kg s^2)") => 1.0,
            (Dim::Curvature, "1/m^2") => 1.0,
            (Dim::Curvature, "1/km^2") => 1e-6,
            _ => return None,
        };
        Some(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub id: MachineId,
    /// [m]
    pub position: [f64; 3],
    /// Own proper period [s]; otherwise the machine ticks with the anchors.
    pub proper_period: Option<f64>,
    /// `(proper time [s], frequency [Hz])` knots of a piecewise-linear rate.
    pub rate_knots: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub a: MachineId,
    pub b: MachineId,
    pub echo: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitrateParams {
    /// [kg]
    pub mass: f64,
    /// Distance to the mass [m].
    pub radius: f64,
    /// Radar separation of the machines [m].
    pub separation: f64,
    pub bits_per_character: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerParams {
    pub steps: u64,
    pub horizon: u32,
    pub kp: f64,
    pub ki: f64,
    pub alpha: f64,
    pub sigma_white: f64,
    pub sigma_rw: f64,
    pub phi0: f64,
    pub initial_error: f64,
    pub frequency_offset: f64,
}

impl Default for SteerParams {
    fn default() -> Self {
        SteerParams {
            steps: 10_000,
            horizon: 4,
            kp: 0.3,
            ki: 0.01,
            alpha: 0.05,
            sigma_white: 0.01,
            sigma_rw: 1e-4,
            phi0: 0.0,
            initial_error: 0.0,
            frequency_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Fixed(PhaseModel),
    /// Coefficient read off the ring solver at the scenario's parameters.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    /// Relative phase noise.
    pub noise: f64,
    pub n_range: (u32, u32),
    /// Range of proper periods as multiples of `params.p_tau`.
    pub period_scale: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub observations: Vec<RingObservation>,
    pub synthetic: Option<SyntheticSpec>,
    pub confidence: f64,
    pub model: ModelSpec,
    pub weighting: Weighting,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams {
            observations: Vec::new(),
            synthetic: None,
            confidence: 0.95,
            model: ModelSpec::Fixed(PhaseModel::ClosedForm),
            weighting: Weighting::Relative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxParams {
    pub m_max: usize,
    pub template: Template,
    pub restarts: usize,
    pub max_evals: usize,
    pub weight: f64,
}

impl Default for MinimaxParams {
    fn default() -> Self {
        MinimaxParams {
            m_max: 10,
            template: Template::Free,
            restarts: 2,
            max_evals: 4000,
            weight: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: u32,
    /// [s]
    pub p_tau: Option<f64>,
    pub eta: f64,
    pub bitrate: Option<BitrateParams>,
    pub steer: SteerParams,
    pub estimate: EstimateParams,
    pub minimax: MinimaxParams,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n: 4,
            p_tau: None,
            eta: 0.1,
            bitrate: None,
            steer: SteerParams::default(),
            estimate: EstimateParams::default(),
            minimax: MinimaxParams::default(),
        }
    }
}

/// A validated scenario with every quantity in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub constants: PhysicalConstants,
    /// Curvature parameter [1/m^2]; zero is flat space.
    pub mu: f64,
    pub machines: Vec<MachineSpec>,
    pub anchors: Vec<Anchor>,
    pub channels: Vec<ChannelSpec>,
    pub transmissions: Vec<Transmission>,
    pub params: Params,
}

impl Scenario {
    /// The proper period used by the solvers: `params.p_tau`, else the
    /// first anchor's.
    pub fn p_tau(&self) -> Option<f64> {
        self.params
            .p_tau
            .or_else(|| self.anchors.first().map(|a| a.proper_period))
    }

    /// Overrides one numeric parameter by name, for sweeps.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), Issue> {
        let p = &mut self.params;
        let as_count = |v: f64| v.round().max(0.0);
        match name {
            "mu" => self.mu = value,
            "n" => p.n = as_count(value) as u32,
            "p_tau" => p.p_tau = Some(value),
            "eta" => p.eta = value,
            "steps" => p.steer.steps = as_count(value) as u64,
            "horizon" => p.steer.horizon = as_count(value) as u32,
            "kp" => p.steer.kp = value,
            "ki" => p.steer.ki = value,
            "sigma_white" => p.steer.sigma_white = value,
            "sigma_rw" => p.steer.sigma_rw = value,
            "phi0" => p.steer.phi0 = value,
            "m_max" => p.minimax.m_max = as_count(value) as usize,
            _ => {
                return Err(Issue {
                    field: name.into(),
                    message: "not a sweepable parameter (mu, n, p_tau, eta, steps, horizon, kp, ki, \
                              sigma_white, sigma_rw, phi0, m_max)"
                        .into(),
                })
            }
        }
        Ok(())
    }

    /// Domain checks shared by loading and sweeping.
    pub fn check(&self) -> Vec<Issue> {
        let mut ck = Check::default();
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            ck.push(
                "metric.mu",
                format!("must be a non-negative curvature, got {}", self.mu),
            );
        }
        for (i, m) in self.machines.iter().enumerate() {
            let r2: f64 = m.position.iter().map(|x| x * x).sum();
            if self.mu * r2 >= VALIDITY_GUARD {
                ck.push(
                    format!("machines[{i}].position"),
                    format!(
                        "outside the first-order validity guard: mu*|p|^2 = {:.3e} must stay below {VALIDITY_GUARD:.0e}",
                        self.mu * r2
                    ),
                );
            }
        }
        if self.params.n == 0 {
            ck.push("params.n", "echo parameter N must be at least 1");
        }
        if let Some(p) = self.params.p_tau {
            if !(p.is_finite() && p > 0.0) {
                ck.push("params.p_tau", format!("must be positive, got {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.params.eta) {
            ck.push("params.eta", format!("must lie in [0, 1), got {}", self.params.eta));
        }
        if let (Some(p), true) = (self.p_tau(), self.mu > 0.0) {
            let ring = RingConfig {
                n: self.params.n,
                p_tau: p,
                mu: self.mu,
                constants: self.constants,
            };
            if ring.validity() >= 0.5 {
                ck.push(
                    "metric.mu",
                    format!(
                        "outside the ring validity guard: 27 mu N^3 p^2 c^2 / 8 = {:.3e} must stay below 1/2",
                        ring.validity()
                    ),
                );
            }
        }
        let s = &self.params.steer;
        if s.phi0.abs() >= (1.0 - self.params.eta) / 2.0 {
            ck.push(
                "params.steer.phi0",
                format!("aiming phase must satisfy |phi0| < (1 - eta)/2, got {}", s.phi0),
            );
        }
        if s.sigma_white < 0.0 || s.sigma_rw < 0.0 {
            ck.push("params.steer", "noise amplitudes must be non-negative");
        }
        if !(1..=10).contains(&self.params.minimax.m_max) {
            ck.push("params.minimax.m_max", "must be in 1..=10");
        }
        ck.issues
    }
}

#[derive(Default)]
struct Check {
    issues: Vec<Issue>,
}

impl Check {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            field: field.into(),
            message: message.into(),
        });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => {
                self.push(path, "expected an object");
                None
            }
        }
    }

    fn unknown_keys(&mut self, m: &Map<String, Value>, path: &str, known: &[&str]) {
        for k in m.keys() {
            if !known.contains(&k.as_str()) {
                self.push(join(path, k), "unknown field");
            }
        }
    }

    /// Reads `{value, unit}` with a scalar or array value, scaled to SI.
    fn quantity_raw(&mut self, v: &Value, dim: Dim, path: &str) -> Option<Vec<f64>> {
        let m = self.object(v, path)?;
        let unit = match m.get("unit").and_then(Value::as_str) {
            Some(u) => u,
            None => {
                self.push(
                    join(path, "unit"),
                    format!("missing unit string (SI: {})", dim.si_unit()),
                );
                return None;
            }
        };
        let Some(factor) = dim.factor(unit) else {
            self.push(
                join(path, "unit"),
                format!("unknown unit {unit:?} for this quantity (SI: {})", dim.si_unit()),
            );
            return None;
        };
        let values = match m.get("value") {
            Some(Value::Number(n)) => vec![n.as_f64().unwrap_or(f64::NAN)],
            Some(Value::Array(a)) => a.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect(),
            _ => {
                self.push(join(path, "value"), "missing numeric value");
                return None;
            }
        };
        if values.iter().any(|x| !x.is_finite()) {
            self.push(join(path, "value"), "values must be finite numbers");
            return None;
        }
        Some(values.into_iter().map(|x| x * factor).collect())
    }

    fn quantity(&mut self, v: &Value, dim: Dim, path: &str) -> Option<f64> {
        match self.quantity_raw(v, dim, path)?.as_slice() {
            [x] => Some(*x),
            _ => {
                self.push(join(path, "value"), "expected a single number");
                None
            }
        }
    }

    fn vec3(&mut self, v: &Value, dim: Dim, path: &str) -> Option<[f64; 3]> {
        match self.quantity_raw(v, dim, path)?.as_slice() {
            [x, y, z] => Some([*x, *y, *z]),
            _ => {
                self.push(join(path, "value"), "expected three components");
                None
            }
        }
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.push(path, "expected a finite number");
                None
            }
        }
    }

    fn count(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v.as_u64() {
            Some(x) => Some(x),
            None => {
                self.push(path, "expected a non-negative integer");
                None
            }
        }
    }

    fn string(&mut self, v: &Value, path: &str) -> Option<String> {
        match v.as_str() {
            Some(s) if !s.is_empty() => Some(s.to_string()),
            _ => {
                self.push(path, "expected a non-empty string");
                None
            }
        }
    }

    fn array<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Vec<Value>> {
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.push(path, "expected an array");
                None
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Validates a scenario document, filling defaults and normalizing units.
/// Every problem found is reported, not only the first.
pub fn validate_scenario(doc: &Value) -> Result<Scenario, Vec<Issue>> {
    let mut ck = Check::default();
    let Some(root) = ck.object(doc, "$") else {
        return Err(ck.issues);
    };
    ck.unknown_keys(
        root,
        "",
        &[
            "schema_version",
            "constants",
            "metric",
            "machines",
            "anchors",
            "channels",
            "transmissions",
            "params",
        ],
    );
    match root.get("schema_version").map(Value::as_u64) {
        Some(Some(SCHEMA_VERSION)) => {}
        Some(_) => ck.push(
            "schema_version",
            format!("unsupported; this build reads version {SCHEMA_VERSION}"),
        ),
        None => ck.push("schema_version", "missing"),
    }

    let constants = read_constants(root.get("constants"), &mut ck);
    let mu = read_metric(root.get("metric"), &constants, &mut ck);

    let mut machines = Vec::new();
    if let Some(list) = root.get("machines").and_then(|v| ck.array(v, "machines")) {
        for (i, m) in list.iter().enumerate() {
            if let Some(spec) = read_machine(m, &format!("machines[{i}]"), &mut ck) {
                machines.push(spec);
            }
        }
    }
    let known = |id: &str| machines.iter().any(|m: &MachineSpec| m.id.0 == id);
    let mut seen = std::collections::BTreeSet::new();
    for (i, m) in machines.iter().enumerate() {
        if !seen.insert(&m.id) {
            ck.push(format!("machines[{i}].id"), format!("duplicate machine id {}", m.id));
        }
    }

    let mut anchors = Vec::new();
    if let Some(list) = root.get("anchors").and_then(|v| ck.array(v, "anchors")) {
        for (i, a) in list.iter().enumerate() {
            let path = format!("anchors[{i}]");
            let Some(m) = ck.object(a, &path) else { continue };
            ck.unknown_keys(m, &path, &["machine", "proper_period"]);
            let id = m.get("machine").and_then(|v| ck.string(v, &join(&path, "machine")));
            let p = match m.get("proper_period") {
                Some(v) => ck.quantity(v, Dim::Time, &join(&path, "proper_period")),
                None => {
                    ck.push(join(&path, "proper_period"), "missing");
                    None
                }
            };
            if let Some(id) = &id {
                if !known(id) {
                    ck.push(join(&path, "machine"), format!("unknown machine {id}"));
                }
            }
            if let Some(p) = p {
                if p <= 0.0 {
                    ck.push(join(&path, "proper_period"), "must be positive");
                }
            }
            if let (Some(id), Some(p)) = (id, p) {
                anchors.push(Anchor {
                    machine: id.into(),
                    proper_period: p,
                });
            }
        }
    }

    let mut channels = Vec::new();
    if let Some(list) = root.get("channels").and_then(|v| ck.array(v, "channels")) {
        for (i, c) in list.iter().enumerate() {
            let path = format!("channels[{i}]");
            let Some(m) = ck.object(c, &path) else { continue };
            ck.unknown_keys(m, &path, &["a", "b", "echo"]);
            let a = read_ref(m, "a", &path, &known, &mut ck);
            let b = read_ref(m, "b", &path, &known, &mut ck);
            let echo = m.get("echo").and_then(|v| ck.number(v, &join(&path, "echo")));
            if let (Some(a), Some(b)) = (a, b) {
                if a == b {
                    ck.push(&path, "a channel joins two different machines");
                }
                channels.push(ChannelSpec { a, b, echo });
            }
        }
    }
    if !channels.is_empty() && anchors.is_empty() {
        ck.push(
            "anchors",
            "an arrangement needs an anchored proper period: at least one machine must fix p_tau \
             so that echo counts define distances",
        );
    }

    let mut transmissions = Vec::new();
    if let Some(list) = root.get("transmissions").and_then(|v| ck.array(v, "transmissions")) {
        for (i, t) in list.iter().enumerate() {
            let path = format!("transmissions[{i}]");
            let Some(m) = ck.object(t, &path) else { continue };
            ck.unknown_keys(m, &path, &["from", "to", "reading", "echo", "repeat", "step"]);
            let from = read_ref(m, "from", &path, &known, &mut ck);
            let to = read_ref(m, "to", &path, &known, &mut ck);
            let reading = match m.get("reading") {
                Some(v) => ck.number(v, &join(&path, "reading")),
                None => {
                    ck.push(join(&path, "reading"), "missing");
                    None
                }
            };
            let echo = match m.get("echo") {
                None => false,
                Some(Value::Bool(b)) => *b,
                Some(_) => {
                    ck.push(join(&path, "echo"), "expected true or false");
                    false
                }
            };
            let repeat = m
                .get("repeat")
                .and_then(|v| ck.count(v, &join(&path, "repeat")))
                .unwrap_or(1);
            let step = m
                .get("step")
                .and_then(|v| ck.number(v, &join(&path, "step")))
                .unwrap_or(1.0);
            if let (Some(from), Some(to), Some(r)) = (from, to, reading) {
                for k in 0..repeat {
                    transmissions.push(Transmission {
                        from: from.clone(),
                        reading: r + k as f64 * step,
                        to: to.clone(),
                        echo,
                    });
                }
            }
        }
    }

    let params = match root.get("params") {
        Some(v) => read_params(v, &mut ck),
        None => Params::default(),
    };

    let scenario = Scenario {
        constants,
        mu,
        machines,
        anchors,
        channels,
        transmissions,
        params,
    };
    ck.issues.extend(scenario.check());
    if ck.issues.is_empty() {
        Ok(scenario)
    } else {
        Err(ck.issues)
    }
}

fn read_ref(
    m: &Map<String, Value>,
    key: &str,
    path: &str,
    known: &dyn Fn(&str) -> bool,
    ck: &mut Check,
) -> Option<MachineId> {
    let field = join(path, key);
    let id = match m.get(key) {
        Some(v) => ck.string(v, &field)?,
        None => {
            ck.push(field, "missing");
            return None;
        }
    };
    if !known(&id) {
        ck.push(field, format!("unknown machine {id}"));
        return None;
    }
    Some(id.into())
}

fn read_constants(v: Option<&Value>, ck: &mut Check) -> PhysicalConstants {
    let Some(v) = v else {
        return PhysicalConstants::SI;
    };
    if v.as_str() == Some("geometric") {
        return PhysicalConstants::geometric();
    }
    if v.as_str() == Some("si") {
        return PhysicalConstants::SI;
    }
    let Some(m) = ck.object(v, "constants") else {
        return PhysicalConstants::SI;
    };
    ck.unknown_keys(m, "constants", &["c", "G"]);
    let mut k = PhysicalConstants::SI;
    if let Some(c) = m.get("c").and_then(|v| ck.quantity(v, Dim::Speed, "constants.c")) {
        k.c = c;
    }
    if let Some(g) = m.get("G").and_then(|v| ck.quantity(v, Dim::Gravitation, "constants.G")) {
        k.g = g;
    }
    if PhysicalConstants::new(k.c, k.g).is_err() {
        ck.push("constants", "c and G must be positive");
    }
    k
}

fn read_metric(v: Option<&Value>, k: &PhysicalConstants, ck: &mut Check) -> f64 {
    let Some(v) = v else { return 0.0 };
    let Some(m) = ck.object(v, "metric") else { return 0.0 };
    ck.unknown_keys(m, "metric", &["kind", "mu", "mass", "r"]);
    match m.get("kind").and_then(Value::as_str) {
        Some("flat") => 0.0,
        Some("fermi_normal") => {
            if let Some(q) = m.get("mu") {
                return ck.quantity(q, Dim::Curvature, "metric.mu").unwrap_or(0.0);
            }
            let mass = m.get("mass").and_then(|q| ck.quantity(q, Dim::Mass, "metric.mass"));
            let r = m.get("r").and_then(|q| ck.quantity(q, Dim::Length, "metric.r"));
            match (mass, r) {
                (Some(mass), Some(r)) => match mu_from(mass, r, k) {
                    Ok(mu) => mu,
                    Err(e) => {
                        ck.push("metric", e.to_string());
                        0.0
                    }
                },
                _ => {
                    ck.push("metric", "fermi_normal needs mu, or mass and r");
                    0.0
                }
            }
        }
        _ => {
            ck.push("metric.kind", "expected \"flat\" or \"fermi_normal\"");
            0.0
        }
    }
}

fn read_machine(v: &Value, path: &str, ck: &mut Check) -> Option<MachineSpec> {
    let m = ck.object(v, path)?;
    ck.unknown_keys(m, path, &["id", "position", "proper_period", "rate"]);
    let id = match m.get("id") {
        Some(v) => ck.string(v, &join(path, "id")),
        None => {
            ck.push(join(path, "id"), "missing");
            None
        }
    };
    let position = match m.get("position") {
        Some(v) => ck.vec3(v, Dim::Length, &join(path, "position")),
        None => {
            ck.push(join(path, "position"), "missing");
            None
        }
    };
    let proper_period = m
        .get("proper_period")
        .and_then(|v| ck.quantity(v, Dim::Time, &join(path, "proper_period")));
    if matches!(proper_period, Some(p) if p <= 0.0) {
        ck.push(join(path, "proper_period"), "must be positive");
    }
    let mut rate_knots = Vec::new();
    if let Some(r) = m.get("rate") {
        let rp = join(path, "rate");
        if let Some(knots) = ck.array(r, &rp) {
            for (i, k) in knots.iter().enumerate() {
                let kp = format!("{rp}[{i}]");
                let Some(km) = ck.object(k, &kp) else { continue };
                let tau = km.get("tau").and_then(|v| ck.quantity(v, Dim::Time, &join(&kp, "tau")));
                let hz = km.get("frequency").and_then(|v| ck.number(v, &join(&kp, "frequency")));
                match (tau, hz) {
                    (Some(t), Some(f)) if f > 0.0 => rate_knots.push((t, f)),
                    _ => ck.push(&kp, "knots need tau and a positive frequency [Hz]"),
                }
            }
            if rate_knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                ck.push(&rp, "knot times must increase");
            }
        }
    }
    Some(MachineSpec {
        id: id?.into(),
        position: position?,
        proper_period,
        rate_knots,
    })
}

fn read_params(v: &Value, ck: &mut Check) -> Params {
    let mut p = Params::default();
    let Some(m) = ck.object(v, "params") else { return p };
    ck.unknown_keys(
        m,
        "params",
        &["n", "p_tau", "eta", "bitrate", "steer", "estimate", "minimax"],
    );
    if let Some(n) = m.get("n").and_then(|v| ck.count(v, "params.n")) {
        p.n = n as u32;
    }
    if let Some(v) = m.get("p_tau") {
        p.p_tau = ck.quantity(v, Dim::Time, "params.p_tau");
    }
    if let Some(e) = m.get("eta").and_then(|v| ck.number(v, "params.eta")) {
        p.eta = e;
    }
    if let Some(b) = m.get("bitrate").and_then(|v| ck.object(v, "params.bitrate")) {
        ck.unknown_keys(
            b,
            "params.bitrate",
            &["mass", "radius", "separation", "bits_per_character"],
        );
        let mut q = |key: &str, dim: Dim| match b.get(key) {
            Some(v) => ck.quantity(v, dim, &format!("params.bitrate.{key}")),
            None => {
                ck.push(format!("params.bitrate.{key}"), "missing");
                None
            }
        };
        let mass = q("mass", Dim::Mass);
        let radius = q("radius", Dim::Length);
        let separation = q("separation", Dim::Length);
        let bits = b
            .get("bits_per_character")
            .and_then(|v| ck.number(v, "params.bitrate.bits_per_character"))
            .unwrap_or(1.0);
        if let (Some(mass), Some(radius), Some(separation)) = (mass, radius, separation) {
            p.bitrate = Some(BitrateParams {
                mass,
                radius,
                separation,
                bits_per_character: bits,
            });
        }
    }
    if let Some(s) = m.get("steer").and_then(|v| ck.object(v, "params.steer")) {
        let names = [
            "steps",
            "horizon",
            "kp",
            "ki",
            "alpha",
            "sigma_white",
            "sigma_rw",
            "phi0",
            "initial_error",
            "frequency_offset",
        ];
        ck.unknown_keys(s, "params.steer", &names);
        let st = &mut p.steer;
        for (key, v) in s {
            let path = format!("params.steer.{key}");
            match key.as_str() {
                "steps" => st.steps = ck.count(v, &path).unwrap_or(st.steps),
                "horizon" => st.horizon = ck.count(v, &path).map_or(st.horizon, |x| x as u32),
                _ => {
                    let Some(x) = ck.number(v, &path) else { continue };
                    match key.as_str() {
                        "kp" => st.kp = x,
                        "ki" => st.ki = x,
                        "alpha" => st.alpha = x,
                        "sigma_white" => st.sigma_white = x,
                        "sigma_rw" => st.sigma_rw = x,
                        "phi0" => st.phi0 = x,
                        "initial_error" => st.initial_error = x,
                        "frequency_offset" => st.frequency_offset = x,
                        _ => {}
                    }
                }
            }
        }
    }
    if let Some(e) = m.get("estimate") {
        p.estimate = read_estimate(e, ck);
    }
    if let Some(mm) = m.get("minimax").and_then(|v| ck.object(v, "params.minimax")) {
        ck.unknown_keys(
            mm,
            "params.minimax",
            &["m_max", "template", "restarts", "max_evals", "weight"],
        );
        let mx = &mut p.minimax;
        if let Some(x) = mm.get("m_max").and_then(|v| ck.count(v, "params.minimax.m_max")) {
            mx.m_max = x as usize;
        }
        if let Some(x) = mm.get("restarts").and_then(|v| ck.count(v, "params.minimax.restarts")) {
            mx.restarts = x as usize;
        }
        if let Some(x) = mm
            .get("max_evals")
            .and_then(|v| ck.count(v, "params.minimax.max_evals"))
        {
            mx.max_evals = x as usize;
        }
        if let Some(x) = mm.get("weight").and_then(|v| ck.number(v, "params.minimax.weight")) {
            mx.weight = x;
        }
        match mm.get("template").map(Value::as_str) {
            None => {}
            Some(Some("free")) => mx.template = Template::Free,
            Some(Some("symmetric_ring")) => mx.template = Template::SymmetricRing,
            Some(_) => ck.push("params.minimax.template", "expected \"free\" or \"symmetric_ring\""),
        }
    }
    p
}

fn read_estimate(v: &Value, ck: &mut Check) -> EstimateParams {
    let mut e = EstimateParams::default();
    let path = "params.estimate";
    let Some(m) = ck.object(v, path) else { return e };
    ck.unknown_keys(
        m,
        path,
        &["observations", "synthetic", "confidence", "model", "weighting"],
    );
    if let Some(list) = m
        .get("observations")
        .and_then(|v| ck.array(v, "params.estimate.observations"))
    {
        for (i, o) in list.iter().enumerate() {
            let op = format!("params.estimate.observations[{i}]");
            let Some(om) = ck.object(o, &op) else { continue };
            let n = om.get("n").and_then(|v| ck.count(v, &join(&op, "n")));
            let p = om
                .get("p_tau")
                .and_then(|v| ck.quantity(v, Dim::Time, &join(&op, "p_tau")));
            let phase = om.get("phase").and_then(|v| ck.number(v, &join(&op, "phase")));
            match (n, p, phase) {
                (Some(n), Some(p_tau), Some(phase)) => e.observations.push(RingObservation {
                    n: n as u32,
                    p_tau,
                    phase,
                }),
                _ => ck.push(&op, "observations need n, p_tau and phase"),
            }
        }
    }
    if let Some(s) = m
        .get("synthetic")
        .and_then(|v| ck.object(v, "params.estimate.synthetic"))
    {
        let sp = "params.estimate.synthetic";
        ck.unknown_keys(s, sp, &["count", "noise", "n_range", "period_scale"]);
        let count = s
            .get("count")
            .and_then(|v| ck.count(v, &join(sp, "count")))
            .unwrap_or(100);
        let noise = s
            .get("noise")
            .and_then(|v| ck.number(v, &join(sp, "noise")))
            .unwrap_or(0.1);
        let pair = |ck: &mut Check, key: &str, default: (f64, f64)| -> (f64, f64) {
            match s.get(key).map(|v| v.as_array()) {
                None => default,
                Some(Some(a)) if a.len() == 2 && a.iter().all(Value::is_number) => {
                    (a[0].as_f64().unwrap_or(0.0), a[1].as_f64().unwrap_or(0.0))
                }
                Some(_) => {
                    ck.push(join(sp, key), "expected [low, high]");
                    default
                }
            }
        };
        let (nlo, nhi) = pair(ck, "n_range", (2.0, 8.0));
        let period_scale = pair(ck, "period_scale", (0.5, 2.0));
        if !(nlo >= 1.0 && nhi >= nlo) || !(period_scale.0 > 0.0 && period_scale.1 >= period_scale.0) {
            ck.push(sp, "ranges must be positive and ordered");
        }
        if noise < 0.0 {
            ck.push(join(sp, "noise"), "must be non-negative");
        }
        e.synthetic = Some(SyntheticSpec {
            count: count as usize,
            noise,
            n_range: (nlo as u32, nhi as u32),
            period_scale,
        });
    }
    if let Some(c) = m
        .get("confidence")
        .and_then(|v| ck.number(v, "params.estimate.confidence"))
    {
        if !(c > 0.0 && c < 1.0) {
            ck.push("params.estimate.confidence", "must lie in (0, 1)");
        }
        e.confidence = c;
    }
    match m.get("weighting").map(Value::as_str) {
        None => {}
        Some(Some("relative")) => e.weighting = Weighting::Relative,
        Some(Some("uniform")) => e.weighting = Weighting::Uniform,
        Some(_) => ck.push("params.estimate.weighting", "expected \"relative\" or \"uniform\""),
    }
    match m.get("model") {
        None => {}
        Some(Value::String(s)) if s == "closed_form" => e.model = ModelSpec::Fixed(PhaseModel::ClosedForm),
        Some(Value::String(s)) if s == "calibrated" => e.model = ModelSpec::Calibrated,
        Some(Value::Object(o)) if o.get("coefficient").is_some_and(Value::is_number) => {
            e.model = ModelSpec::Fixed(PhaseModel::Coefficient(o["coefficient"].as_f64().unwrap_or(0.0)))
        }
        Some(_) => ck.push(
            "params.estimate.model",
            "expected \"closed_form\", \"calibrated\" or {\"coefficient\": k}",
        ),
    }
    e
}

fn q(value: f64, dim: Dim) -> Value {
    json!({ "value": value, "unit": dim.si_unit() })
}

/// Writes the normalized document: SI units, defaults spelled out,
/// repeated transmissions expanded. Loading it gives back `s`.
pub fn emit_scenario(s: &Scenario) -> Value {
    let metric = if s.mu == 0.0 {
        json!({ "kind": "flat" })
    } else {
        json!({ "kind": "fermi_normal", "mu": q(s.mu, Dim::Curvature) })
    };
    let machines: Vec<Value> = s
        .machines
        .iter()
        .map(|m| {
            let mut o = json!({
                "id": m.id.0,
                "position": { "value": m.position, "unit": "m" },
            });
            if let Some(p) = m.proper_period {
                o["proper_period"] = q(p, Dim::Time);
            }
            if !m.rate_knots.is_empty() {
                o["rate"] = m
                    .rate_knots
                    .iter()
                    .map(|&(t, f)| json!({ "tau": q(t, Dim::Time), "frequency": f }))
                    .collect();
            }
            o
        })
        .collect();
    let anchors: Vec<Value> = s
        .anchors
        .iter()
        .map(|a| json!({ "machine": a.machine.0, "proper_period": q(a.proper_period, Dim::Time) }))
        .collect();
    let channels: Vec<Value> = s
        .channels
        .iter()
        .map(|c| {
            let mut o = json!({ "a": c.a.0, "b": c.b.0 });
            if let Some(e) = c.echo {
                o["echo"] = json!(e);
            }
            o
        })
        .collect();
    let transmissions: Vec<Value> = s
        .transmissions
        .iter()
        .map(|t| json!({ "from": t.from.0, "to": t.to.0, "reading": t.reading, "echo": t.echo }))
        .collect();

    let p = &s.params;
    let mut params = json!({
        "n": p.n,
        "eta": p.eta,
        "steer": {
            "steps": p.steer.steps,
            "horizon": p.steer.horizon,
            "kp": p.steer.kp,
            "ki": p.steer.ki,
            "alpha": p.steer.alpha,
            "sigma_white": p.steer.sigma_white,
            "sigma_rw": p.steer.sigma_rw,
            "phi0": p.steer.phi0,
            "initial_error": p.steer.initial_error,
            "frequency_offset": p.steer.frequency_offset,
        },
        "minimax": {
            "m_max": p.minimax.m_max,
            "template": match p.minimax.template {
                Template::Free => "free",
                Template::SymmetricRing => "symmetric_ring",
            },
            "restarts": p.minimax.restarts,
            "max_evals": p.minimax.max_evals,
            "weight": p.minimax.weight,
        },
    });
    if let Some(t) = p.p_tau {
        params["p_tau"] = q(t, Dim::Time);
    }
    if let Some(b) = &p.bitrate {
        params["bitrate"] = json!({
            "mass": q(b.mass, Dim::Mass),
            "radius": q(b.radius, Dim::Length),
            "separation": q(b.separation, Dim::Length),
            "bits_per_character": b.bits_per_character,
        });
    }
    let e = &p.estimate;
    let mut est = json!({
        "confidence": e.confidence,
        "weighting": match e.weighting {
            Weighting::Relative => "relative",
            Weighting::Uniform => "uniform",
        },
        "model": match e.model {
            ModelSpec::Fixed(PhaseModel::ClosedForm) => json!("closed_form"),
            ModelSpec::Fixed(PhaseModel::Coefficient(k)) => json!({ "coefficient": k }),
            ModelSpec::Calibrated => json!("calibrated"),
        },
        "observations": e.observations.iter().map(|o| json!({
            "n": o.n,
            "p_tau": q(o.p_tau, Dim::Time),
            "phase": o.phase,
        })).collect::<Vec<_>>(),
    });
    if let Some(syn) = &e.synthetic {
        est["synthetic"] = json!({
            "count": syn.count,
            "noise": syn.noise,
            "n_range": [syn.n_range.0, syn.n_range.1],
            "period_scale": [syn.period_scale.0, syn.period_scale.1],
        });
    }
    params["estimate"] = est;

    json!({
        "schema_version": SCHEMA_VERSION,
        "constants": { "c": q(s.constants.c, Dim::Speed), "G": q(s.constants.g, Dim::Gravitation) },
        "metric": metric,
        "machines": machines,
        "anchors": anchors,
        "channels": channels,
        "transmissions": transmissions,
        "params": params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Value {
        json!({
            "schema_version": 1,
            "machines": [
                { "id": "A", "position": { "value": [0, 0, 0], "unit": "m" } },
                { "id": "B", "position": { "value": [1.5, 0, 0], "unit": "km" } }
            ],
            "anchors": [{ "machine": "A", "proper_period": { "value": 1, "unit": "us" } }]
        })
    }

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = validate_scenario(&minimal()).unwrap();
        assert_eq!(s.constants, PhysicalConstants::SI);
        assert_eq!(s.mu, 0.0);
        assert_eq!(s.machines[1].position, [1500.0, 0.0, 0.0]);
        assert_eq!(s.anchors[0].proper_period, 1e-6);
        assert_eq!(s.params, Params::default());
        assert_eq!(s.p_tau(), Some(1e-6));
    }

    #[test]
    fn normalized_form_is_a_fixed_point() {
        let mut doc = minimal();
        doc["metric"] = json!({ "kind": "fermi_normal", "mu": { "value": 1e-12, "unit": "1/km^2" } });
        doc["channels"] = json!([{ "a": "A", "b": "B", "echo": 20 }]);
        doc["transmissions"] = json!([{ "from": "A", "to": "B", "reading": 0, "echo": true, "repeat": 3 }]);
        doc["params"] = json!({
            "p_tau": { "value": 2, "unit": "ns" },
            "bitrate": {
                "mass": { "value": 6.67e24, "unit": "kg" },
                "radius": { "value": 3e4, "unit": "km" },
                "separation": { "value": 6e6, "unit": "m" }
            },
            "estimate": { "synthetic": { "count": 50 }, "model": { "coefficient": 2.5 } },
            "minimax": { "template": "symmetric_ring", "m_max": 4 }
        });
        let s = validate_scenario(&doc).unwrap();
        assert_eq!(s.transmissions.len(), 3);
        let again = validate_scenario(&emit_scenario(&s)).unwrap();
        assert_eq!(again, s);
        assert_eq!(emit_scenario(&again), emit_scenario(&s));
    }

    #[test]
    fn errors_are_aggregated() {
        let doc = json!({
            "schema_version": 7,
            "machines": [
                { "id": "A", "position": { "value": [0, 0], "unit": "m" } },
                { "id": "B", "position": { "value": [1, 0, 0], "unit": "parsec" } }
            ],
            "channels": [{ "a": "A", "b": "C" }],
            "bogus": true
        });
        let issues = validate_scenario(&doc).unwrap_err();
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        for f in [
            "schema_version",
            "machines[0].position.value",
            "machines[1].position.unit",
            "channels[0].b",
            "bogus",
        ] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn channels_without_anchor_are_rejected() {
        let mut doc = minimal();
        doc["anchors"] = json!([]);
        doc["channels"] = json!([{ "a": "A", "b": "B" }]);
        let issues = validate_scenario(&doc).unwrap_err();
        assert!(issues
            .iter()
            .any(|i| i.field == "anchors" && i.message.contains("anchored proper period")));
    }

    #[test]
    fn validity_guard_is_named() {
        let mut doc = minimal();
        doc["metric"] = json!({ "kind": "fermi_normal", "mu": { "value": 1e-3, "unit": "1/m^2" } });
        let issues = validate_scenario(&doc).unwrap_err();
        assert!(issues
            .iter()
            .any(|i| i.field == "machines[1].position" && i.message.contains("validity guard")));
    }

    #[test]
    fn unknown_sweep_parameter() {
        let mut s = validate_scenario(&minimal()).unwrap();
        assert!(s.set_param("colour", 1.0).is_err());
        s.set_param("n", 6.4).unwrap();
        assert_eq!(s.params.n, 6);
    }
}
