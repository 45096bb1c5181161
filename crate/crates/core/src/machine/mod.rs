//! Open machines: clocks bound to worldlines, transmission scheduling and
//! reception logging.
//!
//! A machine's clock value is `f(ζ(τ(t)))`: coordinate time `t` maps to proper
//! time `τ` along the worldline, the [`RateSchedule`] integrates frequency in
//! proper time, and an optional [`ClockAdjustment`] reparametrizes the result.

mod rate;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjustment::ClockAdjustment;
use crate::spacetime::{Metric, SpacetimeError, Vec3, Worldline};

pub use rate::{RatePiece, RateSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error("invalid rate schedule: {0}")]
    InvalidSchedule(String),
    #[error("coordinate time {t} outside the window [{lo}, {hi}] of machine {id}")]
    OutsideWindow { id: MachineId, t: f64, lo: f64, hi: f64 },
    #[error("clock reading {0} is out of range")]
    ReadingOutOfRange(f64),
    #[error("unknown machine {0}")]
    UnknownMachine(MachineId),
    #[error("signal {from} -> {to}: {source}")]
    Propagation {
        from: MachineId,
        to: MachineId,
        #[source]
        source: SpacetimeError,
    },
    #[error("order preservation violated on {from} -> {to}")]
    OrderViolation { from: MachineId, to: MachineId },
    #[error(transparent)]
    Spacetime(#[from] SpacetimeError),
    #[error("export failed: {0}")]
    Export(String),
}

pub type Result<T> = std::result::Result<T, MachineError>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineId(pub String);

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MachineId {
    fn from(s: &str) -> Self {
        MachineId(s.to_owned())
    }
}

impl From<String> for MachineId {
    fn from(s: String) -> Self {
        MachineId(s)
    }
}

/// A clock reading `m.φ`: cycle count plus in-cycle phase in `(-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockReading {
    pub m: i64,
    pub phi: f64,
}

impl ClockReading {
    /// Splits a clock value; a value exactly half-way maps to `(m, +1/2)`.
    pub fn from_value(value: f64) -> Self {
        let m = (value - 0.5).ceil();
        ClockReading {
            m: m as i64,
            phi: value - m,
        }
    }

    pub fn integer(m: i64) -> Self {
        ClockReading { m, phi: 0.0 }
    }

    pub fn value(&self) -> f64 {
        self.m as f64 + self.phi
    }
}

impl fmt::Display for ClockReading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:+.6}", self.m, self.phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenMachine {
    pub id: MachineId,
    pub worldline: Worldline,
    pub rate: RateSchedule,
    /// Anchored proper period, when this machine fixes the arrangement scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proper_period: Option<f64>,
    /// Simulation window in coordinate time.
    pub window: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<ClockAdjustment>,
}

impl OpenMachine {
    pub fn new(id: impl Into<MachineId>, worldline: Worldline, rate: RateSchedule) -> Self {
        let window = match &worldline {
            Worldline::Static { .. } => (-1e30, 1e30),
            w => w.time_span(),
        };
        OpenMachine {
            id: id.into(),
            worldline,
            rate,
            proper_period: None,
            window,
            adjustment: None,
        }
    }

    /// Static machine whose clock advances one cycle per `period` of
    /// coordinate time and reads 0 at `t = 0`.
    pub fn static_coordinate_period(
        id: impl Into<MachineId>,
        position: Vec3,
        period: f64,
        metric: &Metric,
    ) -> Result<Self> {
        let rate = metric.proper_rate(&position)?;
        let schedule = RateSchedule::uniform(1.0 / (period * rate), 0.0)?;
        Ok(Self::new(id, Worldline::at(position), schedule))
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = (lo, hi);
        self
    }

    pub fn with_proper_period(mut self, p: f64) -> Self {
        self.proper_period = Some(p);
        self
    }

    /// Applies `f` after any adjustment already present.
    pub fn adjusted(mut self, f: &ClockAdjustment) -> Self {
        self.adjustment = Some(match self.adjustment.take() {
            Some(g) => f.compose(&g),
            None => f.clone(),
        });
        self
    }

    pub fn position_at(&self, t: f64) -> Result<Vec3> {
        Ok(self.worldline.position_at(t)?)
    }

    fn check_window(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.window;
        if t < lo || t > hi || t.is_nan() {
            return Err(MachineError::OutsideWindow {
                id: self.id.clone(),
                t,
                lo,
                hi,
            });
        }
        Ok(())
    }

    /// Clock value `f(ζ(t))` in cycles.
    pub fn value_at(&self, t: f64, metric: &Metric) -> Result<f64> {
        self.check_window(t)?;
        let tau = self.worldline.proper_time(t, metric)?;
        let raw = self.rate.value_at(tau);
        Ok(match &self.adjustment {
            Some(f) => f.apply(raw),
            None => raw,
        })
    }

    pub fn reading_at(&self, t: f64, metric: &Metric) -> Result<ClockReading> {
        self.value_at(t, metric).map(ClockReading::from_value)
    }

    /// Coordinate time at which the clock shows `value`.
    pub fn time_of_value(&self, value: f64, metric: &Metric) -> Result<f64> {
        let raw = match &self.adjustment {
            Some(f) => f.apply_inverse(value),
            None => value,
        };
        let tau = self.rate.tau_of(raw)?;
        let t = self
            .worldline
            .time_at_proper(tau, metric)
            .map_err(|_| MachineError::ReadingOutOfRange(value))?;
        self.check_window(t)
            .map_err(|_| MachineError::ReadingOutOfRange(value))?;
        Ok(t)
    }

    pub fn coordinate_time_of(&self, r: &ClockReading, metric: &Metric) -> Result<f64> {
        self.time_of_value(r.value(), metric)
    }

    /// Clock cycles per unit coordinate time at `t`.
    pub fn coordinate_frequency(&self, t: f64, metric: &Metric) -> Result<f64> {
        let h = 1e-6 * (1.0 + t.abs());
        Ok((self.value_at(t + h, metric)? - self.value_at(t - h, metric)?) / (2.0 * h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Receive,
    Transmit,
}

/// One node of a machine's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub machine: MachineId,
    pub reading: ClockReading,
    pub kind: EventKind,
    pub counterpart: MachineId,
    /// Coordinate time [s].
    pub time: f64,
    /// Identifier shared by a transmission and its reception.
    pub signal: u64,
    /// For an echo transmission, the signal whose reception triggered it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<u64>,
}

/// A scheduled transmission: `from` sends to `to` when its clock shows
/// `reading`. With `echo`, the receiver re-emits immediately on reception.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub from: MachineId,
    pub reading: f64,
    pub to: MachineId,
    #[serde(default)]
    pub echo: bool,
}

impl Transmission {
    pub fn new(from: impl Into<MachineId>, reading: f64, to: impl Into<MachineId>) -> Self {
        Transmission {
            from: from.into(),
            reading,
            to: to.into(),
            echo: false,
        }
    }

    pub fn echoed(mut self) -> Self {
        self.echo = true;
        self
    }
}

/// Coordinate time at which light emitted at `t_tx` from `from` reaches the
/// receiver's worldline.
pub fn light_arrival(
    metric: &Metric,
    from: &OpenMachine,
    t_tx: f64,
    to: &OpenMachine,
) -> std::result::Result<f64, SpacetimeError> {
    let a = from.worldline.position_at(t_tx)?;
    match &to.worldline {
        Worldline::Static { position } => Ok(t_tx + metric.coordinate_light_delay(&a, position)?),
        path => {
            if !metric.is_flat() {
                return Err(SpacetimeError::Domain(
                    "moving receivers are supported in flat spacetime only".into(),
                ));
            }
            let c = metric.c();
            // g is strictly increasing because the receiver is slower than light
            let g = |t: f64| -> std::result::Result<f64, SpacetimeError> {
                Ok(c * (t - t_tx) - (path.position_at(t)? - a).norm())
            };
            let (_, end) = path.time_span();
            let mut lo = t_tx;
            if g(lo)? >= 0.0 {
                return Err(SpacetimeError::Domain("receiver coincides with emitter".into()));
            }
            let mut step = (path.position_at(t_tx)? - a).norm() / c;
            let mut hi = (t_tx + step).min(end);
            while g(hi)? < 0.0 {
                if hi >= end {
                    return Err(SpacetimeError::Domain(format!(
                        "signal emitted at t = {t_tx} arrives after the receiver path ends"
                    )));
                }
                lo = hi;
                step *= 2.0;
                hi = (hi + step).min(end);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

struct SimState<'m> {
    metric: &'m Metric,
    log: Vec<EventRecord>,
    next_signal: u64,
    /// (from, to) -> [(t_tx, t_rx)] for the order-preservation check
    links: BTreeMap<(MachineId, MachineId), Vec<(f64, f64)>>,
}

impl SimState<'_> {
    fn send(
        &mut self,
        sender: &OpenMachine,
        receiver: &OpenMachine,
        t_tx: f64,
        tx_reading: ClockReading,
        reply_to: Option<u64>,
    ) -> Result<(u64, f64, ClockReading)> {
        let metric = self.metric;
        let signal = self.next_signal;
        self.next_signal += 1;
        let t_rx = light_arrival(metric, sender, t_tx, receiver).map_err(|e| MachineError::Propagation {
            from: sender.id.clone(),
            to: receiver.id.clone(),
            source: e,
        })?;
        self.log.push(EventRecord {
            machine: sender.id.clone(),
            reading: tx_reading,
            kind: EventKind::Transmit,
            counterpart: receiver.id.clone(),
            time: t_tx,
            signal,
            reply_to,
        });
        let rx_reading = receiver.reading_at(t_rx, metric)?;
        self.log.push(EventRecord {
            machine: receiver.id.clone(),
            reading: rx_reading,
            kind: EventKind::Receive,
            counterpart: sender.id.clone(),
            time: t_rx,
            signal,
            reply_to: None,
        });
        self.links
            .entry((sender.id.clone(), receiver.id.clone()))
            .or_default()
            .push((t_tx, t_rx));
        Ok((signal, t_rx, rx_reading))
    }
}

/// Propagates every scheduled transmission and returns the log ordered by
/// coordinate time (receptions before transmissions at equal times).
pub fn simulate_signals(
    machines: &[OpenMachine],
    metric: &Metric,
    schedule: &[Transmission],
) -> Result<Vec<EventRecord>> {
    let index: BTreeMap<&MachineId, &OpenMachine> = machines.iter().map(|m| (&m.id, m)).collect();
    let find = |id: &MachineId| -> Result<&OpenMachine> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| MachineError::UnknownMachine(id.clone()))
    };
    let mut state = SimState {
        metric,
        log: Vec::with_capacity(schedule.len() * 2),
        next_signal: 0,
        links: BTreeMap::new(),
    };
    for tx in schedule {
        let sender = find(&tx.from)?;
        let receiver = find(&tx.to)?;
        let t_tx = sender.time_of_value(tx.reading, metric)?;
        // the transmission happens at the scheduled reading by definition
        let reading = ClockReading::from_value(tx.reading);
        let (signal, t_rx, rx_reading) = state.send(sender, receiver, t_tx, reading, None)?;
        if tx.echo {
            state.send(receiver, sender, t_rx, rx_reading, Some(signal))?;
        }
    }
    let SimState { mut log, links, .. } = state;

    for ((from, to), mut pairs) in links {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[1].0 > w[0].0 && w[1].1 <= w[0].1) {
            return Err(MachineError::OrderViolation { from, to });
        }
    }

    log.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then_with(|| a.machine.cmp(&b.machine))
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| a.signal.cmp(&b.signal))
    });
    Ok(log)
}

/// The records of one machine in log order.
pub fn machine_log<'a>(log: &'a [EventRecord], id: &MachineId) -> Vec<&'a EventRecord> {
    log.iter().filter(|r| &r.machine == id).collect()
}

/// What a machine's logic can see: for each event, its kind, counterpart and
/// cycle count. Phases and coordinate times are deliberately absent.
pub fn logical_trace(log: &[EventRecord], id: &MachineId) -> Vec<(EventKind, MachineId, i64)> {
    let mut events: Vec<&EventRecord> = machine_log(log, id);
    events.sort_by(|a, b| {
        a.reading
            .value()
            .total_cmp(&b.reading.value())
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| a.counterpart.cmp(&b.counterpart))
    });
    events
        .into_iter()
        .map(|r| (r.kind, r.counterpart.clone(), r.reading.m))
        .collect()
}

pub fn write_jsonl<W: Write>(log: &[EventRecord], mut w: W) -> Result<()> {
    for r in log {
        let line = serde_json::to_string(r).map_err(|e| MachineError::Export(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| MachineError::Export(e.to_string()))?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<EventRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| MachineError::Export(e.to_string())))
        .collect()
}

#[derive(Serialize)]
struct EventRow<'a> {
    machine: &'a str,
    m: i64,
    phi: f64,
    kind: EventKind,
    counterpart: &'a str,
    time: f64,
    signal: u64,
    reply_to: Option<u64>,
}

pub fn write_csv<W: Write>(log: &[EventRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in log {
        out.serialize(EventRow {
            machine: &r.machine.0,
            m: r.reading.m,
            phi: r.reading.phi,
            kind: r.kind,
            counterpart: &r.counterpart.0,
            time: r.time,
            signal: r.signal,
            reply_to: r.reply_to,
        })
        .map_err(|e| MachineError::Export(e.to_string()))?;
    }
    out.flush().map_err(|e| MachineError::Export(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::PhysicalConstants;

    fn unit_clock(id: &str, x: f64) -> OpenMachine {
        OpenMachine::new(
            id,
            Worldline::at(Vec3::new(x, 0.0, 0.0)),
            RateSchedule::uniform(1.0, 0.0).unwrap(),
        )
    }

    fn flat() -> Metric {
        Metric::flat(PhysicalConstants::geometric())
    }

    #[test]
    fn reading_convention() {
        let a = unit_clock("A", 0.0);
        let m = flat();
        assert_eq!(a.reading_at(3.0, &m).unwrap(), ClockReading { m: 3, phi: 0.0 });
        let r = a.reading_at(3.6, &m).unwrap();
        assert_eq!(r.m, 4);
        assert!((r.phi + 0.4).abs() < 1e-12);
        assert_eq!(ClockReading::from_value(1.5), ClockReading { m: 1, phi: 0.5 });
        assert_eq!(ClockReading::from_value(-0.5), ClockReading { m: -1, phi: 0.5 });

        let fast = OpenMachine::new(
            "F",
            Worldline::at(Vec3::zeros()),
            RateSchedule::uniform(2.0, 0.0).unwrap(),
        );
        assert_eq!(fast.reading_at(1.5, &m).unwrap(), ClockReading { m: 3, phi: 0.0 });
    }

    #[test]
    fn inverse_readings() {
        let m = flat();
        let a = unit_clock("A", 0.0);
        assert_eq!(a.coordinate_time_of(&ClockReading::integer(5), &m).unwrap(), 5.0);
        assert_eq!(
            a.coordinate_time_of(&ClockReading { m: 4, phi: -0.4 }, &m).unwrap(),
            3.6
        );
        let fast = OpenMachine::new(
            "F",
            Worldline::at(Vec3::zeros()),
            RateSchedule::uniform(2.0, 0.0).unwrap(),
        );
        assert_eq!(fast.coordinate_time_of(&ClockReading::integer(3), &m).unwrap(), 1.5);
    }

    #[test]
    fn window_is_enforced() {
        let m = flat();
        let a = unit_clock("A", 0.0).with_window(0.0, 10.0);
        assert!(matches!(
            a.reading_at(11.0, &m),
            Err(MachineError::OutsideWindow { .. })
        ));
        assert!(a.coordinate_time_of(&ClockReading::integer(12), &m).is_err());
    }

    #[test]
    fn round_trip_in_curved_metric() {
        let m = Metric::fermi_normal(1e-4, PhysicalConstants::geometric()).unwrap();
        let mut a = unit_clock("A", 1.5);
        a.rate = RateSchedule::piecewise_linear(0.3, &[(0.0, 1.0), (4.0, 1.3), (9.0, 0.8)]).unwrap();
        for t in [-2.0, 0.0, 0.37, 4.4, 8.9, 15.0] {
            let r = a.reading_at(t, &m).unwrap();
            assert!((a.coordinate_time_of(&r, &m).unwrap() - t).abs() < 1e-9);
        }
    }

    #[test]
    fn one_and_a_half_periods_single_signal() {
        let m = flat();
        let machines = [unit_clock("A", 0.0), unit_clock("B", 1.5)];
        let log = simulate_signals(&machines, &m, &[Transmission::new("A", 0.0, "B")]).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[1].machine, MachineId::from("B"));
        assert_eq!(log[1].reading, ClockReading { m: 1, phi: 0.5 });
    }

    #[test]
    fn one_and_a_half_periods_echo_returns_at_three() {
        let m = flat();
        let machines = [unit_clock("A", 0.0), unit_clock("B", 1.5)];
        let log = simulate_signals(&machines, &m, &[Transmission::new("A", 0.0, "B").echoed()]).unwrap();
        assert_eq!(log.len(), 4);
        let back = log.last().unwrap();
        assert_eq!(back.machine, MachineId::from("A"));
        assert_eq!(back.reading, ClockReading::integer(3));
        assert_eq!(log[2].reply_to, Some(0));
    }

    #[test]
    fn zero_distance_is_an_error() {
        let m = flat();
        let machines = [unit_clock("A", 0.0), unit_clock("B", 0.0)];
        let err = simulate_signals(&machines, &m, &[Transmission::new("A", 0.0, "B")]).unwrap_err();
        assert!(matches!(err, MachineError::Propagation { .. }));
    }

    #[test]
    fn monotone_logs() {
        let m = flat();
        let machines = [unit_clock("A", 0.0), unit_clock("B", 2.3), unit_clock("C", -0.7)];
        let mut sched = Vec::new();
        for k in 0..6 {
            sched.push(Transmission::new("A", k as f64, "B").echoed());
            sched.push(Transmission::new("C", k as f64 + 0.25, "A"));
        }
        let log = simulate_signals(&machines, &m, &sched).unwrap();
        for id in ["A", "B", "C"] {
            let recs = machine_log(&log, &MachineId::from(id));
            for w in recs.windows(2) {
                assert!(w[1].time >= w[0].time);
                assert!(w[1].reading.value() >= w[0].reading.value());
            }
        }
    }

    #[test]
    fn moving_receiver_in_flat_space() {
        let m = flat();
        let a = unit_clock("A", 0.0);
        let path = Worldline::path(
            vec![-10.0, 10.0],
            vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(4.0, 0.0, 0.0)],
            1.0,
        )
        .unwrap();
        let b = OpenMachine::new("B", path, RateSchedule::uniform(1.0, 0.0).unwrap());
        // x_B(t) = 3 + 0.1 t meets x = t at t = 3 / 0.9
        let t = light_arrival(&m, &a, 0.0, &b).unwrap();
        assert!((t - 3.0 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn jsonl_round_trip() {
        let m = flat();
        let machines = [unit_clock("A", 0.0), unit_clock("B", 1.5)];
        let log = simulate_signals(&machines, &m, &[Transmission::new("A", 0.0, "B").echoed()]).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_jsonl(&text).unwrap(), log);
        let mut csv = Vec::new();
        write_csv(&log, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("machine,m,phi,kind,counterpart,time,signal,reply_to"));
    }
}
