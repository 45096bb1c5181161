//! Channels as sets of reading pairs, echo counts, repeating structure and
//! the logical-synchronization phase test.

mod graph;

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{ClockReading, EventKind, EventRecord, MachineId};

pub use graph::{export_occurrence_graph, EdgeKind, OccurrenceGraph};

/// Default phase residual accepted by [`detect_repeating`], in cycles.
pub const DEFAULT_REPEAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("channel pairs {0} and {1} are not strictly increasing")]
    OrderViolation(usize, usize),
    #[error("phase tolerance must lie in (0, 1), got {0}")]
    Tolerance(f64),
    #[error("echo count must be positive, got {0}")]
    EchoCount(f64),
    #[error("invalid repeating descriptor: {0}")]
    Descriptor(String),
    #[error("channel csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTolerance {
    eta: f64,
}

impl PhaseTolerance {
    pub fn new(eta: f64) -> Result<Self> {
        if eta > 0.0 && eta < 1.0 {
            Ok(PhaseTolerance { eta })
        } else {
            Err(ChannelError::Tolerance(eta))
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Largest admissible `|φ|`, exclusive.
    pub fn bound(&self) -> f64 {
        0.5 * (1.0 - self.eta)
    }
}

/// Where arrivals must land relative to the cycle boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseWindow {
    /// Reception in the same phase window as transmission.
    #[default]
    Coincident,
    /// Reception half a cycle away from transmission.
    HalfCycle,
}

impl PhaseWindow {
    /// Arrival phase measured from the centre of the writing window.
    pub fn relative_phase(&self, phi: f64) -> f64 {
        match self {
            PhaseWindow::Coincident => phi,
            PhaseWindow::HalfCycle => ClockReading::from_value(phi - 0.5).phi,
        }
    }
}

/// `|φ| < (1 − η)/2`.
pub fn phase_ok(phi: f64, tol: PhaseTolerance) -> bool {
    phi.abs() < tol.bound()
}

pub fn phase_ok_in(phi: f64, tol: PhaseTolerance, window: PhaseWindow) -> bool {
    phase_ok(window.relative_phase(phi), tol)
}

/// Transmit/receive reading pairs for one direction, in transmission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub from: MachineId,
    pub to: MachineId,
    pairs: Vec<(ClockReading, ClockReading)>,
}

impl Channel {
    pub fn new(
        from: impl Into<MachineId>,
        to: impl Into<MachineId>,
        pairs: Vec<(ClockReading, ClockReading)>,
    ) -> Result<Self> {
        for (i, w) in pairs.windows(2).enumerate() {
            if !(w[1].0.value() > w[0].0.value() && w[1].1.value() > w[0].1.value()) {
                return Err(ChannelError::OrderViolation(i, i + 1));
            }
        }
        Ok(Channel {
            from: from.into(),
            to: to.into(),
            pairs,
        })
    }

    pub fn pairs(&self) -> &[(ClockReading, ClockReading)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Arrival phases at the receiver.
    pub fn arrival_phases(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.1.phi)
    }

    /// Every arrival phase passes [`phase_ok_in`].
    pub fn is_synchronized(&self, tol: PhaseTolerance, window: PhaseWindow) -> bool {
        self.arrival_phases().all(|phi| phase_ok_in(phi, tol, window))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| ChannelError::Csv(e.to_string());
        out.write_record(["m_a", "phi_a", "m_b", "phi_b"]).map_err(err)?;
        for (a, b) in &self.pairs {
            out.write_record([a.m.to_string(), a.phi.to_string(), b.m.to_string(), b.phi.to_string()])
                .map_err(err)?;
        }
        out.flush().map_err(|e| ChannelError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(from: impl Into<MachineId>, to: impl Into<MachineId>, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut pairs = Vec::new();
        for row in rdr.deserialize::<(i64, f64, i64, f64)>() {
            let (ma, pa, mb, pb) = row.map_err(|e| ChannelError::Csv(e.to_string()))?;
            pairs.push((ClockReading { m: ma, phi: pa }, ClockReading { m: mb, phi: pb }));
        }
        Channel::new(from, to, pairs)
    }
}

/// All `a → b` signals in the log, ordered by transmission reading.
pub fn channel_from_log(log: &[EventRecord], a: &MachineId, b: &MachineId) -> Channel {
    let receptions: HashMap<u64, ClockReading> = log
        .iter()
        .filter(|r| r.kind == EventKind::Receive && &r.machine == b && &r.counterpart == a)
        .map(|r| (r.signal, r.reading))
        .collect();
    let mut pairs: Vec<(ClockReading, ClockReading)> = log
        .iter()
        .filter(|r| r.kind == EventKind::Transmit && &r.machine == a && &r.counterpart == b)
        .filter_map(|r| receptions.get(&r.signal).map(|rx| (r.reading, *rx)))
        .collect();
    pairs.sort_by(|x, y| x.0.value().total_cmp(&y.0.value()));
    Channel {
        from: a.clone(),
        to: b.clone(),
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EllRange {
    Bounded { lo: i64, hi: i64 },
    Unbounded,
}

/// Pairs `(m0 + ℓj, n0 + ℓk)` for `ℓ` in `ell_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatingDescriptor {
    pub m0: ClockReading,
    pub n0: ClockReading,
    pub j: i64,
    pub k: i64,
    pub ell_range: EllRange,
}

impl RepeatingDescriptor {
    pub fn new(m0: ClockReading, n0: ClockReading, j: i64, k: i64, ell_range: EllRange) -> Result<Self> {
        if j <= 0 || k <= 0 {
            return Err(ChannelError::Descriptor(format!(
                "increments must be positive, got j={j}, k={k}"
            )));
        }
        if let EllRange::Bounded { lo, hi } = ell_range {
            if lo > hi {
                return Err(ChannelError::Descriptor(format!("empty range [{lo}, {hi}]")));
            }
        }
        Ok(RepeatingDescriptor {
            m0,
            n0,
            j,
            k,
            ell_range,
        })
    }

    pub fn pair(&self, ell: i64) -> (ClockReading, ClockReading) {
        (
            ClockReading::from_value(self.m0.value() + (ell * self.j) as f64),
            ClockReading::from_value(self.n0.value() + (ell * self.k) as f64),
        )
    }

    /// The finite channel described; `None` for an unbounded range.
    pub fn generate(&self, from: impl Into<MachineId>, to: impl Into<MachineId>) -> Option<Channel> {
        match self.ell_range {
            EllRange::Unbounded => None,
            EllRange::Bounded { lo, hi } => Some(Channel {
                from: from.into(),
                to: to.into(),
                pairs: (lo..=hi).map(|l| self.pair(l)).collect(),
            }),
        }
    }
}

/// Fits an arithmetic progression with integer increments to the channel.
///
/// Gaps between consecutive readings are rounded to integers and must agree;
/// every reading must then sit within `tol_cycles` of the progression
/// through the first pair.
pub fn detect_repeating(ch: &Channel, tol_cycles: f64) -> Option<RepeatingDescriptor> {
    let pairs = ch.pairs();
    if pairs.len() < 3 {
        return None;
    }
    let gap = |i: usize, side: fn(&(ClockReading, ClockReading)) -> f64| {
        (side(&pairs[i + 1]) - side(&pairs[i])).round() as i64
    };
    let first_a = |p: &(ClockReading, ClockReading)| p.0.value();
    let first_b = |p: &(ClockReading, ClockReading)| p.1.value();
    let j = gap(0, first_a);
    let k = gap(0, first_b);
    if j <= 0 || k <= 0 {
        return None;
    }
    if (1..pairs.len() - 1).any(|i| gap(i, first_a) != j || gap(i, first_b) != k) {
        return None;
    }
    let (m0, n0) = pairs[0];
    let fits = pairs.iter().enumerate().all(|(l, (a, b))| {
        let l = l as f64;
        (a.value() - m0.value() - l * j as f64).abs() <= tol_cycles
            && (b.value() - n0.value() - l * k as f64).abs() <= tol_cycles
    });
    fits.then_some(RepeatingDescriptor {
        m0,
        n0,
        j,
        k,
        ell_range: EllRange::Bounded {
            lo: 0,
            hi: pairs.len() as i64 - 1,
        },
    })
}

/// Cycles of the first clock elapsed over a round trip with immediate echo.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EchoCount(f64);

impl EchoCount {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(EchoCount(value))
        } else {
            Err(ChannelError::EchoCount(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Every complete `a → b → a` echo in the log, in transmission order.
pub fn echo_counts(log: &[EventRecord], a: &MachineId, b: &MachineId) -> Vec<EchoCount> {
    let mut echoes: HashMap<u64, u64> = HashMap::new();
    let mut received_at_a: HashMap<u64, ClockReading> = HashMap::new();
    for r in log {
        match r.kind {
            EventKind::Transmit if &r.machine == b && &r.counterpart == a => {
                if let Some(orig) = r.reply_to {
                    echoes.insert(orig, r.signal);
                }
            }
            EventKind::Receive if &r.machine == a && &r.counterpart == b => {
                received_at_a.insert(r.signal, r.reading);
            }
            _ => {}
        }
    }
    let mut out: Vec<(f64, EchoCount)> = log
        .iter()
        .filter(|r| r.kind == EventKind::Transmit && &r.machine == a && &r.counterpart == b)
        .filter_map(|tx| {
            let back = echoes.get(&tx.signal)?;
            let rx = received_at_a.get(back)?;
            let count = EchoCount::new(rx.value() - tx.reading.value()).ok()?;
            Some((tx.reading.value(), count))
        })
        .collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out.into_iter().map(|(_, c)| c).collect()
}

/// The first complete `a → b → a` echo, if any.
pub fn echo_count(log: &[EventRecord], a: &MachineId, b: &MachineId) -> Option<EchoCount> {
    echo_counts(log, a, b).into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{simulate_signals, OpenMachine, RateSchedule, Transmission};
    use crate::spacetime::{Metric, PhysicalConstants, Vec3, Worldline};
    use proptest::prelude::*;

    fn r(v: f64) -> ClockReading {
        ClockReading::from_value(v)
    }

    fn clock(id: &str, x: f64, freq: f64) -> OpenMachine {
        OpenMachine::new(
            id,
            Worldline::at(Vec3::new(x, 0.0, 0.0)),
            RateSchedule::uniform(freq, 0.0).unwrap(),
        )
    }

    fn flat() -> Metric {
        Metric::flat(PhysicalConstants::geometric())
    }

    #[test]
    fn phase_ok_examples() {
        assert!(phase_ok(0.0, PhaseTolerance::new(0.1).unwrap()));
        assert!(!phase_ok(0.45, PhaseTolerance::new(0.1).unwrap()));
        assert!(phase_ok(-0.3, PhaseTolerance::new(0.2).unwrap()));
        assert!(PhaseTolerance::new(0.0).is_err());
        assert!(PhaseTolerance::new(1.0).is_err());
        let tol = PhaseTolerance::new(0.2).unwrap();
        assert!(phase_ok_in(0.5, tol, PhaseWindow::HalfCycle));
        assert!(!phase_ok_in(0.0, tol, PhaseWindow::HalfCycle));
    }

    proptest! {
        #[test]
        fn phase_ok_monotone_in_eta(phi in -0.5f64..0.5, e1 in 0.001f64..0.999, e2 in 0.001f64..0.999) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            if phase_ok(phi, PhaseTolerance::new(hi).unwrap()) {
                prop_assert!(phase_ok(phi, PhaseTolerance::new(lo).unwrap()));
            }
        }

        #[test]
        fn detect_inverts_generate(
            m0 in -50i64..50, pm in -0.45f64..0.45,
            n0 in -50i64..50, pn in -0.45f64..0.45,
            j in 1i64..7, k in 1i64..7, len in 3i64..20,
        ) {
            let d = RepeatingDescriptor::new(
                ClockReading { m: m0, phi: pm },
                ClockReading { m: n0, phi: pn },
                j, k,
                EllRange::Bounded { lo: 0, hi: len - 1 },
            ).unwrap();
            let ch = d.generate("A", "B").unwrap();
            let got = detect_repeating(&ch, DEFAULT_REPEAT_TOLERANCE).unwrap();
            prop_assert_eq!(got.j, j);
            prop_assert_eq!(got.k, k);
            prop_assert_eq!(got.ell_range, d.ell_range);
            prop_assert!((got.m0.value() - d.m0.value()).abs() < 1e-9);
            prop_assert!((got.n0.value() - d.n0.value()).abs() < 1e-9);
        }
    }

    #[test]
    fn channel_from_empty_log() {
        assert!(channel_from_log(&[], &"A".into(), &"B".into()).is_empty());
    }

    #[test]
    fn one_and_a_half_periods_channel_has_constant_gap() {
        let machines = [clock("A", 0.0, 1.0), clock("B", 1.5, 1.0)];
        let sched: Vec<_> = (0..6).map(|k| Transmission::new("A", k as f64, "B")).collect();
        let log = simulate_signals(&machines, &flat(), &sched).unwrap();
        let ch = channel_from_log(&log, &"A".into(), &"B".into());
        assert_eq!(ch.len(), 6);
        for (a, b) in ch.pairs() {
            assert!((b.value() - a.value() - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn only_requested_direction_is_extracted() {
        let machines = [clock("A", 0.0, 1.0), clock("B", 2.0, 1.0), clock("C", -1.0, 1.0)];
        let sched = vec![
            Transmission::new("A", 0.0, "B"),
            Transmission::new("C", 0.5, "A"),
            Transmission::new("A", 1.0, "C"),
            Transmission::new("B", 1.2, "A"),
            Transmission::new("A", 2.0, "B"),
        ];
        let log = simulate_signals(&machines, &flat(), &sched).unwrap();
        let ch = channel_from_log(&log, &"A".into(), &"B".into());
        let tx: Vec<f64> = ch.pairs().iter().map(|p| p.0.value()).collect();
        assert_eq!(tx, vec![0.0, 2.0]);
    }

    #[test]
    fn detect_examples() {
        let ch = Channel::new("A", "B", (0..10).map(|k| (r(k as f64), r(k as f64 + 4.0))).collect()).unwrap();
        let d = detect_repeating(&ch, DEFAULT_REPEAT_TOLERANCE).unwrap();
        assert_eq!((d.j, d.k, d.n0.m - d.m0.m), (1, 1, 4));

        let ch = Channel::new("A", "B", vec![(r(0.0), r(1.0)), (r(1.0), r(3.0)), (r(2.0), r(5.0))]).unwrap();
        let d = detect_repeating(&ch, DEFAULT_REPEAT_TOLERANCE).unwrap();
        assert_eq!((d.j, d.k), (1, 2));

        let tol = 1e-6;
        let jittered = Channel::new(
            "A",
            "B",
            (0..6)
                .map(|k| {
                    let jitter = if k % 2 == 0 { 2.0 * tol } else { 0.0 };
                    (r(k as f64), r(k as f64 + 2.0 + jitter))
                })
                .collect(),
        )
        .unwrap();
        assert!(detect_repeating(&jittered, tol).is_none());

        let short = Channel::new("A", "B", vec![(r(0.0), r(1.0)), (r(1.0), r(2.0))]).unwrap();
        assert!(detect_repeating(&short, tol).is_none());
    }

    #[test]
    fn channel_rejects_disorder() {
        assert!(Channel::new("A", "B", vec![(r(1.0), r(2.0)), (r(0.0), r(3.0))]).is_err());
    }

    #[test]
    fn channel_csv_round_trip() {
        let ch = Channel::new("A", "B", vec![(r(0.0), r(1.25)), (r(1.0), r(2.4))]).unwrap();
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("m_a,phi_a,m_b,phi_b\n"));
        assert_eq!(Channel::read_csv("A", "B", buf.as_slice()).unwrap(), ch);
    }

    #[test]
    fn echo_count_examples() {
        let m = flat();
        let a = MachineId::from("A");
        let b = MachineId::from("B");
        let machines = [clock("A", 0.0, 1.0), clock("B", 1.5, 1.0)];
        let log = simulate_signals(&machines, &m, &[Transmission::new("A", 0.0, "B").echoed()]).unwrap();
        assert_eq!(echo_count(&log, &a, &b).unwrap().value(), 3.0);
        assert!(echo_count(&log, &b, &a).is_none());

        // radar distance N p c with unit proper period
        let n = 5.0;
        let machines = [clock("A", 0.0, 1.0), clock("B", n, 1.0)];
        let log = simulate_signals(&machines, &m, &[Transmission::new("A", 2.0, "B").echoed()]).unwrap();
        assert_eq!(echo_count(&log, &a, &b).unwrap().value(), 2.0 * n);

        let machines = [clock("A", 0.0, 2.0), clock("B", 1.5, 1.0)];
        let log = simulate_signals(&machines, &m, &[Transmission::new("A", 0.0, "B").echoed()]).unwrap();
        assert_eq!(echo_count(&log, &a, &b).unwrap().value(), 6.0);

        let plain = simulate_signals(&machines, &m, &[Transmission::new("A", 0.0, "B")]).unwrap();
        assert!(echo_count(&plain, &a, &b).is_none());
    }

    #[test]
    fn echo_asymmetry() {
        let m = flat();
        let (a, b) = (MachineId::from("A"), MachineId::from("B"));
        let sched = [
            Transmission::new("A", 0.0, "B").echoed(),
            Transmission::new("B", 10.0, "A").echoed(),
        ];
        let counts = |b_freq: f64| {
            let machines = [clock("A", 0.0, 1.0), clock("B", 1.5, b_freq)];
            let log = simulate_signals(&machines, &m, &sched).unwrap();
            (
                echo_count(&log, &a, &b).unwrap().value(),
                echo_count(&log, &b, &a).unwrap().value(),
            )
        };
        let (aba, bab) = counts(1.0);
        let (aba2, bab2) = counts(2.7);
        assert!((aba2 - aba).abs() < 1e-12);
        assert!((bab2 - 2.7 * bab).abs() < 1e-9);
    }
}
