#![allow(dead_code)]

use std::collections::HashMap;

use logsync::machine::{simulate_signals, EventKind, EventRecord, MachineId, RateSchedule, Transmission};
use logsync::spacetime::{PhysicalConstants, Worldline};
use logsync::{Metric, OpenMachine, Vec3};
use rand::Rng;

pub fn flat() -> Metric {
    Metric::flat(PhysicalConstants::geometric())
}

/// Piecewise-linear proper-time rate with knots every 5 s between 0.6 and
/// 1.6 Hz.
pub fn random_rate<R: Rng>(rng: &mut R) -> RateSchedule {
    let knots: Vec<(f64, f64)> = (0..12).map(|k| (5.0 * k as f64, rng.random_range(0.6..1.6))).collect();
    RateSchedule::piecewise_linear(0.0, &knots).unwrap()
}

/// Per event of `id`, in log order: kind, counterpart, whether it carries an
/// echo, and the scheduled reading of the transmission that started it.
pub fn logical_sequence(log: &[EventRecord], id: &MachineId) -> Vec<(EventKind, MachineId, bool, f64)> {
    let origin: HashMap<u64, &EventRecord> = log
        .iter()
        .filter(|r| r.kind == EventKind::Transmit)
        .map(|r| (r.signal, r))
        .collect();
    let root = |r: &EventRecord| -> (bool, f64) {
        let tx = origin[&r.signal];
        match tx.reply_to {
            Some(first) => (true, origin[&first].reading.value()),
            None => (false, tx.reading.value()),
        }
    };
    log.iter()
        .filter(|r| &r.machine == id)
        .map(|r| {
            let (echo, reading) = root(r);
            (r.kind, r.counterpart.clone(), echo, reading)
        })
        .collect()
}

fn pair_log(rate_a: RateSchedule, rate_b: RateSchedule) -> Vec<EventRecord> {
    let metric = flat();
    let a = OpenMachine::new("A", Worldline::at(Vec3::zeros()), rate_a);
    let b = OpenMachine::new("B", Worldline::at(Vec3::new(1.0, 0.0, 0.0)), rate_b);
    let mut sched: Vec<Transmission> = (0..6)
        .map(|k| Transmission::new("A", 5.0 * k as f64, "B").echoed())
        .collect();
    sched.extend((0..4).map(|k| Transmission::new("B", 80.0 + 5.0 * k as f64, "A").echoed()));
    simulate_signals(&[a, b], &metric, &sched).unwrap()
}

/// Runs one schedule under two random pairs of rates. Returns whether the
/// logical sequences agree and whether coordinate times moved at all.
pub fn oblivious_trial<R: Rng>(rng: &mut R) -> (bool, bool) {
    let first = pair_log(random_rate(rng), random_rate(rng));
    let second = pair_log(random_rate(rng), random_rate(rng));
    let same = ["A", "B"].iter().all(|id| {
        let id = MachineId::from(*id);
        logical_sequence(&first, &id) == logical_sequence(&second, &id)
    });
    let moved = first.iter().zip(&second).any(|(x, y)| (x.time - y.time).abs() > 1e-6);
    (same, moved)
}
