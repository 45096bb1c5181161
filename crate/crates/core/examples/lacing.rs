//! Builds a partner clock for A with echo count 3 and checks the channels
//! are null, then repeats with A's rate speeding up.

use logsync::arrange::{solve_two_machine, Side};
use logsync::channel::echo_counts;
use logsync::machine::{simulate_signals, EventKind, RateSchedule, Transmission};
use logsync::spacetime::{PhysicalConstants, Worldline};
use logsync::{Metric, OpenMachine, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let metric = Metric::flat(PhysicalConstants::geometric());
    for (label, rate) in [
        ("uniform", RateSchedule::uniform(1.0, 0.0)?),
        (
            "speeding up",
            RateSchedule::piecewise_linear(0.0, &[(0.0, 1.0), (10.0, 1.4)])?,
        ),
    ] {
        let a = OpenMachine::new("A", Worldline::at(Vec3::zeros()), rate);
        let sol = solve_two_machine(&metric, &a, 0..=14, 3, Side::Right)?;
        println!("{label}: partner ticks");
        for (m, t, x) in sol.ticks.iter().take(6) {
            println!("  reading {m:>2} at t = {t:.4}, x = {:.4}", x.x);
        }
        let b = sol.machine("B", &metric)?;
        let sched: Vec<_> = (2..8).map(|k| Transmission::new("A", k as f64, "B").echoed()).collect();
        let log = simulate_signals(&[a, b], &metric, &sched)?;
        let worst = log
            .iter()
            .filter(|r| r.kind == EventKind::Receive)
            .map(|r| r.reading.phi.abs())
            .fold(0.0, f64::max);
        let echoes: Vec<f64> = echo_counts(&log, &"A".into(), &"B".into())
            .iter()
            .map(|e| e.value())
            .collect();
        println!("  echo counts {echoes:?}, largest arrival phase {worst:.1e}");
    }
    Ok(())
}
