//! One lacing with three interleaved signal paths, exported as a DOT graph.

use logsync::arrange::construct_lacing;
use logsync::channel::export_occurrence_graph;
use logsync::machine::{simulate_signals, Transmission};
use logsync::spacetime::{PhysicalConstants, Worldline};
use logsync::{Metric, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let metric = Metric::flat(PhysicalConstants::geometric());
    let (a, b) = construct_lacing(
        &metric,
        &Worldline::at(Vec3::zeros()),
        &Worldline::at(Vec3::new(1.5, 0.0, 0.0)),
        0.0,
        3,
        3,
    )?;
    let sched: Vec<_> = (0..3).map(|k| Transmission::new("A", k as f64, "B").echoed()).collect();
    let log = simulate_signals(&[a, b], &metric, &sched)?;
    print!("{}", export_occurrence_graph(&log).to_dot());
    Ok(())
}
