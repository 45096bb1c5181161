//! Two static machines 1.5 light-periods apart: every echo count is 3.

use logsync::channel::{echo_counts, export_occurrence_graph};
use logsync::machine::{simulate_signals, Transmission};
use logsync::spacetime::PhysicalConstants;
use logsync::{Metric, OpenMachine, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let metric = Metric::flat(PhysicalConstants::geometric());
    let a = OpenMachine::static_coordinate_period("A", Vec3::zeros(), 1.0, &metric)?;
    let b = OpenMachine::static_coordinate_period("B", Vec3::new(1.5, 0.0, 0.0), 1.0, &metric)?;
    let schedule: Vec<_> = (0..4).map(|k| Transmission::new("A", k as f64, "B").echoed()).collect();
    let log = simulate_signals(&[a, b], &metric, &schedule)?;
    for r in &log {
        println!(
            "{:>5.2}  {} {:?} {} reading {}",
            r.time, r.machine, r.kind, r.counterpart, r.reading
        );
    }
    let echoes: Vec<f64> = echo_counts(&log, &"A".into(), &"B".into())
        .iter()
        .map(|e| e.value())
        .collect();
    println!("echo counts A-B-A: {echoes:?}");
    print!("{}", export_occurrence_graph(&log).to_dot());
    Ok(())
}
