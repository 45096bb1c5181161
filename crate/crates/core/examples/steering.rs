//! Delayed-feedback steering under white and random-walk frequency noise for
//! several round-trip delays.

use logsync::steer::{run_closed_loop, AimingPoint, Controller, DriftModel, LoopScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = LoopScenario {
        aiming: AimingPoint::single(0.0, 0.1)?,
        initial_error: 0.0,
        frequency_offset: 0.0,
        steps: 100_000,
    };
    println!("{:>6} {:>10} {:>10} {:>6}", "delay", "rms delta", "max |phi|", "held");
    for d in [2, 4, 8, 16] {
        let ctl = Controller::new(0.3, 0.01, d)?;
        let run = run_closed_loop(&scenario, &DriftModel::new(0.01, 1e-4, 1)?, &ctl)?;
        let s = &run.summary;
        println!(
            "{d:>6} {:>10.4} {:>10.4} {:>6}",
            s.rms_delta, s.max_abs_phi, s.within_tolerance
        );
    }
    Ok(())
}
