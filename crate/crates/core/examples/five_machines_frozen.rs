//! Adding a fifth machine keeps nine channels free; the tenth freezes them.

use logsync::arrange::{add_fifth, is_frozen, solve_tetrahedron};
use logsync::spacetime::PhysicalConstants;
use logsync::Metric;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let metric = Metric::fermi_normal(1e-4 / 4.0, PhysicalConstants::geometric())?;
    let tetra = solve_tetrahedron(&metric, 1.0, 2)?;
    let five = add_fifth(&metric, &tetra, 2)?;
    let p = five.positions()?;
    let echo = 2.0 * metric.coordinate_light_delay(&p[0], &p[4])? / five.coordinate_period()?;
    let full = five.clone().with_channel("V1", "V5", echo)?;

    for (name, arr) in [
        ("tetrahedron", &tetra),
        ("five, nine channels", &five),
        ("five, complete", &full),
    ] {
        let r = is_frozen(arr)?;
        println!(
            "{name:<20} channels {:>2} rank {:>2} frozen {:<5} witness {:?}",
            r.channels, r.rank, r.frozen, r.witness
        );
    }
    Ok(())
}
