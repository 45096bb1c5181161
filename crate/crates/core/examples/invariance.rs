//! Sliding a three-fold lacing: a constructed pair of clock adjustments keeps
//! both channels, a lone shift of A does not.

use logsync::adjustment::{construct_invariant_partner, is_invariant_pair, AdjustmentPair, ClockAdjustment, LacedPair};
use logsync::spacetime::PhysicalConstants;
use logsync::Metric;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scen = LacedPair::uniform_flat(Metric::flat(PhysicalConstants::geometric()), 1.5, 3, 4)?;
    let pair = construct_invariant_partner(&scen, &[-0.2, 0.4, 2.6])?;
    println!("constructed pair invariant: {}", is_invariant_pair(&pair, &scen)?);
    for z in [0.0, 0.5, 1.0, 2.0, 3.0] {
        println!(
            "  f_A({z}) = {:.4}   f_B({z}) = {:.4}",
            pair.f_a.apply(z),
            pair.f_b.apply(z)
        );
    }
    let lone = AdjustmentPair {
        f_a: ClockAdjustment::shift(0.3)?,
        f_b: ClockAdjustment::identity(),
    };
    println!("shift of A alone invariant: {}", is_invariant_pair(&lone, &scen)?);
    Ok(())
}
