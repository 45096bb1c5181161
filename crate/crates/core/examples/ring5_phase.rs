//! The A-A arrival phase of the five-machine ring against the closed form.

use logsync::arrange::{solve_ring5, RingConfig};
use logsync::spacetime::PhysicalConstants;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = PhysicalConstants::geometric();
    println!(
        "{:>3} {:>10} {:>13} {:>13} {:>8}",
        "N", "mu l^2", "measured", "closed form", "ratio"
    );
    for n in [4, 16] {
        for mu_l2 in [1e-5, 1e-4] {
            let mu = mu_l2 / (n as f64).powi(2);
            let cfg = RingConfig::new(n, 1.0, mu, k)?;
            let sol = solve_ring5(&cfg)?;
            println!(
                "{n:>3} {mu_l2:>10.1e} {:>13.6e} {:>13.6e} {:>8.4}",
                sol.phase,
                cfg.predicted_phase(),
                sol.phase / cfg.predicted_phase()
            );
        }
    }
    Ok(())
}
