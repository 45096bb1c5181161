//! Least largest phase as more ring channels are allowed to be non-null.

use logsync::arrange::{minimax_sweep, MinimaxConfig, RingConfig, Template};
use logsync::spacetime::PhysicalConstants;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let ring = RingConfig::new(n, 1.0, 1e-4 / (n * n) as f64, PhysicalConstants::geometric())?;
    let mut cfg = MinimaxConfig::new(ring, Template::SymmetricRing);
    cfg.max_evals = 1000;
    println!("closed-form ring phase {:.4e}", ring.predicted_phase());
    for r in minimax_sweep(&cfg, 10)? {
        println!("m = {:>2}: {:.4e} (others {:.1e})", r.m, r.max_designated, r.max_other);
    }
    Ok(())
}
