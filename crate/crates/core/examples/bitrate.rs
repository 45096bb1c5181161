//! Smallest clock period and largest bit rate for two machines 6000 km apart
//! at 30000 km from an Earth-mass body.

use logsync::arrange::{max_bitrate, min_period};
use logsync::PhysicalConstants;

fn main() {
    let k = PhysicalConstants::SI;
    let gm = k.g * 6.67e24;
    let p = min_period(gm, 6.0e6, 3.0e7, k.c);
    println!("p_tau > {p:.4e} s");
    println!("bit rate < {:.4e} bits/s per bit of character", max_bitrate(1.0, p));
}
