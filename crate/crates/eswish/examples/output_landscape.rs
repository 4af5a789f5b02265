//! Renders the output landscape of a randomly initialized 6-layer network
//! over a 2-D input grid and reports the RMS slope per activation. The
//! slope grows with β, a proxy for how sharp the trained loss surface gets.
//!
//!     cargo run --release --example output_landscape

use eswish::experiments::{generate_landscape, landscape_csv, landscape_slope, LandscapeConfig};
use eswish::ActivationSpec;

fn main() -> eswish::Result<()> {
    let mut acts = vec![ActivationSpec::relu()];
    for beta in [1.0, 1.25, 1.5, 1.75, 2.0] {
        acts.push(ActivationSpec::eswish(beta)?);
    }

    for act in acts {
        let mut cfg = LandscapeConfig::new(act, 7);
        cfg.resolution = 128;
        let grid = generate_landscape(&cfg)?;
        let slope = landscape_slope(&grid, cfg.spacing())?;
        println!("{act:<12} rms_slope {slope:.6}");

        if act == ActivationSpec::eswish(2.0)? {
            std::fs::write("landscape_eswish2.csv", landscape_csv(&grid, cfg.lo, cfg.spacing()))?;
            println!("grid for eswish:2.0 written to landscape_eswish2.csv");
        }
    }
    Ok(())
}
