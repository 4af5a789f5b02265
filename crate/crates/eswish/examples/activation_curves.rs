//! Prints sample points of f(x) = βx·σ(x) and its derivative for the
//! β family {1, 1.25, 1.5, 1.75, 2}, and shows the global minimum per β.
//!
//!     cargo run --release --example activation_curves

use eswish::activations::eswish_min;
use eswish::experiments::emit_activation_curves;

fn main() -> eswish::Result<()> {
    let betas = [1.0, 1.25, 1.5, 1.75, 2.0];

    for &beta in &betas {
        let (x_min, f_min) = eswish_min(beta)?;
        println!("beta {beta}: global minimum f({x_min:.5}) = {f_min:.5}");
    }

    let csv = emit_activation_curves(&betas, -6.0, 6.0, 241)?;
    // First few rows of each curve group.
    for group in csv.lines().take(6) {
        println!("{group}");
    }
    std::fs::write("curves.csv", csv)?;
    println!("full table written to curves.csv");
    Ok(())
}
