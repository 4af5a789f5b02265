//! Trains MLP towers of increasing depth (reduced preset: depths {8, 16, 24},
//! width 128) for relu, swish and eswish:1.5 and prints the per-cell median
//! test accuracy. Uses MNIST from ESWISH_DATA_DIR when set, otherwise the
//! built-in synthetic dataset.
//!
//!     cargo run --release --example depth_sweep

use std::path::PathBuf;

use eswish::data::{load_mnist, synthetic_dataset};
use eswish::experiments::{run_depth_experiment, DepthExperimentConfig};
use eswish::ActivationSpec;

fn main() -> eswish::Result<()> {
    let data = match std::env::var_os("ESWISH_DATA_DIR") {
        Some(dir) => load_mnist(&PathBuf::from(dir))?.truncate(0.2),
        None => {
            println!("ESWISH_DATA_DIR not set; using the synthetic dataset");
            synthetic_dataset(2024, 300, 10, 32)
        }
    };

    let acts = vec![
        ActivationSpec::relu(),
        ActivationSpec::swish(),
        ActivationSpec::eswish(1.5)?,
    ];
    let cfg = DepthExperimentConfig::desk(acts, vec![1, 2, 3]);

    let out = PathBuf::from("depth_out");
    let cells = run_depth_experiment(&cfg, &data, Some(&out))?;
    println!("{:<6} {:<12} {:>16} {:>9}", "depth", "activation", "median_test_acc", "diverged");
    for c in &cells {
        println!(
            "{:<6} {:<12} {:>16.4} {:>9}",
            c.depth,
            c.activation.to_string(),
            c.median_test_acc,
            c.diverged_count
        );
    }
    println!("per-run metrics and depth_summary.csv written under {}", out.display());
    Ok(())
}
