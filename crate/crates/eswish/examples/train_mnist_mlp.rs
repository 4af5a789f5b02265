//! Trains the fixed 200-100-60-30-10 MLP (dropout 0.2, SGD lr 0.1, batch 64,
//! 20 epochs) per activation. Uses MNIST from ESWISH_DATA_DIR when set,
//! otherwise the built-in synthetic dataset.
//!
//!     cargo run --release --example train_mnist_mlp

use std::path::PathBuf;

use eswish::data::{load_mnist, synthetic_dataset};
use eswish::experiments::{run_mnist_mlp, MnistMlpConfig};
use eswish::ActivationSpec;

fn main() -> eswish::Result<()> {
    let data = match std::env::var_os("ESWISH_DATA_DIR") {
        Some(dir) => load_mnist(&PathBuf::from(dir))?,
        None => {
            println!("ESWISH_DATA_DIR not set; using the synthetic dataset");
            synthetic_dataset(2024, 300, 10, 32)
        }
    };

    let acts = vec![
        ActivationSpec::relu(),
        ActivationSpec::swish(),
        ActivationSpec::eswish(1.5)?,
        ActivationSpec::eswish(2.0)?,
    ];
    let cfg = MnistMlpConfig::paper(acts, vec![1, 2, 3]);

    let out = PathBuf::from("mnist_out");
    let results = run_mnist_mlp(&cfg, &data, Some(&out))?;
    println!("{:<12} {:>6} {:>10}", "activation", "seed", "test_acc");
    for (act, seed, m) in &results {
        println!("{:<12} {:>6} {:>10.4}", act.to_string(), seed, m.test_acc);
    }
    println!("per-run metric CSVs written under {}", out.display());
    Ok(())
}
