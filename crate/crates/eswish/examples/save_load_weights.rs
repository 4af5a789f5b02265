//! Trains a small classifier briefly, saves the best-validation weights,
//! reloads them, and verifies the reloaded network predicts identically.
//!
//!     cargo run --release --example save_load_weights

use eswish::data::synthetic_dataset;
use eswish::experiments::{evaluate, train_network_with_net, TrainSettings};
use eswish::network::{LayerSpec, NetworkSpec};
use eswish::{ActivationSpec, Network};

fn main() -> eswish::Result<()> {
    let data = synthetic_dataset(11, 200, 4, 16);
    let act = ActivationSpec::eswish(1.5)?;
    let spec = NetworkSpec::new(vec![
        LayerSpec::Dense { input: 16, output: 32 },
        LayerSpec::Activation(act),
        LayerSpec::Dense { input: 32, output: 4 },
    ])?;

    let settings = TrainSettings {
        lr: 0.05,
        momentum: 0.9,
        plateau: None,
        early_stop: None,
        milestones: None,
        epochs: 5,
        batch_size: 32,
        seed: 3,
    };
    let (metrics, net) = train_network_with_net(&spec, &data, &settings)?;
    println!("trained: test accuracy {:.4}", metrics.test_acc);

    let path = std::env::temp_dir().join("eswish_example_weights.bin");
    net.save_weights(&path)?;
    let reloaded = Network::load_weights(&path)?;

    let (loss_a, acc_a) = evaluate(&net, &data.test_x, &data.test_y)?;
    let (loss_b, acc_b) = evaluate(&reloaded, &data.test_x, &data.test_y)?;
    assert_eq!(loss_a.to_bits(), loss_b.to_bits());
    assert_eq!(acc_a.to_bits(), acc_b.to_bits());
    println!("reloaded from {}: identical predictions (acc {:.4})", path.display(), acc_b);
    Ok(())
}
