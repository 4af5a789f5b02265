//! Verifies the analytic backward pass of a small mixed network
//! (dense / batchnorm / dropout / eswish) against central finite
//! differences of the loss.
//!
//!     cargo run --release --example gradient_check

use eswish::network::{grad_check, Batch, LayerSpec, NetworkSpec};
use eswish::{ActivationSpec, Matrix, Network, Rng};

fn main() -> eswish::Result<()> {
    let act = ActivationSpec::eswish(1.5)?;
    let spec = NetworkSpec::new(vec![
        LayerSpec::Dense { input: 6, output: 8 },
        LayerSpec::BatchNorm { features: 8 },
        LayerSpec::Activation(act),
        LayerSpec::Dense { input: 8, output: 8 },
        LayerSpec::Activation(act),
        LayerSpec::Dropout { rate: 0.3 },
        LayerSpec::Dense { input: 8, output: 8 },
        LayerSpec::Activation(act),
        LayerSpec::Dense { input: 8, output: 4 },
    ])?;

    let mut net = Network::init(&spec, &mut Rng::new(97))?;
    println!("checking:\n{}", net.topology());

    let mut rng = Rng::new(98);
    let batch = Batch {
        inputs: Matrix::from_fn(8, 6, |_, _| rng.uniform(-1.0, 1.0)),
        labels: (0..8).map(|i| i % 4).collect(),
    };

    let worst = grad_check(&mut net, &batch, 1e-5, 99)?;
    println!("worst relative gradient error: {worst:.3e}");
    assert!(worst < 1e-5);
    Ok(())
}
