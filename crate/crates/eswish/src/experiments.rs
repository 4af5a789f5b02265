//! Experiment harnesses: the depth-trainability sweep, the 5-layer MNIST
//! MLP, output-landscape generation with an RMS slope metric, and activation
//! curve tabulation. Everything lands in CSV, and every run is a pure
//! function of its config and seed, so reruns are byte-identical.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::activations::{eswish, eswish_grad, ActivationSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{softmax_cross_entropy, LayerSpec, Mode, Network, NetworkSpec};
use crate::numerics::{Matrix, Rng};
use crate::optim::{EarlyStop, PlateauSchedule, SgdState};

/// 17 significant decimal digits: enough for a bit-stable f64 round-trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Run metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

/// Per-run record: one row per completed epoch plus final test accuracy.
///
/// `test_acc` is measured at the best-validation epoch; `test_acc_last` at
/// the last epoch trained. Diverged runs (non-finite loss) score 0.0 with
/// the flag set rather than aborting a sweep.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub records: Vec<EpochRecord>,
    pub test_acc: f64,
    pub test_acc_last: f64,
    pub diverged: bool,
    pub wall_secs: f64,
}

impl RunMetrics {
    /// The `epoch,train_loss,train_acc,val_loss,val_acc,lr` CSV.
    /// Wall-clock time is deliberately not emitted so reruns are
    /// byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.lr
            ));
        }
        out
    }
}

/// Elementwise median over aligned epoch records, taking the lower median
/// for even counts. All runs must have the same epoch count.
pub fn median_of_runs(runs: &[RunMetrics]) -> Result<RunMetrics> {
    if runs.is_empty() {
        return Err(Error::Aggregation("no runs to aggregate".into()));
    }
    let epochs = runs[0].records.len();
    if runs.iter().any(|r| r.records.len() != epochs) {
        return Err(Error::Aggregation(format!(
            "misaligned epoch counts: {:?}",
            runs.iter().map(|r| r.records.len()).collect::<Vec<_>>()
        )));
    }
    let med = |xs: Vec<f64>| lower_median(xs);
    let records = (0..epochs)
        .map(|e| EpochRecord {
            epoch: runs[0].records[e].epoch,
            train_loss: med(runs.iter().map(|r| r.records[e].train_loss).collect()),
            train_acc: med(runs.iter().map(|r| r.records[e].train_acc).collect()),
            val_loss: med(runs.iter().map(|r| r.records[e].val_loss).collect()),
            val_acc: med(runs.iter().map(|r| r.records[e].val_acc).collect()),
            lr: med(runs.iter().map(|r| r.records[e].lr).collect()),
        })
        .collect();
    Ok(RunMetrics {
        records,
        test_acc: med(runs.iter().map(|r| r.test_acc).collect()),
        test_acc_last: med(runs.iter().map(|r| r.test_acc_last).collect()),
        diverged: runs.iter().any(|r| r.diverged),
        wall_secs: runs.iter().map(|r| r.wall_secs).sum(),
    })
}

/// Lower median: sort, take element (n-1)/2.
pub fn lower_median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    xs[(xs.len() - 1) / 2]
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Hyperparameters shared by the training harnesses.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub lr: f64,
    pub momentum: f64,
    /// (factor, patience) for reduce-on-plateau; None disables.
    pub plateau: Option<(f64, usize)>,
    /// Early-stop patience; None disables.
    pub early_stop: Option<usize>,
    /// (milestones, factor) for fixed-step decay; None disables. Applied at
    /// the start of each epoch, before any plateau adjustment.
    pub milestones: Option<(Vec<usize>, f64)>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let correct = (0..logits.rows())
        .filter(|&i| {
            let row = logits.row(i);
            let pred = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            pred == labels[i]
        })
        .count();
    correct as f64 / logits.rows().max(1) as f64
}

/// Inference-mode loss and accuracy, evaluated in chunks.
pub fn evaluate(net: &Network, x: &Matrix, y: &[usize]) -> Result<(f64, f64)> {
    let chunk = 512;
    let n = x.rows();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let xb = Matrix::from_fn(end - start, x.cols(), |i, j| x.get(start + i, j));
        let yb = &y[start..end];
        let logits = net.infer(&xb)?;
        let (loss, _) = softmax_cross_entropy(&logits, yb)?;
        loss_sum += loss * (end - start) as f64;
        correct += (accuracy(&logits, yb) * (end - start) as f64).round() as usize;
        start = end;
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

/// Trains a network on the dataset's train split, tracking validation
/// metrics per epoch. Test accuracy is reported at the best-validation
/// epoch (and also at the last epoch). A non-finite loss marks the run
/// diverged instead of returning an error.
pub fn train_network(
    spec: &NetworkSpec,
    data: &Dataset,
    settings: &TrainSettings,
) -> Result<RunMetrics> {
    train_network_with_net(spec, data, settings).map(|(m, _)| m)
}

/// As [`train_network`], additionally returning the best-validation network
/// (inference mode) for weight serialization.
pub fn train_network_with_net(
    spec: &NetworkSpec,
    data: &Dataset,
    settings: &TrainSettings,
) -> Result<(RunMetrics, Network)> {
    let start_time = Instant::now();
    let mut rng = Rng::new(settings.seed);
    let mut net = Network::init(spec, &mut rng)?;
    let mut sgd = SgdState::new(settings.lr, settings.momentum)?;
    let mut plateau = match settings.plateau {
        Some((factor, patience)) => Some(PlateauSchedule::new(factor, patience)?),
        None => None,
    };
    let mut early = match settings.early_stop {
        Some(patience) => Some(EarlyStop::new(patience)?),
        None => None,
    };

    let n = data.train_x.rows();
    let dim = data.train_x.cols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(settings.epochs);
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_net: Option<Network> = None;
    let mut diverged = false;

    'epochs: for epoch in 1..=settings.epochs {
        if let Some((milestones, factor)) = &settings.milestones {
            sgd.lr = crate::optim::step_schedule(epoch - 1, milestones, *factor, settings.lr)?;
        }
        net.set_mode(Mode::Train);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(settings.batch_size) {
            // BatchNorm needs at least two rows; fold a trailing singleton
            // into nothing rather than crash.
            if chunk.len() < 2 && spec.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm { .. })) {
                continue;
            }
            let xb = Matrix::from_fn(chunk.len(), dim, |i, j| data.train_x.get(chunk[i], j));
            let yb: Vec<usize> = chunk.iter().map(|&i| data.train_y[i]).collect();
            let (logits, caches) = net.forward(&xb, &mut rng)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &yb)?;
            if !loss.is_finite() {
                diverged = true;
                break 'epochs;
            }
            epoch_loss += loss * chunk.len() as f64;
            epoch_correct += accuracy(&logits, &yb) * chunk.len() as f64;
            seen += chunk.len();
            let grads = net.backward(&caches, &dlogits)?;
            match sgd.step(&mut net, &grads) {
                Ok(()) => {}
                Err(Error::Training(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = epoch_loss / seen.max(1) as f64;
        let train_acc = epoch_correct / seen.max(1) as f64;

        net.set_mode(Mode::Infer);
        let (val_loss, val_acc) = evaluate(&net, &data.val_x, &data.val_y)?;
        if !val_loss.is_finite() {
            diverged = true;
            break 'epochs;
        }
        records.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            lr: sgd.lr,
        });
        if val_acc > best_val_acc {
            best_val_acc = val_acc;
            best_net = Some(net.clone());
        }
        if let Some(p) = plateau.as_mut() {
            sgd.lr = p.update(val_acc, sgd.lr);
        }
        if let Some(es) = early.as_mut() {
            if es.check(val_acc) {
                break;
            }
        }
    }

    let (test_acc, test_acc_last) = if diverged {
        (0.0, 0.0)
    } else {
        net.set_mode(Mode::Infer);
        let (_, last) = evaluate(&net, &data.test_x, &data.test_y)?;
        let best = match &best_net {
            Some(b) => evaluate(b, &data.test_x, &data.test_y)?.1,
            None => last,
        };
        (best, last)
    };

    let mut final_net = best_net.unwrap_or(net);
    final_net.set_mode(Mode::Infer);
    Ok((
        RunMetrics {
            records,
            test_acc,
            test_acc_last,
            diverged,
            wall_secs: start_time.elapsed().as_secs_f64(),
        },
        final_net,
    ))
}

// ---------------------------------------------------------------------------
// Depth-trainability sweep
// ---------------------------------------------------------------------------

/// Zero-based Dense indices i (hidden blocks only) with i % 3 == 1 get a
/// BatchNorm between the Dense and its activation.
pub fn bn_dense_indices(depth: usize) -> Vec<usize> {
    (0..depth).filter(|i| i % 3 == 1).collect()
}

/// A `depth`-block fully connected tower of `width` neurons plus a linear
/// classifier head. BatchNorm is inserted after Dense block i (zero-based,
/// counting Dense blocks only) when i % 3 == 1, before the activation.
pub fn build_depth_network(
    depth: usize,
    width: usize,
    act: ActivationSpec,
    input_dim: usize,
    num_classes: usize,
) -> Result<NetworkSpec> {
    if depth == 0 {
        return Err(Error::Config("depth must be >= 1".into()));
    }
    let mut layers = Vec::new();
    let mut in_dim = input_dim;
    for i in 0..depth {
        layers.push(LayerSpec::Dense {
            input: in_dim,
            output: width,
        });
        if i % 3 == 1 {
            layers.push(LayerSpec::BatchNorm { features: width });
        }
        layers.push(LayerSpec::Activation(act));
        in_dim = width;
    }
    layers.push(LayerSpec::Dense {
        input: in_dim,
        output: num_classes,
    });
    NetworkSpec::new(layers)
}

#[derive(Debug, Clone)]
pub struct DepthExperimentConfig {
    pub depths: Vec<usize>,
    pub width: usize,
    pub activations: Vec<ActivationSpec>,
    pub seeds: Vec<u64>,
    pub lr: f64,
    pub momentum: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl DepthExperimentConfig {
    /// Faithful protocol: 512-wide towers, depths 23..=44, SGD 0.01 with
    /// momentum 0.9, plateau x0.35 after 2 stale epochs, early stop after 5,
    /// 15 epochs, batch 128, no dropout.
    pub fn paper(activations: Vec<ActivationSpec>, seeds: Vec<u64>) -> Self {
        DepthExperimentConfig {
            depths: (23..=44).collect(),
            width: 512,
            activations,
            seeds,
            lr: 0.01,
            momentum: 0.9,
            plateau_factor: 0.35,
            plateau_patience: 2,
            early_stop_patience: 5,
            epochs: 15,
            batch_size: 128,
        }
    }

    /// Reduced preset that preserves the qualitative depth trend on a
    /// laptop CPU: depths {8, 16, 24}, width 128, same training dynamics.
    pub fn desk(activations: Vec<ActivationSpec>, seeds: Vec<u64>) -> Self {
        DepthExperimentConfig {
            depths: vec![8, 16, 24],
            width: 128,
            ..Self::paper(activations, seeds)
        }
    }

    fn settings(&self, seed: u64) -> TrainSettings {
        TrainSettings {
            lr: self.lr,
            momentum: self.momentum,
            plateau: Some((self.plateau_factor, self.plateau_patience)),
            milestones: None,
            early_stop: Some(self.early_stop_patience),
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// One aggregated cell of the depth sweep.
#[derive(Debug, Clone)]
pub struct DepthCell {
    pub depth: usize,
    pub activation: ActivationSpec,
    pub median_test_acc: f64,
    pub diverged_count: usize,
}

/// Runs every (depth, activation, seed) with the depth-sweep recipe and
/// aggregates per-cell medians. Per-run metric CSVs and the
/// `depth,activation,median_test_acc,diverged_count` summary are written
/// under `out_dir` when given. Runs execute on the rayon pool.
pub fn run_depth_experiment(
    cfg: &DepthExperimentConfig,
    data: &Dataset,
    out_dir: Option<&Path>,
) -> Result<Vec<DepthCell>> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("at least one seed required".into()));
    }
    let mut jobs = Vec::new();
    for &depth in &cfg.depths {
        for &act in &cfg.activations {
            for &seed in &cfg.seeds {
                jobs.push((depth, act, seed));
            }
        }
    }
    let results: Vec<(usize, ActivationSpec, u64, RunMetrics)> = jobs
        .par_iter()
        .map(|&(depth, act, seed)| {
            let spec = build_depth_network(depth, cfg.width, act, data.feature_dim(), data.num_classes)?;
            let metrics = train_network(&spec, data, &cfg.settings(seed))?;
            Ok((depth, act, seed, metrics))
        })
        .collect::<Result<_>>()?;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (depth, act, seed, metrics) in &results {
            let path = dir.join(format!("depth_{act}_{depth}_{seed}.csv"));
            std::fs::write(path, metrics.to_csv())?;
        }
    }

    let mut cells = Vec::new();
    for &depth in &cfg.depths {
        for &act in &cfg.activations {
            let runs: Vec<&RunMetrics> = results
                .iter()
                .filter(|(d, a, _, _)| *d == depth && *a == act)
                .map(|(_, _, _, m)| m)
                .collect();
            let accs: Vec<f64> = runs.iter().map(|m| m.test_acc).collect();
            cells.push(DepthCell {
                depth,
                activation: act,
                median_test_acc: lower_median(accs),
                diverged_count: runs.iter().filter(|m| m.diverged).count(),
            });
        }
    }

    if let Some(dir) = out_dir {
        let mut summary = String::from("depth,activation,median_test_acc,diverged_count\n");
        for c in &cells {
            summary.push_str(&format!(
                "{},{},{},{}\n",
                c.depth, c.activation, c.median_test_acc, c.diverged_count
            ));
        }
        std::fs::write(dir.join("depth_summary.csv"), summary)?;
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// MNIST 5-layer MLP
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MnistMlpConfig {
    /// Hidden-to-output widths; the last entry is the class count.
    pub widths: Vec<usize>,
    pub dropout: f64,
    pub activations: Vec<ActivationSpec>,
    pub seeds: Vec<u64>,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl MnistMlpConfig {
    /// The 200-100-60-30-10 MLP: dropout 0.2 after each hidden activation,
    /// SGD lr 0.1 no momentum, batch 64, 20 epochs.
    pub fn paper(activations: Vec<ActivationSpec>, seeds: Vec<u64>) -> Self {
        MnistMlpConfig {
            widths: vec![200, 100, 60, 30, 10],
            dropout: 0.2,
            activations,
            seeds,
            lr: 0.1,
            momentum: 0.0,
            batch_size: 64,
            epochs: 20,
        }
    }

    pub fn network(&self, act: ActivationSpec, input_dim: usize) -> Result<NetworkSpec> {
        let mut layers = Vec::new();
        let mut in_dim = input_dim;
        for (i, &w) in self.widths.iter().enumerate() {
            let last = i + 1 == self.widths.len();
            layers.push(LayerSpec::Dense {
                input: in_dim,
                output: w,
            });
            if !last {
                layers.push(LayerSpec::Activation(act));
                if self.dropout > 0.0 {
                    layers.push(LayerSpec::Dropout { rate: self.dropout });
                }
            }
            in_dim = w;
        }
        NetworkSpec::new(layers)
    }

    fn settings(&self, seed: u64) -> TrainSettings {
        TrainSettings {
            lr: self.lr,
            momentum: self.momentum,
            plateau: None,
            early_stop: None,
            milestones: None,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// Trains the fixed MLP for every (activation, seed); returns the runs and
/// writes per-run CSVs named `mnist_<activation>_mlp_<seed>.csv` under
/// `out_dir` when given.
pub fn run_mnist_mlp(
    cfg: &MnistMlpConfig,
    data: &Dataset,
    out_dir: Option<&Path>,
) -> Result<Vec<(ActivationSpec, u64, RunMetrics)>> {
    let mut jobs = Vec::new();
    for &act in &cfg.activations {
        for &seed in &cfg.seeds {
            jobs.push((act, seed));
        }
    }
    let results: Vec<(ActivationSpec, u64, RunMetrics)> = jobs
        .par_iter()
        .map(|&(act, seed)| {
            let spec = cfg.network(act, data.feature_dim())?;
            let metrics = train_network(&spec, data, &cfg.settings(seed))?;
            Ok((act, seed, metrics))
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (act, seed, metrics) in &results {
            let path = dir.join(format!("mnist_{act}_mlp_{seed}.csv"));
            std::fs::write(path, metrics.to_csv())?;
        }
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// Output landscape
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LandscapeConfig {
    pub layers: usize,
    pub width: usize,
    /// Lattice resolution R; the grid is R x R over [lo, hi]^2.
    pub resolution: usize,
    pub lo: f64,
    pub hi: f64,
    /// Extra multiplier on the Glorot weights (1.0 = plain Glorot).
    pub init_scale: f64,
    pub seed: u64,
    pub activation: ActivationSpec,
}

impl LandscapeConfig {
    pub fn new(activation: ActivationSpec, seed: u64) -> Self {
        LandscapeConfig {
            layers: 6,
            width: 128,
            resolution: 256,
            lo: -2.0,
            hi: 2.0,
            init_scale: 1.0,
            seed,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Config("landscape resolution must be >= 2".into()));
        }
        if !(self.hi > self.lo) {
            return Err(Error::Config(format!(
                "landscape range [{}, {}] is degenerate",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.resolution - 1) as f64
    }
}

/// Builds the random 2-input → `layers` hidden (width, activation) → 1
/// linear-output network and evaluates it at every lattice point. Entry
/// (i, j) of the result is the output at (x = lo + j·spacing,
/// y = lo + i·spacing). The weight draw depends only on the seed and
/// topology, so different activations at the same seed see identical
/// weights per position.
pub fn generate_landscape(cfg: &LandscapeConfig) -> Result<Matrix> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let mut layers = Vec::new();
    let mut in_dim = 2;
    for _ in 0..cfg.layers {
        layers.push(LayerSpec::Dense {
            input: in_dim,
            output: cfg.width,
        });
        layers.push(LayerSpec::Activation(cfg.activation));
        in_dim = cfg.width;
    }
    layers.push(LayerSpec::Dense {
        input: in_dim,
        output: 1,
    });
    let spec = NetworkSpec::new(layers)?;
    let mut net = Network::init(&spec, &mut rng)?;
    if cfg.init_scale != 1.0 {
        for (name, p) in net.param_tensors_mut() {
            if name.ends_with(".w") {
                for v in p.iter_mut() {
                    *v *= cfg.init_scale;
                }
            }
        }
    }
    net.set_mode(Mode::Infer);

    let r = cfg.resolution;
    let spacing = cfg.spacing();
    let mut grid = Matrix::zeros(r, r);
    // Evaluate one lattice row per inference batch.
    for i in 0..r {
        let y = cfg.lo + i as f64 * spacing;
        let coords = Matrix::from_fn(r, 2, |j, c| {
            if c == 0 {
                cfg.lo + j as f64 * spacing
            } else {
                y
            }
        });
        let out = net.infer(&coords)?;
        for j in 0..r {
            grid.set(i, j, out.get(j, 0));
        }
    }
    Ok(grid)
}

/// RMS over interior lattice points of the central-difference gradient
/// magnitude.
pub fn landscape_slope(grid: &Matrix, spacing: f64) -> Result<f64> {
    let (r, c) = grid.shape();
    if r < 3 || c < 3 {
        return Err(Error::Config(format!(
            "grid {r}x{c} too small for interior central differences"
        )));
    }
    if spacing <= 0.0 {
        return Err(Error::Config(format!("degenerate spacing {spacing}")));
    }
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for i in 1..r - 1 {
        for j in 1..c - 1 {
            let gx = (grid.get(i, j + 1) - grid.get(i, j - 1)) / (2.0 * spacing);
            let gy = (grid.get(i + 1, j) - grid.get(i - 1, j)) / (2.0 * spacing);
            sum_sq += gx * gx + gy * gy;
            count += 1;
        }
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// The `x,y,z` landscape CSV, 17-significant-digit floats, row-major over
/// the lattice.
pub fn landscape_csv(grid: &Matrix, lo: f64, spacing: f64) -> String {
    let (r, c) = grid.shape();
    let mut out = String::from("x,y,z\n");
    for i in 0..r {
        for j in 0..c {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(lo + j as f64 * spacing),
                fmt_f64(lo + i as f64 * spacing),
                fmt_f64(grid.get(i, j))
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Activation curves
// ---------------------------------------------------------------------------

/// Tabulates E-swish and its derivative over [lo, hi] for each β, one group
/// per β: `beta,x,f,f_prime`.
pub fn emit_activation_curves(betas: &[f64], lo: f64, hi: f64, steps: usize) -> Result<String> {
    if !(hi > lo) || steps < 2 {
        return Err(Error::Config(format!(
            "bad curve range [{lo}, {hi}] with {steps} steps"
        )));
    }
    let mut out = String::from("beta,x,f,f_prime\n");
    let spacing = (hi - lo) / (steps - 1) as f64;
    for &beta in betas {
        for k in 0..steps {
            let x = lo + k as f64 * spacing;
            out.push_str(&format!(
                "{},{},{},{}\n",
                beta,
                fmt_f64(x),
                fmt_f64(eswish(beta, x)),
                fmt_f64(eswish_grad(beta, x))
            ));
        }
    }
    Ok(out)
}
