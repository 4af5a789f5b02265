//! Experiment harness CLI: gradient verification, output landscapes,
//! the depth sweep, the fixed MNIST MLP, and curve emission.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eswish::data::{load_mnist, synthetic_dataset, Dataset};
use eswish::experiments::{
    emit_activation_curves, generate_landscape, landscape_csv, landscape_slope, run_depth_experiment,
    run_mnist_mlp, DepthExperimentConfig, LandscapeConfig, MnistMlpConfig,
};
use eswish::network::{grad_check, Batch, LayerSpec, NetworkSpec};
use eswish::{ActivationKind, ActivationSpec, Error, Matrix, Network, Rng};

#[derive(Parser)]
#[command(name = "eswish", version, about = "E-swish activation experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check analytic activation derivatives and network gradients against
    /// central finite differences.
    GradCheck(GradCheckArgs),
    /// Evaluate randomly initialized networks on a 2-D grid and report the
    /// RMS slope of the resulting scalar field.
    Landscape(LandscapeArgs),
    /// Depth sweep: train MLP towers of several depths per activation.
    TrainDepth(TrainDepthArgs),
    /// Train the fixed 200-100-60-30-10 MLP per activation.
    TrainMnist(TrainMnistArgs),
    /// Emit f(x) and f'(x) sample points for a family of betas.
    Curves(CurvesArgs),
}

#[derive(Args)]
struct GradCheckArgs {
    /// Comma-separated beta values for the eswish checks.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1.125, 1.25, 1.5, 1.75, 2.0])]
    beta: Vec<f64>,
    /// Activations to check (default: every kind).
    #[arg(long, value_delimiter = ',')]
    act: Option<Vec<ActivationSpec>>,
    /// Max allowed relative error for the scalar sweep.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Max allowed relative error for the end-to-end network check.
    #[arg(long, default_value_t = 1e-5)]
    net_tol: f64,
}

#[derive(Args)]
struct LandscapeArgs {
    /// Activations to render.
    #[arg(long, value_delimiter = ',', default_value = "relu,swish,eswish:1.5,eswish:2")]
    act: Vec<ActivationSpec>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Grid resolution R (the lattice is R x R).
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding the four MNIST IDX files (falls back to
    /// ESWISH_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use the built-in synthetic dataset instead of reading IDX files.
    #[arg(long)]
    synthetic: bool,
}

#[derive(Args)]
struct TrainDepthArgs {
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "relu,swish,eswish:1.5")]
    act: Vec<ActivationSpec>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
    seeds: Vec<u64>,
    /// Override the preset's depth list.
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    plateau_factor: Option<f64>,
    #[arg(long)]
    plateau_patience: Option<usize>,
    #[arg(long)]
    early_stop_patience: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent runs (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TrainMnistArgs {
    #[arg(long, default_value = "paper")]
    preset: Preset,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "relu,swish,eswish:1.5,eswish:2")]
    act: Vec<ActivationSpec>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
    seeds: Vec<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1.25, 1.5, 1.75, 2.0])]
    beta: Vec<f64>,
    #[arg(long, default_value_t = -6.0)]
    lo: f64,
    #[arg(long, default_value_t = 6.0)]
    hi: f64,
    #[arg(long, default_value_t = 241)]
    steps: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Preset {
    Paper,
    Desk,
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Preset::Paper => write!(f, "paper"),
            Preset::Desk => write!(f, "desk"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GradCheck(args) => cmd_grad_check(args),
        Command::Landscape(args) => cmd_landscape(args),
        Command::TrainDepth(args) => cmd_train_depth(args),
        Command::TrainMnist(args) => cmd_train_mnist(args),
        Command::Curves(args) => cmd_curves(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Usage(_) => ExitCode::from(2),
                Error::Io(_) | Error::BadMagic { .. } | Error::Truncated { .. } => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}

type CmdResult = eswish::Result<ExitCode>;

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn warn_beta(acts: &[ActivationSpec]) {
    for act in acts {
        if act.beta_out_of_recommended_range() {
            eprintln!("warning: {act} is outside the recommended beta range [1, 2]");
        }
    }
}

fn configure_pool(jobs: Option<usize>) -> eswish::Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn resolve_dataset(data: &DataArgs, fraction: Option<f64>) -> eswish::Result<Dataset> {
    if data.synthetic {
        return Ok(synthetic_dataset(2024, 300, 10, 32));
    }
    let dir = data
        .data_dir
        .clone()
        .or_else(|| std::env::var_os("ESWISH_DATA_DIR").map(PathBuf::from))
        .ok_or_else(|| {
            Error::Usage("no dataset: pass --data-dir, set ESWISH_DATA_DIR, or use --synthetic".into())
        })?;
    let full = load_mnist(&dir)?;
    Ok(match fraction {
        Some(f) => full.truncate(f),
        None => full,
    })
}

fn data_desc(data: &DataArgs) -> String {
    if data.synthetic {
        "--synthetic".into()
    } else {
        match &data.data_dir {
            Some(d) => format!("--data-dir {}", d.display()),
            None => "--data-dir $ESWISH_DATA_DIR".into(),
        }
    }
}

fn spec_topology(spec: &NetworkSpec) -> String {
    let mut out = String::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let line = match layer {
            LayerSpec::Dense { input, output } => format!("dense {input}x{output}"),
            LayerSpec::BatchNorm { features } => format!("batchnorm {features}"),
            LayerSpec::Dropout { rate } => format!("dropout {rate}"),
            LayerSpec::Activation(act) => format!("activation {act}"),
        };
        out.push_str(&format!("  [{i}] {line}\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// grad-check
// ---------------------------------------------------------------------------

const FD_H: f64 = 1e-5;

fn all_kinds() -> Vec<ActivationKind> {
    vec![
        ActivationKind::EswishBeta,
        ActivationKind::Swish,
        ActivationKind::Relu,
        ActivationKind::Elu,
        ActivationKind::Softplus,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    ]
}

/// Worst relative error of the analytic derivative against central
/// differences on [-10, 10]. Points within 2h of a ReLU/ELU kink are
/// skipped (the functions are not smooth enough there for the O(h^2)
/// difference to converge); returns the skip count alongside.
fn scalar_sweep(act: ActivationSpec) -> (f64, f64, usize) {
    let mut worst = 0.0f64;
    let mut worst_x = 0.0;
    let mut skipped = 0;
    let kinked = matches!(act.kind, ActivationKind::Relu | ActivationKind::Elu);
    let mut x: f64 = -10.0;
    while x <= 10.0 {
        if kinked && x.abs() <= 2.0 * FD_H {
            skipped += 1;
            x += 0.05;
            continue;
        }
        let numeric = (act.apply(x + FD_H) - act.apply(x - FD_H)) / (2.0 * FD_H);
        let analytic = act.derivative(x);
        // Where the derivative nearly vanishes, finite-difference roundoff
        // dominates any relative measure; fall back to an absolute check.
        let err = if analytic.abs() < 1e-3 {
            if (analytic - numeric).abs() < 1e-8 {
                0.0
            } else {
                (analytic - numeric).abs()
            }
        } else {
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs())
        };
        if err > worst {
            worst = err;
            worst_x = x;
        }
        x += 0.05;
    }
    (worst, worst_x, skipped)
}

/// Small mixed network (dense / batchnorm / dropout) exercising every
/// backward path for one activation. Seeds are fixed so no sampled
/// parameter sits where finite-difference roundoff dominates.
fn net_check(act: ActivationSpec) -> eswish::Result<f64> {
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
    let mut rng = Rng::new(98);
    let inputs = Matrix::from_fn(8, 6, |_, _| rng.uniform(-1.0, 1.0));
    let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
    let batch = Batch { inputs, labels };
    grad_check(&mut net, &batch, FD_H, 99)
}

fn cmd_grad_check(args: GradCheckArgs) -> CmdResult {
    let mut acts: Vec<ActivationSpec> = Vec::new();
    match &args.act {
        Some(list) => acts.extend(list.iter().copied()),
        None => {
            for kind in all_kinds() {
                if kind == ActivationKind::EswishBeta {
                    for &beta in &args.beta {
                        acts.push(ActivationSpec::eswish(beta)?);
                    }
                } else {
                    acts.push(ActivationSpec::new(kind));
                }
            }
        }
    }
    println!(
        "grad-check --act {} --tol {} --net-tol {}",
        join(&acts),
        args.tol,
        args.net_tol
    );
    warn_beta(&acts);

    let mut failed = false;
    println!("{:<12} {:>12} {:>10} {:>8} {:>12}", "activation", "scalar_err", "at_x", "skipped", "net_err");
    for &act in &acts {
        let (scalar_err, worst_x, skipped) = scalar_sweep(act);
        let net_err = net_check(act)?;
        let ok = scalar_err < args.tol && net_err < args.net_tol;
        failed |= !ok;
        println!(
            "{:<12} {:>12.3e} {:>10.2} {:>8} {:>12.3e}  {}",
            act.to_string(),
            scalar_err,
            worst_x,
            skipped,
            net_err,
            if ok { "ok" } else { "FAIL" }
        );
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

// ---------------------------------------------------------------------------
// landscape
// ---------------------------------------------------------------------------

fn cmd_landscape(args: LandscapeArgs) -> CmdResult {
    println!(
        "landscape --act {} --seed {} --resolution {} --layers {} --width {} --out {}",
        join(&args.act),
        args.seed,
        args.resolution,
        args.layers,
        args.width,
        args.out.display()
    );
    warn_beta(&args.act);
    std::fs::create_dir_all(&args.out)?;

    let mut slopes = String::from("activation,beta,rms_slope\n");
    for &act in &args.act {
        let mut cfg = LandscapeConfig::new(act, args.seed);
        cfg.resolution = args.resolution;
        cfg.layers = args.layers;
        cfg.width = args.width;
        let grid = generate_landscape(&cfg)?;
        let slope = landscape_slope(&grid, cfg.spacing())?;
        let beta = match act.kind {
            ActivationKind::EswishBeta => act.beta,
            ActivationKind::Swish => 1.0,
            _ => f64::NAN,
        };
        let beta_str = if beta.is_nan() { String::new() } else { format!("{beta}") };
        slopes.push_str(&format!("{act},{beta_str},{}\n", eswish::experiments::fmt_f64(slope)));
        let path = args.out.join(format!("landscape_{act}.csv"));
        std::fs::write(&path, landscape_csv(&grid, cfg.lo, cfg.spacing()))?;
        println!("{act}: rms_slope {slope:.6} -> {}", path.display());
    }
    std::fs::write(args.out.join("slopes.csv"), slopes)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// train-depth / train-mnist
// ---------------------------------------------------------------------------

fn cmd_train_depth(args: TrainDepthArgs) -> CmdResult {
    configure_pool(args.jobs)?;
    let mut cfg = match args.preset {
        Preset::Paper => DepthExperimentConfig::paper(args.act.clone(), args.seeds.clone()),
        Preset::Desk => DepthExperimentConfig::desk(args.act.clone(), args.seeds.clone()),
    };
    if let Some(depths) = args.depths {
        cfg.depths = depths;
    }
    if let Some(w) = args.width {
        cfg.width = w;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = args.plateau_factor {
        cfg.plateau_factor = v;
    }
    if let Some(v) = args.plateau_patience {
        cfg.plateau_patience = v;
    }
    if let Some(v) = args.early_stop_patience {
        cfg.early_stop_patience = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if cfg.depths.is_empty() || cfg.activations.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Usage("depths, activations and seeds must be non-empty".into()));
    }
    println!(
        "train-depth --preset {} {} --act {} --seeds {} --depths {} --width {} --lr {} --momentum {} \
         --plateau-factor {} --plateau-patience {} --early-stop-patience {} --epochs {} --batch-size {} --out {}",
        args.preset,
        data_desc(&args.data),
        join(&cfg.activations),
        join(&cfg.seeds),
        join(&cfg.depths),
        cfg.width,
        cfg.lr,
        cfg.momentum,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.early_stop_patience,
        cfg.epochs,
        cfg.batch_size,
        args.out.display()
    );
    warn_beta(&cfg.activations);

    // Desk preset keeps 20% of the real dataset; synthetic data is already
    // desk-sized.
    let fraction = match (args.preset, args.data.synthetic) {
        (Preset::Desk, false) => Some(0.2),
        _ => None,
    };
    let data = resolve_dataset(&args.data, fraction)?;
    println!(
        "dataset: {} train / {} val / {} test examples, {} features",
        data.train_y.len(),
        data.val_y.len(),
        data.test_y.len(),
        data.feature_dim()
    );

    for &depth in &cfg.depths {
        for &act in &cfg.activations {
            let spec = eswish::experiments::build_depth_network(
                depth,
                cfg.width,
                act,
                data.feature_dim(),
                data.num_classes,
            )?;
            println!("topology depth {depth} {act}:\n{}", spec_topology(&spec));
        }
    }

    let cells = run_depth_experiment(&cfg, &data, Some(&args.out))?;
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
    println!("wrote {}", args.out.join("depth_summary.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_train_mnist(args: TrainMnistArgs) -> CmdResult {
    configure_pool(args.jobs)?;
    let mut cfg = MnistMlpConfig::paper(args.act.clone(), args.seeds.clone());
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if cfg.activations.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Usage("activations and seeds must be non-empty".into()));
    }
    println!(
        "train-mnist --preset {} {} --act {} --seeds {} --lr {} --momentum {} --dropout {} \
         --epochs {} --batch-size {} --out {}",
        args.preset,
        data_desc(&args.data),
        join(&cfg.activations),
        join(&cfg.seeds),
        cfg.lr,
        cfg.momentum,
        cfg.dropout,
        cfg.epochs,
        cfg.batch_size,
        args.out.display()
    );
    warn_beta(&cfg.activations);

    let fraction = match (args.preset, args.data.synthetic) {
        (Preset::Desk, false) => Some(0.2),
        _ => None,
    };
    let data = resolve_dataset(&args.data, fraction)?;
    println!(
        "dataset: {} train / {} val / {} test examples, {} features",
        data.train_y.len(),
        data.val_y.len(),
        data.test_y.len(),
        data.feature_dim()
    );
    let spec = cfg.network(cfg.activations[0], data.feature_dim())?;
    println!("topology ({}):\n{}", cfg.activations[0], spec_topology(&spec));

    let results = run_mnist_mlp(&cfg, &data, Some(&args.out))?;
    println!("{:<12} {:>6} {:>10} {:>9}", "activation", "seed", "test_acc", "diverged");
    for (act, seed, m) in &results {
        println!(
            "{:<12} {:>6} {:>10.4} {:>9}",
            act.to_string(),
            seed,
            m.test_acc,
            m.diverged
        );
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

fn cmd_curves(args: CurvesArgs) -> CmdResult {
    println!(
        "curves --beta {} --lo {} --hi {} --steps {} --out {}",
        join(&args.beta),
        args.lo,
        args.hi,
        args.steps,
        args.out.display()
    );
    for &beta in &args.beta {
        if !(1.0..=2.0).contains(&beta) {
            eprintln!("warning: beta {beta} is outside the recommended range [1, 2]");
        }
    }
    let csv = emit_activation_curves(&args.beta, args.lo, args.hi, args.steps)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("curves.csv");
    std::fs::write(&path, csv)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}
