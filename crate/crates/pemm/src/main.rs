//! Thin command-line front end; all logic lives in the library.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pemm::cli::{
    cmd_centersim, cmd_noise, cmd_train, cmd_verify, parse_class_map, CentersimCmd, ExperimentConfig, NoiseCmd,
};
use pemm::noise::{NoiseKind, NoiseSpec};
use pemm::rng::derive_seed;
use pemm::verify::VerifyOptions;
use pemm::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pemm",
    about = "Noise-robust training with a distance-based classifier and potential-energy regularized class centers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment described by a config file.
    Train(TrainArgs),
    /// Corrupt the labels of a CSV dataset.
    Noise(NoiseArgs),
    /// Relax class centers under the pair energy and dump the trajectory.
    Centersim(CentersimArgs),
    /// Run the built-in verification battery.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss selection: pemm, ce, sce or gce.
    #[arg(long)]
    loss: Option<String>,
    /// none, symmetric or asymmetric.
    #[arg(long)]
    noise_kind: Option<String>,
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args)]
struct NoiseArgs {
    /// Headerless numeric CSV dataset.
    #[arg(long)]
    input: PathBuf,
    /// Column index of the labels.
    #[arg(long)]
    label_column: usize,
    /// Number of classes.
    #[arg(long)]
    classes: usize,
    /// symmetric or asymmetric.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    rate: f64,
    /// "src:dst" pairs for asymmetric noise; defaults to the 10-class preset.
    #[arg(long)]
    map: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flip an exact count instead of Bernoulli draws.
    #[arg(long, default_value_t = false)]
    exact_count: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CentersimArgs {
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snapshot stride in iterations.
    #[arg(long, default_value_t = 100)]
    stride: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Where to write the JSON report.
    #[arg(long, default_value = "verify_report.json")]
    out: PathBuf,
}

fn run_train(args: TrainArgs) -> Result<i32> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(loss) = args.loss {
        cfg.loss = loss;
    }
    if let Some(kind) = args.noise_kind {
        cfg.noise_kind = kind;
    }
    if let Some(rate) = args.noise_rate {
        cfg.noise_rate = rate;
    }
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    if let Some(sigma) = args.sigma {
        cfg.sigma = sigma;
    }
    let summary = cmd_train(&cfg)?;
    println!(
        "loss={} seed={} train_acc={:.4} test_acc={:.4} noise_rate={:.4} center_dist_sum={:.4}",
        summary.loss,
        summary.seed,
        summary.final_train_accuracy,
        summary.final_test_accuracy,
        summary.realized_noise_rate,
        summary.center_distances.sum
    );
    println!("outputs in {}", cfg.out.display());
    Ok(0)
}

fn run_noise(args: NoiseArgs) -> Result<i32> {
    let kind = NoiseKind::parse(&args.kind)?;
    let class_map = match (kind, &args.map) {
        (NoiseKind::Symmetric, _) => None,
        (NoiseKind::Asymmetric, Some(map)) => Some(parse_class_map(map)?),
        (NoiseKind::Asymmetric, None) => {
            if args.classes == 10 {
                Some(pemm::noise::cifar10_asymmetric_map())
            } else {
                return Err(Error::config(format!(
                    "asymmetric noise on {}-class data needs --map",
                    args.classes
                )));
            }
        }
    };
    let spec = NoiseSpec {
        kind,
        rate: args.rate,
        class_map,
        seed: derive_seed(args.seed, "noise"),
        exact_count: args.exact_count,
    };
    spec.validate(args.classes)?;
    let cmd = NoiseCmd {
        input: args.input,
        label_column: args.label_column,
        classes: args.classes,
        spec,
        out: args.out.clone(),
    };
    let summary = cmd_noise(&cmd)?;
    println!("corrupted {} labels, realized rate {:.4}", summary.n, summary.realized_rate);
    println!("outputs in {}", args.out.display());
    Ok(0)
}

fn run_centersim(args: CentersimArgs) -> Result<i32> {
    let cmd = CentersimCmd {
        classes: args.classes,
        dim: args.dim,
        beta: args.beta,
        step: args.step,
        iters: args.iters,
        seed: args.seed,
        stride: args.stride,
        out: args.out.clone(),
    };
    let summary = cmd_centersim(&cmd)?;
    print!("{}", summary.format_table());
    if !summary.simplex_feasible {
        println!("note: dim < classes, the equal-distance optimum is not reachable in this dimension");
    }
    println!("outputs in {}", args.out.display());
    Ok(0)
}

fn run_verify(args: VerifyArgs) -> Result<i32> {
    let report = cmd_verify(Some(&args.out), &VerifyOptions::default())?;
    print!("{}", report.format_table());
    println!("report written to {}", args.out.display());
    if report.all_passed {
        Ok(0)
    } else {
        for failure in report.failures() {
            eprintln!("failed: {} (measured {:.3e}, tolerance {:.1e})", failure.name, failure.measured, failure.tolerance);
        }
        Ok(2)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; everything else is a
            // usage error.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Noise(args) => run_noise(args),
        Command::Centersim(args) => run_centersim(args),
        Command::Verify(args) => run_verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
