use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iocnn_cli::config::ExperimentConfig;
use iocnn_cli::experiments::run;

#[derive(Parser)]
#[command(name = "iocnn", version, about = "Input-output convex neural network experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; must be absent or empty. Defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Verb {
    /// Unconstrained vs convex training on the same data.
    Compare(Common),
    /// Label-noise sweep (peak and convergence rows per fraction).
    Sweep(Common),
    /// Mixture of convex experts trained with EM.
    Moe(Common),
    /// Boosted convex experts with a trained gate.
    Boost(Common),
    /// Structural audit plus sampled Jensen check.
    Verify(Common),
    /// Reliability diagrams and expected calibration error.
    Calibrate(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, args) = match &cli.verb {
        Verb::Compare(a) => ("compare", a),
        Verb::Sweep(a) => ("sweep", a),
        Verb::Moe(a) => ("moe", a),
        Verb::Boost(a) => ("boost", a),
        Verb::Verify(a) => ("verify", a),
        Verb::Calibrate(a) => ("calibrate", a),
    };
    let result = (|| {
        let mut cfg = ExperimentConfig::load(&args.config)?;
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if cfg.experiment.verb() != verb {
            return Err(iocnn_cli::CliError::Config(format!(
                "config describes a `{}` experiment, not `{verb}`",
                cfg.experiment.verb()
            )));
        }
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .ok_or_else(|| iocnn_cli::CliError::Config("no output directory: pass --out".into()))?;
        run(&cfg, &out)
    })();
    match result {
        Ok(outcome) => {
            // A closed pipe (`| head`) is not an error worth a panic.
            let _ = writeln!(std::io::stdout(), "{}", outcome.summary());
            if outcome.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
