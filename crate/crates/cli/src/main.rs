//! `lawbound`: generate, evolve, sample and compare field ensembles, and run the acceptance suite.
//!
//! Exit codes: 0 when every check holds, 2 when a check fails, 1 on usage or I/O errors.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use lawbound::report::Report;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "lawbound", version, about = "Law-level stability and coverage diagnostics for field ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Output {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record elapsed seconds in the report.
    #[arg(long)]
    wall_time: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a divergence-free Gaussian ensemble.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Ensemble manifest to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Push an ensemble through the Euler flow and store the law curve.
    Evolve {
        /// Ensemble manifest.
        #[arg(long)]
        input: PathBuf,
        /// Law-curve manifest to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        dt: f64,
        /// Time between stored checkpoints.
        #[arg(long)]
        every: f64,
        /// Conservation CSV `t,energy,enstrophy,divergence` (member averages, worst divergence).
        #[arg(long)]
        conservation: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Roll an ensemble forward with a sampler kernel.
    Sample {
        #[arg(long)]
        config: PathBuf,
        /// Ensemble manifest of initial states.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Law-curve manifest of the step laws.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-member path nodes and their index.
        #[arg(long)]
        paths: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Capacity-coverage decomposition of W2 between two ensembles.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        k: usize,
        /// Comma-separated resolutions for the sweep CSV.
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        /// Sweep CSV `K,tail_a,train,bound,w2`.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Exact and entropic transport between ensembles, or d_T between law curves.
    Transport {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 2)]
        p: u32,
        /// Also solve the entropic problem with this regularization.
        #[arg(long)]
        sinkhorn_eps: Option<f64>,
        /// Treat the inputs as law-curve manifests and report d_T.
        #[arg(long)]
        curves: bool,
        #[command(flatten)]
        output: Output,
    },
    /// W2 average-strain and coupled-moment bounds over one window.
    Stability {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = 8)]
        checkpoints: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Rollout experiment against the Gronwall bound.
    Rollout {
        /// Experiment config; the built-in perturbed-model experiment when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Ledger CSV `n,alpha,eps,delta,bound`.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Hierarchy residual through both routes and the regression bound.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Score-to-drift identities and PF-ODE moments in the Gaussian testbed.
    Pfode {
        /// Testbed config; the built-in three-dimensional testbed when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Time-integrated CRPS of a resolved observable against 2·Lip·d_T.
    Scores {
        /// Law-curve manifest.
        #[arg(long)]
        a: PathBuf,
        /// Law-curve manifest.
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        observable: PathBuf,
        /// Per-time CSV `t,crps,w1_pushforward,bound`.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the acceptance suite.
    VerifyAll {
        /// Reduced sizes.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = commands::SUITE_SEED)]
        seed: u64,
        /// Comma-separated criterion ids; all when absent.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[command(flatten)]
        output: Output,
    },
}

fn run(command: Command) -> Result<(Report, Output), Box<dyn std::error::Error>> {
    use commands::*;
    Ok(match command {
        Command::Gen { config, seed, out, output } => (gen(&config, seed, &out)?, output),
        Command::Evolve { input, out, horizon, dt, every, conservation, output } => {
            (evolve(&input, &out, horizon, dt, every, conservation.as_deref())?, output)
        }
        Command::Sample { config, input, seed, out, paths, output } => {
            (sample(&config, &input, seed, &out, paths.as_deref())?, output)
        }
        Command::Metrics { a, b, k, ks, sweep, output } => (metrics(&a, &b, k, &ks, sweep.as_deref())?, output),
        Command::Transport { a, b, p, sinkhorn_eps, curves, output } => {
            (transport(&a, &b, p, sinkhorn_eps, curves)?, output)
        }
        Command::Stability { a, b, horizon, dt, checkpoints, output } => {
            (stability(&a, &b, horizon, dt, checkpoints)?, output)
        }
        Command::Rollout { config, seed, ledger, output } => {
            (rollout(config.as_deref(), seed, ledger.as_deref())?, output)
        }
        Command::Certify { config, seed, output } => (certify(&config, seed)?, output),
        Command::Pfode { config, seed, output } => (pfode(config.as_deref(), seed)?, output),
        Command::Scores { a, b, observable, csv, output } => (scores(&a, &b, &observable, csv.as_deref())?, output),
        Command::VerifyAll { quick, seed, only, output } => (verify_all(quick, seed, &only)?, output),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    match run(cli.command) {
        Ok((mut report, output)) => {
            if output.wall_time {
                report.wall_time = Some(start.elapsed().as_secs_f64());
            }
            let written = match &output.report {
                Some(path) => report.write(path).map_err(|e| e.to_string()),
                None => report.to_json().map(|s| print!("{s}")).map_err(|e| e.to_string()),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            for c in report.failed() {
                eprintln!(
                    "check failed: {} = {:e} (bound {:e}, tolerance {:e})",
                    c.name, c.value, c.bound, c.tolerance
                );
            }
            ExitCode::from(if report.satisfied { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
