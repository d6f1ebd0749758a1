use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use uav_relay::scenario::{generate, GeneratorConfig, Scenario};
use uav_relay_cli::trace::trace;
use uav_relay_cli::{run, CliError, ExperimentSpec, RunOptions};

#[derive(Parser)]
#[command(version, about = "UAV relay placement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write trials.csv, summary.csv and timings.csv.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; defaults to the spec's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the spec's trials per sweep point.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the spec's seed base.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long, default_value_t = default_parallel())]
        parallel: usize,
        /// Keep trials already written to the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Solve one scenario and write its iteration trace.
    Trace {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a scenario from a generator config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn default_parallel() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` when some trial errored.
fn execute(cmd: Command) -> Result<bool, CliError> {
    match cmd {
        Command::Run {
            spec,
            out,
            trials,
            seed,
            parallel,
            resume,
        } => {
            let mut s = ExperimentSpec::load(&spec)?;
            if let Some(t) = trials {
                s.trials = t;
            }
            if let Some(b) = seed {
                s.seed_base = b;
            }
            let out_dir = out
                .or_else(|| s.out_dir.clone())
                .ok_or_else(|| CliError::Spec("no output directory: pass --out or set out_dir".into()))?;
            let outcome = run(
                &s,
                &RunOptions {
                    out_dir: out_dir.clone(),
                    parallel,
                    resume,
                },
            )?;
            for row in &outcome.summary {
                println!(
                    "{}={} {:<6} mean {:>9} Mbps over {} trials ({} errors)",
                    row.sweep_variable,
                    row.sweep_value,
                    row.scheme,
                    row.mean_min_capacity_mbps.map_or("-".into(), |m| format!("{m:.3}")),
                    row.trials - row.errors,
                    row.errors
                );
            }
            println!("results in {}", out_dir.display());
            Ok(outcome.errored == 0)
        }
        Command::Trace { scenario, out } => {
            let s = Scenario::load(&scenario)?;
            let (sol, tr) = trace(&s, &out)?;
            println!(
                "{} outer iterations, min capacity {:.3} Mbps at ({:.2}, {:.2}, {:.2}), converged: {}",
                tr.outer.len(),
                sol.min_capacity_bps / uav_relay::BPS_PER_MBPS,
                sol.x.x,
                sol.x.y,
                sol.x.z,
                sol.converged
            );
            Ok(true)
        }
        Command::Gen { config, seed, out } => {
            let text = fs::read_to_string(&config).map_err(CliError::io(&config))?;
            let c: GeneratorConfig = serde_json::from_str(&text).map_err(|source| CliError::Json {
                path: config.clone(),
                source,
            })?;
            generate(&c, seed)?.save(&out)?;
            Ok(true)
        }
    }
}
