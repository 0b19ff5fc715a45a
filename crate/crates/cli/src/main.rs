use clap::{Parser, Subcommand};
use provconf_cli::commands::{cmd_fit, cmd_flag, cmd_generate, cmd_posterior, cmd_simulate};
use provconf_cli::{CliError, CliResult, RunConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "provconf", version, about = "Provider profiling with cluster-level confounding correction")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the empirical-null model and flag every provider.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write a posterior density grid for this provider (repeatable).
        #[arg(long = "posterior")]
        posterior: Vec<String>,
    },
    /// Flag providers against a saved fit.
    Flag {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a simulation scenario and write metrics.csv.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write posterior density grids for selected providers.
    Posterior {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "id", required = true)]
        ids: Vec<String>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write one synthetic provider dataset from a scenario file.
    Generate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit { input, config, out, seed, posterior } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.posterior_ids.extend(posterior);
            cmd_fit(&input, &cfg)
        }
        Command::Flag { fit, input, out } => cmd_flag(&fit, &input, &out),
        Command::Simulate { scenario, reps, seed, out } => cmd_simulate(&scenario, reps, seed, &out),
        Command::Posterior { fit, input, ids, points, out } => cmd_posterior(&fit, &input, &ids, points, &out),
        Command::Generate { scenario, seed, out } => cmd_generate(&scenario, seed, &out),
    }
}

fn main() {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("{}", e.record());
            std::process::exit(1);
        }
    }
}
