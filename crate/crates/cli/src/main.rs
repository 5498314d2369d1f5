mod commands;
mod error;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "volsamp", version, about = "Exact volume sampling of matrix column subsets")]
struct Cli {
    /// Worker threads for enumeration and Monte Carlo (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Exact,
    Mc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw volume-sampled column subsets.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Fit least squares on volume-sampled labels and compare to the optimum.
    Regress {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Sample size (defaults to d).
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the expectation identities exactly or by Monte Carlo.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Suite::Exact)]
        suite: Suite,
        /// Sample size (defaults to d).
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        /// Number of averaged samples for the repeated-sampling check.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Enumeration cap on subsets.
        #[arg(long, default_value_t = 1_000_000)]
        cap: u128,
        /// Enumeration cap on k-tuples of subsets.
        #[arg(long, default_value_t = 100_000)]
        tuple_cap: u128,
    },
    /// Time the sampler on random Gaussian matrices.
    Bench {
        /// Configuration `d,n,s`; repeat the flag for several.
        #[arg(long = "config", value_parser = parse_config, required = true)]
        configs: Vec<(usize, usize, usize)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
}

fn parse_config(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected d,n,s but got {s:?}"));
    }
    let parse = |p: &str| p.parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

fn run(cli: Cli) -> Result<(report::RunReport, bool), CliError> {
    match cli.command {
        Command::Sample {
            input,
            size,
            seed,
            count,
        } => commands::sample(&input, size, seed, count),
        Command::Regress {
            input,
            labels,
            size,
            repeats,
            seed,
        } => commands::regress(&input, &labels, size, repeats, seed),
        Command::Verify {
            input,
            labels,
            suite,
            size,
            seed,
            replicates,
            repeats,
            cap,
            tuple_cap,
        } => commands::verify(commands::VerifyArgs {
            input: &input,
            labels: labels.as_deref(),
            suite,
            size,
            seed,
            replicates,
            repeats,
            caps: volsamp::suite::Caps {
                subsets: cap,
                tuples: tuple_cap,
            },
        }),
        Command::Bench {
            configs,
            seed,
            trials,
        } => commands::bench(&configs, seed, trials),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("warning: could not configure thread pool: {e}");
        }
    }
    match run(cli) {
        Ok((report, all_passed)) => {
            println!("{}", report.to_json());
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
