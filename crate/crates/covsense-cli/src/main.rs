use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use covsense::Error;

mod commands;
mod report;

use report::{Format, Report};

#[derive(Parser)]
#[command(name = "covsense", version, about = "Covert quantum sensing analysis")]
struct Cli {
    /// Numerical tolerance for equality and feasibility tests
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Base seed; overrides the seed stored in the scenario file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel code paths
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report entropic quantities in bits instead of nats
    #[arg(long, global = true)]
    bits: bool,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Machine,
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate a scenario and report the structural assumptions
    Check { file: PathBuf },
    /// Optimise the covert error exponent of a cq scenario
    Exponent {
        file: PathBuf,
        /// Covertness budget δ (nats) for the design weight α_n
        #[arg(long)]
        delta: Option<f64>,
        /// Blocklength for the design weight α_n
        #[arg(long)]
        n: Option<usize>,
        /// Slack λ in α_n = √(2δ(1−λ)/(n·max η))
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Exact and Monte-Carlo evaluation of the constant-composition strategy
    Simulate {
        file: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        zeta: Option<f64>,
        /// Monte-Carlo trials; 0 skips the sampled section
        #[arg(long)]
        trials: Option<usize>,
        /// Non-innocent input distribution, comma separated
        #[arg(long, value_delimiter = ',')]
        pbar: Option<Vec<f64>>,
    },
    /// Zero-error block strategy for a unitary family
    Unitary {
        file: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m_max: Option<usize>,
        /// Claimed error probability for the converse probes
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Boundedness test and ratio probe for the warden channel
    Geometry {
        file: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Second-order expansion of D(αρ₁ + (1−α)ρ₀ ‖ ρ₀) for every warden state
    Expand {
        file: PathBuf,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
}

pub struct Globals {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub units: report::Units,
}

/// Failures that are the caller's fault rather than a library error.
pub enum Failure {
    Lib(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoZeroEquivalentPair
        | Error::AssumptionViolated(_)
        | Error::SupportViolation(_)
        | Error::NotClassical(_)
        | Error::IdentityUnitary
        | Error::DegenerateAlpha
        | Error::PreconditionUnverifiable(_) => 2,
        Error::ScaleExceeded(_) | Error::BlockTooLong { .. } | Error::MNotFound(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if !covsense::exec::configure_threads(t) {
            eprintln!("warning: --threads ignored (pool already built or parallel feature off)");
        }
    }
    let globals = Globals {
        tol: cli.tol,
        seed: cli.seed,
        units: report::Units { bits: cli.bits },
    };
    let format = match cli.format {
        FormatArg::Text => Format::Text,
        FormatArg::Machine => Format::Machine,
    };
    match commands::run(&cli.command, &globals) {
        Ok((report, code)) => {
            print!("{}\n{}", Report::header(), report.body(format));
            ExitCode::from(code)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
