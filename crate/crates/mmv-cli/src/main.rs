//! Command-line front end: data ingestion, fitting, sampling, density
//! evaluation, transforms and verification.
//!
//! Exit codes: 0 success, 1 usage, 2 malformed data, 3 numeric failure.

mod commands;
mod formats;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
    /// Downstream closed the output stream; not an error for scripting.
    Pipe,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Self::Numeric(msg.into())
    }
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
            Self::Pipe => 0,
        }
    }
    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Numeric(m) => m,
            Self::Pipe => "",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            CliError::Pipe
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mmv",
    about = "Multimatricvariate distributions: fit, sample, evaluate, transform, verify",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the dependent or independent matrix beta II model to an SPD collection.
    Fit {
        /// Matrix-collection JSON file (kind = spd).
        input: std::path::PathBuf,
        /// Likelihood: dependent | independent.
        #[arg(long)]
        model: String,
        /// Explicit seed for a0 (with --seed-a); default is the univariate moment seed.
        #[arg(long)]
        seed_a0: Option<f64>,
        /// Explicit seed for a (with --seed-a0).
        #[arg(long)]
        seed_a: Option<f64>,
        /// Jittered optimizer restarts.
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        /// Output path for the fit-result JSON (stdout when omitted).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Draw tuples from a family; one JSON draw per line.
    Sample {
        /// Family name, e.g. beta2, wishart-t, gen-wishart, tri-wtp2.
        #[arg(long)]
        family: String,
        /// Integer shape "m,n0,n1,..." (block row counts after m).
        #[arg(long)]
        shape: String,
        /// Kernel: gaussian | pearson7:nu=V | kotz:T=..,r=..,s=..
        #[arg(long, default_value = "gaussian")]
        kernel: String,
        /// Number of draws.
        #[arg(long)]
        n: usize,
        /// Base seed; draw i uses stream i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Head count k1 for the inverted families.
        #[arg(long, default_value_t = 0)]
        split: usize,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Evaluate a family's log-density; one value per input item or draw line.
    Pdf {
        /// Matrix-collection JSON (single-matrix families) or JSON-lines draws.
        input: std::path::PathBuf,
        #[arg(long)]
        family: String,
        /// Integer shape "m,n0,n1,..."; with --params only the counts matter.
        #[arg(long)]
        shape: String,
        /// Real shape parameters "a0=..,a=.." overriding the integer shape.
        #[arg(long)]
        params: Option<String>,
        /// Kernel for kernel-indexed families.
        #[arg(long)]
        kernel: Option<String>,
        /// Head count k1 for the inverted families.
        #[arg(long, default_value_t = 0)]
        split: usize,
    },
    /// Reduce a block collection to SPD Gram matrices, optionally
    /// anchor-normalized.
    Gram {
        /// Matrix-collection JSON file (kind = block).
        input: std::path::PathBuf,
        /// Designate item i as the anchor; output has one item per remaining block.
        #[arg(long)]
        anchor_index: Option<usize>,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Apply a named transform to every item of a collection.
    Transform {
        /// Matrix-collection JSON file (kind matching the transform).
        input: std::path::PathBuf,
        /// t-to-r | r-to-t | beta1-to-beta2 | beta2-to-beta1 | invert-spd.
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Run verification checks; JSON report per line, nonzero exit on failure.
    Verify {
        /// Run a single named check.
        #[arg(long)]
        check: Option<String>,
        /// Run the whole registered suite.
        #[arg(long)]
        all: bool,
        /// List registered check names and exit.
        #[arg(long)]
        list: bool,
    },
}

fn configure_threads() {
    if let Ok(v) = std::env::var("MMV_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Fit {
            input,
            model,
            seed_a0,
            seed_a,
            restarts,
            out,
        } => commands::fit(&input, &model, seed_a0, seed_a, restarts, out.as_deref()),
        Command::Sample {
            family,
            shape,
            kernel,
            n,
            seed,
            split,
            out,
        } => commands::sample(&family, &shape, &kernel, n, seed, split, out.as_deref()),
        Command::Pdf {
            input,
            family,
            shape,
            params,
            kernel,
            split,
        } => commands::pdf(
            &input,
            &family,
            &shape,
            params.as_deref(),
            kernel.as_deref(),
            split,
        ),
        Command::Gram {
            input,
            anchor_index,
            out,
        } => commands::gram(&input, anchor_index, out.as_deref()),
        Command::Transform { input, name, out } => {
            commands::transform(&input, &name, out.as_deref())
        }
        Command::Verify { check, all, list } => commands::verify(check.as_deref(), all, list),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Pipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
