//! `encompass`: split-sample forecast-encompassing tests from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use encompass_core::inflation::Quarter;
use encompass_core::monte_carlo::ReportFormat;
use encompass_core::{Centering, EncError, HacConfig};

#[derive(Debug, Parser)]
#[command(
    name = "encompass",
    version,
    about = "Split-sample encompassing tests for nested direct multi-step forecasts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, global = true, default_value = "markdown", value_parser = parse_format)]
    pub format: ReportFormat,
    /// Write the result to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    /// Fixed Bartlett bandwidth M.
    #[arg(long, conflicts_with = "bandwidth_c")]
    pub bandwidth: Option<usize>,
    /// Constant c in the automatic rule M = floor(c n^(1/3)).
    #[arg(long)]
    pub bandwidth_c: Option<f64>,
}

impl BandwidthArgs {
    fn resolve(&self) -> HacConfig {
        match (self.bandwidth, self.bandwidth_c) {
            (Some(bandwidth), _) => HacConfig::Fixed { bandwidth },
            (None, Some(c)) => HacConfig::Auto { c },
            (None, None) => HacConfig::default(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the test on a two-column CSV of forecast errors (header e1,e2).
    Test {
        errors: PathBuf,
        #[arg(long, default_value_t = 0.45)]
        mu0: f64,
        #[command(flatten)]
        bandwidth: BandwidthArgs,
        /// Centre the HAC terms per segment or on the pooled mean.
        #[arg(long, default_value = "segment")]
        centering: Centering,
        /// Forecast horizon the errors were produced at (reported only).
        #[arg(long, default_value_t = 1)]
        h: usize,
        /// First forecast origin (reported only).
        #[arg(long, default_value_t = 1)]
        k0: usize,
    },
    /// Monte Carlo size experiment from a TOML grid.
    McSize(McArgs),
    /// Monte Carlo power experiment from a TOML grid.
    McPower(McArgs),
    /// Asymptotic drift and power over a grid of split points.
    LocalPower {
        /// Split points; defaults to 0.30, 0.32, ..., 0.48.
        #[arg(long)]
        mu0: Vec<f64>,
        #[arg(long, default_value_t = 0.25)]
        pi0: f64,
        /// Long-run variance of the limiting moment process.
        #[arg(long, default_value_t = 1.0)]
        phi2: f64,
        #[arg(long, default_value_t = 0.10)]
        level: f64,
        /// TOML file with c, m11, m12, m21, m22; defaults to the scalar case.
        #[arg(long)]
        blocks: Option<PathBuf>,
        /// Multipliers applied to c; each adds a row per split point.
        #[arg(long)]
        c_scale: Vec<f64>,
        /// Read the blocks as the mildly integrated normalization.
        #[arg(long)]
        mild: bool,
    },
    /// Global-versus-local inflation study on a country price panel.
    Inflation {
        panel: PathBuf,
        #[arg(long, default_value_t = 4)]
        h: usize,
        #[arg(long, default_value_t = 0.25)]
        pi0: f64,
        #[arg(long, default_value_t = 4)]
        p2: usize,
        #[arg(long, default_value_t = 8)]
        p_max: usize,
        /// Split points, one p-value column each; defaults to 0.40 and 0.45.
        #[arg(long)]
        mu0: Vec<f64>,
        #[command(flatten)]
        bandwidth: BandwidthArgs,
        /// Drop each country from its own global average.
        #[arg(long)]
        exclude_own: bool,
        /// Comma-separated country codes to keep.
        #[arg(long, value_delimiter = ',')]
        countries: Vec<String>,
        #[arg(long)]
        from: Option<Quarter>,
        #[arg(long)]
        to: Option<Quarter>,
    },
}

#[derive(Debug, Args)]
pub struct McArgs {
    pub config: PathBuf,
    /// Override the replication count in the config.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the base seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: EncError| e.to_string())
}

/// 2 for invalid input, 3 for numerical failure.
fn exit_code(e: &EncError) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.output.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
