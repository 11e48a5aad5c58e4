use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use segflow::io::commands::{
    cmd_freq, cmd_oracle, cmd_partition, cmd_run, load_config, OracleSpec, EXIT_CONFIG,
};
use segflow::oracle::LineFamily;

/// Penalized segregation flow, frequency probes and optimal partitions.
#[derive(Parser)]
#[command(name = "segflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and write series, stages and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe the frequency at the configured bases of a finished run.
    Freq {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; defaults to output.dir.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Extract the limiting partition of a finished run.
    Partition {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Reference optimal partition of an interval or a square.
    Oracle {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        /// Nodes per axis for the 2-D search.
        #[arg(long, default_value_t = 65)]
        counts: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, value_enum, default_value = "axis-aligned-lines")]
        family: FamilyArg,
        /// Only every stride-th node line is tried as a cut.
        #[arg(long, default_value_t = 4)]
        stride: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum FamilyArg {
    AxisAlignedLines,
    VerticalLines,
    HorizontalLines,
}

impl From<FamilyArg> for LineFamily {
    fn from(f: FamilyArg) -> LineFamily {
        match f {
            FamilyArg::AxisAlignedLines => LineFamily::AxisAlignedLines,
            FamilyArg::VerticalLines => LineFamily::VerticalLines,
            FamilyArg::HorizontalLines => LineFamily::HorizontalLines,
        }
    }
}

fn configure_threads() -> Result<(), i32> {
    let Ok(v) = std::env::var("SEGFLOW_THREADS") else {
        return Ok(());
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            segflow::par::configure_threads(n);
            Ok(())
        }
        _ => {
            eprintln!("segflow: SEGFLOW_THREADS must be a positive integer, got {v:?}");
            Err(EXIT_CONFIG)
        }
    }
}

fn run(cli: Cli) -> i32 {
    if let Err(code) = configure_threads() {
        return code;
    }
    match cli.command {
        Command::Run { config, out } => match load_config(&config) {
            Ok(cfg) => {
                let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
                cmd_run(&cfg, &dir)
            }
            Err(code) => code,
        },
        Command::Freq { config, run } => match load_config(&config) {
            Ok(cfg) => cmd_freq(&cfg, &run.unwrap_or_else(|| cfg.output.dir.clone())),
            Err(code) => code,
        },
        Command::Partition { config, run } => match load_config(&config) {
            Ok(cfg) => cmd_partition(&cfg, &run.unwrap_or_else(|| cfg.output.dir.clone())),
            Err(code) => code,
        },
        Command::Oracle {
            dim,
            length,
            counts,
            m,
            family,
            stride,
            out,
        } => cmd_oracle(&OracleSpec {
            dim,
            length,
            counts,
            m,
            family: family.into(),
            stride,
            out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(run(cli) as u8)
}
