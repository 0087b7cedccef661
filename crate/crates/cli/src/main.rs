#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::check::Suite;
use config::{RunConfig, SamplerKind};
use error::CliError;

/// Rydberg quench proposals for sampling binary designs through a discrete
/// latent autoencoder.
///
/// Units in the config file and in flags: frequencies (omega, delta,
/// detunings) in rad/μs, times in μs, lengths in μm, c6 in rad/μs·μm⁶.
#[derive(Debug, Parser)]
#[command(name = "rydgen", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Stream seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral gap of the quantum channel over a (detuning, time) grid.
    PhaseSweep(PhaseSweepArgs),
    /// Train an autoencoder on a directory of PGM/CSV designs.
    Train(TrainArgs),
    /// Run channel chains from encoded designs and decode the results.
    Sample(SampleArgs),
    /// Renyi/KL divergence of decoded samples from the Boltzmann target.
    Benchmark(BenchmarkArgs),
    /// Masked preparation of a target followed by a drive and measurements.
    Diffuse(DiffuseArgs),
    /// Property-check suites with a JSON report; exit status 3 on failure.
    Check(CheckArgs),
    /// Proposal and one-step channel kernels of the `[channel]` sampler.
    Kernel,
    /// Write a seeded synthetic dataset of rectangle designs as PGM files.
    MakeDataset(MakeDatasetArgs),
}

#[derive(Debug, Args)]
struct PhaseSweepArgs {
    /// Detuning range `lo:hi` in rad/μs, half-open.
    #[arg(long, value_name = "LO:HI")]
    delta_range: Option<String>,
    /// Time range `lo:hi` in μs, half-open.
    #[arg(long, value_name = "LO:HI")]
    t_range: Option<String>,
    /// Grid point counts `DELTAxT`.
    #[arg(long, value_name = "NxM")]
    grid: Option<String>,
    /// Temperature τ of the Metropolis step.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of `.pgm` / `.csv` designs.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct Starts {
    /// Start chains from the encoded designs in this directory.
    #[arg(long, value_name = "DIR", conflicts_with = "from_zeros")]
    data: Option<PathBuf>,
    /// Start chains from the all-zeros latent.
    #[arg(long)]
    from_zeros: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[command(flatten)]
    starts: Starts,
    #[arg(long, value_enum)]
    sampler: Option<SamplerKind>,
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[command(flatten)]
    starts: Starts,
    /// Draw samples from the exact target instead of a channel; fails with
    /// status 3 if any divergence exceeds 0.01.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Args)]
struct DiffuseArgs {
    /// Target bitstring, little-endian (character i is atom i).
    #[arg(long)]
    target: Option<String>,
    /// Decode outcomes with this model and report pixel distances.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long)]
    shots: Option<usize>,
    /// Drive duration in μs; defaults to π/(2Ω).
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    /// Corrupt the object under test to exercise the failure path.
    #[arg(long)]
    inject_fault: bool,
}

#[derive(Debug, Args)]
struct MakeDatasetArgs {
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value_t = 8)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
}

fn parse_range(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("expected LO:HI, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_grid(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("expected NxM, got {s:?}"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.common.out {
        cfg.out = Some(out);
    }
    if let Some(threads) = cli.common.threads {
        cfg.threads = Some(threads);
    }
    match &cli.command {
        Command::PhaseSweep(a) => {
            if let Some(r) = &a.delta_range {
                (cfg.sweep.delta_min, cfg.sweep.delta_max) = parse_range(r)?;
            }
            if let Some(r) = &a.t_range {
                (cfg.sweep.t_min, cfg.sweep.t_max) = parse_range(r)?;
            }
            if let Some(g) = &a.grid {
                (cfg.sweep.delta_count, cfg.sweep.t_count) = parse_grid(g)?;
            }
            if let Some(tau) = a.tau {
                cfg.sweep.tau = tau;
            }
        }
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
        }
        Command::Sample(a) => {
            if let Some(s) = a.sampler {
                cfg.channel.sampler = s;
            }
            if let Some(d) = a.depth {
                cfg.channel.depth = d;
            }
        }
        Command::Benchmark(a) => {
            if let Some(s) = a.samples {
                cfg.benchmark.samples = s;
            }
        }
        Command::Diffuse(a) => {
            if let Some(t) = &a.target {
                cfg.diffuse.target = Some(t.clone());
            }
            if let Some(s) = a.shots {
                cfg.diffuse.shots = s;
            }
            if a.t.is_some() {
                cfg.diffuse.t = a.t;
            }
        }
        Command::Check(_) | Command::Kernel | Command::MakeDataset(_) => {}
    }
    cfg.validate()?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context::new(cfg)?;
    match cli.command {
        Command::PhaseSweep(_) => commands::sweep::run(&ctx),
        Command::Train(a) => commands::train::run(&ctx, &a.data),
        Command::Sample(a) => commands::sample::run(&ctx, &a.model, a.count, a.starts.data.as_deref()),
        Command::Benchmark(a) => commands::benchmark::run(&ctx, &a.model, a.starts.data.as_deref(), a.exact),
        Command::Diffuse(a) => commands::diffuse::run(&ctx, a.model.as_deref()),
        Command::Check(a) => commands::check::run(&ctx, a.suite, a.inject_fault),
        Command::Kernel => commands::kernel::run(&ctx),
        Command::MakeDataset(a) => commands::make_dataset(&ctx, a.count, a.height, a.width),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
