//! `modkalm`: enhance WAV files, benchmark the enhancers on mixtures, and
//! write diagnostics.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use modkalm::Mode;

use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "modkalm", version, about = "Modulation-domain Kalman speech enhancement")]
struct Cli {
    /// Worker threads for file-level parallelism (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enhance mono 16-bit WAV files.
    Enhance(EnhanceArgs),
    /// Mix clean speech with noise at several SNRs and score each enhancer.
    Bench(BenchArgs),
    /// Write prediction gains, component counts and counters for one file.
    Diagnose(DiagnoseArgs),
}

fn mode_parser() -> impl TypedValueParser<Value = Mode> {
    PossibleValuesParser::new(["logmmse", "mdkm", "mdkr"])
        .map(|s| s.parse::<Mode>().expect("listed modes parse"))
}

#[derive(Args, Debug, Clone, Default)]
pub struct EnhancerFlags {
    /// Enhancer.
    #[arg(long, value_parser = mode_parser())]
    mode: Option<Mode>,
    /// Speech LPC order.
    #[arg(long)]
    p: Option<usize>,
    /// Noise LPC order (0 for mdkm).
    #[arg(long)]
    q: Option<usize>,
    /// Acoustic frame length, ms.
    #[arg(long)]
    frame_ms: Option<f64>,
    /// Acoustic frame increment, ms.
    #[arg(long)]
    inc_ms: Option<f64>,
    /// Modulation frame length, ms.
    #[arg(long)]
    mod_frame_ms: Option<f64>,
    /// Maximum number of ring components.
    #[arg(long)]
    ring_cap: Option<usize>,
    /// File of `key = value` settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reject inputs whose sample rate differs.
    #[arg(long)]
    expect_rate: Option<u32>,
}

impl EnhancerFlags {
    fn settings(&self) -> Settings {
        Settings {
            mode: self.mode,
            p: self.p,
            q: self.q,
            frame_ms: self.frame_ms,
            inc_ms: self.inc_ms,
            mod_frame_ms: self.mod_frame_ms,
            ring_cap: self.ring_cap,
        }
    }
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    flags: EnhancerFlags,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Clean speech files; synthetic speech is used when none are given.
    #[arg(long, num_args = 1..)]
    clean: Vec<PathBuf>,
    /// Noise file; seeded white noise when absent.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Global SNRs of the mixtures, dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,0,5")]
    snr: Vec<f64>,
    /// Enhancers to score.
    #[arg(long, value_delimiter = ',', value_parser = mode_parser(), default_value = "logmmse,mdkm,mdkr")]
    modes: Vec<Mode>,
    /// Seed for synthetic speech and noise.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of synthetic utterances.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Length of each synthetic utterance, seconds.
    #[arg(long, default_value_t = 3.0)]
    duration: f64,
    /// Output directory for `bench.csv` and the diagnostics.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    flags: EnhancerFlags,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    input: PathBuf,
    /// Clean reference for the prediction gains.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    flags: EnhancerFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MODKALM_LOG", "warn")).init();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());

    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }

    let result = match &cli.command {
        Command::Enhance(args) => commands::enhance(args),
        Command::Bench(args) => commands::bench(args),
        Command::Diagnose(args) => commands::diagnose(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
