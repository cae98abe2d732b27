//! `dysfluency`: detection, calibration, scoring, synthesis, benchmarking
//! and the review service from one binary.

mod commands;
mod exit;
mod render;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "dysfluency",
    version,
    about = "Rule-based speech dysfluency detection"
)]
struct Cli {
    /// Rule config (flat JSON object; missing fields take defaults).
    #[arg(long, global = true, env = "DYSFLUENCY_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect dysfluencies in one or more recordings.
    Detect {
        #[arg(required = true)]
        audio: Vec<PathBuf>,
        /// Word alignment (CSV `word,start_s,end_s` or a TextGrid); single input only.
        #[arg(long)]
        alignment: Option<PathBuf>,
        /// Write here instead of stdout. Nothing is written on failure.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Worker threads for several inputs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Estimate a speaker's baseline rate and print a config fragment.
    Calibrate { audio: PathBuf },
    /// Score hypothesis events against reference annotations.
    Eval {
        /// Reference annotations (CSV `recording_id,kind,start_s,end_s`).
        reference: PathBuf,
        /// Hypothesis: the same CSV format, or JSON reports from `detect`.
        hypothesis: PathBuf,
        /// Minimum IoU for a match.
        #[arg(long, default_value_t = dysfluency_core::eval::DEFAULT_IOU)]
        iou: f64,
    },
    /// Generate synthetic recordings with annotations.
    Synth {
        /// Preset name (`standard-200`, `rate-N`, `trace`) or a JSON spec file.
        source: String,
        #[arg(long, short)]
        out: PathBuf,
        /// Seed for presets; overrides the seed of a spec file.
        #[arg(long)]
        seed: Option<u64>,
        /// Stretch every duration by this factor.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
    },
    /// Time the full pipeline on one recording.
    Bench {
        audio: PathBuf,
        /// Runs to time; the fastest is reported.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
    /// Run the HTTP review service.
    Serve {
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 64)]
        max_upload_mb: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", exit::describe(&e));
            ExitCode::from(exit::code_for(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = commands::load_config(cli.config.as_deref())?;
    let fmt = cli.format;
    match cli.command {
        Command::Detect {
            audio,
            alignment,
            output,
            jobs,
        } => commands::detect(
            &audio,
            alignment.as_deref(),
            output.as_deref(),
            jobs,
            &cfg,
            fmt,
        ),
        Command::Calibrate { audio } => commands::calibrate(&audio, &cfg, fmt),
        Command::Eval {
            reference,
            hypothesis,
            iou,
        } => commands::eval(&reference, &hypothesis, iou, fmt),
        Command::Synth {
            source,
            out,
            seed,
            time_scale,
        } => commands::synth(&source, &out, seed, time_scale, fmt),
        Command::Bench { audio, repeat } => commands::bench(&audio, repeat, &cfg, fmt),
        Command::Serve {
            data_dir,
            addr,
            max_upload_mb,
        } => commands::serve(data_dir, addr, max_upload_mb, cfg),
    }
}
