use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scrub_core::ScrubError;

mod commands;

/// Exit codes shared by every subcommand.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAIL: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const ENVIRONMENT: u8 = 3;
    pub const REJECTED: u8 = 4;
}

#[derive(Parser)]
#[command(name = "scrub", version, about = "Ingest, describe, select and anonymize source repositories")]
struct Cli {
    /// JSON config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Bundle,
    Archive,
    Remote,
}

impl From<ChannelArg> for scrub_core::Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Bundle => scrub_core::Channel::Bundle,
            ChannelArg::Archive => scrub_core::Channel::Archive,
            ChannelArg::Remote => scrub_core::Channel::Remote,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Turn a bundle, source archive directory or remote into a bundle.
    Ingest {
        #[arg(long, value_enum)]
        channel: ChannelArg,
        #[arg(long)]
        source: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold_mb: Option<f64>,
        /// Append the source to this file on success.
        #[arg(long)]
        ok_file: Option<PathBuf>,
    },
    /// Extract the metadata record of a bundle or repository.
    Meta {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Apply the selection filter to a metadata CSV.
    Select {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Anonymize working tree and history, then run the gate.
    Sanitize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where a bundle that fails the gate goes (default: `quarantine/` beside --out).
        #[arg(long)]
        quarantine: Option<PathBuf>,
        /// Salt file; otherwise `SCRUB_SALT`.
        #[arg(long)]
        salt_file: Option<PathBuf>,
        #[arg(long)]
        require_ner: bool,
    },
    /// Re-scan a bundle and report residual findings.
    Gate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        require_ner: bool,
    },
    /// Corpus tables from a directory of metadata CSVs.
    Report {
        #[arg(long)]
        csv_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// ingest → meta → select → sanitize → gate for one repository.
    Curate {
        #[arg(long, value_enum, default_value = "bundle")]
        channel: ChannelArg,
        #[arg(long)]
        source: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        threshold_mb: Option<f64>,
        #[arg(long)]
        salt_file: Option<PathBuf>,
        #[arg(long)]
        quarantine: Option<PathBuf>,
        #[arg(long)]
        require_ner: bool,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<scrub_core::Config> {
    Ok(match path {
        Some(p) => scrub_core::Config::load(p)?,
        None => scrub_core::Config::default(),
    })
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ScrubError>() {
        Some(e) if e.is_environment() => exit::ENVIRONMENT,
        Some(ScrubError::Config(_) | ScrubError::EmptySalt | ScrubError::RulesFileInvalid { .. }) => exit::USAGE,
        _ => exit::FAIL,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { channel, source, out, threshold_mb, ok_file } => commands::ingest(
            &cfg,
            channel.into(),
            &source,
            &out,
            threshold_mb,
            ok_file.as_deref(),
        ),
        Command::Meta { input, csv, json } => commands::meta(&cfg, &input, &csv, json.as_deref()),
        Command::Select { csv } => commands::select(&csv),
        Command::Sanitize { input, out, quarantine, salt_file, require_ner } => {
            commands::sanitize(&cfg, &input, &out, quarantine.as_deref(), salt_file.as_deref(), require_ner)
        }
        Command::Gate { input, require_ner } => commands::gate(&cfg, &input, require_ner),
        Command::Report { csv_dir, out } => commands::report(&csv_dir, &out),
        Command::Curate { channel, source, out_dir, threshold_mb, salt_file, quarantine, require_ner } => {
            commands::curate(
                &cfg,
                commands::CurateArgs {
                    channel: channel.into(),
                    source: &source,
                    out_dir: &out_dir,
                    threshold_mb,
                    salt_file: salt_file.as_deref(),
                    quarantine: quarantine.as_deref(),
                    require_ner,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = e.downcast_ref::<ScrubError>().map_or("ERROR", ScrubError::code);
            eprintln!("scrub: {code}: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
