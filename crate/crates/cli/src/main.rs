use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "crowdlens", version, about = "Crowd analytics service and tools")]
struct Cli {
    /// Service configuration file.
    #[arg(long, global = true, env = "CROWDLENS_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API and realtime ingestion until interrupted.
    Serve,
    /// Check a configuration file; prints findings and exits 1 if invalid.
    ValidateConfig {
        /// Defaults to --config.
        path: Option<PathBuf>,
        /// Also fetch every places source and build the catalog.
        #[arg(long)]
        places: bool,
    },
    /// Load a historical source into the snapshot file.
    Ingest {
        #[arg(long)]
        source: String,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        /// Defaults to the `snapshot` path of the service section.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Run a realtime source and print what it delivers.
    Replay {
        #[arg(long)]
        source: String,
        /// Speed factor, or `max`.
        #[arg(long)]
        speed: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write a deterministic synthetic scenario (places, samples, config).
    GenScenario {
        #[arg(long)]
        preset: crowdlens_core::scenario::Preset,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline analytics over the configured data.
    Query {
        #[command(subcommand)]
        query: Query,
    },
    /// Manage API keys in the auth store.
    Keys {
        /// Defaults to the `auth_store` path of the service section.
        #[arg(long)]
        store: Option<PathBuf>,
        #[command(subcommand)]
        action: KeyAction,
    },
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    metric: String,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
    /// GeoJSON Polygon (or lon/lat ring) limiting the places aggregated.
    #[arg(long)]
    region_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Agg::Sum)]
    agg: Agg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Query {
    /// Earliest instant of the largest aggregate.
    Peak(QueryArgs),
    /// Aggregate value per sample instant.
    Series(QueryArgs),
}

#[derive(Subcommand)]
enum KeyAction {
    /// Issue a key; the token is printed once and never stored.
    Add { label: String },
    Revoke { key_id: String },
    List {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Agg {
    Sum,
    Mean,
}

fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default.into());
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_ansi(std::io::stderr().is_terminal())
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(if matches!(cli.command, Command::Serve) { "info" } else { "warn" });
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(commands::run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
