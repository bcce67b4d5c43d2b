mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stgnn_core::ErrorKind;

use settings::UsageError;

#[derive(Parser)]
#[command(
    name = "stgnn",
    version,
    about = "Network-wide traffic volume estimation from speeds and road descriptors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command.
#[derive(Args, Clone)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set model.hidden=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run seed; every random stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for data-parallel work (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grid road network.
    GenNet {
        #[command(flatten)]
        common: Common,
        /// Grid size as ROWSxCOLS.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        one_way_prob: Option<f64>,
    },
    /// Build the dual graph of a primal network and flag sensor nodes.
    BuildDual {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        primal: PathBuf,
        /// Merge chains of degree-2 intersections first.
        #[arg(long)]
        unify: bool,
        /// `length-weighted` or `arithmetic` averaging when unifying.
        #[arg(long, default_value = "length-weighted")]
        mean_mode: String,
        #[arg(long)]
        sensor_fraction: Option<f64>,
    },
    /// Generate speed and volume profiles on a dual graph.
    GenTraffic {
        #[command(flatten)]
        common: Common,
        /// Directory with dual_nodes.csv and dual_edges.csv.
        #[arg(long)]
        dual: PathBuf,
        /// `averaged` (one profile per weekday) or `raw` (individual days).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train one model per seed.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dual: PathBuf,
        /// Directory with speeds.csv and volumes.csv.
        #[arg(long)]
        traffic: PathBuf,
        /// Number of seeds, starting at the run seed.
        #[arg(long)]
        seeds: Option<usize>,
        /// Model variant (full, no_st_branch, no_spatial_branch,
        /// no_neighborhood, single_branch_fusion, undirected_gat).
        #[arg(long)]
        variant: Option<String>,
    },
    /// Score a checkpoint on its held-out sensors.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dual: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        /// Score every sensor instead of the held-out ones.
        #[arg(long)]
        all_sensors: bool,
    },
    /// Train the full model and every ablation for each seed.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dual: PathBuf,
        /// Weekday-averaged traffic directory.
        #[arg(long)]
        traffic: PathBuf,
        /// Raw-day traffic directory.
        #[arg(long)]
        raw_traffic: PathBuf,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Estimate volumes on every dual node.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dual: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        /// Day of the hour-slice extract (0 = Monday).
        #[arg(long, default_value_t = 1)]
        day: usize,
        #[arg(long, default_value_t = 9)]
        hour: usize,
    },
    /// Histograms of static descriptors, sensors against other nodes.
    ReportFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dual: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<stgnn_core::Error>().map(|e| e.kind()) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Numeric) => 4,
        Some(ErrorKind::Data) | None => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, result) = commands::dispatch(cli.command);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(e)
        }
    };
    if let Err(e) = settings::write_status(&common.out, code, result.as_ref().err()) {
        eprintln!("error: could not write status file: {e:#}");
    }
    ExitCode::from(code)
}
