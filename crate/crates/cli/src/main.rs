use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use relay_auction::dynamics::{calibrate_price, solve_ne, threshold_price, NeOutcome};
use relay_auction::experiments::{
    emit_report, run_multi_user, run_two_user_sweep, MultiUserSpec, Report, ReportFormat, ReportMeta, TwoUserSweepSpec,
};
use relay_auction::oracles::{efficient_allocation, fair_allocation, vcg_auction, DEFAULT_DELTA, DEFAULT_GRID};
use relay_auction::{AuctionKind, AuctionParams, NetworkScenario};
use serde_json::json;

#[derive(Parser)]
#[command(name = "relay-auction", version, about = "Share auctions for cooperative relay power")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the relay along the y axis in the two-user network.
    TwoUserSweep(SweepArgs),
    /// Average both auctions over random multi-user topologies.
    MultiUser(MultiArgs),
    /// Equilibrium of one auction on a scenario file.
    NeSolve(NeArgs),
    /// Centralized benchmark allocation.
    Oracle(OracleArgs),
    /// Lowest price with an equilibrium.
    ThresholdPrice(ThresholdArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Auction {
    Snr,
    Power,
}

impl From<Auction> for AuctionKind {
    fn from(a: Auction) -> Self {
        match a {
            Auction::Snr => AuctionKind::Snr,
            Auction::Power => AuctionKind::Power,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON spec overriding the defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Relay step in meters.
    #[arg(long)]
    step: Option<f64>,
    /// Grid points for the VCG optimizer.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Utilization target for price calibration.
    #[arg(long)]
    calibrate: Option<f64>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct MultiArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    topologies: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    calibrate: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct NeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    auction: Auction,
    #[arg(long, conflicts_with = "calibrate")]
    price: Option<f64>,
    #[arg(long)]
    calibrate: Option<f64>,
    /// Reserve bid β.
    #[arg(long, default_value_t = 1.0)]
    reserve: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Efficient,
    Fair,
    Vcg,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(value_enum)]
    kind: OracleKind,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    auction: Auction,
}

fn read_spec<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(T::default()),
    }
}

fn load_scenario(path: &PathBuf) -> Result<NetworkScenario> {
    NetworkScenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_report(report: Report, args: &ReportArgs, stem: &str) -> Result<()> {
    for path in emit_report(&report, &args.out, stem, args.format.into())? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TwoUserSweep(args) => {
            let mut spec: TwoUserSweepSpec = read_spec(&args.spec)?;
            if let Some(v) = args.step {
                spec.step = v;
            }
            if let Some(v) = args.grid {
                spec.grid = v;
            }
            if let Some(v) = args.delta {
                spec.delta = v;
            }
            if let Some(v) = args.calibrate {
                spec.target = v;
            }
            let rows = run_two_user_sweep(&spec)?;
            let report = Report { meta: ReportMeta::two_user(&spec)?, rows };
            write_report(report, &args.report, "two_user_sweep")
        }
        Command::MultiUser(args) => {
            let mut spec: MultiUserSpec = read_spec(&args.spec)?;
            if let Some(v) = args.seed {
                spec.seed = v;
            }
            if let Some(v) = args.topologies {
                spec.topologies = v;
            }
            if let Some(v) = args.users {
                spec.users = v;
            }
            if let Some(v) = args.calibrate {
                spec.target = v;
            }
            if let Some(v) = args.grid {
                spec.grid = v;
            }
            if let Some(v) = args.delta {
                spec.delta = v;
            }
            let rows = run_multi_user(&spec)?;
            let report = Report { meta: ReportMeta::multi_user(&spec)?, rows };
            write_report(report, &args.report, "multi_user")
        }
        Command::NeSolve(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let kind = args.auction.into();
            match (args.price, args.calibrate) {
                (Some(price), _) => {
                    let params = AuctionParams::new(kind, price, args.reserve)?;
                    match solve_ne(&scenario, &params)? {
                        NeOutcome::Unique(eq) => print_json(&eq),
                        NeOutcome::None(why) => print_json(&json!({ "no_equilibrium": why })),
                    }
                }
                (None, Some(target)) => print_json(&calibrate_price(&scenario, kind, target, args.reserve)?),
                (None, None) => bail!("one of --price or --calibrate is required"),
            }
        }
        Command::Oracle(args) => {
            let scenario = load_scenario(&args.scenario)?;
            match args.kind {
                OracleKind::Efficient => print_json(&efficient_allocation(&scenario, args.delta, args.grid)?),
                OracleKind::Fair => print_json(&fair_allocation(&scenario, args.delta)?),
                OracleKind::Vcg => print_json(&vcg_auction(&scenario, args.delta, args.grid)?),
            }
        }
        Command::ThresholdPrice(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let kind: AuctionKind = args.auction.into();
            let price = threshold_price(&scenario, kind)?;
            print_json(&json!({ "auction": kind, "threshold_price": price }))
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
