mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "mobistore", version, about = "Dispatch, marginal values and relocation of mobile energy storage")]
struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Stationarity, feasibility and complementarity tolerance.
    #[arg(long, global = true)]
    tol_kkt: Option<f64>,
    /// Slack below which a constraint counts as binding.
    #[arg(long, global = true)]
    tol_binding: Option<f64>,
    /// More log output; repeat for more detail.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct GridInputs {
    /// Network document.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Fleet document.
    #[arg(long)]
    fleet: Option<PathBuf>,
    /// JSON list of bus-index trajectories, one per unit; overrides those in the fleet file.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct PriceInputs {
    /// LMP table: a period-by-bus matrix, or long format when --nodes is given.
    #[arg(long)]
    lmps: Option<PathBuf>,
    /// Node metadata `node,lat,lon`.
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Vehicle profile JSON.
    #[arg(long)]
    vehicle: Option<PathBuf>,
    /// Day to run (YYYY-MM-DD); defaults to the first day in the data.
    #[arg(long)]
    date: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    General,
    Rapid,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum FixtureKind {
    Example1,
    Example2,
    Example3,
    RandomDispatch,
    RandomPrices,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a network and, optionally, a fleet against each other.
    Validate {
        #[command(flatten)]
        inputs: GridInputs,
    },
    /// Solve the multi-period dispatch and write the solution and LMPs.
    Dispatch {
        #[command(flatten)]
        inputs: GridInputs,
        #[arg(long, value_enum, default_value = "general")]
        model: ModelArg,
    },
    /// Marginal values of storage, wires and stationary units from a solution.
    Mv {
        /// Dispatch solution document.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Optimize storage trajectories against a price field.
    Relocate {
        #[command(flatten)]
        prices: PriceInputs,
        /// Fleet document (matrix LMP input).
        #[arg(long)]
        fleet: Option<PathBuf>,
        /// rapid, exact, approx, brute or continuous-dp.
        #[arg(long)]
        algo: Option<String>,
        /// SoC step for the approximate DP, MWh.
        #[arg(long)]
        soc_step: Option<f64>,
    },
    /// Single-unit price arbitrage on one price series.
    Arbitrage {
        /// Comma-separated prices, $/MWh.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        prices: Option<Vec<f64>>,
        /// Period-by-bus LMP matrix to take the series from.
        #[arg(long)]
        lmps: Option<PathBuf>,
        /// Column label of --lmps.
        #[arg(long)]
        bus: Option<String>,
        /// Energy capacity, MWh.
        #[arg(long)]
        capacity: f64,
        #[arg(long, default_value_t = 0.0)]
        initial_soc: f64,
        /// Energy moved per period at most, MWh; unlimited when absent.
        #[arg(long)]
        power_limit: Option<f64>,
    },
    /// Daily vehicle arbitrage on nodal prices with travel between nodes.
    Casestudy {
        #[command(flatten)]
        prices: PriceInputs,
        /// SoC step, MWh.
        #[arg(long)]
        soc_step: Option<f64>,
    },
    /// Write a reference or seeded random instance.
    Fixture {
        #[arg(long, value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        buses: usize,
        #[arg(long, default_value_t = 4)]
        periods: usize,
        /// Random prices in [0, 50] instead of [-50, 50].
        #[arg(long)]
        nonnegative: bool,
    },
}

impl Command {
    fn overrides(&self) -> RunConfig {
        let mut c = RunConfig::default();
        match self {
            Command::Validate { inputs } | Command::Dispatch { inputs, .. } => {
                c.network = inputs.network.clone();
                c.fleet = inputs.fleet.clone();
                c.trajectories = inputs.trajectories.clone();
            }
            Command::Mv { solution } => c.solution = solution.clone(),
            Command::Relocate {
                prices,
                fleet,
                algo,
                soc_step,
            } => {
                c.lmps = prices.lmps.clone();
                c.nodes = prices.nodes.clone();
                c.vehicle = prices.vehicle.clone();
                c.fleet = fleet.clone();
                c.algo = algo.clone();
                c.soc_step = *soc_step;
            }
            Command::Arbitrage { lmps, .. } => c.lmps = lmps.clone(),
            Command::Casestudy { prices, soc_step } => {
                c.lmps = prices.lmps.clone();
                c.nodes = prices.nodes.clone();
                c.vehicle = prices.vehicle.clone();
                c.soc_step = *soc_step;
            }
            Command::Fixture { seed, .. } => c.seed = *seed,
        }
        c
    }
}

/// Exit status for a failed run: 2 when a solver could not produce an
/// answer, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use mobistore::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible { .. } | Error::Unbounded | Error::Solver(_) | Error::NoAdmissiblePattern { .. }) => 2,
        _ => 1,
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("MOBISTORE_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("MOBISTORE_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        out_dir: cli.out_dir.clone(),
        tol_kkt: cli.tol_kkt,
        tol_binding: cli.tol_binding,
        verbosity: (cli.verbose > 0).then_some(cli.verbose),
        ..cli.command.overrides()
    };
    let cfg = base.merge(&flags);
    init_logging(cfg.verbosity.unwrap_or(0));
    init_threads()?;
    let tol = cfg.tolerances()?;
    match cli.command {
        Command::Validate { .. } => commands::validate(&cfg),
        Command::Dispatch { model, .. } => {
            let model = match model {
                ModelArg::General => mobistore::dispatch::Model::General,
                ModelArg::Rapid => mobistore::dispatch::Model::Rapid,
            };
            commands::dispatch(&cfg, model, &tol)
        }
        Command::Mv { .. } => commands::marginal_values(&cfg, &tol),
        Command::Relocate { prices, .. } => commands::relocate(&cfg, prices.date.as_deref(), &tol),
        Command::Arbitrage {
            prices,
            bus,
            capacity,
            initial_soc,
            power_limit,
            ..
        } => commands::arbitrage(
            &cfg,
            commands::ArbitrageArgs {
                prices,
                bus,
                capacity,
                initial_soc,
                power_limit,
            },
            &tol,
        ),
        Command::Casestudy { prices, .. } => commands::casestudy(&cfg, prices.date.as_deref()),
        Command::Fixture {
            kind,
            buses,
            periods,
            nonnegative,
            ..
        } => commands::fixture(&cfg, kind, buses, periods, nonnegative),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
