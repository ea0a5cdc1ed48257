use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use log::{info, warn};
use mobistore::casestudy::{
    build_report, day_problem, ingest_lmps, stationary_values, CaseStudyReport, LmpDataset, StationaryRun,
    VehicleProfile,
};
use mobistore::dispatch::{solve_dispatch, DispatchSolution, Model};
use mobistore::fixtures::{self, Instance};
use mobistore::io::{self, FleetFile};
use mobistore::marginal_value::{marginal_value_report, solve_price_arbitrage};
use mobistore::network::PowerNetwork;
use mobistore::qp::Tolerances;
use mobistore::relocation::{relocate_approx, relocate_fleet, Algorithm, RelocationResult};
use mobistore::storage::{Fleet, TransportModel, Trajectory};
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::config::{require, RunConfig};
use crate::FixtureKind;

/// SoC step used by `casestudy` when none is given, MWh.
const DEFAULT_CASE_STEP: f64 = 1e-4;

/// Writes `contents` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn read_network(cfg: &RunConfig) -> Result<PowerNetwork<f64>> {
    Ok(io::read_json("network", require(&cfg.network, "network")?)?)
}

fn read_fleet(path: &Path) -> Result<(Fleet<f64>, Option<Vec<Trajectory>>)> {
    let file: FleetFile<f64> = io::read_json("fleet", path)?;
    Ok(file.to_fleet()?)
}

fn empty_fleet(n: usize) -> Fleet<f64> {
    Fleet {
        units: vec![],
        transport: TransportModel::instant(n, 1.0, 0.0),
    }
}

/// Network, fleet and trajectories for a dispatch run.
fn grid_instance(cfg: &RunConfig) -> Result<Instance<f64>> {
    let network = read_network(cfg)?;
    let (fleet, embedded) = match &cfg.fleet {
        Some(p) => read_fleet(p)?,
        None => (empty_fleet(network.num_buses()), Some(vec![])),
    };
    let trajectories = match &cfg.trajectories {
        Some(p) => io::read_json("trajectories", p)?,
        None => embedded.context("every unit needs a trajectory (in the fleet file or via --trajectories)")?,
    };
    Ok(Instance {
        network,
        fleet,
        trajectories,
    })
}

pub fn validate(cfg: &RunConfig) -> Result<()> {
    let network = read_network(cfg)?;
    let violations = network.validate();
    let mut problems: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    if let Some(path) = &cfg.fleet {
        match read_fleet(path) {
            Ok((fleet, trajs)) => {
                if let Err(e) = fleet.validate(network.num_buses()) {
                    problems.push(e.to_string());
                }
                let trajs = match &cfg.trajectories {
                    Some(p) => Some(io::read_json::<Vec<Trajectory>>("trajectories", p)?),
                    None => trajs,
                };
                if let Some(trajs) = trajs {
                    if trajs.len() != fleet.units.len() {
                        problems.push(format!("{} trajectories for {} units", trajs.len(), fleet.units.len()));
                    }
                    for (unit, t) in fleet.units.iter().zip(&trajs) {
                        let periods = network.num_periods();
                        if let Err(e) = mobistore::storage::validate_trajectory(unit, t, &fleet.transport, periods) {
                            problems.push(e.to_string());
                        }
                    }
                }
            }
            Err(e) => problems.push(format!("{e:#}")),
        }
    }
    if problems.is_empty() {
        println!("ok");
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    Err(mobistore::Error::Invalid(format!("{} problem(s) found", problems.len())).into())
}

fn bus_labels(sol: &DispatchSolution<f64>) -> Vec<String> {
    sol.bus_ids.iter().map(|id| id.to_string()).collect()
}

pub fn dispatch(cfg: &RunConfig, model: Model, tol: &Tolerances<f64>) -> Result<()> {
    let inst = grid_instance(cfg)?;
    let sol = solve_dispatch(&inst.network, &inst.fleet, &inst.trajectories, model, tol)?;
    if sol.degenerate {
        warn!("binding constraints are linearly dependent; duals may not be unique");
    }
    let dir = cfg.out_dir();
    write_atomic(&dir, "solution.json", &io::to_json("dispatch-solution", &sol)?)?;
    write_atomic(&dir, "lmp.csv", &io::lmp_matrix_csv(&bus_labels(&sol), &sol.lmp)?)?;
    println!("objective {}", sol.objective);
    Ok(())
}

pub fn marginal_values(cfg: &RunConfig, tol: &Tolerances<f64>) -> Result<()> {
    let sol: DispatchSolution<f64> = io::read_json("dispatch-solution", require(&cfg.solution, "solution")?)?;
    let report = marginal_value_report(&sol, tol)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    let paths: Vec<Vec<f64>> = (0..sol.num_units()).map(|k| sol.path_prices(k)).collect();
    let dir = cfg.out_dir();
    write_atomic(&dir, "mv.json", &io::to_json("marginal-values", &report)?)?;
    write_atomic(&dir, "mv.csv", &io::mv_csv(&report, &paths)?)?;
    for u in &report.units {
        println!("{} {}", u.name, u.value);
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RelocationOutput {
    /// Bus or node label per index.
    labels: Vec<String>,
    results: Vec<RelocationResult<f64>>,
}

fn parse_date(date: Option<&str>, dataset: &LmpDataset<f64>) -> Result<NaiveDate> {
    match date {
        Some(d) => NaiveDate::parse_from_str(d, "%Y-%m-%d")
            .map_err(|e| mobistore::Error::Invalid(format!("bad --date {d:?}: {e}")).into()),
        None => Ok(dataset.start.date()),
    }
}

fn read_vehicle(path: &Path) -> Result<VehicleProfile> {
    let v: VehicleProfile = io::read_json("vehicle", path)?;
    v.validate()?;
    Ok(v)
}

pub fn relocate(cfg: &RunConfig, date: Option<&str>, tol: &Tolerances<f64>) -> Result<()> {
    let algo = cfg.algorithm(Algorithm::Rapid)?;
    let lmps = require(&cfg.lmps, "lmps")?;
    let (labels, prices, units, transport) = if let Some(nodes) = &cfg.nodes {
        let dataset = ingest_lmps::<f64>(lmps, nodes)?;
        let vehicle = read_vehicle(require(&cfg.vehicle, "vehicle")?)?;
        let day = parse_date(date, &dataset)?;
        let (prices, unit, transport) = day_problem(&dataset, &vehicle, day, true)?;
        (dataset.nodes.clone(), prices, vec![unit], transport)
    } else {
        let file = File::open(lmps).with_context(|| format!("opening {}", lmps.display()))?;
        let (labels, prices) = io::read_lmp_matrix::<f64, _>(file)?;
        let (fleet, _) = read_fleet(require(&cfg.fleet, "fleet")?)?;
        if fleet.transport.num_buses() != labels.len() {
            return Err(mobistore::Error::Dimension(format!(
                "LMP table has {} buses, travel-time matrix has {}",
                labels.len(),
                fleet.transport.num_buses()
            ))
            .into());
        }
        (labels, prices, fleet.units, fleet.transport)
    };
    let results = relocate_fleet(&units, &prices, &transport, algo, cfg.soc_step, tol)?;
    for r in &results {
        for w in &r.diagnostics.warnings {
            warn!("{}: {w}", r.unit);
        }
        let path: Vec<&str> = r.trajectory.iter().map(|&i| labels[i].as_str()).collect();
        println!("{} {} {}", r.unit, r.objective, path.join(" "));
    }
    let out = RelocationOutput { labels, results };
    write_atomic(&cfg.out_dir(), "relocation.json", &io::to_json("relocation", &out)?)
}

pub struct ArbitrageArgs {
    pub prices: Option<Vec<f64>>,
    pub bus: Option<String>,
    pub capacity: f64,
    pub initial_soc: f64,
    pub power_limit: Option<f64>,
}

pub fn arbitrage(cfg: &RunConfig, args: ArbitrageArgs, tol: &Tolerances<f64>) -> Result<()> {
    let prices = match (&args.prices, &cfg.lmps) {
        (Some(p), None) => p.clone(),
        (None, Some(path)) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let (labels, rows) = io::read_lmp_matrix::<f64, _>(file)?;
            let bus = args.bus.as_deref().context("--lmps needs --bus")?;
            let col = labels
                .iter()
                .position(|l| l == bus)
                .ok_or_else(|| mobistore::Error::Invalid(format!("no column {bus:?} in {}", path.display())))?;
            rows.iter().map(|r| r[col]).collect()
        }
        _ => bail!("give exactly one of --prices and --lmps"),
    };
    if prices.is_empty() {
        bail!("no prices given");
    }
    let limits = args.power_limit.map(|l| vec![l; prices.len()]);
    if !(args.capacity >= 0.0) || !(args.initial_soc >= 0.0 && args.initial_soc <= args.capacity) {
        return Err(mobistore::Error::Invalid("need 0 <= initial SoC <= capacity".into()).into());
    }
    let arb = solve_price_arbitrage(&prices, args.capacity, args.initial_soc, limits.as_deref(), tol)?;
    if !arb.unique {
        warn!("optimum is not unique; the binding pattern is unreliable");
    }
    println!("objective {}", arb.objective);
    write_atomic(&cfg.out_dir(), "arbitrage.json", &io::to_json("arbitrage", &arb)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseStudyOutput {
    report: CaseStudyReport<f64>,
    stationary: Vec<StationaryRun<f64>>,
}

pub fn casestudy(cfg: &RunConfig, date: Option<&str>) -> Result<()> {
    let dataset = ingest_lmps::<f64>(require(&cfg.lmps, "lmps")?, require(&cfg.nodes, "nodes")?)?;
    let vehicle = read_vehicle(require(&cfg.vehicle, "vehicle")?)?;
    let day = parse_date(date, &dataset)?;
    let h = cfg.soc_step.unwrap_or(DEFAULT_CASE_STEP);
    if !(h > 0.0 && h.is_finite()) {
        return Err(mobistore::Error::Invalid(format!("--soc-step must be positive, got {h}")).into());
    }
    let (prices, unit, transport) = day_problem(&dataset, &vehicle, day, true)?;
    let res = relocate_approx(&unit, &prices, &transport, h)?;
    let report = build_report(&dataset, &vehicle, day, &prices, &transport, res)?;
    let stationary = stationary_values(&dataset, &vehicle, day, h)?;
    let dir = cfg.out_dir();
    write_atomic(&dir, "table.csv", &io::table_csv(&report)?)?;
    write_atomic(&dir, "trace.csv", &io::trace_csv(&report)?)?;
    write_atomic(&dir, "spread.csv", &io::spread_csv(&report)?)?;
    println!(
        "gross {:.4} travel {:.4} net {:.4}",
        report.gross_usd, report.travel_usd, report.net_usd
    );
    for s in &stationary {
        println!("parked at {} net {:.4}", s.node, s.net_usd);
    }
    let out = CaseStudyOutput { report, stationary };
    write_atomic(&dir, "report.json", &io::to_json("case-study", &out)?)
}

fn write_instance(dir: &Path, inst: &Instance<f64>) -> Result<()> {
    write_atomic(dir, "network.json", &io::to_json("network", &inst.network)?)?;
    let fleet = FleetFile::from_fleet(&inst.fleet, Some(&inst.trajectories));
    write_atomic(dir, "fleet.json", &io::to_json("fleet", &fleet)?)
}

pub fn fixture(cfg: &RunConfig, kind: FixtureKind, buses: usize, periods: usize, nonnegative: bool) -> Result<()> {
    let dir = cfg.out_dir();
    let seed = cfg.seed.unwrap_or(0);
    if matches!(kind, FixtureKind::RandomDispatch | FixtureKind::RandomPrices) && (buses < 2 || periods < 1) {
        return Err(mobistore::Error::Invalid("random fixtures need at least 2 buses and 1 period".into()).into());
    }
    match kind {
        FixtureKind::Example1 => write_instance(&dir, &fixtures::example1()),
        FixtureKind::Example2 => write_instance(&dir, &fixtures::example2()),
        FixtureKind::Example3 => write_instance(&dir, &fixtures::example3()),
        FixtureKind::RandomDispatch => write_instance(&dir, &fixtures::random_dispatch(seed, buses, periods)),
        FixtureKind::RandomPrices => {
            let inst = fixtures::random_prices::<f64>(seed, buses, periods, nonnegative);
            let labels: Vec<String> = (0..buses).map(|i| i.to_string()).collect();
            write_atomic(&dir, "lmp.csv", &io::lmp_matrix_csv(&labels, &inst.prices)?)?;
            let fleet = Fleet {
                units: vec![inst.unit.clone()],
                transport: inst.transport.clone(),
            };
            let file: FleetFile<f64> = FleetFile::from_fleet(&fleet, None);
            write_atomic(&dir, "fleet.json", &io::to_json("fleet", &file)?)
        }
    }
}

