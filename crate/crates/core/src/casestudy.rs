//! Price-arbitrage relocation of a single vehicle over one day of nodal
//! prices.
//!
//! Units: prices are $/MWh and energies MWh internally. Vehicle inputs
//! arrive in kWh, kW and ¢/mile and are converted once, in
//! [`VehicleProfile::to_unit`] and [`travel_matrices`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::relocation::{relocate_approx, RelocationResult};
use crate::scalar::Scalar;
use crate::storage::{MobileStorageUnit, PowerRating, TransportModel};

pub const EARTH_RADIUS_MILES: f64 = 3958.8;
const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%m/%d/%Y %I:%M:%S %p",
];
const HOURS_PER_DAY: usize = 24;

/// Hourly nodal prices with node geography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmpDataset<S> {
    pub nodes: Vec<String>,
    /// `(lat, lon)` in degrees.
    pub coords: Vec<(f64, f64)>,
    /// First hour of the range, wall-clock time in `timezone`.
    pub start: NaiveDateTime,
    /// `prices[h][i]`, $/MWh.
    pub prices: Vec<Vec<S>>,
    /// `UTC`, a fixed offset such as `-04:00`, or `local` when the input
    /// carries no offset.
    pub timezone: String,
}

impl<S: Scalar> LmpDataset<S> {
    pub fn num_hours(&self) -> usize {
        self.prices.len()
    }

    pub fn timestamp(&self, hour: usize) -> NaiveDateTime {
        self.start + Duration::hours(hour as i64)
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Index of the first hour of `date` if the whole day is covered.
    pub fn day_offset(&self, date: NaiveDate) -> Result<usize> {
        let midnight = date.and_hms_opt(0, 0, 0).expect("midnight exists");
        let off = (midnight - self.start).num_hours();
        if off < 0 || off as usize + HOURS_PER_DAY > self.num_hours() {
            return Err(Error::Invalid(format!(
                "date {date} is not fully covered by the dataset ({} to {})",
                self.start,
                self.timestamp(self.num_hours().saturating_sub(1))
            )));
        }
        Ok(off as usize)
    }

    /// The 24 hourly price rows of `date`.
    pub fn day_prices(&self, date: NaiveDate) -> Result<Vec<Vec<S>>> {
        let off = self.day_offset(date)?;
        Ok(self.prices[off..off + HOURS_PER_DAY].to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::Data(format!("need at least 2 nodes, got {}", self.nodes.len())));
        }
        if self.coords.len() != self.nodes.len() {
            return Err(Error::Dimension("one coordinate pair per node".into()));
        }
        for (n, &(lat, lon)) in self.nodes.iter().zip(&self.coords) {
            check_coords(n, lat, lon)?;
        }
        for (h, row) in self.prices.iter().enumerate() {
            if row.len() != self.nodes.len() {
                return Err(Error::Dimension(format!("hour {h} has {} prices", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite price at {}", self.timestamp(h))));
            }
        }
        Ok(())
    }
}

fn check_coords(node: &str, lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Data(format!("node {node}: coordinates ({lat}, {lon}) out of range")));
    }
    Ok(())
}

/// Parses an ISO-8601 timestamp. Returns wall-clock time and the offset tag.
fn parse_timestamp(s: &str) -> Result<(NaiveDateTime, String)> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        let tag = if s.ends_with('Z') || s.ends_with('z') {
            "UTC".to_string()
        } else {
            dt.offset().to_string()
        };
        return Ok((dt.naive_local(), tag));
    }
    for f in TIMESTAMP_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Ok((t, "local".into()));
        }
    }
    Err(Error::Data(format!("cannot parse timestamp {s:?}")))
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    node: String,
    lat: f64,
    lon: f64,
}

/// Reads `node,lat,lon` rows.
pub fn read_nodes<R: Read>(reader: R) -> Result<Vec<(String, (f64, f64))>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<(String, (f64, f64))> = Vec::new();
    for row in rdr.deserialize() {
        let r: NodeRow = row?;
        check_coords(&r.node, r.lat, r.lon)?;
        if out.iter().any(|(n, _)| *n == r.node) {
            return Err(Error::Data(format!("node {} listed twice", r.node)));
        }
        out.push((r.node, (r.lat, r.lon)));
    }
    Ok(out)
}

/// Builds a dataset from price and node metadata readers. The price CSV
/// uses the columns `timestamp,node,lmp_usd_per_mwh`; PJM DataMiner exports
/// (`datetime_beginning_ept`, `pnode_name`, `total_lmp_da` or
/// `total_lmp_rt`) are accepted as well.
pub fn ingest_lmps_from<S: Scalar, R1: Read, R2: Read>(prices: R1, nodes: R2) -> Result<LmpDataset<S>> {
    let meta = read_nodes(nodes)?;
    let index: HashMap<&str, usize> = meta.iter().enumerate().map(|(k, (n, _))| (n.as_str(), k)).collect();

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(prices);
    let headers = rdr.headers()?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let (Some(ct), Some(cn), Some(cp)) = (
        col(&["timestamp", "datetime_beginning_ept", "datetime_beginning_utc"]),
        col(&["node", "pnode_name"]),
        col(&["lmp_usd_per_mwh", "lmp", "total_lmp_da", "total_lmp_rt"]),
    ) else {
        return Err(Error::Data(format!(
            "price CSV header {:?} lacks timestamp, node or lmp columns",
            headers.iter().collect::<Vec<_>>()
        )));
    };

    let mut cells: BTreeMap<(NaiveDateTime, usize), S> = BTreeMap::new();
    let mut zones = BTreeSet::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let (ts, zone) = parse_timestamp(field(ct))?;
        zones.insert(zone);
        let node = field(cn);
        let &k = index
            .get(node)
            .ok_or_else(|| Error::Data(format!("row {}: node {node:?} missing from node metadata", line + 2)))?;
        let v: f64 = field(cp)
            .parse()
            .map_err(|_| Error::Data(format!("row {}: bad price {:?}", line + 2, field(cp))))?;
        if cells.insert((ts, k), S::of(v)).is_some() {
            return Err(Error::Data(format!("duplicate row for {ts} at node {node}")));
        }
    }
    if zones.len() > 1 {
        return Err(Error::Data(format!("mixed UTC offsets in timestamps: {zones:?}")));
    }
    let (Some(&(first, _)), Some(&(last, _))) = (cells.keys().next(), cells.keys().next_back()) else {
        return Err(Error::Data("price CSV has no rows".into()));
    };
    let hours = (last - first).num_hours() as usize + 1;
    let mut prices = vec![vec![S::zero(); meta.len()]; hours];
    let mut missing = Vec::new();
    for (h, row) in prices.iter_mut().enumerate() {
        let ts = first + Duration::hours(h as i64);
        for (k, cell) in row.iter_mut().enumerate() {
            match cells.get(&(ts, k)) {
                Some(v) => *cell = *v,
                None => missing.push(format!("{ts} {}", meta[k].0)),
            }
        }
    }
    if cells.len() != hours * meta.len() {
        let off_grid = cells.keys().find(|(ts, _)| (*ts - first).num_minutes() % 60 != 0);
        if let Some((ts, _)) = off_grid {
            return Err(Error::Data(format!("timestamp {ts} is not on the hourly grid")));
        }
    }
    if !missing.is_empty() {
        let shown: Vec<_> = missing.iter().take(20).cloned().collect();
        return Err(Error::Data(format!(
            "{} missing hourly prices: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    let ds = LmpDataset {
        nodes: meta.iter().map(|(n, _)| n.clone()).collect(),
        coords: meta.iter().map(|(_, c)| *c).collect(),
        start: first,
        prices,
        timezone: zones.into_iter().next().unwrap_or_else(|| "local".into()),
    };
    ds.validate()?;
    Ok(ds)
}

pub fn ingest_lmps<S: Scalar>(csv_path: &Path, nodes_path: &Path) -> Result<LmpDataset<S>> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))
    };
    ingest_lmps_from(open(csv_path)?, open(nodes_path)?)
}

/// An electric vehicle used as mobile storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleProfile {
    pub name: String,
    pub capacity_kwh: f64,
    /// Charger limit in either direction.
    pub power_kw: f64,
    pub speed_mph: f64,
    pub cost_cents_per_mile: f64,
    pub initial_soc_fraction: f64,
    pub initial_node: String,
}

impl VehicleProfile {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("capacity", self.capacity_kwh),
            ("power", self.power_kw),
            ("speed", self.speed_mph),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("vehicle {}: {what} must be positive, got {v}", self.name)));
            }
        }
        if !(self.cost_cents_per_mile >= 0.0) || !self.cost_cents_per_mile.is_finite() {
            return Err(Error::Invalid(format!("vehicle {}: travel cost must be non-negative", self.name)));
        }
        if !(0.0..=1.0).contains(&self.initial_soc_fraction) {
            return Err(Error::Invalid(format!(
                "vehicle {}: initial SoC fraction {} outside [0, 1]",
                self.name, self.initial_soc_fraction
            )));
        }
        Ok(())
    }

    /// Storage unit in MWh/MW with a constant power rating.
    pub fn to_unit<S: Scalar>(&self, dataset: &LmpDataset<S>, admissible: Vec<usize>) -> Result<MobileStorageUnit<S>> {
        self.validate()?;
        let initial_bus = dataset
            .node_index(&self.initial_node)
            .ok_or_else(|| Error::Invalid(format!("unknown initial node {}", self.initial_node)))?;
        let capacity = S::of(self.capacity_kwh / 1000.0);
        Ok(MobileStorageUnit {
            name: self.name.clone(),
            capacity,
            rating: PowerRating {
                slope: S::zero(),
                intercept: S::of(self.power_kw / 1000.0),
            },
            admissible,
            initial_bus,
            initial_soc: S::of(self.initial_soc_fraction) * capacity,
        })
    }
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelMatrices<S> {
    pub miles: Matrix<S>,
    /// Travel time, hours.
    pub hours: Matrix<S>,
    /// Cost of each move, $; equals `kappa · hours`.
    pub cost: Matrix<S>,
    /// $ per hour of travel.
    pub kappa: S,
    /// Pairs that cannot be travelled within one period.
    pub unreachable: Vec<(usize, usize)>,
}

impl<S: Scalar> TravelMatrices<S> {
    pub fn transport(&self, period: S) -> Result<TransportModel<S>> {
        TransportModel::with_unreachable(self.hours.clone(), period, self.kappa)
    }
}

pub fn travel_matrices<S: Scalar>(dataset: &LmpDataset<S>, vehicle: &VehicleProfile) -> Result<TravelMatrices<S>> {
    vehicle.validate()?;
    let n = dataset.nodes.len();
    let kappa = S::of(vehicle.speed_mph) * S::of(vehicle.cost_cents_per_mile) / S::of(100.0);
    let mut miles = Matrix::zeros(n, n);
    let mut hours = Matrix::zeros(n, n);
    let mut cost = Matrix::zeros(n, n);
    let mut unreachable = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let d = S::of(haversine_miles(dataset.coords[i], dataset.coords[j]));
            miles[(i, j)] = d;
            let mut hrs = d / S::of(vehicle.speed_mph);
            // a hop of exactly one period should not be lost to rounding
            if (hrs - S::one()).abs() <= S::of(1e-9) {
                hrs = S::one();
            }
            hours[(i, j)] = hrs;
            cost[(i, j)] = kappa * hours[(i, j)];
            if hours[(i, j)] > S::one() {
                unreachable.push((i, j));
            }
        }
    }
    Ok(TravelMatrices {
        miles,
        hours,
        cost,
        kappa,
        unreachable,
    })
}

/// The relocation instance of one day: prices, unit and transport model.
/// With `mobile = false` the unit may not leave its initial node.
pub fn day_problem<S: Scalar>(
    dataset: &LmpDataset<S>,
    vehicle: &VehicleProfile,
    date: NaiveDate,
    mobile: bool,
) -> Result<(Vec<Vec<S>>, MobileStorageUnit<S>, TransportModel<S>)> {
    dataset.validate()?;
    let prices = dataset.day_prices(date)?;
    let transport = travel_matrices(dataset, vehicle)?.transport(S::one())?;
    let mut unit = vehicle.to_unit(dataset, (0..dataset.nodes.len()).collect())?;
    if !mobile {
        unit.admissible = vec![unit.initial_bus];
    }
    Ok((prices, unit, transport))
}

/// Consecutive hours spent at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellInterval<S> {
    pub node: String,
    pub start: NaiveDateTime,
    /// Last hour of the stay.
    pub end: NaiveDateTime,
    pub soc_change_mwh: S,
    /// `−Σ λ u` over the stay, $.
    pub value_usd: S,
    /// Cost of the move that ends the stay, $.
    pub travel_usd: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<S> {
    pub timestamp: NaiveDateTime,
    pub node: String,
    /// SoC at the end of the hour.
    pub soc_mwh: S,
    pub charge_mwh: S,
    /// Hours spent driving to the next node.
    pub travel_h: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadRow<S> {
    pub timestamp: NaiveDateTime,
    pub min: S,
    pub q1: S,
    pub median: S,
    pub q3: S,
    pub max: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct CaseStudyReport<S> {
    pub vehicle: String,
    pub date: NaiveDate,
    pub timezone: String,
    pub intervals: Vec<DwellInterval<S>>,
    pub trace: Vec<TraceRow<S>>,
    pub spread: Vec<SpreadRow<S>>,
    pub gross_usd: S,
    pub travel_usd: S,
    pub net_usd: S,
    pub relocation: RelocationResult<S>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile<S: Scalar>(sorted: &[S], q: S) -> S {
    if sorted.is_empty() {
        return S::nan();
    }
    let pos = q * S::of((sorted.len() - 1) as f64);
    let lo = pos.floor().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - S::of(lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-hour price distribution across nodes.
pub fn lmp_spread<S: Scalar>(dataset: &LmpDataset<S>, date: NaiveDate) -> Result<Vec<SpreadRow<S>>> {
    let off = dataset.day_offset(date)?;
    Ok((off..off + HOURS_PER_DAY)
        .map(|h| {
            let mut v = dataset.prices[h].clone();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite prices"));
            SpreadRow {
                timestamp: dataset.timestamp(h),
                min: v[0],
                q1: quantile(&v, S::of(0.25)),
                median: quantile(&v, S::of(0.5)),
                q3: quantile(&v, S::of(0.75)),
                max: v[v.len() - 1],
            }
        })
        .collect())
}

/// Aggregates a relocation result into dwell intervals and an hourly trace.
pub fn build_report<S: Scalar>(
    dataset: &LmpDataset<S>,
    vehicle: &VehicleProfile,
    date: NaiveDate,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    relocation: RelocationResult<S>,
) -> Result<CaseStudyReport<S>> {
    let off = dataset.day_offset(date)?;
    let traj = &relocation.trajectory;
    let u = relocation
        .schedule
        .clone()
        .ok_or_else(|| Error::Invalid("relocation result has no schedule".into()))?;
    let soc = relocation.soc.clone().unwrap_or_default();
    let mut intervals: Vec<DwellInterval<S>> = Vec::new();
    let mut trace = Vec::with_capacity(traj.len());
    for (t, &i) in traj.iter().enumerate() {
        let ts = dataset.timestamp(off + t);
        let next = traj.get(t + 1).copied();
        let moving = next.is_some_and(|j| j != i);
        let travel_h = if moving { transport.travel[(i, next.unwrap())] } else { S::zero() };
        let travel_usd = if moving { transport.move_cost(i, next.unwrap()) } else { S::zero() };
        trace.push(TraceRow {
            timestamp: ts,
            node: dataset.nodes[i].clone(),
            soc_mwh: soc.get(t).copied().unwrap_or_else(S::zero),
            charge_mwh: u[t],
            travel_h,
        });
        let value = -prices[t][i] * u[t];
        match intervals.last_mut() {
            Some(last) if t > 0 && traj[t - 1] == i => {
                last.end = ts;
                last.soc_change_mwh += u[t];
                last.value_usd += value;
                last.travel_usd += travel_usd;
            }
            _ => intervals.push(DwellInterval {
                node: dataset.nodes[i].clone(),
                start: ts,
                end: ts,
                soc_change_mwh: u[t],
                value_usd: value,
                travel_usd,
            }),
        }
    }
    let gross_usd: S = intervals.iter().map(|r| r.value_usd).sum();
    let travel_usd: S = intervals.iter().map(|r| r.travel_usd).sum();
    Ok(CaseStudyReport {
        vehicle: vehicle.name.clone(),
        date,
        timezone: dataset.timezone.clone(),
        intervals,
        trace,
        spread: lmp_spread(dataset, date)?,
        gross_usd,
        travel_usd,
        net_usd: gross_usd - travel_usd,
        relocation,
    })
}

/// Runs the approximate relocation DP with SoC step `h` (MWh) for one day.
pub fn run_case_study<S: Scalar>(
    dataset: &LmpDataset<S>,
    vehicle: &VehicleProfile,
    date: NaiveDate,
    h: S,
) -> Result<CaseStudyReport<S>> {
    run_with_moves(dataset, vehicle, date, h, true)
}

/// Like [`run_case_study`], optionally pinning the vehicle to its initial node.
pub fn run_with_moves<S: Scalar>(
    dataset: &LmpDataset<S>,
    vehicle: &VehicleProfile,
    date: NaiveDate,
    h: S,
    mobile: bool,
) -> Result<CaseStudyReport<S>> {
    let (prices, unit, transport) = day_problem(dataset, vehicle, date, mobile)?;
    let res = relocate_approx(&unit, &prices, &transport, h)?;
    build_report(dataset, vehicle, date, &prices, &transport, res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRun<S> {
    pub node: String,
    pub net_usd: S,
}

/// Net profit of the vehicle parked at each node all day.
pub fn stationary_values<S: Scalar>(
    dataset: &LmpDataset<S>,
    vehicle: &VehicleProfile,
    date: NaiveDate,
    h: S,
) -> Result<Vec<StationaryRun<S>>> {
    dataset
        .nodes
        .iter()
        .map(|node| {
            let v = VehicleProfile {
                initial_node: node.clone(),
                ..vehicle.clone()
            };
            let r = run_with_moves(dataset, &v, date, h, false)?;
            Ok(StationaryRun {
                node: node.clone(),
                net_usd: r.net_usd,
            })
        })
        .collect()
}
