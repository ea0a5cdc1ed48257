//! File formats: versioned JSON documents and CSV tables.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::casestudy::CaseStudyReport;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::marginal_value::MarginalValueReport;
use crate::scalar::Scalar;
use crate::storage::{Fleet, MobileStorageUnit, PowerRating, TransportModel, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope written around every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document<T> {
    pub schema_version: u32,
    pub kind: String,
    pub data: T,
}

impl<T> Document<T> {
    pub fn new(kind: &str, data: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            data,
        }
    }
}

pub fn to_json<T: Serialize>(kind: &str, data: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Document::new(kind, data))?;
    s.push('\n');
    Ok(s)
}

/// Parses a document of the given kind, or a bare payload.
pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let is_doc = value.get("schema_version").is_some() && value.get("data").is_some();
    if !is_doc {
        return Ok(serde_json::from_value(value)?);
    }
    let doc: Document<T> = serde_json::from_value(value)?;
    if doc.schema_version > SCHEMA_VERSION {
        return Err(Error::Data(format!(
            "schema version {} is newer than supported version {SCHEMA_VERSION}",
            doc.schema_version
        )));
    }
    if doc.kind != kind {
        return Err(Error::Data(format!("expected a {kind} document, found {}", doc.kind)));
    }
    Ok(doc.data)
}

pub fn read_json<T: DeserializeOwned>(kind: &str, path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    from_json(kind, &text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// One unit of a fleet file. Bus references are 0-based indices into the
/// network's bus list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct UnitFile<S> {
    pub name: String,
    pub capacity_mwh: S,
    #[serde(default = "zero")]
    pub power_slope_mw_per_mwh: S,
    #[serde(default = "zero")]
    pub power_intercept_mw: S,
    pub admissible_buses: Vec<usize>,
    pub initial_bus: usize,
    #[serde(default = "zero")]
    pub initial_soc_mwh: S,
    /// Bus per period, required by `dispatch`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportFile<S> {
    pub travel_time_matrix_h: Vec<Vec<S>>,
    pub period_h: S,
    pub kappa_per_h: S,
    /// Treat pairs with travel time above the period as unreachable
    /// instead of rejecting the file.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_unreachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct FleetFile<S> {
    pub units: Vec<UnitFile<S>>,
    pub transport: TransportFile<S>,
}

fn zero<S: Scalar>() -> S {
    S::zero()
}

impl<S: Scalar> FleetFile<S> {
    pub fn from_fleet(fleet: &Fleet<S>, trajectories: Option<&[Trajectory]>) -> Self {
        let units = fleet
            .units
            .iter()
            .enumerate()
            .map(|(k, u)| UnitFile {
                name: u.name.clone(),
                capacity_mwh: u.capacity,
                power_slope_mw_per_mwh: u.rating.slope,
                power_intercept_mw: u.rating.intercept,
                admissible_buses: u.admissible.clone(),
                initial_bus: u.initial_bus,
                initial_soc_mwh: u.initial_soc,
                trajectory: trajectories.and_then(|t| t.get(k).cloned()),
            })
            .collect();
        let t = &fleet.transport;
        Self {
            units,
            transport: TransportFile {
                travel_time_matrix_h: t.travel.to_rows(),
                period_h: t.period,
                kappa_per_h: t.kappa,
                allow_unreachable: !t.blocked.is_empty(),
            },
        }
    }

    pub fn transport(&self) -> Result<TransportModel<S>> {
        let t = &self.transport;
        let n = t.travel_time_matrix_h.len();
        if t.travel_time_matrix_h.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("travel-time matrix must be square".into()));
        }
        let d = Matrix::from_rows(&t.travel_time_matrix_h);
        let d = if n == 0 { Matrix::zeros(0, 0) } else { d };
        if t.allow_unreachable {
            TransportModel::with_unreachable(d, t.period_h, t.kappa_per_h)
        } else {
            TransportModel::new(d, t.period_h, t.kappa_per_h)
        }
    }

    /// Fleet and, when every unit carries one, the trajectories.
    pub fn to_fleet(&self) -> Result<(Fleet<S>, Option<Vec<Trajectory>>)> {
        let transport = self.transport()?;
        let units: Vec<MobileStorageUnit<S>> = self
            .units
            .iter()
            .map(|u| {
                let mut admissible = u.admissible_buses.clone();
                admissible.sort_unstable();
                admissible.dedup();
                let unit = MobileStorageUnit {
                    name: u.name.clone(),
                    capacity: u.capacity_mwh,
                    rating: PowerRating {
                        slope: u.power_slope_mw_per_mwh,
                        intercept: u.power_intercept_mw,
                    },
                    admissible,
                    initial_bus: u.initial_bus,
                    initial_soc: u.initial_soc_mwh,
                };
                unit.validate(transport.num_buses())?;
                Ok(unit)
            })
            .collect::<Result<_>>()?;
        let trajectories: Option<Vec<Trajectory>> = self.units.iter().map(|u| u.trajectory.clone()).collect();
        Ok((Fleet { units, transport }, trajectories))
    }
}

fn csv_error(e: csv::IntoInnerError<csv::Writer<Vec<u8>>>) -> Error {
    Error::Io(e.into_error())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

/// Period-by-bus table with a `period` column and one column per label.
pub fn lmp_matrix_csv<S: Scalar>(labels: &[String], rows: &[Vec<S>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["period".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (t, row) in rows.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish_csv(w)
}

/// Inverse of [`lmp_matrix_csv`]. Returns the column labels and the rows.
pub fn read_lmp_matrix<S: Scalar, R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<S>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("period") {
        return Err(Error::Data("LMP matrix must start with a `period` column".into()));
    }
    let labels: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for (t, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let p: usize = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad period {:?}", &rec[0])))?;
        if p != t {
            return Err(Error::Data(format!("periods must be consecutive from 0; found {p} at row {t}")));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map(S::of)
                    .map_err(|_| Error::Data(format!("period {t}: bad price {v:?}")))
            })
            .collect::<Result<Vec<S>>>()?;
        if row.len() != labels.len() {
            return Err(Error::Data(format!("period {t} has {} prices", row.len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("LMP matrix has no periods".into()));
    }
    Ok((labels, rows))
}

/// One row per unit and period: LMP along the path and dual contribution.
pub fn mv_csv<S: Scalar>(report: &MarginalValueReport<S>, path_prices: &[Vec<S>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit", "period", "lmp", "contribution", "energy_bound", "power_bound"])?;
    for (u, prices) in report.units.iter().zip(path_prices) {
        for (t, c) in u.per_period.iter().enumerate() {
            let (e, p) = u
                .pattern
                .as_ref()
                .map_or((false, false), |pt| (pt.energy.contains(&t), pt.power.contains(&t)));
            w.write_record([
                u.name.clone(),
                t.to_string(),
                prices.get(t).map_or(String::new(), |v| v.to_string()),
                c.to_string(),
                e.to_string(),
                p.to_string(),
            ])?;
        }
    }
    finish_csv(w)
}

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Dwell intervals: node, interval, SoC change, value, travel.
pub fn table_csv<S: Scalar>(report: &CaseStudyReport<S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node", "start", "end", "soc_change_mwh", "value_usd", "travel_usd"])?;
    for r in &report.intervals {
        w.write_record([
            r.node.clone(),
            r.start.format(TIME_FORMAT).to_string(),
            r.end.format(TIME_FORMAT).to_string(),
            r.soc_change_mwh.to_string(),
            r.value_usd.to_string(),
            r.travel_usd.to_string(),
        ])?;
    }
    finish_csv(w)
}

pub fn trace_csv<S: Scalar>(report: &CaseStudyReport<S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["timestamp", "node", "soc_mwh", "charge_mwh", "travel_h"])?;
    for r in &report.trace {
        w.write_record([
            r.timestamp.format(TIME_FORMAT).to_string(),
            r.node.clone(),
            r.soc_mwh.to_string(),
            r.charge_mwh.to_string(),
            r.travel_h.to_string(),
        ])?;
    }
    finish_csv(w)
}

pub fn spread_csv<S: Scalar>(report: &CaseStudyReport<S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["timestamp", "min", "q1", "median", "q3", "max"])?;
    for r in &report.spread {
        w.write_record([
            r.timestamp.format(TIME_FORMAT).to_string(),
            r.min.to_string(),
            r.q1.to_string(),
            r.median.to_string(),
            r.q3.to_string(),
            r.max.to_string(),
        ])?;
    }
    finish_csv(w)
}

/// Long-format price table `timestamp,node,lmp_usd_per_mwh`.
pub fn write_lmp_long<S: Scalar, W: Write>(
    out: W,
    dataset: &crate::casestudy::LmpDataset<S>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "node", "lmp_usd_per_mwh"])?;
    for (h, row) in dataset.prices.iter().enumerate() {
        let ts = dataset.timestamp(h).format(TIME_FORMAT).to_string();
        for (node, v) in dataset.nodes.iter().zip(row) {
            w.write_record([ts.clone(), node.clone(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lmp_matrix_round_trip() {
        let labels = vec!["bus_1".to_string(), "bus_2".to_string()];
        let rows = vec![vec![9.0f64, 2.5], vec![16.0, -0.125]];
        let text = lmp_matrix_csv(&labels, &rows).unwrap();
        let (l, r) = read_lmp_matrix::<f64, _>(text.as_bytes()).unwrap();
        assert_eq!(l, labels);
        assert_eq!(r, rows);
    }

    #[test]
    fn document_kind_checked() {
        let text = to_json("prices", &vec![1.0f64, 2.0]).unwrap();
        assert_eq!(from_json::<Vec<f64>>("prices", &text).unwrap(), vec![1.0, 2.0]);
        assert!(from_json::<Vec<f64>>("network", &text).is_err());
        assert_eq!(from_json::<Vec<f64>>("prices", "[3.0]").unwrap(), vec![3.0]);
    }

    #[test]
    fn fleet_file_round_trip() {
        let inst = crate::fixtures::example2::<f64>();
        let file = FleetFile::from_fleet(&inst.fleet, Some(&inst.trajectories));
        let text = to_json("fleet", &file).unwrap();
        let back: FleetFile<f64> = from_json("fleet", &text).unwrap();
        let (fleet, traj) = back.to_fleet().unwrap();
        assert_eq!(fleet, inst.fleet);
        assert_eq!(traj.unwrap(), inst.trajectories);
        assert!(from_json::<FleetFile<f64>>("fleet", &text.replace("period_h", "period_hours")).is_err());
    }

    #[test]
    fn matrix_shape_checked() {
        let bad = r#"{"rows": 2, "cols": 2, "data": [1.0, 2.0, 3.0]}"#;
        assert!(serde_json::from_str::<crate::linalg::Matrix<f64>>(bad).is_err());
    }
}
