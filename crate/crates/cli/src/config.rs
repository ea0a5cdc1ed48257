use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mobistore::qp::Tolerances;
use mobistore::relocation::Algorithm;
use serde::Deserialize;

/// Settings shared by every subcommand. Values from the config file are
/// overridden by command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: Option<PathBuf>,
    pub fleet: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub solution: Option<PathBuf>,
    pub lmps: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub vehicle: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub algo: Option<String>,
    pub soc_step: Option<f64>,
    pub seed: Option<u64>,
    pub tol_kkt: Option<f64>,
    pub tol_binding: Option<f64>,
    pub verbosity: Option<u8>,
}

macro_rules! take {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $(if $src.$f.is_some() { $dst.$f = $src.$f.clone(); })*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: &RunConfig) -> Self {
        take!(
            self, other, network, fleet, trajectories, solution, lmps, nodes, vehicle, out_dir, algo, soc_step, seed,
            tol_kkt, tol_binding, verbosity
        );
        self
    }

    pub fn tolerances(&self) -> Result<Tolerances<f64>> {
        let mut tol = Tolerances::default();
        if let Some(v) = self.tol_kkt {
            if !(v > 0.0 && v.is_finite()) {
                bail!("--tol-kkt must be positive, got {v}");
            }
            tol.stationarity = v;
            tol.feasibility = v;
            tol.complementarity = v;
        }
        if let Some(v) = self.tol_binding {
            if !(v > 0.0 && v.is_finite()) {
                bail!("--tol-binding must be positive, got {v}");
            }
            tol.binding = v;
        }
        Ok(tol)
    }

    pub fn algorithm(&self, default: Algorithm) -> Result<Algorithm> {
        let algo = match &self.algo {
            Some(s) => s.parse()?,
            None => default,
        };
        if algo == Algorithm::Approx {
            match self.soc_step {
                Some(h) if h > 0.0 && h.is_finite() => {}
                Some(h) => bail!("--soc-step must be positive, got {h}"),
                None => bail!("--algo approx needs --soc-step"),
            }
        }
        Ok(algo)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

pub fn require<'a>(field: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match field {
        Some(p) => Ok(p),
        None => bail!("missing --{flag}"),
    }
}
