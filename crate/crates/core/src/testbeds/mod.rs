//! Observation sources.
//!
//! A source maps `(system, replication)` to one Bernoulli bit per
//! constraint. All randomness comes from the [`ReplayableStream`] passed in,
//! so the caller controls independence versus common random numbers.

pub mod inventory;
pub mod synthetic;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::{derive_seed, ReplayableStream, StreamKey, StreamKind};

pub use inventory::{default_grid, simulate_inventory_year, InventoryParams, InventorySource, Policy};
pub use synthetic::{Coupling, SyntheticSource};

pub trait ObservationSource: Send + Sync {
    fn num_systems(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// Write replication `n` (1-based) of `system` into `out`, which has one
    /// slot per constraint.
    fn observe(&self, system: usize, stream: &ReplayableStream, n: u64, out: &mut [bool]) -> Result<()>;

    /// Exact probabilities, when the source knows them.
    fn known_probabilities(&self) -> Option<Vec<Vec<f64>>> {
        None
    }

    /// Human-readable label for each system.
    fn system_labels(&self) -> Vec<String> {
        (1..=self.num_systems()).map(|i| format!("system{i}")).collect()
    }
}

/// Serializable description of a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    Synthetic {
        p: Vec<Vec<f64>>,
        #[serde(default)]
        coupling: Coupling,
    },
    Inventory {
        #[serde(default = "default_grid")]
        systems: Vec<Policy>,
        #[serde(default)]
        params: InventoryParams,
    },
}

impl SourceConfig {
    pub fn build(&self) -> Result<Testbed> {
        Ok(match self {
            SourceConfig::Synthetic { p, coupling } => {
                Testbed::Synthetic(SyntheticSource::new(p.clone(), *coupling)?)
            }
            SourceConfig::Inventory { systems, params } => {
                Testbed::Inventory(InventorySource::new(systems.clone(), params.clone())?)
            }
        })
    }
}

/// A built source.
#[derive(Debug, Clone)]
pub enum Testbed {
    Synthetic(SyntheticSource),
    Inventory(InventorySource),
}

impl ObservationSource for Testbed {
    fn num_systems(&self) -> usize {
        match self {
            Testbed::Synthetic(s) => s.probabilities().len(),
            Testbed::Inventory(s) => s.policies().len(),
        }
    }

    fn num_constraints(&self) -> usize {
        match self {
            Testbed::Synthetic(s) => s.probabilities()[0].len(),
            Testbed::Inventory(_) => 2,
        }
    }

    fn observe(&self, system: usize, stream: &ReplayableStream, n: u64, out: &mut [bool]) -> Result<()> {
        if system >= self.num_systems() || out.len() != self.num_constraints() || n == 0 {
            return Err(Error::Source(format!(
                "bad request: system {system}, replication {n}, {} slots",
                out.len()
            )));
        }
        match self {
            Testbed::Synthetic(s) => s.observe(system, stream, n, out),
            Testbed::Inventory(s) => s.observe(system, stream, n, out),
        }
        Ok(())
    }

    fn known_probabilities(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Testbed::Synthetic(s) => Some(s.probabilities().to_vec()),
            Testbed::Inventory(_) => None,
        }
    }

    fn system_labels(&self) -> Vec<String> {
        match self {
            Testbed::Synthetic(s) => (1..=s.probabilities().len()).map(|i| format!("system{i}")).collect(),
            Testbed::Inventory(s) => s.policies().iter().map(|p| format!("({},{})", p.s, p.big_s)).collect(),
        }
    }
}

/// Monte-Carlo estimates of every `p[i][l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub p_hat: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub n: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    system: usize,
    constraint: usize,
    p_hat: f64,
    se: f64,
    n: u64,
}

impl TruthTable {
    /// Exact truth with zero standard error.
    pub fn exact(p: Vec<Vec<f64>>) -> Self {
        let se = p.iter().map(|row| vec![0.0; row.len()]).collect();
        TruthTable { p_hat: p, se, n: 0 }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (i, row) in self.p_hat.iter().enumerate() {
            for (l, &p_hat) in row.iter().enumerate() {
                w.serialize(TruthRow {
                    system: i + 1,
                    constraint: l + 1,
                    p_hat,
                    se: self.se[i][l],
                    n: self.n,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rows: Vec<TruthRow> = Vec::new();
        for r in csv::Reader::from_path(path)?.deserialize() {
            rows.push(r?);
        }
        let k = rows.iter().map(|r| r.system).max().unwrap_or(0);
        let s = rows.iter().map(|r| r.constraint).max().unwrap_or(0);
        if k == 0 || s == 0 || rows.len() != k * s {
            return Err(Error::Config(format!("truth file {} is incomplete", path.display())));
        }
        let mut p_hat = vec![vec![f64::NAN; s]; k];
        let mut se = vec![vec![f64::NAN; s]; k];
        let n = rows[0].n;
        for r in rows {
            if r.system == 0 || r.constraint == 0 {
                return Err(Error::Config("truth indices are 1-based".into()));
            }
            p_hat[r.system - 1][r.constraint - 1] = r.p_hat;
            se[r.system - 1][r.constraint - 1] = r.se;
        }
        if p_hat.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Config(format!("truth file {} has duplicate rows", path.display())));
        }
        Ok(TruthTable { p_hat, se, n })
    }
}

/// Estimate every system's probabilities from `n` independent replications.
pub fn estimate_truth(source: &dyn ObservationSource, seed: u64, n: u64) -> Result<TruthTable> {
    if n == 0 {
        return Err(Error::domain("n", "need at least one replication"));
    }
    let s = source.num_constraints();
    let rows: Result<Vec<Vec<u64>>> = (0..source.num_systems())
        .into_par_iter()
        .map(|i| {
            let stream = ReplayableStream::new(StreamKey::new(
                derive_seed(seed, &[i as u64]),
                StreamKind::Observation,
            ));
            let mut hits = vec![0u64; s];
            let mut bits = vec![false; s];
            for rep in 1..=n {
                source.observe(i, &stream, rep, &mut bits)?;
                for (h, &b) in hits.iter_mut().zip(&bits) {
                    *h += u64::from(b);
                }
            }
            Ok(hits)
        })
        .collect();
    let nf = n as f64;
    let p_hat: Vec<Vec<f64>> = rows?
        .into_iter()
        .map(|h| h.into_iter().map(|c| c as f64 / nf).collect())
        .collect();
    let se = p_hat
        .iter()
        .map(|row| row.iter().map(|&p| (p * (1.0 - p) / nf).sqrt()).collect())
        .collect();
    Ok(TruthTable { p_hat, se, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg: SourceConfig = serde_json::from_str(r#"{"kind":"inventory"}"#).unwrap();
        let tb = cfg.build().unwrap();
        assert_eq!(tb.num_systems(), 77);
        assert_eq!(tb.num_constraints(), 2);
        let cfg: SourceConfig =
            serde_json::from_str(r#"{"kind":"synthetic","p":[[0.1,0.2]],"coupling":"shared_uniform"}"#).unwrap();
        assert_eq!(cfg.build().unwrap().known_probabilities().unwrap(), vec![vec![0.1, 0.2]]);
    }

    #[test]
    fn truth_estimate_band() {
        let tb = SourceConfig::Synthetic {
            p: vec![vec![0.5]],
            coupling: Coupling::Independent,
        }
        .build()
        .unwrap();
        let t = estimate_truth(&tb, 1, 1_000_000).unwrap();
        assert!((t.p_hat[0][0] - 0.5).abs() < 0.0015);
    }

    #[test]
    fn truth_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let t = TruthTable {
            p_hat: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            se: vec![vec![0.01, 0.02], vec![0.03, 0.04]],
            n: 10,
        };
        t.write_csv(&path).unwrap();
        assert_eq!(TruthTable::read_csv(&path).unwrap(), t);
    }

    #[test]
    fn observe_rejects_bad_slots() {
        let tb = SourceConfig::Synthetic {
            p: vec![vec![0.5]],
            coupling: Coupling::Independent,
        }
        .build()
        .unwrap();
        let st = ReplayableStream::new(StreamKey::new(1, StreamKind::Observation));
        assert!(tb.observe(0, &st, 1, &mut [false, false]).is_err());
        assert!(tb.observe(3, &st, 1, &mut [false]).is_err());
    }
}
