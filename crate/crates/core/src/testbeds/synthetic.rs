//! Synthetic Bernoulli systems with a fixed probability matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::streams::ReplayableStream;

/// How the constraint bits of one replication are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// One uniform per constraint.
    #[default]
    Independent,
    /// One uniform thresholded at every `p`: comonotone bits.
    SharedUniform,
}

#[derive(Debug, Clone)]
pub struct SyntheticSource {
    p: Vec<Vec<f64>>,
    coupling: Coupling,
}

impl SyntheticSource {
    /// `p[i][l]` is system `i`'s probability on constraint `l`.
    pub fn new(p: Vec<Vec<f64>>, coupling: Coupling) -> Result<Self> {
        let s = p.first().map(Vec::len).unwrap_or(0);
        if p.is_empty() || s == 0 {
            return Err(Error::domain("p", "need at least one system and one constraint"));
        }
        for row in &p {
            if row.len() != s {
                return Err(Error::domain("p", "rows must have equal length"));
            }
            for &v in row {
                check_open_unit("p", v)?;
            }
        }
        Ok(SyntheticSource { p, coupling })
    }

    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub(crate) fn observe(&self, system: usize, stream: &ReplayableStream, n: u64, out: &mut [bool]) {
        let row = &self.p[system];
        let mut rng = stream.replication(n);
        match self.coupling {
            Coupling::Independent => {
                for (bit, &p) in out.iter_mut().zip(row) {
                    *bit = rng.random::<f64>() < p;
                }
            }
            Coupling::SharedUniform => {
                let u = rng.random::<f64>();
                for (bit, &p) in out.iter_mut().zip(row) {
                    *bit = u < p;
                }
            }
        }
    }
}
