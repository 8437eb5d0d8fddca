//! Experiment configuration (JSON).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::brf::{DecisionMatrix, PassPlan, ProblemSpec};
use crate::error::{Error, Result};
use crate::multipass::Heuristic;
use crate::rf::{RfParams, ToleranceMode};
use crate::testbeds::SourceConfig;

/// Which procedure a config runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    /// Single statistically valid pass over the first plan step.
    Brf,
    /// First pass followed by heuristic passes over the remaining steps.
    Multipass { heuristic: Heuristic },
    /// Batch-means baseline over the first plan step.
    Rf(RfParams),
}

impl Procedure {
    pub fn label(&self) -> String {
        match self {
            Procedure::Brf => "BRF".into(),
            Procedure::Multipass { heuristic } => format!("MPB_{heuristic}"),
            Procedure::Rf(p) => {
                let mode = match p.tolerance_mode {
                    ToleranceMode::Conservative => "conservative",
                    ToleranceMode::Adjusted => "adjusted",
                };
                format!("RF_b{}_{mode}", p.b)
            }
        }
    }
}

/// Thresholds for one pass, fixed or chosen from the previous pass's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanStep {
    Fixed {
        thresholds: Vec<Vec<f64>>,
    },
    /// Branch on how many systems the previous pass declared Feasible at the
    /// tightest threshold of every constraint it tested. A missing branch
    /// ends the experiment.
    Conditional {
        #[serde(default)]
        none: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        one: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        many: Option<Vec<Vec<f64>>>,
    },
}

impl PlanStep {
    fn branches(&self) -> Vec<&Vec<Vec<f64>>> {
        match self {
            PlanStep::Fixed { thresholds } => vec![thresholds],
            PlanStep::Conditional { none, one, many } => [none, one, many].into_iter().flatten().collect(),
        }
    }

    /// Plan for pass `w`, or `None` when the branch stops the experiment.
    pub fn resolve(&self, pass_index: u32, previous: Option<&DecisionMatrix>) -> Result<Option<PassPlan>> {
        let chosen = match self {
            PlanStep::Fixed { thresholds } => Some(thresholds),
            PlanStep::Conditional { none, one, many } => {
                let prev = previous.ok_or_else(|| Error::Config("a conditional step cannot come first".into()))?;
                match tightest_feasible_count(prev) {
                    0 => none.as_ref(),
                    1 => one.as_ref(),
                    _ => many.as_ref(),
                }
            }
        };
        Ok(chosen.map(|t| PassPlan::new(pass_index, t.clone())))
    }
}

/// Systems Feasible at the smallest tested threshold of every tested constraint.
pub fn tightest_feasible_count(matrix: &DecisionMatrix) -> usize {
    let tested: Vec<usize> = (0..matrix.thresholds.len())
        .filter(|&l| !matrix.thresholds[l].is_empty())
        .collect();
    matrix
        .entries
        .iter()
        .filter(|e| tested.iter().all(|&l| e[l][0].decision == crate::brf::Decision::Feasible))
        .count()
}

/// Where scoring truth comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    /// Use the source's exact probabilities (synthetic sources).
    #[default]
    Known,
    Matrix {
        p: Vec<Vec<f64>>,
    },
    /// Monte-Carlo estimate, cached to `cache` when given.
    Estimate {
        n: u64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        cache: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub spec: ProblemSpec,
    pub source: SourceConfig,
    pub procedure: Procedure,
    pub passes: Vec<PlanStep>,
    #[serde(default = "one")]
    pub macro_reps: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub truth: TruthSpec,
}

fn one() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.macro_reps == 0 {
            return Err(Error::domain("macro_reps", "must be at least 1"));
        }
        let Some(PlanStep::Fixed { .. }) = self.passes.first() else {
            return Err(Error::Config("the first plan step must be fixed".into()));
        };
        if !matches!(self.procedure, Procedure::Multipass { .. }) && self.passes.len() != 1 {
            return Err(Error::Config("single-pass procedures take exactly one plan step".into()));
        }
        for step in &self.passes {
            for t in step.branches() {
                PassPlan::new(1, t.clone()).validate(self.spec.s)?;
            }
        }
        Ok(())
    }

    /// Threshold counts per constraint used to size the error budget: the
    /// explicit setting if present, else fixed steps summed plus the largest
    /// branch of each conditional step.
    pub fn planned_counts(&self) -> Vec<usize> {
        if let Some(c) = &self.spec.planned_threshold_counts {
            return c.clone();
        }
        let mut counts = vec![0usize; self.spec.s];
        for step in &self.passes {
            for (l, c) in counts.iter_mut().enumerate() {
                *c += step.branches().iter().map(|t| t[l].len()).max().unwrap_or(0);
            }
        }
        counts
    }

    /// Problem spec with the planned counts filled in.
    pub fn effective_spec(&self) -> ProblemSpec {
        let mut spec = self.spec.clone();
        spec.planned_threshold_counts = Some(self.planned_counts());
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRUNE: &str = r#"{
        "id": "prune",
        "spec": {"k": 3, "s": 1, "alpha": 0.05, "theta": 1.5},
        "source": {"kind": "synthetic", "p": [[0.01], [0.5], [0.5]]},
        "procedure": {"kind": "multipass", "heuristic": "BN"},
        "passes": [
            {"kind": "fixed", "thresholds": [[0.25]]},
            {"kind": "conditional", "many": [[0.02, 0.1, 0.2]], "none": [[0.3, 0.4]]}
        ],
        "macro_reps": 10
    }"#;

    #[test]
    fn parses_and_plans() {
        let cfg = ExperimentConfig::from_json(PRUNE).unwrap();
        assert_eq!(cfg.planned_counts(), vec![4]);
        assert_eq!(cfg.procedure.label(), "MPB_BN");
        assert_eq!(cfg.truth, TruthSpec::Known);
    }

    #[test]
    fn rejects_conditional_first() {
        let bad = PRUNE.replace(r#"{"kind": "fixed", "thresholds": [[0.25]]},"#, "");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn rf_label() {
        let p: Procedure = serde_json::from_str(r#"{"kind":"rf","n0":20,"b":400,"tolerance_mode":"adjusted"}"#).unwrap();
        assert_eq!(p.label(), "RF_b400_adjusted");
    }
}
