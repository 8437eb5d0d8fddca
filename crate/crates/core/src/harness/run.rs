//! Macro-replication runner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brf::{run_first_pass, Decision, DecisionMatrix, ProblemSpec};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, PlanStep, Procedure, TruthSpec};
use crate::multipass::SessionState;
use crate::odds::{classify_truth, Classification};
use crate::rf::run_rf;
use crate::streams::derive_seed;
use crate::testbeds::{estimate_truth, ObservationSource, TruthTable};

/// Feasible-system count for one tested threshold in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleTally {
    pub pass: u32,
    pub constraint: usize,
    pub threshold: f64,
    pub count: usize,
}

/// Result of one macro-replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroOutcome {
    pub correct: bool,
    /// Replications drawn in each pass that ran.
    pub pass_obs: Vec<u64>,
    pub total_obs: u64,
    pub pending: usize,
    pub capped: bool,
    pub feasible: Vec<FeasibleTally>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Absent for a single replication.
    pub se: Option<f64>,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        MeanSe { mean, se }
    }

    pub fn proportion(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        MeanSe {
            mean: p,
            se: (n > 1).then(|| (p * (1.0 - p) / n as f64).sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSummary {
    pub pass: u32,
    pub constraint: usize,
    pub threshold: f64,
    /// Replications in which this threshold was tested.
    pub reps: u64,
    pub count: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_id: String,
    pub procedure: String,
    pub macro_reps: u64,
    pub pcd: MeanSe,
    pub obs_per_pass: Vec<MeanSe>,
    pub obs_total: MeanSe,
    /// Pending entries summed over replications.
    pub undecided: u64,
    pub capped_reps: u64,
    pub feasible_counts: Vec<FeasibleSummary>,
    #[serde(skip)]
    pub outcomes: Vec<MacroOutcome>,
}

/// 1 iff every Desirable entry is Feasible and every Unacceptable entry is
/// Infeasible. Pending counts as wrong on both.
pub fn score_cd(decisions: &[(usize, f64, Vec<Decision>)], truth: &[Vec<f64>], spec: &ProblemSpec) -> Result<bool> {
    for (l, h, col) in decisions {
        for (i, &d) in col.iter().enumerate() {
            let p = *truth
                .get(i)
                .and_then(|row| row.get(*l))
                .ok_or_else(|| Error::Config(format!("truth missing for system {i}, constraint {l}")))?;
            let ok = match classify_truth(p, *h, spec.theta_for(*l))? {
                Classification::Acceptable => true,
                Classification::Desirable => d == Decision::Feasible,
                Classification::Unacceptable => d == Decision::Infeasible,
            };
            if !ok {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn matrix_decisions(m: &DecisionMatrix) -> Vec<(usize, f64, Vec<Decision>)> {
    let mut out = Vec::new();
    for (l, list) in m.thresholds.iter().enumerate() {
        for (j, &h) in list.iter().enumerate() {
            out.push((l, h, m.entries.iter().map(|e| e[l][j].decision).collect()));
        }
    }
    out
}

fn tallies(pass: u32, m: &DecisionMatrix) -> Vec<FeasibleTally> {
    let counts = m.feasible_counts();
    let mut out = Vec::new();
    for (l, list) in m.thresholds.iter().enumerate() {
        for (j, &h) in list.iter().enumerate() {
            out.push(FeasibleTally {
                pass,
                constraint: l,
                threshold: h,
                count: counts[l][j],
            });
        }
    }
    out
}

/// Scoring truth for a config.
pub fn resolve_truth(cfg: &ExperimentConfig, source: &dyn ObservationSource) -> Result<Vec<Vec<f64>>> {
    match &cfg.truth {
        TruthSpec::Known => source
            .known_probabilities()
            .ok_or_else(|| Error::Config("this source has no known probabilities; configure a truth estimate".into())),
        TruthSpec::Matrix { p } => Ok(p.clone()),
        TruthSpec::Estimate { n, seed, cache } => {
            if let Some(path) = cache {
                if path.exists() {
                    let t = TruthTable::read_csv(path)?;
                    if t.n == *n && t.p_hat.len() == source.num_systems() {
                        return Ok(t.p_hat);
                    }
                    log::info!("truth cache {} does not match; re-estimating", path.display());
                }
            }
            let t = estimate_truth(source, *seed, *n)?;
            if let Some(path) = cache {
                t.write_csv(path)?;
            }
            Ok(t.p_hat)
        }
    }
}

/// Run one macro-replication with its own seed.
pub fn run_replication(
    cfg: &ExperimentConfig,
    spec: &ProblemSpec,
    source: &dyn ObservationSource,
    truth: &[Vec<f64>],
    seed: u64,
) -> Result<MacroOutcome> {
    let first = cfg.passes[0]
        .resolve(1, None)?
        .ok_or_else(|| Error::Config("the first plan step is empty".into()))?;
    let (decisions, pass_obs, pending, capped, feasible) = match &cfg.procedure {
        Procedure::Brf => {
            let out = run_first_pass(spec, &first, source, seed)?;
            (
                matrix_decisions(&out.matrix),
                vec![out.obs.total],
                out.matrix.pending_count(),
                out.obs.capped,
                tallies(1, &out.matrix),
            )
        }
        Procedure::Rf(params) => {
            let out = run_rf(spec, &first, params, source, seed)?;
            (
                matrix_decisions(&out.matrix),
                vec![out.obs.total],
                out.matrix.pending_count(),
                out.obs.capped,
                tallies(1, &out.matrix),
            )
        }
        Procedure::Multipass { heuristic } => {
            let mut session = SessionState::new(spec.clone(), seed)?;
            session.run_first_pass(&first, source)?;
            for (w, step) in cfg.passes.iter().enumerate().skip(1) {
                let prev = &session.history.last().expect("first pass ran").matrix;
                let Some(plan) = step.resolve(w as u32 + 1, Some(prev))? else {
                    break;
                };
                session.run_pass(&plan, *heuristic, source)?;
            }
            let mut feasible = Vec::new();
            let mut pending = 0;
            let mut capped = false;
            for rec in &session.history {
                feasible.extend(tallies(rec.plan.pass_index, &rec.matrix));
                pending += rec.matrix.pending_count();
                capped |= rec.obs.capped;
            }
            (
                session.union_decisions(),
                session.history.iter().map(|r| r.obs.total).collect(),
                pending,
                capped,
                feasible,
            )
        }
    };
    Ok(MacroOutcome {
        correct: score_cd(&decisions, truth, spec)?,
        total_obs: pass_obs.iter().sum(),
        pass_obs,
        pending,
        capped,
        feasible,
    })
}

/// Build the source and truth, then run every macro-replication.
pub fn run_macro(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let source = cfg.source.build()?;
    with_threads(threads, || {
        let truth = resolve_truth(cfg, &source)?;
        run_macro_with(cfg, &source, &truth)
    })
}

/// Run on the current rayon pool with a prepared source and truth.
pub fn run_macro_with(
    cfg: &ExperimentConfig,
    source: &dyn ObservationSource,
    truth: &[Vec<f64>],
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let spec = cfg.effective_spec();
    let outcomes: Vec<MacroOutcome> = (0..cfg.macro_reps)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &spec, source, truth, derive_seed(cfg.master_seed, &[rep])))
        .collect::<Result<_>>()?;
    Ok(aggregate(cfg, outcomes))
}

pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn aggregate(cfg: &ExperimentConfig, outcomes: Vec<MacroOutcome>) -> ExperimentReport {
    let n = outcomes.len() as u64;
    let passes = outcomes.iter().map(|o| o.pass_obs.len()).max().unwrap_or(0);
    let obs_per_pass = (0..passes)
        .map(|w| {
            let v: Vec<f64> = outcomes
                .iter()
                .map(|o| o.pass_obs.get(w).copied().unwrap_or(0) as f64)
                .collect();
            MeanSe::of(&v)
        })
        .collect();
    let totals: Vec<f64> = outcomes.iter().map(|o| o.total_obs as f64).collect();

    // Keyed in first-seen order, which is deterministic.
    let mut keys: Vec<(u32, usize, f64)> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for o in &outcomes {
        for t in &o.feasible {
            let key = (t.pass, t.constraint, t.threshold);
            match keys.iter().position(|k| *k == key) {
                Some(i) => values[i].push(t.count as f64),
                None => {
                    keys.push(key);
                    values.push(vec![t.count as f64]);
                }
            }
        }
    }
    let feasible_counts = keys
        .into_iter()
        .zip(values)
        .map(|((pass, constraint, threshold), v)| FeasibleSummary {
            pass,
            constraint,
            threshold,
            reps: v.len() as u64,
            count: MeanSe::of(&v),
        })
        .collect();

    ExperimentReport {
        config_id: cfg.id.clone(),
        procedure: cfg.procedure.label(),
        macro_reps: n,
        pcd: MeanSe::proportion(outcomes.iter().filter(|o| o.correct).count() as u64, n),
        obs_per_pass,
        obs_total: MeanSe::of(&totals),
        undecided: outcomes.iter().map(|o| o.pending as u64).sum(),
        capped_reps: outcomes.iter().filter(|o| o.capped).count() as u64,
        feasible_counts,
        outcomes,
    }
}

/// Shorthand for a config's plan step list with one fixed pass.
pub fn single_pass(thresholds: Vec<Vec<f64>>) -> Vec<PlanStep> {
    vec![PlanStep::Fixed { thresholds }]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odds::OddsRatio;

    fn spec() -> ProblemSpec {
        ProblemSpec::new(2, 1, 0.05, OddsRatio::new(1.5).unwrap())
    }

    #[test]
    fn score_all_acceptable_is_correct() {
        let d = vec![(0, 0.5, vec![Decision::Infeasible, Decision::Pending])];
        assert!(score_cd(&d, &[vec![0.5], vec![0.45]], &spec()).unwrap());
    }

    #[test]
    fn score_desirable_infeasible_is_wrong() {
        let d = vec![(0, 0.5, vec![Decision::Infeasible, Decision::Feasible])];
        assert!(!score_cd(&d, &[vec![0.1], vec![0.1]], &spec()).unwrap());
        let p = vec![(0, 0.5, vec![Decision::Pending, Decision::Feasible])];
        assert!(!score_cd(&p, &[vec![0.1], vec![0.1]], &spec()).unwrap());
    }

    #[test]
    fn score_needs_truth() {
        let d = vec![(0, 0.5, vec![Decision::Feasible, Decision::Feasible])];
        assert!(score_cd(&d, &[vec![0.1]], &spec()).is_err());
    }

    #[test]
    fn single_rep_has_no_se() {
        let m = MeanSe::of(&[3.0]);
        assert_eq!(m.se, None);
        assert_eq!(MeanSe::proportion(1, 1).se, None);
        let m = MeanSe::of(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.se.unwrap() - 1.0).abs() < 1e-15);
    }
}
