//! Later passes: thresholds added after the first pass, decided by reusing
//! the first-pass envelopes and replayed dummy streams.
//!
//! - `B` compares envelopes with the dummy mean `sum_n I_n(h) / r`.
//! - `N` compares envelopes with the threshold `h` itself.
//! - `BN` applies the `N` test and then the `B` test, taking whichever
//!   fires first.
//!
//! Each heuristic first runs a four-branch initial check against the
//! envelopes inherited from earlier passes, then resumes sampling for the
//! thresholds it could not settle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brf::{
    assemble, check_source, drive_system, init_systems, run_first_pass, Calibration, Decision, DecisionEntry,
    DecisionMatrix, DecisionRule, PassObs, PassPlan, ProblemSpec, SystemRun, SystemState,
};
use crate::error::{Error, Result};
use crate::testbeds::ObservationSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heuristic {
    #[serde(alias = "b")]
    B,
    #[serde(alias = "n")]
    N,
    #[serde(alias = "bn")]
    BN,
}

impl std::str::FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B" => Ok(Heuristic::B),
            "N" => Ok(Heuristic::N),
            "BN" => Ok(Heuristic::BN),
            other => Err(Error::domain("heuristic", format!("unknown heuristic {other:?}"))),
        }
    }
}

impl std::fmt::Display for Heuristic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Heuristic::B => "B",
            Heuristic::N => "N",
            Heuristic::BN => "BN",
        })
    }
}

/// One completed pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub plan: PassPlan,
    /// `None` for the first pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<Heuristic>,
    pub matrix: DecisionMatrix,
    pub obs: PassObs,
}

/// A multi-pass session: problem, per-system statistics and pass history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub spec: ProblemSpec,
    #[serde(with = "crate::streams::u64_string")]
    pub run_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    pub states: Vec<SystemState>,
    pub history: Vec<PassRecord>,
}

impl SessionState {
    pub fn new(spec: ProblemSpec, run_seed: u64) -> Result<Self> {
        spec.validate()?;
        let states = init_systems(&spec, run_seed);
        Ok(SessionState {
            spec,
            run_seed,
            calibration: None,
            states,
            history: Vec::new(),
        })
    }

    pub fn next_pass_index(&self) -> u32 {
        self.history.len() as u32 + 1
    }

    /// Replications per system over all passes.
    pub fn cumulative_obs(&self) -> Vec<u64> {
        self.states.iter().map(|s| s.r).collect()
    }

    pub fn total_obs(&self) -> u64 {
        self.states.iter().map(|s| s.r).sum()
    }

    pub fn run_first_pass(&mut self, plan: &PassPlan, source: &dyn ObservationSource) -> Result<&PassRecord> {
        if !self.history.is_empty() {
            return Err(Error::Session("the first pass has already run".into()));
        }
        let out = run_first_pass(&self.spec, plan, source, self.run_seed)?;
        self.calibration = Some(out.calibration);
        self.states = out.states;
        self.history.push(PassRecord {
            plan: plan.clone(),
            heuristic: None,
            matrix: out.matrix,
            obs: out.obs,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Run pass `w >= 2` with the chosen heuristic.
    pub fn run_pass(
        &mut self,
        plan: &PassPlan,
        heuristic: Heuristic,
        source: &dyn ObservationSource,
    ) -> Result<&PassRecord> {
        let calibration = self
            .calibration
            .clone()
            .ok_or_else(|| Error::Session("the first pass has not run".into()))?;
        if plan.pass_index != self.next_pass_index() {
            return Err(Error::Plan(format!(
                "expected pass index {}, got {}",
                self.next_pass_index(),
                plan.pass_index
            )));
        }
        plan.validate(self.spec.s)?;
        check_source(&self.spec, source)?;

        let presets: Vec<_> = (0..self.spec.k).map(|i| self.recycled(i, plan)).collect();
        let recycled = presets
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .filter(|e| e.is_some())
            .count();
        if recycled > 0 {
            log::warn!("pass {}: {recycled} entries repeat earlier thresholds and reuse stored decisions", plan.pass_index);
        }

        let cap = self.spec.obs_cap;
        let halfwidth = &calibration.halfwidth;
        // Work on copies so a failed pass leaves the session untouched.
        let results = self
            .states
            .clone()
            .into_par_iter()
            .zip(presets)
            .enumerate()
            .map(|(i, (state, preset))| {
                let dummy = state.seeds.dummy_stream();
                let run = SystemRun::later_pass(state, plan, halfwidth, heuristic, preset, Some(&dummy))?;
                drive_system(run, i, source, cap)
            })
            .collect::<Result<Vec<_>>>()?;
        let (matrix, states, obs) = assemble(plan, results);
        self.states = states;
        self.history.push(PassRecord {
            plan: plan.clone(),
            heuristic: Some(heuristic),
            matrix,
            obs,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Stored decisions for thresholds of `plan` already tested on system `i`.
    fn recycled(&self, i: usize, plan: &PassPlan) -> Option<Vec<Vec<Option<DecisionEntry>>>> {
        let mut any = false;
        let preset: Vec<Vec<Option<DecisionEntry>>> = plan
            .thresholds
            .iter()
            .enumerate()
            .map(|(l, list)| {
                list.iter()
                    .map(|&h| {
                        let found = self.lookup(i, l, h)?;
                        any = true;
                        Some(DecisionEntry {
                            decision: found.decision,
                            stage: found.stage,
                            rule: Some(DecisionRule::Recycled),
                        })
                    })
                    .collect()
            })
            .collect();
        any.then_some(preset)
    }

    /// Latest non-pending decision for `(i, l, h)` in the history.
    pub fn lookup(&self, i: usize, l: usize, h: f64) -> Option<DecisionEntry> {
        self.history.iter().rev().find_map(|rec| {
            let m = rec.matrix.thresholds[l].iter().position(|&t| t == h)?;
            let e = rec.matrix.entries[i][l][m];
            (!e.is_pending()).then_some(e)
        })
    }

    /// Every distinct tested `(constraint, threshold)` with its decisions per
    /// system, taking the latest decision when a threshold was repeated.
    pub fn union_decisions(&self) -> Vec<(usize, f64, Vec<Decision>)> {
        let mut out: Vec<(usize, f64, Vec<Decision>)> = Vec::new();
        for rec in &self.history {
            for (l, list) in rec.matrix.thresholds.iter().enumerate() {
                for (m, &h) in list.iter().enumerate() {
                    let col: Vec<Decision> = rec.matrix.entries.iter().map(|e| e[l][m].decision).collect();
                    match out.iter_mut().find(|(ol, oh, _)| *ol == l && *oh == h) {
                        Some(slot) => slot.2 = col,
                        None => out.push((l, h, col)),
                    }
                }
            }
        }
        out
    }

    /// Structural checks for a state loaded from disk.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.states.len() != self.spec.k {
            return Err(Error::Session("system count does not match the problem".into()));
        }
        for st in &self.states {
            let s = self.spec.s;
            if st.success_counts.len() != s || st.v_lb.len() != s || st.v_ub.len() != s || st.last.len() != s {
                return Err(Error::Session("per-constraint statistics have the wrong length".into()));
            }
            if st.v_lb.iter().chain(&st.v_ub).flatten().any(|f| f.den <= 0) {
                return Err(Error::Session("envelope denominators must be positive".into()));
            }
        }
        if self.history.is_empty() != self.calibration.is_none() {
            return Err(Error::Session("calibration and history disagree".into()));
        }
        for (w, rec) in self.history.iter().enumerate() {
            if rec.plan.pass_index as usize != w + 1 {
                return Err(Error::Session("pass indices are not consecutive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odds::OddsRatio;
    use crate::testbeds::{Coupling, SourceConfig, Testbed};

    fn source(p: Vec<f64>) -> Testbed {
        SourceConfig::Synthetic {
            p: p.into_iter().map(|v| vec![v]).collect(),
            coupling: Coupling::Independent,
        }
        .build()
        .unwrap()
    }

    fn session(k: usize) -> SessionState {
        let mut spec = ProblemSpec::new(k, 1, 0.05, OddsRatio::new(1.5).unwrap());
        spec.expect_more_passes = true;
        SessionState::new(spec, 17).unwrap()
    }

    #[test]
    fn pass_two_requires_pass_one() {
        let mut s = session(1);
        let src = source(vec![0.2]);
        let err = s.run_pass(&PassPlan::new(2, vec![vec![0.3]]), Heuristic::BN, &src);
        assert!(matches!(err, Err(Error::Session(_))));
    }

    #[test]
    fn far_thresholds_decide_at_initial_check() {
        let mut s = session(3);
        let src = source(vec![0.1, 0.5, 0.9]);
        s.run_first_pass(&PassPlan::new(1, vec![vec![0.5]]), &src).unwrap();
        let before = s.cumulative_obs();
        let rec = s.run_pass(&PassPlan::new(2, vec![vec![0.01, 0.99]]), Heuristic::N, &src).unwrap().clone();
        for i in 0..3 {
            for m in 0..2 {
                let e = rec.matrix.entries[i][0][m];
                if e.rule == Some(DecisionRule::InitialThreshold) {
                    assert_eq!(e.stage, Some(before[i]));
                }
            }
        }
        assert_eq!(rec.matrix.pending_count(), 0);
        assert_eq!(rec.matrix.get(0, 0, 1), Decision::Feasible);
        assert_eq!(rec.matrix.get(2, 0, 0), Decision::Infeasible);
    }

    #[test]
    fn repeated_threshold_is_recycled() {
        let mut s = session(2);
        let src = source(vec![0.1, 0.7]);
        s.run_first_pass(&PassPlan::new(1, vec![vec![0.4]]), &src).unwrap();
        let first = s.history[0].matrix.clone();
        let before = s.total_obs();
        let rec = s.run_pass(&PassPlan::new(2, vec![vec![0.4]]), Heuristic::B, &src).unwrap();
        assert_eq!(rec.obs.total, 0);
        for i in 0..2 {
            assert_eq!(rec.matrix.get(i, 0, 0), first.get(i, 0, 0));
            assert_eq!(rec.matrix.entries[i][0][0].rule, Some(DecisionRule::Recycled));
        }
        assert_eq!(s.total_obs(), before);
    }

    #[test]
    fn history_is_append_only() {
        let mut s = session(2);
        let src = source(vec![0.2, 0.3]);
        s.run_first_pass(&PassPlan::new(1, vec![vec![0.25]]), &src).unwrap();
        let snapshot = s.history[0].clone();
        s.run_pass(&PassPlan::new(2, vec![vec![0.1, 0.4]]), Heuristic::BN, &src).unwrap();
        assert_eq!(s.history[0], snapshot);
        assert!(s.run_pass(&PassPlan::new(2, vec![vec![0.5]]), Heuristic::BN, &src).is_err());
        assert_eq!(s.union_decisions().len(), 3);
    }

    #[test]
    fn heuristic_parsing() {
        assert_eq!("bn".parse::<Heuristic>().unwrap(), Heuristic::BN);
        assert_eq!(serde_json::from_str::<Heuristic>("\"n\"").unwrap(), Heuristic::N);
        assert_eq!(serde_json::to_string(&Heuristic::BN).unwrap(), "\"BN\"");
        assert!("x".parse::<Heuristic>().is_err());
    }
}
