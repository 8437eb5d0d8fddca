//! The statistically valid first pass, plus the per-system stage machinery
//! shared with later passes.
//!
//! For each system and each `(constraint l, threshold h)` the first pass
//! tracks the integer walk `sum_n (Y_ln - I_n(h))`, where `I_n(h) = 1{U_n <= h}`
//! and one uniform `U_n` per stage is shared by every threshold of the
//! system. The walk declares Feasible on reaching `-H_l` and Infeasible on
//! reaching `+H_l`. Alongside, the envelopes
//! `v_lb = max_n (S_n - H)/n` and `v_ub = min_n (S_n + H)/n` are kept as
//! exact fractions so later passes can reuse them.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::multipass::Heuristic;
use crate::odds::{continuation_halfwidth, error_split, per_constraint_error, ErrorSplitScheme, OddsRatio};
pub use crate::streams::SamplingMode;
use crate::streams::{assign_seeds, ReplayableStream, SystemSeeds};
use crate::testbeds::ObservationSource;

/// Problem definition shared by every pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub k: usize,
    pub s: usize,
    pub alpha: f64,
    /// One value per constraint, or a single value applied to all.
    #[serde(deserialize_with = "one_or_many")]
    pub theta: Vec<OddsRatio>,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
    #[serde(default)]
    pub split_scheme: ErrorSplitScheme,
    /// Size the error budget as if every constraint will see more than one
    /// threshold across passes.
    #[serde(default)]
    pub expect_more_passes: bool,
    /// Thresholds planned per constraint over all passes. Defaults to the
    /// first pass's counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planned_threshold_counts: Option<Vec<usize>>,
    /// Per-system ceiling on cumulative replications. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_cap: Option<u64>,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<OddsRatio>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        One(OddsRatio),
        Many(Vec<OddsRatio>),
    }
    Ok(match Repr::deserialize(d)? {
        Repr::One(t) => vec![t],
        Repr::Many(v) => v,
    })
}

impl ProblemSpec {
    pub fn new(k: usize, s: usize, alpha: f64, theta: OddsRatio) -> Self {
        ProblemSpec {
            k,
            s,
            alpha,
            theta: vec![theta],
            sampling_mode: SamplingMode::Independent,
            split_scheme: ErrorSplitScheme::PerConstraint,
            expect_more_passes: false,
            planned_threshold_counts: None,
            obs_cap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("k", "need at least one system"));
        }
        if self.s == 0 {
            return Err(Error::domain("s", "need at least one constraint"));
        }
        crate::error::check_open_unit("alpha", self.alpha)?;
        if self.theta.len() != 1 && self.theta.len() != self.s {
            return Err(Error::domain("theta", "give one value or one per constraint"));
        }
        if let Some(c) = &self.planned_threshold_counts {
            if c.len() != self.s {
                return Err(Error::domain("planned_threshold_counts", "need one count per constraint"));
            }
        }
        if self.obs_cap == Some(0) {
            return Err(Error::domain("obs_cap", "must be positive"));
        }
        Ok(())
    }

    pub fn theta_for(&self, l: usize) -> OddsRatio {
        self.theta[if self.theta.len() == 1 { 0 } else { l }]
    }

    /// Error allocation and half-widths, fixed for the whole session.
    pub fn calibrate(&self, first_plan: &PassPlan) -> Result<Calibration> {
        self.validate()?;
        first_plan.validate(self.s)?;
        let mut counts = self
            .planned_threshold_counts
            .clone()
            .unwrap_or_else(|| first_plan.thresholds.iter().map(Vec::len).collect());
        if self.expect_more_passes {
            counts.iter_mut().for_each(|c| *c = (*c).max(2));
        }
        let beta = error_split(self.alpha, self.k, self.sampling_mode.is_crn())?;
        let beta_ell = per_constraint_error(beta, &counts, self.split_scheme)?;
        let halfwidth = beta_ell
            .iter()
            .enumerate()
            .map(|(l, &b)| continuation_halfwidth(b, self.theta_for(l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Calibration {
            beta,
            beta_ell,
            halfwidth,
            counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Per-system error.
    pub beta: f64,
    /// Per-constraint error.
    pub beta_ell: Vec<f64>,
    /// Continuation half-width `H_l`.
    pub halfwidth: Vec<u32>,
    /// Threshold counts the allocation was sized for.
    pub counts: Vec<usize>,
}

/// Thresholds tested in one pass. An empty list skips that constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassPlan {
    pub pass_index: u32,
    pub thresholds: Vec<Vec<f64>>,
}

impl PassPlan {
    pub fn new(pass_index: u32, thresholds: Vec<Vec<f64>>) -> Self {
        PassPlan {
            pass_index,
            thresholds,
        }
    }

    pub fn validate(&self, s: usize) -> Result<()> {
        if self.pass_index == 0 {
            return Err(Error::Plan("pass indices start at 1".into()));
        }
        if self.thresholds.len() != s {
            return Err(Error::domain(
                "thresholds",
                format!("expected {s} threshold lists, got {}", self.thresholds.len()),
            ));
        }
        for list in &self.thresholds {
            for (m, &h) in list.iter().enumerate() {
                crate::error::check_open_unit("thresholds", h)?;
                if m > 0 && list[m - 1] >= h {
                    return Err(Error::domain("thresholds", "each list must be strictly increasing"));
                }
            }
        }
        if self.thresholds.iter().all(Vec::is_empty) {
            return Err(Error::domain("thresholds", "a pass needs at least one threshold"));
        }
        Ok(())
    }

    pub fn counts(&self) -> Vec<usize> {
        self.thresholds.iter().map(Vec::len).collect()
    }
}

/// Exact rational `num / den` with `den > 0`. Equality and ordering are
/// by value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Fraction {
    pub num: i64,
    pub den: i64,
}

impl Fraction {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den > 0, "fraction denominator must be positive");
        Fraction { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn cmp_f64(self, x: f64) -> Ordering {
        cmp_ratio_f64(self.num, self.den, x)
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        (i128::from(self.num) * i128::from(other.den)).cmp(&(i128::from(other.num) * i128::from(self.den)))
    }
}

impl PartialEq for Fraction {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Fraction {}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact comparison of `num / den` (den > 0) with a finite double.
fn cmp_ratio_f64(num: i64, den: i64, x: f64) -> Ordering {
    debug_assert!(den > 0 && x.is_finite());
    if x == 0.0 {
        return num.cmp(&0);
    }
    // x = sign * m * 2^e exactly.
    let (m, e, sign) = x.integer_decode();
    let m = i128::from(sign) * i128::from(m);
    let num_bits = 64 - num.unsigned_abs().leading_zeros() as i32;
    let den = i128::from(den);
    if e < 0 && num_bits - i32::from(e) <= 125 {
        return (i128::from(num) << (-e) as u32).cmp(&(m * den));
    }
    if (0..=10).contains(&e) {
        return i128::from(num).cmp(&((m * den) << e as u32));
    }
    let (lhs, rhs) = if e < 0 {
        (BigInt::from(num) << (-e) as usize, BigInt::from(m) * BigInt::from(den))
    } else {
        (BigInt::from(num), (BigInt::from(m) * BigInt::from(den)) << e as usize)
    };
    lhs.cmp(&rhs)
}

/// Which envelope changed most recently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Last {
    #[default]
    None,
    Lb,
    Ub,
}

/// Recyclable per-system statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Replications drawn so far, over all passes.
    pub r: u64,
    /// `sum_n Y_ln` per constraint.
    pub success_counts: Vec<u64>,
    /// Running max of `(S_n - H)/n`; `None` is minus infinity.
    pub v_lb: Vec<Option<Fraction>>,
    /// Running min of `(S_n + H)/n`; `None` is plus infinity.
    pub v_ub: Vec<Option<Fraction>>,
    pub last: Vec<Last>,
    pub seeds: SystemSeeds,
}

impl SystemState {
    pub fn new(seeds: SystemSeeds, s: usize) -> Self {
        SystemState {
            r: 0,
            success_counts: vec![0; s],
            v_lb: vec![None; s],
            v_ub: vec![None; s],
            last: vec![Last::None; s],
            seeds,
        }
    }

    /// Fold the current stage into constraint `l`'s envelopes. The lower
    /// envelope is updated first, so a stage that moves both leaves `Ub`.
    pub fn update_envelopes(&mut self, l: usize, halfwidth: u32) {
        let r = self.r as i64;
        let sum = self.success_counts[l] as i64;
        let h = i64::from(halfwidth);
        let lb = Fraction::new(sum - h, r);
        if self.v_lb[l].is_none_or(|v| lb > v) {
            self.v_lb[l] = Some(lb);
            self.last[l] = Last::Lb;
        }
        let ub = Fraction::new(sum + h, r);
        if self.v_ub[l].is_none_or(|v| ub < v) {
            self.v_ub[l] = Some(ub);
            self.last[l] = Last::Ub;
        }
    }

    fn ub_at_most(&self, l: usize, probe: Probe) -> bool {
        self.v_ub[l].is_some_and(|v| probe.cmp_envelope(v) != Ordering::Less)
    }

    fn lb_at_least(&self, l: usize, probe: Probe) -> bool {
        self.v_lb[l].is_some_and(|v| probe.cmp_envelope(v) != Ordering::Greater)
    }

    /// Four-branch check used before any new sampling in a later pass.
    pub fn initial_check(&self, l: usize, probe: Probe) -> Result<Decision> {
        let ub_le = self.ub_at_most(l, probe);
        let lb_ge = self.lb_at_least(l, probe);
        Ok(match (ub_le, lb_ge) {
            (true, false) => Decision::Feasible,
            (false, true) => Decision::Infeasible,
            (true, true) => match self.last[l] {
                Last::Lb => Decision::Feasible,
                Last::Ub => Decision::Infeasible,
                Last::None => {
                    return Err(Error::Fault(format!(
                        "crossed envelopes without a last-update flag on constraint {l}"
                    )))
                }
            },
            (false, false) => Decision::Pending,
        })
    }

    /// Continuation test: Feasible if `v_ub <= probe`, else Infeasible if
    /// `v_lb >= probe`.
    pub fn continuation_check(&self, l: usize, probe: Probe) -> Decision {
        if self.ub_at_most(l, probe) {
            Decision::Feasible
        } else if self.lb_at_least(l, probe) {
            Decision::Infeasible
        } else {
            Decision::Pending
        }
    }
}

/// What an envelope is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    Threshold(f64),
    DummyMean(Fraction),
}

impl Probe {
    /// Ordering of the probe relative to an envelope value.
    fn cmp_envelope(self, env: Fraction) -> Ordering {
        match self {
            Probe::Threshold(h) => env.cmp_f64(h).reverse(),
            Probe::DummyMean(f) => f.cmp(&env),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Feasible,
    Infeasible,
    #[default]
    Pending,
}

/// Which test produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Random-walk exit (first pass).
    Walk,
    /// Envelope against the replayed dummy mean, before new sampling.
    InitialDummy,
    /// Envelope against the threshold, before new sampling.
    InitialThreshold,
    ContinuationDummy,
    ContinuationThreshold,
    /// Threshold already decided in an earlier pass.
    Recycled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionEntry {
    pub decision: Decision,
    /// Cumulative replication count at the moment of decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<DecisionRule>,
}

impl DecisionEntry {
    fn decided(decision: Decision, stage: u64, rule: DecisionRule) -> Self {
        DecisionEntry {
            decision,
            stage: Some(stage),
            rule: Some(rule),
        }
    }

    pub fn is_pending(&self) -> bool {
        self.decision == Decision::Pending
    }
}

/// Decisions of one pass, indexed `[system][constraint][threshold]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMatrix {
    pub thresholds: Vec<Vec<f64>>,
    pub entries: Vec<Vec<Vec<DecisionEntry>>>,
}

impl DecisionMatrix {
    pub fn get(&self, system: usize, l: usize, m: usize) -> Decision {
        self.entries[system][l][m].decision
    }

    /// Number of Feasible systems per `(constraint, threshold)`.
    pub fn feasible_counts(&self) -> Vec<Vec<usize>> {
        self.thresholds
            .iter()
            .enumerate()
            .map(|(l, list)| {
                (0..list.len())
                    .map(|m| self.entries.iter().filter(|e| e[l][m].decision == Decision::Feasible).count())
                    .collect()
            })
            .collect()
    }

    pub fn pending_count(&self) -> usize {
        self.entries.iter().flatten().flatten().filter(|e| e.is_pending()).count()
    }

    /// Systems declared Feasible for every tested threshold in the pass.
    pub fn all_feasible_systems(&self) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].iter().flatten().all(|e| e.decision == Decision::Feasible))
            .collect()
    }
}

/// Replications drawn during one pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassObs {
    pub per_system: Vec<u64>,
    pub total: u64,
    /// Whether any system stopped at `obs_cap` with entries still pending.
    pub capped: bool,
}

impl PassObs {
    fn from_counts(per_system: Vec<u64>, capped: bool) -> Self {
        PassObs {
            total: per_system.iter().sum(),
            per_system,
            capped,
        }
    }
}

/// How a pass decides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassMode {
    FirstPass,
    Heuristic(Heuristic),
}

impl PassMode {
    fn uses_dummy(self) -> bool {
        !matches!(self, PassMode::Heuristic(Heuristic::N))
    }

    fn uses_threshold(self) -> bool {
        matches!(self, PassMode::Heuristic(Heuristic::N | Heuristic::BN))
    }
}

struct Slot {
    l: usize,
    h: f64,
    dummy: u64,
    entry: DecisionEntry,
}

/// One system's progress through one pass.
pub struct SystemRun {
    state: SystemState,
    halfwidth: Vec<u32>,
    mode: PassMode,
    shape: Vec<usize>,
    slots: Vec<Slot>,
    r_start: u64,
}

impl SystemRun {
    /// Start a first pass. The state must be fresh.
    pub fn first_pass(state: SystemState, plan: &PassPlan, halfwidth: &[u32]) -> Result<Self> {
        if state.r != 0 {
            return Err(Error::Plan("a first pass needs a fresh system state".into()));
        }
        Ok(Self::build(state, plan, halfwidth, PassMode::FirstPass, None))
    }

    /// Start a later pass and apply the heuristic's initial checks.
    ///
    /// `preset[l][m]`, when given, holds decisions recycled from earlier
    /// passes. `dummy` must be supplied for heuristics that use dummies.
    pub fn later_pass(
        state: SystemState,
        plan: &PassPlan,
        halfwidth: &[u32],
        heuristic: Heuristic,
        preset: Option<Vec<Vec<Option<DecisionEntry>>>>,
        dummy: Option<&ReplayableStream>,
    ) -> Result<Self> {
        let mode = PassMode::Heuristic(heuristic);
        let mut run = Self::build(state, plan, halfwidth, mode, preset);
        let r = run.state.r;
        if mode.uses_dummy() && r > 0 {
            let stream = dummy.ok_or_else(|| Error::Fault("dummy stream required".into()))?;
            run.replay_dummies(stream);
        }
        for idx in 0..run.slots.len() {
            if !run.slots[idx].entry.is_pending() {
                continue;
            }
            let Slot { l, h, dummy, .. } = run.slots[idx];
            let mut outcome = None;
            if mode.uses_threshold() {
                let d = run.state.initial_check(l, Probe::Threshold(h))?;
                if d != Decision::Pending {
                    outcome = Some((d, DecisionRule::InitialThreshold));
                }
            }
            if outcome.is_none() && mode.uses_dummy() && r > 0 {
                let probe = Probe::DummyMean(Fraction::new(dummy as i64, r as i64));
                let d = run.state.initial_check(l, probe)?;
                if d != Decision::Pending {
                    outcome = Some((d, DecisionRule::InitialDummy));
                }
            }
            if let Some((d, rule)) = outcome {
                run.slots[idx].entry = DecisionEntry::decided(d, r, rule);
            }
        }
        Ok(run)
    }

    fn build(
        state: SystemState,
        plan: &PassPlan,
        halfwidth: &[u32],
        mode: PassMode,
        preset: Option<Vec<Vec<Option<DecisionEntry>>>>,
    ) -> Self {
        let mut slots = Vec::new();
        for (l, list) in plan.thresholds.iter().enumerate() {
            for (m, &h) in list.iter().enumerate() {
                let entry = preset
                    .as_ref()
                    .and_then(|p| p[l][m])
                    .unwrap_or_default();
                slots.push(Slot { l, h, dummy: 0, entry });
            }
        }
        let r_start = state.r;
        SystemRun {
            state,
            halfwidth: halfwidth.to_vec(),
            mode,
            shape: plan.counts(),
            slots,
            r_start,
        }
    }

    fn replay_dummies(&mut self, stream: &ReplayableStream) {
        for n in 1..=self.state.r {
            let u = stream.uniform_at(n);
            for slot in self.slots.iter_mut().filter(|s| s.entry.is_pending()) {
                slot.dummy += u64::from(u <= slot.h);
            }
        }
    }

    pub fn is_complete(&self) -> bool {
        self.slots.iter().all(|s| !s.entry.is_pending())
    }

    pub fn needs_uniform(&self) -> bool {
        self.mode.uses_dummy()
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    /// Replications drawn since this pass started.
    pub fn new_observations(&self) -> u64 {
        self.state.r - self.r_start
    }

    /// Dummy count of the threshold at `(l, m)` over the stages seen so far
    /// (including replayed ones).
    pub fn dummy_count(&self, l: usize, m: usize) -> u64 {
        let offset: usize = self.shape[..l].iter().sum();
        self.slots[offset + m].dummy
    }

    /// Advance one stage with observation bits `y` (one per constraint) and
    /// the stage uniform `u`. Returns newly decided `(l, m, decision)`.
    pub fn step(&mut self, y: &[bool], u: Option<f64>) -> Result<Vec<(usize, usize, Decision)>> {
        if self.is_complete() {
            return Err(Error::Fault("stepping a fully decided system".into()));
        }
        if y.len() != self.state.success_counts.len() {
            return Err(Error::Fault("observation vector has the wrong length".into()));
        }
        let u = match (self.mode.uses_dummy(), u) {
            (true, Some(u)) => u,
            (true, None) => return Err(Error::Fault("stage uniform required".into())),
            (false, _) => 0.0,
        };
        let mut on = vec![false; y.len()];
        for slot in self.slots.iter().filter(|s| s.entry.is_pending()) {
            on[slot.l] = true;
        }
        self.state.r += 1;
        for (c, &bit) in self.state.success_counts.iter_mut().zip(y) {
            *c += u64::from(bit);
        }
        for (l, _) in on.iter().enumerate().filter(|(_, &o)| o) {
            self.state.update_envelopes(l, self.halfwidth[l]);
        }
        let r = self.state.r;
        let mut decided = Vec::new();
        let mut offsets = vec![0usize; self.shape.len()];
        for l in 1..self.shape.len() {
            offsets[l] = offsets[l - 1] + self.shape[l - 1];
        }
        for idx in 0..self.slots.len() {
            if !self.slots[idx].entry.is_pending() {
                continue;
            }
            let slot = &mut self.slots[idx];
            if self.mode.uses_dummy() {
                slot.dummy += u64::from(u <= slot.h);
            }
            let (l, h, dummy) = (slot.l, slot.h, slot.dummy);
            let outcome = match self.mode {
                PassMode::FirstPass => {
                    let hw = i128::from(self.halfwidth[l]);
                    let sum = i128::from(self.state.success_counts[l]);
                    let dum = i128::from(dummy);
                    if sum + hw <= dum {
                        Some((Decision::Feasible, DecisionRule::Walk))
                    } else if sum - dum >= hw {
                        Some((Decision::Infeasible, DecisionRule::Walk))
                    } else {
                        None
                    }
                }
                PassMode::Heuristic(heuristic) => {
                    let mut out = None;
                    if self.mode.uses_threshold() {
                        let d = self.state.continuation_check(l, Probe::Threshold(h));
                        if d != Decision::Pending {
                            out = Some((d, DecisionRule::ContinuationThreshold));
                        }
                    }
                    if out.is_none() && heuristic != Heuristic::N {
                        let probe = Probe::DummyMean(Fraction::new(dummy as i64, r as i64));
                        let d = self.state.continuation_check(l, probe);
                        if d != Decision::Pending {
                            out = Some((d, DecisionRule::ContinuationDummy));
                        }
                    }
                    out
                }
            };
            if let Some((d, rule)) = outcome {
                self.slots[idx].entry = DecisionEntry::decided(d, r, rule);
                decided.push((l, idx - offsets[l], d));
            }
        }
        Ok(decided)
    }

    /// Per-constraint entries in plan order, and the final state.
    pub fn finish(self) -> (Vec<Vec<DecisionEntry>>, SystemState) {
        let mut out: Vec<Vec<DecisionEntry>> = self.shape.iter().map(|&d| Vec::with_capacity(d)).collect();
        for slot in self.slots {
            out[slot.l].push(slot.entry);
        }
        (out, self.state)
    }
}

/// Drive one system through a pass. Returns entries, final state, new
/// observations and whether the cap stopped it.
pub(crate) fn drive_system(
    mut run: SystemRun,
    system: usize,
    source: &dyn ObservationSource,
    obs_cap: Option<u64>,
) -> Result<(Vec<Vec<DecisionEntry>>, SystemState, u64, bool)> {
    let obs = run.state.seeds.observation_stream();
    let dummy = run.needs_uniform().then(|| run.state.seeds.dummy_stream());
    let mut bits = vec![false; source.num_constraints()];
    let mut capped = false;
    while !run.is_complete() {
        if obs_cap.is_some_and(|cap| run.state.r >= cap) {
            capped = true;
            break;
        }
        let n = run.state.r + 1;
        source.observe(system, &obs, n, &mut bits)?;
        let u = dummy.as_ref().map(|d| d.uniform_at(n));
        run.step(&bits, u)?;
    }
    let new_obs = run.new_observations();
    let (entries, state) = run.finish();
    Ok((entries, state, new_obs, capped))
}

/// Everything produced by a first pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstPassOutcome {
    pub calibration: Calibration,
    pub matrix: DecisionMatrix,
    pub states: Vec<SystemState>,
    pub obs: PassObs,
}

/// Fresh states with seeds derived from `run_seed` per the sampling mode.
pub fn init_systems(spec: &ProblemSpec, run_seed: u64) -> Vec<SystemState> {
    assign_seeds(run_seed, spec.k, spec.sampling_mode)
        .into_iter()
        .map(|seeds| SystemState::new(seeds, spec.s))
        .collect()
}

pub(crate) fn check_source(spec: &ProblemSpec, source: &dyn ObservationSource) -> Result<()> {
    if source.num_systems() != spec.k || source.num_constraints() != spec.s {
        return Err(Error::Config(format!(
            "source has {} systems x {} constraints, problem expects {} x {}",
            source.num_systems(),
            source.num_constraints(),
            spec.k,
            spec.s
        )));
    }
    Ok(())
}

/// Run the first pass over every system.
pub fn run_first_pass(
    spec: &ProblemSpec,
    plan: &PassPlan,
    source: &dyn ObservationSource,
    run_seed: u64,
) -> Result<FirstPassOutcome> {
    if plan.pass_index != 1 {
        return Err(Error::Plan(format!("first pass must have index 1, got {}", plan.pass_index)));
    }
    let calibration = spec.calibrate(plan)?;
    check_source(spec, source)?;
    let states = init_systems(spec, run_seed);
    let results: Vec<_> = states
        .into_par_iter()
        .enumerate()
        .map(|(i, state)| {
            let run = SystemRun::first_pass(state, plan, &calibration.halfwidth)?;
            drive_system(run, i, source, spec.obs_cap)
        })
        .collect::<Result<_>>()?;
    let (matrix, states, obs) = assemble(plan, results);
    Ok(FirstPassOutcome {
        calibration,
        matrix,
        states,
        obs,
    })
}

pub(crate) fn assemble(
    plan: &PassPlan,
    results: Vec<(Vec<Vec<DecisionEntry>>, SystemState, u64, bool)>,
) -> (DecisionMatrix, Vec<SystemState>, PassObs) {
    let mut entries = Vec::with_capacity(results.len());
    let mut states = Vec::with_capacity(results.len());
    let mut counts = Vec::with_capacity(results.len());
    let mut capped = false;
    for (e, st, n, c) in results {
        entries.push(e);
        states.push(st);
        counts.push(n);
        capped |= c;
    }
    let matrix = DecisionMatrix {
        thresholds: plan.thresholds.clone(),
        entries,
    };
    (matrix, states, PassObs::from_counts(counts, capped))
}
