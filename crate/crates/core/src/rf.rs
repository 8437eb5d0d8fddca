//! Batch-means baseline procedure with a triangular continuation region
//! (`c = 1`), applied to odds-ratio problems through a tolerance conversion.
//!
//! Raw Bernoulli observations are grouped into batches of size `b`; the
//! batch means are treated as approximately normal. The variance is frozen
//! after the first `n0` batches. OBS is reported in raw observations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brf::{
    check_source, init_systems, Decision, DecisionEntry, DecisionMatrix, PassObs, PassPlan, ProblemSpec,
};
use crate::error::{Error, Result};
use crate::odds::tolerance_convert;
use crate::testbeds::ObservationSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    /// Original thresholds with the smaller tolerance `epsilon`.
    #[default]
    Conservative,
    /// Centred thresholds `h~` with the tolerance `epsilon~`.
    Adjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfParams {
    pub n0: u32,
    pub b: u32,
    #[serde(default)]
    pub tolerance_mode: ToleranceMode,
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 {
            return Err(Error::domain("n0", "need at least two initial batches"));
        }
        if self.b == 0 {
            return Err(Error::domain("b", "batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Means of consecutive batches of `b` bits.
pub fn batch_means(raw: &[bool], b: usize) -> Result<Vec<f64>> {
    if b == 0 || raw.len() % b != 0 {
        return Err(Error::domain("b", "length must be a positive multiple of the batch size"));
    }
    Ok(raw
        .chunks(b)
        .map(|c| c.iter().filter(|&&x| x).count() as f64 / b as f64)
        .collect())
}

/// `g(eta) = (1 + 2 eta)^(-(n0 - 1)/2) / 2` for `c = 1`.
pub fn g_eta(eta: f64, n0: u32) -> f64 {
    0.5 * (1.0 + 2.0 * eta).powf(-(f64::from(n0) - 1.0) / 2.0)
}

/// Solve `g(eta) = beta` for `c = 1`.
pub fn solve_eta(beta: f64, n0: u32) -> Result<f64> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::domain("beta", format!("must lie in (0, 0.5), got {beta}")));
    }
    if n0 < 2 {
        return Err(Error::domain("n0", "need at least two initial batches"));
    }
    Ok(((2.0 * beta).powf(-2.0 / (f64::from(n0) - 1.0)) - 1.0) / 2.0)
}

/// Triangular radius `max{0, (n0-1) w z / v - v r / 2}` for `c = 1`.
pub fn continuation_radius(r: u64, v: f64, w: f64, z: f64, n0: u32) -> f64 {
    ((f64::from(n0) - 1.0) * w * z / v - v * r as f64 / 2.0).max(0.0)
}

/// Unbiased sample variance.
fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Per-constraint quantities the procedure runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfSetup {
    pub beta_ell: Vec<f64>,
    pub eta: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Thresholds actually compared against (original or centred).
    pub working_thresholds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfOutcome {
    pub setup: RfSetup,
    pub matrix: DecisionMatrix,
    /// Raw observations (`b` per batch).
    pub obs: PassObs,
}

pub fn rf_setup(spec: &ProblemSpec, plan: &PassPlan, params: &RfParams) -> Result<RfSetup> {
    params.validate()?;
    let cal = spec.calibrate(plan)?;
    let mut eta = Vec::new();
    let mut epsilon = Vec::new();
    let mut working = Vec::new();
    for (l, list) in plan.thresholds.iter().enumerate() {
        eta.push(solve_eta(cal.beta_ell[l], params.n0)?);
        if list.is_empty() {
            epsilon.push(f64::NAN);
            working.push(Vec::new());
            continue;
        }
        let conv = tolerance_convert(list, spec.theta_for(l))?;
        match params.tolerance_mode {
            ToleranceMode::Conservative => {
                epsilon.push(conv.epsilon);
                working.push(list.clone());
            }
            ToleranceMode::Adjusted => {
                epsilon.push(conv.epsilon_adjusted);
                working.push(conv.adjusted_thresholds());
            }
        }
    }
    Ok(RfSetup {
        beta_ell: cal.beta_ell,
        eta,
        epsilon,
        working_thresholds: working,
    })
}

/// Run the batch-means procedure on every system (single pass only).
pub fn run_rf(
    spec: &ProblemSpec,
    plan: &PassPlan,
    params: &RfParams,
    source: &dyn ObservationSource,
    run_seed: u64,
) -> Result<RfOutcome> {
    if plan.pass_index != 1 {
        return Err(Error::Plan("the batch-means procedure is single-pass".into()));
    }
    let setup = rf_setup(spec, plan, params)?;
    check_source(spec, source)?;
    let states = init_systems(spec, run_seed);
    let results: Vec<(Vec<Vec<DecisionEntry>>, u64, bool)> = states
        .into_par_iter()
        .enumerate()
        .map(|(i, st)| run_system(i, &st.seeds.observation_stream(), spec, params, &setup, source))
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(results.len());
    let mut per_system = Vec::with_capacity(results.len());
    let mut capped = false;
    for (e, n, c) in results {
        entries.push(e);
        per_system.push(n);
        capped |= c;
    }
    Ok(RfOutcome {
        setup,
        matrix: DecisionMatrix {
            thresholds: plan.thresholds.clone(),
            entries,
        },
        obs: PassObs {
            total: per_system.iter().sum(),
            per_system,
            capped,
        },
    })
}

fn run_system(
    system: usize,
    stream: &crate::streams::ReplayableStream,
    spec: &ProblemSpec,
    params: &RfParams,
    setup: &RfSetup,
    source: &dyn ObservationSource,
) -> Result<(Vec<Vec<DecisionEntry>>, u64, bool)> {
    let s = spec.s;
    let b = u64::from(params.b);
    let mut bits = vec![false; s];
    let mut raw_n = 0u64;
    let mut sums = vec![0u64; s];
    // One batch: b raw replications, returns per-constraint successes.
    let mut draw_batch = |sums: &mut [u64], raw_n: &mut u64| -> Result<Vec<u64>> {
        let mut batch = vec![0u64; s];
        for _ in 0..b {
            *raw_n += 1;
            source.observe(system, stream, *raw_n, &mut bits)?;
            for (c, &bit) in batch.iter_mut().zip(&bits) {
                *c += u64::from(bit);
            }
        }
        for (t, c) in sums.iter_mut().zip(&batch) {
            *t += c;
        }
        Ok(batch)
    };

    let mut initial: Vec<Vec<f64>> = vec![Vec::with_capacity(params.n0 as usize); s];
    for _ in 0..params.n0 {
        let batch = draw_batch(&mut sums, &mut raw_n)?;
        for (l, c) in batch.into_iter().enumerate() {
            initial[l].push(c as f64 / b as f64);
        }
    }
    let variance: Vec<f64> = initial.iter().map(|m| sample_variance(m)).collect();

    let mut entries: Vec<Vec<DecisionEntry>> = setup
        .working_thresholds
        .iter()
        .map(|list| vec![DecisionEntry::default(); list.len()])
        .collect();
    let mut r = u64::from(params.n0);
    loop {
        for (l, list) in setup.working_thresholds.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let mean = sums[l] as f64 / (b * r) as f64;
            let radius = continuation_radius(r, setup.epsilon[l], setup.eta[l], variance[l], params.n0) / r as f64;
            for (m, &h) in list.iter().enumerate() {
                if !entries[l][m].is_pending() {
                    continue;
                }
                let decision = if mean + radius <= h {
                    Decision::Feasible
                } else if mean - radius >= h {
                    Decision::Infeasible
                } else {
                    continue;
                };
                if radius == 0.0 && mean == h {
                    log::debug!("system {system}: closed region exactly at threshold {h}, declared feasible");
                }
                entries[l][m] = DecisionEntry {
                    decision,
                    stage: Some(raw_n),
                    rule: None,
                };
            }
        }
        if entries.iter().flatten().all(|e| !e.is_pending()) {
            return Ok((entries, raw_n, false));
        }
        if spec.obs_cap.is_some_and(|cap| raw_n + b > cap) {
            return Ok((entries, raw_n, true));
        }
        draw_batch(&mut sums, &mut raw_n)?;
        r += 1;
    }
}
