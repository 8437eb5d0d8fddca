//! Persistent interactive sessions and their versioned JSON snapshot.
//!
//! A snapshot holds everything needed to continue a session after a
//! restart: the problem, source description, seeds, per-system statistics
//! (counts, envelopes as `{num, den}`, last-update flags) and the pass
//! history. Raw observations are never stored. Derived fields (OBS
//! summaries, half-widths, truth classifications) are recomputed on every
//! save and ignored on load.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::brf::{PassPlan, ProblemSpec};
use crate::error::{Error, Result};
use crate::multipass::{Heuristic, PassRecord, SessionState};
use crate::odds::{classify_truth, Classification};
use crate::testbeds::{ObservationSource, SourceConfig};

pub const SNAPSHOT_VERSION: &str = "feaslab.session.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    RunningPass,
    /// Closed by the client; no further passes accepted.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintInfo {
    pub theta: f64,
    pub beta_ell: f64,
    pub halfwidth: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObsSummary {
    /// Total new replications per pass.
    pub per_pass: Vec<u64>,
    /// `[pass][system]` new replications.
    pub per_pass_per_system: Vec<Vec<u64>>,
    pub cumulative_per_system: Vec<u64>,
    pub total: u64,
}

/// Fields recomputed from the state on every save.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Derived {
    pub system_labels: Vec<String>,
    pub constraints: Vec<ConstraintInfo>,
    pub obs: ObsSummary,
    /// `[pass][system][constraint][threshold]`, present when truth is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifications: Option<Vec<Vec<Vec<Vec<Classification>>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub version: String,
    pub id: String,
    pub status: SessionStatus,
    pub created_unix_ms: u64,
    pub updated_unix_ms: u64,
    pub source: SourceConfig,
    /// Probabilities used to annotate decisions, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<Vec<f64>>>,
    /// Plan for the first pass, supplied at creation.
    pub first_plan: PassPlan,
    pub state: SessionState,
    #[serde(default)]
    pub derived: Derived,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl SessionRecord {
    /// Validate inputs and build an idle session whose first pass has not run.
    pub fn create(
        id: String,
        spec: ProblemSpec,
        source: SourceConfig,
        first_plan: PassPlan,
        run_seed: u64,
        truth: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        spec.validate()?;
        if first_plan.pass_index != 1 {
            return Err(Error::domain("plan.pass_index", "the first plan must have index 1"));
        }
        first_plan.validate(spec.s)?;
        spec.calibrate(&first_plan)?;
        let built = source.build()?;
        if built.num_systems() != spec.k || built.num_constraints() != spec.s {
            return Err(Error::domain(
                "source",
                format!(
                    "source has {} systems x {} constraints, spec says {} x {}",
                    built.num_systems(),
                    built.num_constraints(),
                    spec.k,
                    spec.s
                ),
            ));
        }
        let truth = truth.or_else(|| built.known_probabilities());
        if let Some(t) = &truth {
            if t.len() != spec.k || t.iter().any(|row| row.len() != spec.s) {
                return Err(Error::domain("truth", "truth must be k x s"));
            }
            if t.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::domain("truth", "probabilities must lie in [0, 1]"));
            }
        }
        let now = now_ms();
        let mut rec = SessionRecord {
            version: SNAPSHOT_VERSION.into(),
            id,
            status: SessionStatus::Idle,
            created_unix_ms: now,
            updated_unix_ms: now,
            source,
            truth,
            first_plan,
            state: SessionState::new(spec, run_seed)?,
            derived: Derived::default(),
        };
        rec.refresh();
        Ok(rec)
    }

    /// Run the next pass. Pass 1 uses the stored plan unless `plan` is
    /// given; later passes need both a plan and a heuristic.
    pub fn run_next(&mut self, plan: Option<PassPlan>, heuristic: Option<Heuristic>) -> Result<&PassRecord> {
        if self.status == SessionStatus::Complete {
            return Err(Error::Session("session is complete".into()));
        }
        let source = self.source.build()?;
        let w = self.state.next_pass_index();
        if w == 1 {
            let plan = plan.unwrap_or_else(|| self.first_plan.clone());
            if plan.pass_index != 1 || heuristic.is_some() {
                return Err(Error::Session("a later pass was requested before pass 1".into()));
            }
            self.state.run_first_pass(&plan, &source)?;
        } else {
            let plan = plan.ok_or_else(|| Error::domain("plan", "passes after the first need a plan"))?;
            let heuristic = heuristic.ok_or_else(|| Error::domain("heuristic", "passes after the first need a heuristic"))?;
            self.state.run_pass(&plan, heuristic, &source)?;
        }
        self.updated_unix_ms = now_ms();
        self.refresh();
        Ok(self.state.history.last().expect("pass recorded"))
    }

    /// Recompute derived fields.
    pub fn refresh(&mut self) {
        let st = &self.state;
        let labels = self.source.build().map(|s| s.system_labels()).unwrap_or_default();
        let constraints = st
            .calibration
            .as_ref()
            .map(|c| {
                (0..st.spec.s)
                    .map(|l| ConstraintInfo {
                        theta: st.spec.theta_for(l).get(),
                        beta_ell: c.beta_ell[l],
                        halfwidth: c.halfwidth[l],
                    })
                    .collect()
            })
            .unwrap_or_default();
        let obs = ObsSummary {
            per_pass: st.history.iter().map(|r| r.obs.total).collect(),
            per_pass_per_system: st.history.iter().map(|r| r.obs.per_system.clone()).collect(),
            cumulative_per_system: st.cumulative_obs(),
            total: st.total_obs(),
        };
        let classifications = self.truth.as_ref().map(|truth| {
            st.history
                .iter()
                .map(|rec| {
                    (0..st.spec.k)
                        .map(|i| {
                            rec.matrix
                                .thresholds
                                .iter()
                                .enumerate()
                                .map(|(l, list)| {
                                    list.iter()
                                        .map(|&h| {
                                            classify_truth(truth[i][l], h, st.spec.theta_for(l))
                                                .unwrap_or(Classification::Acceptable)
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        });
        self.derived = Derived {
            system_labels: labels,
            constraints,
            obs,
            classifications,
        };
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut rec: SessionRecord = serde_json::from_str(text)?;
        if rec.version != SNAPSHOT_VERSION {
            return Err(Error::Session(format!("unsupported snapshot version {:?}", rec.version)));
        }
        rec.state.validate()?;
        // A pass interrupted by a crash never committed; the state is the
        // last completed one.
        if rec.status == SessionStatus::RunningPass {
            rec.status = SessionStatus::Idle;
        }
        rec.refresh();
        Ok(rec)
    }

    /// Atomically write `<dir>/<id>.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.json", self.id));
        let tmp = dir.join(format!(".{}.json.tmp", self.id));
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Load every `*.json` session in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let is_json = path.extension().is_some_and(|e| e == "json");
            let hidden = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
            if is_json && !hidden {
                match Self::load(&path) {
                    Ok(rec) => out.push(rec),
                    Err(e) => log::warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odds::OddsRatio;
    use crate::testbeds::Coupling;

    fn record() -> SessionRecord {
        let spec = ProblemSpec::new(3, 1, 0.05, OddsRatio::new(1.5).unwrap());
        let source = SourceConfig::Synthetic {
            p: vec![vec![0.1], vec![0.3], vec![0.6]],
            coupling: Coupling::Independent,
        };
        SessionRecord::create("s1".into(), spec, source, PassPlan::new(1, vec![vec![0.3]]), 7, None).unwrap()
    }

    #[test]
    fn json_round_trip_and_continuation() {
        let mut a = record();
        a.run_next(None, None).unwrap();
        let mut b = SessionRecord::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
        let plan = PassPlan::new(2, vec![vec![0.15, 0.45]]);
        a.run_next(Some(plan.clone()), Some(Heuristic::BN)).unwrap();
        b.run_next(Some(plan), Some(Heuristic::BN)).unwrap();
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn envelopes_serialize_as_fractions() {
        let mut a = record();
        a.run_next(None, None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        let lb = &v["state"]["states"][0]["v_lb"][0];
        assert!(lb["num"].is_i64() && lb["den"].is_i64());
        assert!(v["state"]["states"][0]["seeds"]["observation"]["seed"].is_string());
        assert_eq!(v["version"], SNAPSHOT_VERSION);
        assert_eq!(v["derived"]["constraints"][0]["halfwidth"], 11);
    }

    #[test]
    fn rejects_wrong_version() {
        let a = record();
        let text = a.to_json().unwrap().replace(SNAPSHOT_VERSION, "feaslab.session.v0");
        assert!(SessionRecord::from_json(&text).is_err());
    }

    #[test]
    fn rejects_mismatched_source() {
        let spec = ProblemSpec::new(2, 1, 0.05, OddsRatio::new(1.5).unwrap());
        let source = SourceConfig::Synthetic {
            p: vec![vec![0.1]],
            coupling: Coupling::Independent,
        };
        assert!(SessionRecord::create("x".into(), spec, source, PassPlan::new(1, vec![vec![0.3]]), 1, None).is_err());
    }
}
