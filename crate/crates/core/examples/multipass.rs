//! Adding thresholds after a first pass with each heuristic.
//!
//! cargo run -p feaslab --example multipass

use feaslab::brf::DecisionRule;
use feaslab::testbeds::Coupling;
use feaslab::{Heuristic, OddsRatio, PassPlan, ProblemSpec, SessionState, SourceConfig};

fn main() -> feaslab::Result<()> {
    let source = SourceConfig::Synthetic {
        p: vec![vec![0.15, 0.15]; 4],
        coupling: Coupling::Independent,
    }
    .build()?;
    let mut spec = ProblemSpec::new(4, 2, 0.05, OddsRatio::new(1.5)?);
    // Later passes will add thresholds, so budget for more than one.
    spec.expect_more_passes = true;

    let first = PassPlan::new(1, vec![vec![0.07, 0.28]; 2]);
    let second = PassPlan::new(2, vec![vec![0.105, 0.209]; 2]);

    for heuristic in [Heuristic::B, Heuristic::N, Heuristic::BN] {
        let mut session = SessionState::new(spec.clone(), 11)?;
        session.run_first_pass(&first, &source)?;
        let rec = session.run_pass(&second, heuristic, &source)?.clone();
        let initial = rec
            .matrix
            .entries
            .iter()
            .flatten()
            .flatten()
            .filter(|e| matches!(e.rule, Some(DecisionRule::InitialDummy | DecisionRule::InitialThreshold)))
            .count();
        println!(
            "{heuristic:>2}: pass-2 replications {:>5}, {initial} entries settled before sampling, cumulative {}",
            rec.obs.total,
            session.total_obs()
        );
    }
    Ok(())
}
