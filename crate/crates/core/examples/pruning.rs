//! Pruning 100 systems with a coarse threshold first, refining only if
//! needed, against testing every threshold at once.
//!
//! cargo run -p feaslab --example pruning -- [reps]

use feaslab::harness::{run_macro, ExperimentConfig, PlanStep, Procedure, TruthSpec};
use feaslab::testbeds::Coupling;
use feaslab::{Heuristic, OddsRatio, ProblemSpec, SourceConfig};

fn grid(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(|x| x as f64 / 100.0).collect()
}

fn main() -> feaslab::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut p = vec![vec![0.5, 0.5]; 100];
    p[0] = vec![0.01, 0.01];
    let base = ExperimentConfig {
        id: "pruning".into(),
        spec: ProblemSpec::new(100, 2, 0.05, OddsRatio::new(1.5)?),
        source: SourceConfig::Synthetic {
            p,
            coupling: Coupling::Independent,
        },
        procedure: Procedure::Brf,
        passes: vec![PlanStep::Fixed {
            thresholds: vec![grid(2, 49); 2],
        }],
        macro_reps: reps,
        master_seed: 5,
        truth: TruthSpec::Known,
    };
    let staged = ExperimentConfig {
        procedure: Procedure::Multipass { heuristic: Heuristic::BN },
        passes: vec![
            PlanStep::Fixed {
                thresholds: vec![vec![0.25]; 2],
            },
            // One feasible system ends the search.
            PlanStep::Conditional {
                none: Some(vec![grid(26, 49); 2]),
                one: None,
                many: Some(vec![grid(2, 24); 2]),
            },
        ],
        ..base.clone()
    };
    for cfg in [&staged, &base] {
        let r = run_macro(cfg, None)?;
        let per_pass: Vec<String> = r.obs_per_pass.iter().map(|m| format!("{:.0}", m.mean)).collect();
        println!(
            "{:<7} PCD {:.3}  OBS {:>8.0} (per pass {})",
            r.procedure,
            r.pcd.mean,
            r.obs_total.mean,
            per_pass.join(" + ")
        );
    }
    Ok(())
}
