//! Theoretical and simulated stopping times for a single system.
//!
//! cargo run -p feaslab --example stopping_times

use feaslab::harness::{run_macro, single_pass, ExperimentConfig, Procedure, TruthSpec};
use feaslab::odds::{absorption_probability, continuation_halfwidth, expected_stopping_time};
use feaslab::testbeds::Coupling;
use feaslab::{OddsRatio, ProblemSpec, SourceConfig};

fn main() -> feaslab::Result<()> {
    let reps = 1_000;
    println!("theta     p       h   P(feasible)  E[N] theory  E[N] simulated (s.e.)");
    for t in [1.2, 1.5] {
        let theta = OddsRatio::new(t)?;
        let hw = continuation_halfwidth(0.05, theta)?;
        for p in [0.15, 0.5] {
            for c in [1.0, t, 2.0 * t, 5.0 * t, 10.0 * t] {
                let h = p / (p + (1.0 - p) * c);
                let cfg = ExperimentConfig {
                    id: "stopping".into(),
                    spec: ProblemSpec::new(1, 1, 0.05, theta),
                    source: SourceConfig::Synthetic {
                        p: vec![vec![p]],
                        coupling: Coupling::Independent,
                    },
                    procedure: Procedure::Brf,
                    passes: single_pass(vec![vec![h]]),
                    macro_reps: reps,
                    master_seed: 42,
                    truth: TruthSpec::Known,
                };
                let r = run_macro(&cfg, None)?;
                println!(
                    "{t:>5} {p:>5} {h:>7.4} {:>12.4} {:>12.3} {:>12.3} ({:.3})",
                    absorption_probability(p, h, hw)?,
                    expected_stopping_time(p, h, hw)?,
                    r.obs_total.mean,
                    r.obs_total.se.unwrap_or(0.0)
                );
            }
        }
    }
    Ok(())
}
