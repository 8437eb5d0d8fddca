//! Batch-means baseline: tolerance conversion and the effect of batch size
//! at a hard threshold.
//!
//! cargo run -p feaslab --example rf_baseline

use feaslab::odds::{boundary_thresholds, tolerance_convert};
use feaslab::rf::{rf_setup, run_rf, RfParams, ToleranceMode};
use feaslab::streams::derive_seed;
use feaslab::testbeds::Coupling;
use feaslab::{Decision, OddsRatio, PassPlan, ProblemSpec, SourceConfig};

fn main() -> feaslab::Result<()> {
    let theta = OddsRatio::new(1.2)?;
    let conv = tolerance_convert(&[0.05, 0.25, 0.5], theta)?;
    for t in &conv.per_threshold {
        println!(
            "h={:.2}: band [{:.4}, {:.4}] eps={:.5} eps~={:.5} h~={:.4}",
            t.threshold, t.lower, t.upper, t.epsilon, t.epsilon_adjusted, t.adjusted_threshold
        );
    }

    let p = 0.01;
    let h = boundary_thresholds(p, theta)?.lower;
    let spec = ProblemSpec::new(1, 1, 0.05, theta);
    let plan = PassPlan::new(1, vec![vec![h]]);
    let source = SourceConfig::Synthetic {
        p: vec![vec![p]],
        coupling: Coupling::Independent,
    }
    .build()?;
    let reps = 400;
    for b in [1, 10, 100, 400] {
        let params = RfParams {
            n0: 20,
            b,
            tolerance_mode: ToleranceMode::Conservative,
        };
        let setup = rf_setup(&spec, &plan, &params)?;
        let mut correct = 0;
        let mut obs = 0;
        for rep in 0..reps {
            let out = run_rf(&spec, &plan, &params, &source, derive_seed(3, &[rep]))?;
            correct += u32::from(out.matrix.get(0, 0, 0) == Decision::Infeasible);
            obs += out.obs.total;
        }
        println!(
            "b={b:>3}: eta={:.4} PCD {:.3} mean OBS {:.0}",
            setup.eta[0],
            f64::from(correct) / reps as f64,
            obs as f64 / reps as f64
        );
    }
    Ok(())
}
