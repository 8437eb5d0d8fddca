//! One statistically valid pass over several systems and thresholds.
//!
//! cargo run -p feaslab --example single_pass

use feaslab::brf::run_first_pass;
use feaslab::testbeds::Coupling;
use feaslab::{OddsRatio, PassPlan, ProblemSpec, SourceConfig};

fn main() -> feaslab::Result<()> {
    let p = vec![vec![0.05, 0.30], vec![0.20, 0.10], vec![0.45, 0.60]];
    let source = SourceConfig::Synthetic {
        p: p.clone(),
        coupling: Coupling::Independent,
    }
    .build()?;
    let spec = ProblemSpec::new(3, 2, 0.05, OddsRatio::new(1.5)?);
    let plan = PassPlan::new(1, vec![vec![0.1, 0.25, 0.4], vec![0.2]]);
    let out = run_first_pass(&spec, &plan, &source, 2024)?;

    let cal = &out.calibration;
    println!("beta={:.5} beta_l={:.5?} H={:?}", cal.beta, cal.beta_ell, cal.halfwidth);
    for (i, row) in out.matrix.entries.iter().enumerate() {
        println!("system {i} p={:?} ({} replications)", p[i], out.obs.per_system[i]);
        for (l, entries) in row.iter().enumerate() {
            for (m, e) in entries.iter().enumerate() {
                println!(
                    "    constraint {l} h={:.2}: {:?} at stage {:?}",
                    plan.thresholds[l][m],
                    e.decision,
                    e.stage.unwrap_or(0)
                );
            }
        }
    }
    println!("feasible for every tested threshold: {:?}", out.matrix.all_feasible_systems());
    println!("total replications: {}", out.obs.total);
    Ok(())
}
