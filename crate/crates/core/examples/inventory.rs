//! The (s, S) inventory testbed: one simulated year, a truth surface and a
//! two-pass search for low-risk policies.
//!
//! cargo run -p feaslab --example inventory -- [reps]

use feaslab::harness::{run_macro_with, ExperimentConfig, PlanStep, Procedure, TruthSpec};
use feaslab::testbeds::{default_grid, estimate_truth, simulate_inventory_year, InventoryParams, Policy};
use feaslab::{Heuristic, ObservationSource, OddsRatio, ProblemSpec, SourceConfig};

fn main() -> feaslab::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let params = InventoryParams::default();
    let year = simulate_inventory_year(Policy { s: 20, big_s: 40 }, &[25; 12], &params);
    println!("flat demand of 25 under (20,40): {year:?}");

    let source_cfg = SourceConfig::Inventory {
        systems: default_grid(),
        params,
    };
    let source = source_cfg.build()?;
    let truth = estimate_truth(&source, 1, 20_000)?;
    let labels = source.system_labels();
    let mut best: Vec<usize> = (0..labels.len()).collect();
    best.sort_by(|&a, &b| truth.p_hat[a][0].max(truth.p_hat[a][1]).total_cmp(&truth.p_hat[b][0].max(truth.p_hat[b][1])));
    for &i in &best[..5] {
        println!("{:>8}: P(cost > 1400) {:.4}  P(stockout) {:.4}", labels[i], truth.p_hat[i][0], truth.p_hat[i][1]);
    }

    let both = |v: Vec<f64>| vec![v.clone(), v];
    let odd = |a: u32, b: u32, step: usize| (a..=b).step_by(step).map(|x| x as f64 / 100.0).collect::<Vec<_>>();
    let cfg = ExperimentConfig {
        id: "inventory".into(),
        spec: ProblemSpec::new(labels.len(), 2, 0.05, OddsRatio::new(1.5)?),
        source: source_cfg,
        procedure: Procedure::Multipass { heuristic: Heuristic::BN },
        passes: vec![
            PlanStep::Fixed {
                thresholds: both(odd(11, 51, 10)),
            },
            PlanStep::Conditional {
                none: None,
                one: None,
                many: Some(both(odd(1, 9, 2))),
            },
        ],
        macro_reps: reps,
        master_seed: 8,
        truth: TruthSpec::Known,
    };
    let r = run_macro_with(&cfg, &source, &truth.p_hat)?;
    println!("MPB_BN over {reps} reps: PCD {:.3}, OBS {:.0}", r.pcd.mean, r.obs_total.mean);
    for f in r.feasible_counts.iter().filter(|f| f.pass == 2) {
        println!("    pass 2, constraint {}, h={:.2}: {:.1} feasible systems", f.constraint, f.threshold, f.count.mean);
    }
    Ok(())
}
