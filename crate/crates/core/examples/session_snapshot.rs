//! An interactive session persisted to disk between passes.
//!
//! cargo run -p feaslab --example session_snapshot

use feaslab::session::SessionRecord;
use feaslab::testbeds::Coupling;
use feaslab::{Heuristic, OddsRatio, PassPlan, ProblemSpec, SourceConfig};

fn main() -> feaslab::Result<()> {
    let dir = std::env::temp_dir().join("feaslab-session-example");
    std::fs::create_dir_all(&dir)?;

    let mut spec = ProblemSpec::new(3, 1, 0.05, OddsRatio::new(1.5)?);
    spec.expect_more_passes = true;
    let source = SourceConfig::Synthetic {
        p: vec![vec![0.05], vec![0.3], vec![0.6]],
        coupling: Coupling::Independent,
    };
    let mut rec = SessionRecord::create("demo".into(), spec, source, PassPlan::new(1, vec![vec![0.3]]), 17, None)?;
    rec.run_next(None, None)?;
    rec.save(&dir)?;
    println!("saved pass 1 to {}", dir.join("demo.json").display());

    // A later process picks the session up where it stopped.
    let mut resumed = SessionRecord::load(&dir.join("demo.json"))?;
    let pass = resumed.run_next(Some(PassPlan::new(2, vec![vec![0.1, 0.5]])), Some(Heuristic::BN))?;
    println!("pass 2 drew {} new replications", pass.obs.total);
    for (i, row) in pass.matrix.entries.iter().enumerate() {
        let cells: Vec<String> = row[0].iter().map(|e| format!("{:?}/{:?}", e.decision, e.rule)).collect();
        println!("    system {i}: {}", cells.join(", "));
    }
    resumed.save(&dir)?;

    let snapshot = resumed.to_json()?;
    let v: serde_json::Value = serde_json::from_str(&snapshot).unwrap_or_default();
    println!("envelope of system 0: lb {} ub {}", v["state"]["states"][0]["v_lb"][0], v["state"]["states"][0]["v_ub"][0]);
    println!("derived: {}", serde_json::to_string(&resumed.derived.constraints).unwrap_or_default());
    Ok(())
}
