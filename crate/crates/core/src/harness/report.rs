//! CSV emission: one row per `(config, procedure, pass, metric)`.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::harness::run::{ExperimentReport, MeanSe};

pub const HEADER: [&str; 6] = ["config_id", "procedure", "pass", "metric", "value", "se"];

fn fmt_se(m: &MeanSe) -> String {
    m.se.map(|s| s.to_string()).unwrap_or_default()
}

/// Write reports to any writer. An empty slice yields only the header.
pub fn write_csv<W: Write>(reports: &[ExperimentReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in reports {
        let mut row = |pass: &str, metric: &str, value: String, se: String| {
            w.write_record([r.config_id.as_str(), r.procedure.as_str(), pass, metric, &value, &se])
        };
        row("all", "macro_reps", r.macro_reps.to_string(), String::new())?;
        row("all", "pcd", r.pcd.mean.to_string(), fmt_se(&r.pcd))?;
        row("all", "obs", r.obs_total.mean.to_string(), fmt_se(&r.obs_total))?;
        row("all", "undecided", r.undecided.to_string(), String::new())?;
        row("all", "capped_reps", r.capped_reps.to_string(), String::new())?;
        for (w_idx, m) in r.obs_per_pass.iter().enumerate() {
            row(&(w_idx + 1).to_string(), "obs", m.mean.to_string(), fmt_se(m))?;
        }
        for f in &r.feasible_counts {
            let metric = format!("feasible_count[c{},h={}]", f.constraint + 1, f.threshold);
            row(&f.pass.to_string(), &metric, f.count.mean.to_string(), fmt_se(&f.count))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(reports: &[ExperimentReport], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(reports, std::io::BufWriter::new(file))
}

pub fn to_csv_string(reports: &[ExperimentReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(reports, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
