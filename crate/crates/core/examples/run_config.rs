//! Run an experiment config file and print its CSV report.
//!
//! cargo run -p feaslab --example run_config -- configs/brf_single_system.json [reps]

use feaslab::harness::{run_macro, write_csv, ExperimentConfig};

fn main() -> feaslab::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/brf_single_system.json".into());
    let mut cfg = ExperimentConfig::load(path.as_ref())?;
    if let Some(reps) = args.next().and_then(|s| s.parse().ok()) {
        cfg.macro_reps = reps;
    }
    let report = run_macro(&cfg, None)?;
    write_csv(&[report], std::io::stdout().lock())
}
