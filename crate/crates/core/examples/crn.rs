//! Common random numbers: shared observation streams across systems.
//!
//! cargo run -p feaslab --example crn

use feaslab::brf::run_first_pass;
use feaslab::streams::{assign_seeds, derive_seed};
use feaslab::testbeds::Coupling;
use feaslab::{OddsRatio, PassPlan, ProblemSpec, SamplingMode, SourceConfig};

fn main() -> feaslab::Result<()> {
    for mode in [SamplingMode::Independent, SamplingMode::Crn { share_dummies: true }] {
        let seeds = assign_seeds(7, 3, mode);
        println!("{mode:?}: observation seeds {:?}", seeds.iter().map(|s| s.observation).collect::<Vec<_>>());
    }

    let p = vec![vec![0.10], vec![0.12], vec![0.30]];
    let plan = PassPlan::new(1, vec![vec![0.2]]);
    for (mode, coupling) in [
        (SamplingMode::Independent, Coupling::Independent),
        (SamplingMode::Crn { share_dummies: true }, Coupling::SharedUniform),
    ] {
        let mut spec = ProblemSpec::new(3, 1, 0.05, OddsRatio::new(1.5)?);
        spec.sampling_mode = mode;
        let source = SourceConfig::Synthetic {
            p: p.clone(),
            coupling,
        }
        .build()?;
        let reps = 500;
        let mut obs = 0;
        let mut agree = 0;
        for rep in 0..reps {
            let out = run_first_pass(&spec, &plan, &source, derive_seed(1, &[rep]))?;
            obs += out.obs.total;
            agree += u32::from(out.matrix.get(0, 0, 0) == out.matrix.get(1, 0, 0));
        }
        println!(
            "{mode:?}: mean OBS {:.1}, systems 0 and 1 agree in {:.1}% of runs",
            obs as f64 / reps as f64,
            100.0 * f64::from(agree) / reps as f64
        );
    }
    Ok(())
}
