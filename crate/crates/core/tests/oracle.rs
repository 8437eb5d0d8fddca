//! Closed-form walk analytics against brute-force simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feaslab::brf::run_first_pass;
use feaslab::odds::{absorption_probability, expected_stopping_time};
use feaslab::streams::derive_seed;
use feaslab::testbeds::Coupling;
use feaslab::{Decision, OddsRatio, PassPlan, ProblemSpec, SourceConfig};

const WALKS: u64 = 100_000;

/// Plain simulation of the walk `S_n - D_n` started at 0 with barriers +-H.
/// Returns (fraction ending at -H, mean stopping time).
fn brute_force(p: f64, h: f64, halfwidth: u32, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hw = i64::from(halfwidth);
    let mut low = 0u64;
    let mut steps = 0u64;
    for _ in 0..WALKS {
        let mut x = 0i64;
        loop {
            steps += 1;
            x += i64::from(rng.random::<f64>() < p) - i64::from(rng.random::<f64>() <= h);
            if x <= -hw {
                low += 1;
                break;
            }
            if x >= hw {
                break;
            }
        }
    }
    (low as f64 / WALKS as f64, steps as f64 / WALKS as f64)
}

#[test]
fn closed_forms_match_brute_force() {
    for (i, &(p, h, hw)) in [(0.3, 0.4, 8u32), (0.5, 0.5, 6), (0.15, 0.12, 10), (0.6, 0.45, 5)]
        .iter()
        .enumerate()
    {
        let (feasible, mean_t) = brute_force(p, h, hw, i as u64);
        let want_f = absorption_probability(p, h, hw).unwrap();
        let want_t = expected_stopping_time(p, h, hw).unwrap();
        let se_f = (want_f * (1.0 - want_f) / WALKS as f64).sqrt();
        assert!((feasible - want_f).abs() <= 4.0 * se_f + 1e-12, "p={p} h={h}: {feasible} vs {want_f}");
        // The stopping time's spread is at most its mean times a modest factor.
        assert!((mean_t - want_t).abs() / want_t < 0.02, "p={p} h={h}: {mean_t} vs {want_t}");
    }
}

#[test]
fn engine_absorption_matches_closed_form() {
    let (p, h, t) = (0.3, 0.36, 1.5);
    let spec = ProblemSpec::new(1, 1, 0.05, OddsRatio::new(t).unwrap());
    let source = SourceConfig::Synthetic {
        p: vec![vec![p]],
        coupling: Coupling::Independent,
    }
    .build()
    .unwrap();
    let plan = PassPlan::new(1, vec![vec![h]]);
    let reps = 20_000u64;
    let mut feasible = 0u64;
    let mut total = 0u64;
    let mut hw = 0;
    for rep in 0..reps {
        let out = run_first_pass(&spec, &plan, &source, derive_seed(77, &[rep])).unwrap();
        hw = out.calibration.halfwidth[0];
        feasible += u64::from(out.matrix.get(0, 0, 0) == Decision::Feasible);
        total += out.obs.total;
    }
    let want = absorption_probability(p, h, hw).unwrap();
    let got = feasible as f64 / reps as f64;
    let se = (want * (1.0 - want) / reps as f64).sqrt();
    assert!((got - want).abs() <= 4.0 * se, "{got} vs {want}");
    let mean_t = total as f64 / reps as f64;
    let want_t = expected_stopping_time(p, h, hw).unwrap();
    assert!((mean_t - want_t).abs() / want_t < 0.03, "{mean_t} vs {want_t}");
}
