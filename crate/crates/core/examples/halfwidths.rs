//! Error allocation, half-widths and the indifference-zone boundaries.
//!
//! cargo run -p feaslab --example halfwidths

use feaslab::odds::{boundary_thresholds, classify, continuation_halfwidth, error_split, per_constraint_error};
use feaslab::{ErrorSplitScheme, OddsRatio};

fn main() -> feaslab::Result<()> {
    let alpha = 0.05;
    for k in [1, 10, 100] {
        let beta = error_split(alpha, k, false)?;
        let beta_crn = error_split(alpha, k, true)?;
        println!("k={k:>3}: beta={beta:.6} (CRN {beta_crn:.6})");
    }

    // Two constraints, three planned thresholds on the first and one on the second.
    let beta = error_split(alpha, 10, false)?;
    let counts = [3, 1];
    for scheme in [ErrorSplitScheme::PerConstraint, ErrorSplitScheme::PerEffectiveThreshold] {
        let per = per_constraint_error(beta, &counts, scheme)?;
        println!("{scheme:?}: beta_l = {per:.6?}");
    }

    for t in [1.2, 1.5, 2.0] {
        let theta = OddsRatio::new(t)?;
        let h = continuation_halfwidth(0.05, theta)?;
        let b = boundary_thresholds(0.15, theta)?;
        println!(
            "theta={t}: H={h:>2}; p=0.15 is Unacceptable below h={:.4} and Desirable above h={:.4}",
            b.lower, b.upper
        );
        for h in [0.10, 0.15, 0.25] {
            println!("    h={h:.2}: {:?}", classify(0.15, h, theta)?);
        }
    }
    Ok(())
}
