//! Closed-form analytics for odds-ratio feasibility checks.
//!
//! Everything here is a pure function of its arguments. The continuation
//! half-width is the one quantity whose minimality test is evaluated exactly
//! (big-integer arithmetic on the binary expansions of `beta` and `theta`);
//! the remaining formulas use `f64`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};

/// Odds-ratio indifference-zone parameter, strictly greater than one.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct OddsRatio(f64);

impl OddsRatio {
    pub fn new(theta: f64) -> Result<Self> {
        if theta.is_finite() && theta > 1.0 {
            Ok(OddsRatio(theta))
        } else {
            Err(Error::domain(
                "theta",
                format!("odds-ratio must be finite and > 1, got {theta}"),
            ))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for OddsRatio {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        OddsRatio::new(value)
    }
}

impl From<OddsRatio> for f64 {
    fn from(value: OddsRatio) -> f64 {
        value.0
    }
}

impl fmt::Display for OddsRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a system's error budget is divided among its constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSplitScheme {
    /// `beta / s` for a single-threshold constraint, `beta / (2s)` otherwise.
    #[default]
    PerConstraint,
    /// `beta / D` with `D = sum_l min(count_l, 2)`.
    PerEffectiveThreshold,
}

/// Where a system sits relative to a threshold under the indifference zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Must be declared feasible.
    Desirable,
    /// Either decision is correct.
    Acceptable,
    /// Must be declared infeasible.
    Unacceptable,
}

/// The two thresholds at which a system with probability `p` sits exactly on
/// the indifference-zone boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    /// Threshold at which the system is Unacceptable with odds ratio exactly `theta`.
    pub lower: f64,
    /// Threshold at which the system is Desirable with odds ratio exactly `theta`.
    pub upper: f64,
}

/// Per-system error: `1 - (1 - alpha)^(1/k)` for independent systems,
/// `alpha / k` under common random numbers.
pub fn error_split(alpha: f64, k: usize, crn: bool) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    if k == 0 {
        return Err(Error::domain("k", "system count must be at least 1"));
    }
    if k == 1 {
        return Ok(alpha);
    }
    let k = k as f64;
    Ok(if crn {
        alpha / k
    } else {
        // -expm1(ln(1 - alpha) / k) keeps precision for small alpha / large k.
        -((-alpha).ln_1p() / k).exp_m1()
    })
}

/// Per-constraint error from the per-system error and the number of
/// thresholds planned on each constraint across all passes.
///
/// A count of zero marks a constraint that is never tested; it contributes
/// nothing to the effective-threshold denominator.
pub fn per_constraint_error(
    beta: f64,
    planned_counts: &[usize],
    scheme: ErrorSplitScheme,
) -> Result<Vec<f64>> {
    check_open_unit("beta", beta)?;
    if planned_counts.is_empty() {
        return Err(Error::domain("counts", "at least one constraint is required"));
    }
    let s = planned_counts.len() as f64;
    match scheme {
        ErrorSplitScheme::PerConstraint => Ok(planned_counts
            .iter()
            .map(|&c| if c > 1 { beta / (2.0 * s) } else { beta / s })
            .collect()),
        ErrorSplitScheme::PerEffectiveThreshold => {
            let effective: usize = planned_counts.iter().map(|&c| c.min(2)).sum();
            if effective == 0 {
                return Err(Error::domain("counts", "no constraint has a threshold"));
            }
            Ok(vec![beta / effective as f64; planned_counts.len()])
        }
    }
}

/// Smallest `H >= 1` with `beta >= 1 / (1 + theta^H)`.
pub fn continuation_halfwidth(beta: f64, theta: OddsRatio) -> Result<u32> {
    check_open_unit("beta", beta)?;
    let t = theta.get();
    let estimate = ((1.0 - beta) / beta).ln() / t.ln();
    if !estimate.is_finite() || estimate > 1e6 {
        return Err(Error::domain(
            "theta",
            format!("half-width for beta={beta}, theta={t} is unreasonably large"),
        ));
    }
    let mut h = (estimate.ceil().max(1.0)) as u32;
    while h > 1 && halfwidth_suffices(beta, t, h - 1) {
        h -= 1;
    }
    while !halfwidth_suffices(beta, t, h) {
        h += 1;
    }
    Ok(h)
}

/// Exact test of `beta * (1 + theta^h) >= 1`.
fn halfwidth_suffices(beta: f64, theta: f64, h: u32) -> bool {
    // x = mantissa * 2^exp exactly for finite positive doubles.
    let (bm, be, _) = beta.integer_decode();
    let (tm, te, _) = theta.integer_decode();
    let be = be as i64;
    let pow_exp = te as i64 * h as i64;
    // beta + beta * theta^h  vs  1, every term written as c * 2^x.
    let lo = be.min(be + pow_exp).min(0);
    let term = |c: BigInt, x: i64| c << ((x - lo) as usize);
    let lhs = term(BigInt::from(bm), be) + term(BigInt::from(bm) * BigInt::from(tm).pow(h), be + pow_exp);
    let rhs = term(BigInt::from(1u8), 0);
    lhs >= rhs
}

/// Classify probability `p` against threshold `h`.
///
/// Equality with `theta` in either odds ratio counts as Desirable or
/// Unacceptable respectively.
pub fn classify(p: f64, h: f64, theta: OddsRatio) -> Result<Classification> {
    check_open_unit("p", p)?;
    check_open_unit("h", h)?;
    Ok(classify_unchecked(p, h, theta.get()))
}

/// Like [`classify`] but also accepts `p` of exactly 0 or 1, taking the
/// limiting odds. Used when scoring against Monte-Carlo truth estimates,
/// which can land on the endpoints for rare events.
pub fn classify_truth(p: f64, h: f64, theta: OddsRatio) -> Result<Classification> {
    check_open_unit("h", h)?;
    if p == 0.0 {
        return Ok(Classification::Desirable);
    }
    if p == 1.0 {
        return Ok(Classification::Unacceptable);
    }
    classify(p, h, theta)
}

fn classify_unchecked(p: f64, h: f64, theta: f64) -> Classification {
    let desirable_ratio = (1.0 - p) * h / (p * (1.0 - h));
    let unacceptable_ratio = p * (1.0 - h) / ((1.0 - p) * h);
    if desirable_ratio >= theta {
        Classification::Desirable
    } else if unacceptable_ratio >= theta {
        Classification::Unacceptable
    } else {
        Classification::Acceptable
    }
}

/// The two "most difficult" thresholds for a system with probability `p`.
pub fn boundary_thresholds(p: f64, theta: OddsRatio) -> Result<BoundaryPair> {
    check_open_unit("p", p)?;
    let t = theta.get();
    Ok(BoundaryPair {
        lower: p / (p + (1.0 - p) * t),
        upper: p * t / (p * (t - 1.0) + 1.0),
    })
}

/// Odds ratio driving the walk `sum(Y - I)`: the ratio of down-step to
/// up-step probability, `(1-p) h / (p (1-h))`.
fn walk_ratio(p: f64, h: f64) -> f64 {
    (1.0 - p) * h / (p * (1.0 - h))
}

/// Probability that the walk `sum(Y - I)` reaches `-H` before `+H`.
pub fn absorption_probability(p: f64, h: f64, halfwidth: u32) -> Result<f64> {
    check_open_unit("p", p)?;
    check_open_unit("h", h)?;
    let rho = walk_ratio(p, h);
    // rho^H / (1 + rho^H) = 1 / (1 + rho^-H), written to avoid overflow.
    let log_odds = halfwidth as f64 * rho.ln();
    Ok(1.0 / (1.0 + (-log_odds).exp()))
}

/// Expected number of replications until the walk leaves `(-H, H)`.
pub fn expected_stopping_time(p: f64, h: f64, halfwidth: u32) -> Result<f64> {
    check_open_unit("p", p)?;
    check_open_unit("h", h)?;
    let hw = halfwidth as f64;
    if p == h {
        return Ok(hw * hw / (2.0 * p * (1.0 - h)));
    }
    // H/(p-h) * [2 (1 - rho^H) / (1 - rho^2H) - 1] = H/(p-h) * (1 - rho^H)/(1 + rho^H)
    let half_log = 0.5 * hw * walk_ratio(p, h).ln();
    Ok(hw / (p - h) * -half_log.tanh())
}

/// Tolerance quantities for one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTolerance {
    pub threshold: f64,
    /// Largest probability of a Desirable system.
    pub lower: f64,
    /// Smallest probability of an Unacceptable system.
    pub upper: f64,
    /// Conservative tolerance: distance to the nearer edge.
    pub epsilon: f64,
    /// Adjusted tolerance: half-width of the acceptable band.
    pub epsilon_adjusted: f64,
    /// Centre of the acceptable band.
    pub adjusted_threshold: f64,
}

/// Difference-scale tolerances equivalent to an odds-ratio zone, for
/// procedures built on normal theory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConversion {
    pub epsilon: f64,
    pub epsilon_adjusted: f64,
    pub per_threshold: Vec<ThresholdTolerance>,
}

impl ToleranceConversion {
    pub fn adjusted_thresholds(&self) -> Vec<f64> {
        self.per_threshold.iter().map(|t| t.adjusted_threshold).collect()
    }
}

pub fn tolerance_convert(thresholds: &[f64], theta: OddsRatio) -> Result<ToleranceConversion> {
    if thresholds.is_empty() {
        return Err(Error::domain("thresholds", "at least one threshold is required"));
    }
    for (i, &h) in thresholds.iter().enumerate() {
        check_open_unit("thresholds", h)?;
        if i > 0 && thresholds[i - 1].partial_cmp(&h) != Some(Ordering::Less) {
            return Err(Error::domain("thresholds", "must be strictly increasing"));
        }
    }
    let t = theta.get();
    let per_threshold: Vec<ThresholdTolerance> = thresholds
        .iter()
        .map(|&h| {
            let lower = h / (h + t * (1.0 - h));
            let upper = t * h / (h * (t - 1.0) + 1.0);
            ThresholdTolerance {
                threshold: h,
                lower,
                upper,
                epsilon: (upper - h).min(h - lower),
                epsilon_adjusted: 0.5 * (upper - lower),
                adjusted_threshold: 0.5 * (lower + upper),
            }
        })
        .collect();
    let epsilon = per_threshold.iter().map(|t| t.epsilon).fold(f64::INFINITY, f64::min);
    let epsilon_adjusted = per_threshold
        .iter()
        .map(|t| t.epsilon_adjusted)
        .fold(f64::INFINITY, f64::min);
    Ok(ToleranceConversion {
        epsilon,
        epsilon_adjusted,
        per_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(t: f64) -> OddsRatio {
        OddsRatio::new(t).unwrap()
    }

    #[test]
    fn error_split_examples() {
        assert_eq!(error_split(0.05, 1, false).unwrap(), 0.05);
        assert_eq!(error_split(0.05, 1, true).unwrap(), 0.05);
        assert!((error_split(0.05, 10, true).unwrap() - 0.005).abs() < 1e-15);
        // 1 - 0.95^0.1 evaluated in extended precision.
        assert!((error_split(0.05, 10, false).unwrap() - 0.005_116_196_891_823_743).abs() < 1e-15);
        assert!(error_split(0.0, 3, false).is_err());
        assert!(error_split(0.05, 0, false).is_err());
    }

    #[test]
    fn per_constraint_error_examples() {
        let i = per_constraint_error(0.05, &[2, 2], ErrorSplitScheme::PerConstraint).unwrap();
        assert_eq!(i, vec![0.0125, 0.0125]);
        let ii = per_constraint_error(0.05, &[2, 2], ErrorSplitScheme::PerEffectiveThreshold).unwrap();
        assert_eq!(ii, vec![0.0125, 0.0125]);
        let mixed =
            per_constraint_error(0.06, &[1, 3, 5], ErrorSplitScheme::PerEffectiveThreshold).unwrap();
        for b in mixed {
            assert!((b - 0.012).abs() < 1e-15);
        }
        let single = per_constraint_error(0.06, &[1, 3], ErrorSplitScheme::PerConstraint).unwrap();
        assert!((single[0] - 0.03).abs() < 1e-15 && (single[1] - 0.015).abs() < 1e-15);
        assert!(per_constraint_error(0.05, &[], ErrorSplitScheme::PerConstraint).is_err());
    }

    #[test]
    fn halfwidth_examples() {
        assert_eq!(continuation_halfwidth(0.05, theta(1.2)).unwrap(), 17);
        assert_eq!(continuation_halfwidth(0.05, theta(1.5)).unwrap(), 8);
        assert_eq!(continuation_halfwidth(0.6, theta(2.0)).unwrap(), 1);
    }

    #[test]
    fn halfwidth_exact_at_tie() {
        // beta = 1/(1+2^3) = 1/9 is not a dyadic; use theta = 3, beta = 0.25 = 1/(1+3).
        assert_eq!(continuation_halfwidth(0.25, theta(3.0)).unwrap(), 1);
        // 1/(1+3^2) = 0.1; the double nearest 0.1 is slightly above it, so H = 2.
        assert_eq!(continuation_halfwidth(0.1, theta(3.0)).unwrap(), 2);
        // Just below the tie needs one more step.
        assert_eq!(continuation_halfwidth(0.0999999, theta(3.0)).unwrap(), 3);
    }

    #[test]
    fn odds_ratio_rejects_non_positive_zone() {
        assert!(OddsRatio::new(1.0).is_err());
        assert!(OddsRatio::new(0.9).is_err());
        assert!(OddsRatio::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<OddsRatio>("0.9").is_err());
        assert_eq!(serde_json::from_str::<OddsRatio>("1.5").unwrap().get(), 1.5);
    }

    #[test]
    fn classify_examples() {
        // 0.1282 is f_lower(0.15, 1.2) rounded down: the system is on the
        // Unacceptable side of the boundary.
        assert_eq!(classify(0.15, 0.1282, theta(1.2)).unwrap(), Classification::Unacceptable);
        assert_eq!(classify(0.3, 0.3, theta(1.2)).unwrap(), Classification::Acceptable);
        assert_eq!(classify(0.5, 0.25, theta(1.5)).unwrap(), Classification::Unacceptable);
        assert_eq!(classify(0.1, 0.5, theta(1.5)).unwrap(), Classification::Desirable);
        assert!(classify(0.0, 0.5, theta(1.5)).is_err());
        assert!(classify(0.5, 1.0, theta(1.5)).is_err());
    }

    #[test]
    fn classify_truth_handles_endpoints() {
        assert_eq!(classify_truth(0.0, 0.01, theta(1.5)).unwrap(), Classification::Desirable);
        assert_eq!(classify_truth(1.0, 0.99, theta(1.5)).unwrap(), Classification::Unacceptable);
    }

    #[test]
    fn boundary_examples() {
        let b = boundary_thresholds(0.15, theta(1.2)).unwrap();
        assert!((b.lower - 0.1282).abs() < 5e-5);
        assert!((b.upper - 0.1748).abs() < 5e-5);
        let b = boundary_thresholds(0.15, theta(1.5)).unwrap();
        assert!((b.lower - 0.10526).abs() < 5e-6);
        let b = boundary_thresholds(0.5, theta(1.0 + 1e-9)).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-9 && (b.upper - 0.5).abs() < 1e-9);
    }

    #[test]
    fn absorption_examples() {
        assert!((absorption_probability(0.3, 0.3, 5).unwrap() - 0.5).abs() < 1e-15);
        // rho = 1.5 at p = 0.5 means h = 0.6.
        let u = absorption_probability(0.5, 0.6, 8).unwrap();
        assert!((u - 0.962_446_824_116_180_1).abs() < 1e-12);
        let u = absorption_probability(0.5, 1.2 / 2.2, 17).unwrap();
        let rho: f64 = 1.2;
        assert!((u - rho.powi(17) / (1.0 + rho.powi(17))).abs() < 1e-12);
    }

    #[test]
    fn stopping_time_examples() {
        assert!((expected_stopping_time(0.5, 0.5, 17).unwrap() - 578.0).abs() < 1e-9);
        assert!((expected_stopping_time(0.15, 0.15, 17).unwrap() - 1133.333_333).abs() < 1e-3);
        let h = boundary_thresholds(0.5, theta(1.2)).unwrap().lower;
        assert!((expected_stopping_time(0.5, h, 17).unwrap() - 341.739).abs() < 1e-3);
    }

    #[test]
    fn tolerance_examples() {
        let c = tolerance_convert(&[0.5], theta(1.5)).unwrap();
        let t = c.per_threshold[0];
        assert!((t.epsilon - 0.1).abs() < 1e-12);
        assert!((t.epsilon_adjusted - 0.1).abs() < 1e-12);
        assert!((t.adjusted_threshold - 0.5).abs() < 1e-12);

        let c = tolerance_convert(&[0.25], theta(1.5)).unwrap();
        let t = c.per_threshold[0];
        assert!((t.lower - 0.181_818).abs() < 1e-6);
        assert!((t.upper - 0.333_333).abs() < 1e-6);
        assert!((t.adjusted_threshold - 0.257_576).abs() < 1e-6);
        assert!((t.epsilon_adjusted - 0.075_758).abs() < 1e-6);
        assert!((t.epsilon - 0.068_182).abs() < 1e-6);

        let a = tolerance_convert(&[0.2], theta(1.5)).unwrap().per_threshold[0];
        let b = tolerance_convert(&[0.8], theta(1.5)).unwrap().per_threshold[0];
        assert!((a.epsilon - b.epsilon).abs() < 1e-12);
        assert!((a.epsilon_adjusted - b.epsilon_adjusted).abs() < 1e-12);

        assert!(tolerance_convert(&[0.3, 0.2], theta(1.5)).is_err());
        assert!(tolerance_convert(&[0.3, 0.3], theta(1.5)).is_err());
    }

    #[test]
    fn tolerance_minimum_over_thresholds() {
        let c = tolerance_convert(&[0.05, 0.5], theta(1.5)).unwrap();
        assert_eq!(c.epsilon, c.per_threshold[0].epsilon);
        assert_eq!(c.epsilon_adjusted, c.per_threshold[0].epsilon_adjusted);
    }
}
