//! Periodic-review `(s, S)` inventory model with lost sales.
//!
//! Model choices: stock starts at `S`; orders placed at a review arrive
//! before that period's demand; unmet demand is lost and penalised; holding
//! cost is charged on end-of-period stock.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::ReplayableStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InventoryParams {
    pub demand_mean: f64,
    pub periods: usize,
    pub unit_cost: f64,
    pub fixed_order_cost: f64,
    pub holding_cost: f64,
    pub penalty_cost: f64,
    pub cost_threshold: f64,
}

impl Default for InventoryParams {
    fn default() -> Self {
        InventoryParams {
            demand_mean: 25.0,
            periods: 12,
            unit_cost: 3.0,
            fixed_order_cost: 32.0,
            holding_cost: 1.0,
            penalty_cost: 5.0,
            cost_threshold: 1400.0,
        }
    }
}

impl InventoryParams {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            ("unit_cost", self.unit_cost),
            ("fixed_order_cost", self.fixed_order_cost),
            ("holding_cost", self.holding_cost),
            ("penalty_cost", self.penalty_cost),
        ];
        for (field, c) in costs {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::domain(field, "costs must be finite and non-negative"));
            }
        }
        if self.periods == 0 {
            return Err(Error::domain("periods", "at least one review period is required"));
        }
        if !(self.demand_mean.is_finite() && self.demand_mean > 0.0 && self.demand_mean <= 500.0) {
            return Err(Error::domain("demand_mean", "must lie in (0, 500]"));
        }
        Ok(())
    }
}

/// One `(s, S)` policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub s: u32,
    #[serde(rename = "S")]
    pub big_s: u32,
}

impl Policy {
    pub fn new(s: u32, big_s: u32) -> Self {
        Policy { s, big_s }
    }
}

/// The 77-policy grid: `s` in 20, 22, ..., 40 and `S` in 40, 50, ..., 100.
pub fn default_grid() -> Vec<Policy> {
    let mut grid = Vec::with_capacity(77);
    for s in (20..=40).step_by(2) {
        for big_s in (40..=100).step_by(10) {
            grid.push(Policy::new(s, big_s));
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearOutcome {
    pub total_cost: f64,
    pub stockout: bool,
}

/// Simulate one year under a given demand path.
pub fn simulate_inventory_year(policy: Policy, demand: &[u32], params: &InventoryParams) -> YearOutcome {
    let mut on_hand = policy.big_s;
    let mut cost = 0.0;
    let mut stockout = false;
    for &d in demand {
        if on_hand < policy.s {
            cost += params.fixed_order_cost + params.unit_cost * f64::from(policy.big_s - on_hand);
            on_hand = policy.big_s;
        }
        if d > on_hand {
            cost += params.penalty_cost * f64::from(d - on_hand);
            stockout = true;
            on_hand = 0;
        } else {
            on_hand -= d;
        }
        cost += params.holding_cost * f64::from(on_hand);
    }
    YearOutcome {
        total_cost: cost,
        stockout,
    }
}

/// Poisson sampler by CDF inversion, one uniform per draw.
#[derive(Debug, Clone)]
pub struct PoissonTable {
    cdf: Vec<f64>,
}

impl PoissonTable {
    pub fn new(mean: f64) -> Self {
        let mut cdf = Vec::new();
        let mut pmf = (-mean).exp();
        let mut acc = 0.0;
        let mut k = 0u32;
        loop {
            acc += pmf;
            cdf.push(acc);
            k += 1;
            pmf *= mean / f64::from(k);
            if (acc >= 1.0 - 1e-15 && f64::from(k) > mean) || k > 10_000 {
                break;
            }
        }
        PoissonTable { cdf }
    }

    /// Smallest `k` with `u < F(k)`.
    pub fn invert(&self, u: f64) -> u32 {
        self.cdf.partition_point(|&c| c <= u) as u32
    }
}

#[derive(Debug, Clone)]
pub struct InventorySource {
    policies: Vec<Policy>,
    params: InventoryParams,
    table: PoissonTable,
}

impl InventorySource {
    pub fn new(policies: Vec<Policy>, params: InventoryParams) -> Result<Self> {
        params.validate()?;
        if policies.is_empty() {
            return Err(Error::domain("systems", "at least one policy is required"));
        }
        if let Some(p) = policies.iter().find(|p| p.s > p.big_s) {
            return Err(Error::domain(
                "systems",
                format!("policy (s={}, S={}) needs s <= S", p.s, p.big_s),
            ));
        }
        let table = PoissonTable::new(params.demand_mean);
        Ok(InventorySource {
            policies,
            params,
            table,
        })
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn params(&self) -> &InventoryParams {
        &self.params
    }

    pub(crate) fn observe(&self, system: usize, stream: &ReplayableStream, n: u64, out: &mut [bool]) {
        let mut rng = stream.replication(n);
        let mut draw = || self.table.invert(rng.random::<f64>());
        let policy = self.policies[system];
        let mut buf = [0u32; 64];
        let outcome = if self.params.periods <= buf.len() {
            let path = &mut buf[..self.params.periods];
            path.iter_mut().for_each(|d| *d = draw());
            simulate_inventory_year(policy, path, &self.params)
        } else {
            let path: Vec<u32> = (0..self.params.periods).map(|_| draw()).collect();
            simulate_inventory_year(policy, &path, &self.params)
        };
        out[0] = outcome.total_cost > self.params.cost_threshold;
        out[1] = outcome.stockout;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_demand_only_holds() {
        let o = simulate_inventory_year(Policy::new(20, 40), &[0; 12], &InventoryParams::default());
        assert_eq!(o.total_cost, 480.0);
        assert!(!o.stockout);
    }

    #[test]
    fn demand_equal_to_capacity() {
        // Period 1 starts at S; periods 2..12 each reorder 40 units.
        let o = simulate_inventory_year(Policy::new(20, 40), &[40; 12], &InventoryParams::default());
        assert_eq!(o.total_cost, 11.0 * 32.0 + 3.0 * 440.0);
        assert!(o.total_cost > 1400.0);
        assert!(!o.stockout);
    }

    #[test]
    fn lost_sales_are_penalised() {
        let o = simulate_inventory_year(Policy::new(20, 40), &[50], &InventoryParams::default());
        assert_eq!(o.total_cost, 50.0);
        assert!(o.stockout);
    }

    #[test]
    fn grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 77);
        assert!(g.iter().all(|p| p.s <= p.big_s));
        assert!(g.contains(&Policy::new(30, 70)));
    }

    #[test]
    fn poisson_inversion_moments() {
        let t = PoissonTable::new(25.0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|i| f64::from(t.invert((i as f64 + 0.5) / n as f64))).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 25.0).abs() < 0.01, "mean {mean}");
        assert!((var - 25.0).abs() < 0.1, "var {var}");
        assert_eq!(t.invert(0.0), 0);
    }

    #[test]
    fn rejects_bad_policy() {
        assert!(InventorySource::new(vec![Policy::new(41, 40)], InventoryParams::default()).is_err());
        let bad = InventoryParams {
            holding_cost: -1.0,
            ..Default::default()
        };
        assert!(InventorySource::new(default_grid(), bad).is_err());
    }
}
