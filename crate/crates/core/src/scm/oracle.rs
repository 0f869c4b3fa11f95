//! Exhaustive grid search over per-type shifts. Slow on purpose; it shares
//! nothing with the threshold walk except the cost polynomial, and exists to
//! check it.

use crate::error::{Error, Result};
use crate::model::{Catalog, SystemParams};

use super::SocialOutcome;

/// Default cap on `K·n^K` objective evaluations.
pub const DEFAULT_ORACLE_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, Copy)]
pub struct ScmOracle {
    pub grid_points: usize,
    pub budget: u128,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub outcome: SocialOutcome,
    /// Grid spacing per type, MWh.
    pub grid_steps: Vec<f64>,
    /// Upper bound on `oracle.total − optimum`: Σ_k L_k·h_k with L_k a
    /// Lipschitz constant of the objective in `s^k` over the box.
    pub error_bound: f64,
}

impl ScmOracle {
    pub fn new(grid_points: usize) -> Self {
        ScmOracle {
            grid_points,
            budget: DEFAULT_ORACLE_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    pub fn run(&self, catalog: &Catalog, params: &SystemParams) -> Result<OracleOutcome> {
        params.validate()?;
        if self.grid_points < 2 {
            return Err(Error::domain(
                "oracle needs at least two grid points per axis",
            ));
        }
        let k = catalog.len();
        let n = self.grid_points;
        let evaluations = (n as u128)
            .checked_pow(k as u32)
            .and_then(|v| v.checked_mul(k as u128))
            .unwrap_or(u128::MAX);
        if evaluations > self.budget {
            return Err(Error::OracleBudget {
                evaluations,
                budget: self.budget,
            });
        }

        let steps: Vec<f64> = catalog
            .types()
            .iter()
            .map(|t| t.d_peak / (n - 1) as f64)
            .collect();
        let thetas: Vec<f64> = catalog.thetas().collect();
        let peak_total = catalog.total_peak();
        let offpeak_total = catalog.total_offpeak();
        let cost = |idx: &[usize]| {
            let mut moved = 0.0;
            let mut storage = 0.0;
            for ((&i, &h), &theta) in idx.iter().zip(&steps).zip(&thetas) {
                let s = i as f64 * h;
                moved += s;
                storage += theta * s;
            }
            storage
                + params.peak_cost((peak_total - moved).max(0.0))
                + params.offpeak_cost(offpeak_total + moved)
        };

        let mut idx = vec![0usize; k];
        let mut best_idx = idx.clone();
        let mut best = cost(&idx);
        // mixed-radix odometer over the grid
        'outer: loop {
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == k {
                    break 'outer;
                }
            }
            let c = cost(&idx);
            if c < best {
                best = c;
                best_idx.copy_from_slice(&idx);
            }
        }

        let shifts: Vec<f64> = best_idx
            .iter()
            .zip(catalog.types())
            .map(|(&i, t)| {
                if i == n - 1 {
                    t.d_peak
                } else {
                    i as f64 * t.d_peak / (n - 1) as f64
                }
            })
            .collect();
        let outcome = SocialOutcome::from_shifts(catalog, params, &shifts);

        // |∂f/∂s^k| ≤ θ^k + g^p'(D^p) − β + g^o'(D^o + D^p) − β
        let swing = 2.0
            * params.alpha
            * (peak_total / f64::from(params.hours_peak)
                + (offpeak_total + peak_total) / f64::from(params.hours_offpeak));
        let error_bound = thetas
            .iter()
            .zip(&steps)
            .map(|(theta, h)| (theta + swing) * h)
            .sum();
        Ok(OracleOutcome {
            outcome,
            grid_steps: steps,
            error_bound,
        })
    }
}

/// Grid-search optimum of the complete-information problem using
/// `grid_points` per type and the default evaluation budget.
pub fn scm_oracle(
    catalog: &Catalog,
    params: &SystemParams,
    grid_points: usize,
) -> Result<OracleOutcome> {
    ScmOracle::new(grid_points).run(catalog, params)
}
