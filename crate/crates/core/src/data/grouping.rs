use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Population;

/// `count` random user→type maps over `num_users` users and `k` types.
///
/// Each map is uniform over the maps that leave no type empty: labels are
/// drawn independently and the draw is repeated until every type occurs.
pub fn sample_type_groupings(
    num_users: usize,
    k: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Config("need at least one type".into()));
    }
    if k > num_users {
        return Err(Error::Config(format!(
            "{k} types cannot all be filled by {num_users} users"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut seen = vec![false; k];
    while out.len() < count {
        let labels: Vec<usize> = (0..num_users).map(|_| rng.gen_range(0..k)).collect();
        seen.fill(false);
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().all(|&s| s) {
            out.push(labels);
        }
    }
    Ok(out)
}

/// Size and mean aggregate demand of each type under one grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingStats {
    pub sizes: Vec<usize>,
    pub mean_demands: Vec<(f64, f64)>,
}

impl GroupingStats {
    pub fn compute(population: &Population, assignment: &[usize], k: usize) -> Result<Self> {
        let set = population.type_scenarios(assignment, k)?;
        let mut sizes = vec![0; k];
        for &a in assignment {
            sizes[a] += 1;
        }
        Ok(GroupingStats {
            sizes,
            mean_demands: set.mean_demands(),
        })
    }
}

/// Four storage costs spread around `theta_bar`:
/// `θ̄·(1 − 1.5λ, 1 − 0.5λ, 1 + 0.5λ, 1 + 1.5λ)`.
pub fn build_theta_catalog(theta_bar: f64, lambda_s: f64) -> Result<Vec<f64>> {
    spread_thetas(theta_bar, lambda_s, 4)
}

/// `k` evenly spaced costs with mean `theta_bar`: type `i` costs
/// `θ̄·(1 + (i − (k−1)/2)·λ)`. `λ` must keep the cheapest cost positive.
pub fn spread_thetas(theta_bar: f64, lambda_s: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Config("need at least one type".into()));
    }
    if !(theta_bar.is_finite() && theta_bar > 0.0) {
        return Err(Error::Config(format!(
            "mean storage cost must be positive, got {theta_bar}"
        )));
    }
    let half = (k as f64 - 1.0) / 2.0;
    let upper = if k > 1 { 1.0 / half } else { f64::INFINITY };
    if k > 1 && !(lambda_s > 0.0 && lambda_s < upper) {
        return Err(Error::Config(format!(
            "cost spread must lie in (0, {upper}) to keep {k} costs positive and distinct, got {lambda_s}"
        )));
    }
    Ok((0..k)
        .map(|i| theta_bar * (1.0 + (i as f64 - half) * lambda_s))
        .collect())
}
