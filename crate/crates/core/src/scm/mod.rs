//! Deterministic social-cost minimization over per-type aggregate storage.
//!
//! At the optimum every type's capacity equals its shift, so the problem
//! reduces to choosing a shift `s^k ∈ [0, D^{k,p}]` per type. The objective
//! is convex in the total shift `S`, and an exchange argument shows the
//! cheapest types shift first. Walking the catalog in increasing cost order
//! and stopping where the marginal cost of one more MWh crosses zero gives the
//! global optimum together with the full / partial / none partition.

mod oracle;

pub use oracle::{scm_oracle, OracleOutcome, ScmOracle, DEFAULT_ORACLE_BUDGET};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Catalog, ItemClass, SystemParams};

/// Relative tolerance used to snap a capacity ratio to full or none.
pub const SNAP_TOLERANCE: f64 = 1e-7;

/// Aggregate capacity and daily shift of one storage type, MWh.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeDecision {
    pub capacity: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialOutcome {
    pub per_type: Vec<TypeDecision>,
    /// System peak-period load after shifting, MWh.
    pub peak_load: f64,
    pub offpeak_load: f64,
    pub cost_storage: f64,
    pub cost_peak: f64,
    pub cost_offpeak: f64,
    pub total: f64,
}

impl SocialOutcome {
    /// Prices an arbitrary shift plan against the catalog's aggregate demands.
    pub fn from_shifts(catalog: &Catalog, params: &SystemParams, shifts: &[f64]) -> Self {
        debug_assert_eq!(shifts.len(), catalog.len());
        let per_type = shifts
            .iter()
            .map(|&s| TypeDecision {
                capacity: s,
                shift: s,
            })
            .collect::<Vec<_>>();
        let storage: f64 = catalog
            .types()
            .iter()
            .zip(shifts)
            .map(|(t, s)| t.theta * s)
            .sum();
        let moved: f64 = shifts.iter().sum();
        let peak_load = (catalog.total_peak() - moved).max(0.0);
        let offpeak_load = catalog.total_offpeak() + moved;
        SocialOutcome::assemble(per_type, storage, peak_load, offpeak_load, params)
    }

    pub(crate) fn assemble(
        per_type: Vec<TypeDecision>,
        cost_storage: f64,
        peak_load: f64,
        offpeak_load: f64,
        params: &SystemParams,
    ) -> Self {
        let cost_peak = params.peak_cost(peak_load);
        let cost_offpeak = params.offpeak_cost(offpeak_load);
        SocialOutcome {
            per_type,
            peak_load,
            offpeak_load,
            cost_storage,
            cost_peak,
            cost_offpeak,
            total: cost_storage + cost_peak + cost_offpeak,
        }
    }

    pub fn total_shift(&self) -> f64 {
        self.per_type.iter().map(|d| d.shift).sum()
    }
}

/// The unique type that invests partially, with its capacity-to-peak ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialType {
    pub k: usize,
    pub ratio: f64,
}

/// Partition of storage types into full (F), partial (P) and none (N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub full: Vec<usize>,
    pub partial: Option<PartialType>,
    pub none: Vec<usize>,
}

impl Classification {
    /// Types `< b` full, `b` at ratio `eta`, types `> b` none. A ratio of
    /// exactly 0 or 1 moves `b` into N or F.
    pub fn from_boundary(num_types: usize, b: usize, eta: f64) -> Self {
        let mut full: Vec<usize> = (0..b).collect();
        let mut none: Vec<usize> = (b + 1..num_types).collect();
        let partial = if eta >= 1.0 {
            full.push(b);
            None
        } else if eta <= 0.0 {
            none.insert(0, b);
            None
        } else {
            Some(PartialType { k: b, ratio: eta })
        };
        Classification {
            full,
            partial,
            none,
        }
    }

    pub fn class_of(&self, k: usize) -> Option<ItemClass> {
        if self.full.contains(&k) {
            Some(ItemClass::F)
        } else if self.partial.map(|p| p.k) == Some(k) {
            Some(ItemClass::P)
        } else if self.none.contains(&k) {
            Some(ItemClass::N)
        } else {
            None
        }
    }

    /// `η_P`, or 0 when class P is empty.
    pub fn eta_partial(&self) -> f64 {
        self.partial.map_or(0.0, |p| p.ratio)
    }

    pub fn num_types(&self) -> usize {
        self.full.len() + self.none.len() + usize::from(self.partial.is_some())
    }

    /// Capacity ratio the plan assigns to type `k`.
    pub fn eta_of(&self, k: usize) -> f64 {
        match self.class_of(k) {
            Some(ItemClass::F) => 1.0,
            Some(ItemClass::P) => self.eta_partial(),
            _ => 0.0,
        }
    }

    /// Checks `max θ(F) < θ(P) < min θ(N)` over types that have peak demand,
    /// and that every catalog index appears exactly once.
    pub fn is_theta_ordered(&self, catalog: &Catalog) -> bool {
        if self.num_types() != catalog.len() {
            return false;
        }
        let mut seen = vec![false; catalog.len()];
        let all = self
            .full
            .iter()
            .chain(self.partial.iter().map(|p| &p.k))
            .chain(self.none.iter());
        for &k in all {
            if k >= seen.len() || seen[k] {
                return false;
            }
            seen[k] = true;
        }
        let active = |k: &usize| catalog.types()[*k].d_peak > 0.0;
        let theta = |k: &usize| catalog.types()[*k].theta;
        let max_f = self
            .full
            .iter()
            .filter(|k| active(k))
            .map(theta)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_n = self
            .none
            .iter()
            .filter(|k| active(k))
            .map(theta)
            .fold(f64::INFINITY, f64::min);
        match self.partial {
            Some(p) => max_f < catalog.types()[p.k].theta && catalog.types()[p.k].theta < min_n,
            None => max_f < min_n,
        }
    }
}

/// Marginal social cost of shifting one more MWh of type `theta` when the
/// system has already shifted `moved` MWh. The linear price term cancels.
#[inline]
fn marginal(
    theta: f64,
    moved: f64,
    peak_total: f64,
    offpeak_total: f64,
    params: &SystemParams,
) -> f64 {
    theta + params.offpeak_marginal(offpeak_total + moved)
        - params.peak_marginal(peak_total - moved)
}

/// Solves the complete-information problem exactly and classifies the types.
pub fn solve_scm(
    catalog: &Catalog,
    params: &SystemParams,
) -> Result<(SocialOutcome, Classification)> {
    params.validate()?;
    if catalog.is_empty() {
        return Err(Error::Catalog("catalog is empty".into()));
    }
    let peak_total = catalog.total_peak();
    let offpeak_total = catalog.total_offpeak();
    // d/dS of the marginal: 2α(1/H^o + 1/H^p)
    let slope = 2.0
        * params.alpha
        * (1.0 / f64::from(params.hours_offpeak) + 1.0 / f64::from(params.hours_peak));

    let mut shifts = vec![0.0; catalog.len()];
    let mut moved = 0.0;
    for t in catalog.types() {
        if t.d_peak <= 0.0 {
            continue;
        }
        let at_start = marginal(t.theta, moved, peak_total, offpeak_total, params);
        if at_start >= 0.0 {
            break;
        }
        let at_full = marginal(t.theta, moved + t.d_peak, peak_total, offpeak_total, params);
        if at_full <= 0.0 {
            shifts[t.k] = t.d_peak;
            moved += t.d_peak;
            continue;
        }
        let s = (-at_start / slope).clamp(0.0, t.d_peak);
        shifts[t.k] = s;
        break;
    }

    let outcome = SocialOutcome::from_shifts(catalog, params, &shifts);
    let classification = classify(&outcome, catalog)?;
    Ok((outcome, classification))
}

/// Partitions types by their invested capacity, snapping ratios within
/// [`SNAP_TOLERANCE`] of 0 or 1. Types with no peak demand go to N.
pub fn classify(outcome: &SocialOutcome, catalog: &Catalog) -> Result<Classification> {
    if outcome.per_type.len() != catalog.len() {
        return Err(Error::Infeasible(format!(
            "outcome has {} types, catalog has {}",
            outcome.per_type.len(),
            catalog.len()
        )));
    }
    let mut full = Vec::new();
    let mut none = Vec::new();
    let mut partial: Option<PartialType> = None;
    for (t, d) in catalog.types().iter().zip(&outcome.per_type) {
        if t.d_peak <= 0.0 {
            none.push(t.k);
            continue;
        }
        let ratio = d.capacity / t.d_peak;
        if ratio >= 1.0 - SNAP_TOLERANCE {
            full.push(t.k);
        } else if ratio <= SNAP_TOLERANCE {
            none.push(t.k);
        } else if let Some(prev) = partial {
            return Err(Error::Infeasible(format!(
                "types {} and {} both invest partially",
                prev.k, t.k
            )));
        } else {
            partial = Some(PartialType { k: t.k, ratio });
        }
    }
    Ok(Classification {
        full,
        partial,
        none,
    })
}

/// Largest violation of the first-order optimality conditions at `outcome`,
/// relative to the magnitude of the marginal-cost terms.
pub fn optimality_residual(
    catalog: &Catalog,
    params: &SystemParams,
    outcome: &SocialOutcome,
) -> f64 {
    let peak_total = catalog.total_peak();
    let offpeak_total = catalog.total_offpeak();
    let moved = outcome.total_shift();
    let scale = catalog
        .thetas()
        .fold(1.0f64, f64::max)
        .max(params.peak_marginal(peak_total).abs())
        .max(params.offpeak_marginal(offpeak_total + peak_total).abs());
    let mut worst = 0.0f64;
    for (t, d) in catalog.types().iter().zip(&outcome.per_type) {
        if t.d_peak <= 0.0 {
            continue;
        }
        let m = marginal(t.theta, moved, peak_total, offpeak_total, params);
        let ratio = d.shift / t.d_peak;
        let violation = if ratio <= SNAP_TOLERANCE {
            (-m).max(0.0)
        } else if ratio >= 1.0 - SNAP_TOLERANCE {
            m.max(0.0)
        } else {
            m.abs()
        };
        worst = worst.max(violation);
    }
    worst / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// The H^p = H^o = 1, α = 1 instance has the same marginals as
    /// H^p = H^o = 12, α = 12 when β = γ = 0; only the latter passes validation.
    fn unit_hours_equivalent() -> SystemParams {
        SystemParams::new(12.0, 0.0, 0.0, 12, 12).unwrap()
    }

    #[test]
    fn two_type_hand_solution() {
        // stationarity: 1 = 2(10 − S) − 2(4 + S)  =>  S = 2.75
        let catalog = Catalog::from_parts(&[1.0, 10.0], &[(5.0, 2.0), (5.0, 2.0)]).unwrap();
        let p = unit_hours_equivalent();
        let (out, class) = solve_scm(&catalog, &p).unwrap();
        assert_relative_eq!(out.per_type[0].capacity, 2.75, max_relative = 1e-12);
        assert_eq!(out.per_type[1].capacity, 0.0);
        assert!(class.full.is_empty());
        assert_eq!(class.partial.unwrap().k, 0);
        assert_relative_eq!(class.partial.unwrap().ratio, 0.55, max_relative = 1e-12);
        assert_eq!(class.none, vec![1]);
        // (10 − 2.75)² + (4 + 2.75)² + 2.75
        assert_relative_eq!(out.total, 52.5625 + 45.5625 + 2.75, max_relative = 1e-12);

        let oracle = scm_oracle(&catalog, &p, 401).unwrap();
        assert!(oracle.outcome.total >= out.total - 1e-9);
        assert!(oracle.outcome.total - out.total <= oracle.error_bound);
        assert!(optimality_residual(&catalog, &p, &out) <= 1e-9);
    }

    #[test]
    fn single_unprofitable_type_is_none() {
        let p = SystemParams::new(0.1, 5.0, 1.0, 7, 17).unwrap();
        // equal average loads: zero marginal benefit at S = 0, below any θ > 0
        let catalog = Catalog::from_parts(&[3.0], &[(7.0, 17.0)]).unwrap();
        let (out, class) = solve_scm(&catalog, &p).unwrap();
        assert_eq!(out.per_type[0].capacity, 0.0);
        assert_eq!(class.none, vec![0]);
        assert!(class.full.is_empty() && class.partial.is_none());
    }

    #[test]
    fn free_storage_with_large_asymmetry_invests_fully() {
        let p = SystemParams::new(1.0, 0.0, 0.0, 7, 17).unwrap();
        // marginal at S = 1: 0 + 2·1/17 − 2·200/7 < 0, so type 0 never reaches the stationarity point
        let catalog = Catalog::from_parts(&[0.0, 1000.0], &[(1.0, 0.0), (200.0, 0.0)]).unwrap();
        let (out, class) = solve_scm(&catalog, &p).unwrap();
        assert_eq!(out.per_type[0].capacity, 1.0);
        assert_eq!(out.per_type[1].capacity, 0.0);
        assert_eq!(class.full, vec![0]);
        assert_eq!(class.none, vec![1]);
        let oracle = scm_oracle(&catalog, &p, 1001).unwrap();
        assert!(oracle.outcome.total >= out.total - 1e-9);
        assert!(oracle.outcome.total - out.total <= oracle.error_bound);
        assert_eq!(oracle.outcome.per_type[0].shift, 1.0);
    }

    #[test]
    fn cheap_types_fill_before_the_partial_one() {
        let p = SystemParams::new(1.0, 0.0, 0.0, 7, 17).unwrap();
        let catalog =
            Catalog::from_parts(&[0.5, 1.0, 1.5], &[(0.01, 0.0), (0.01, 0.0), (50.0, 10.0)])
                .unwrap();
        let (out, class) = solve_scm(&catalog, &p).unwrap();
        assert_eq!(class.full, vec![0, 1]);
        assert_eq!(class.partial.map(|t| t.k), Some(2));
        assert!(class.none.is_empty());
        assert!(class.is_theta_ordered(&catalog));
        let oracle = scm_oracle(&catalog, &p, 101).unwrap();
        assert!(oracle.outcome.total >= out.total - 1e-9);
        assert!(oracle.outcome.total - out.total <= oracle.error_bound);
    }

    #[test]
    fn last_positive_type_never_fully_shifts() {
        // emptying the peak period leaves a positive off-peak marginal cost
        let p = SystemParams::new(5.0, 0.0, 0.0, 7, 17).unwrap();
        let catalog = Catalog::from_parts(&[0.0, 0.1], &[(0.01, 0.0), (0.01, 0.0)]).unwrap();
        let (_, class) = solve_scm(&catalog, &p).unwrap();
        assert!(!class.full.contains(&1));
    }

    #[test]
    fn zero_demand_everywhere() {
        let p = SystemParams::new(1.0, 2.0, 3.0, 7, 17).unwrap();
        let catalog = Catalog::from_parts(&[1.0, 2.0], &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
        let (out, class) = solve_scm(&catalog, &p).unwrap();
        assert_relative_eq!(out.total, 3.0 * 24.0);
        assert_eq!(out.total_shift(), 0.0);
        assert!(class.full.is_empty() && class.partial.is_none());
        assert_eq!(class.none, vec![0, 1]);
        let oracle = scm_oracle(&catalog, &p, 100).unwrap();
        assert_relative_eq!(oracle.outcome.total, 72.0);
    }

    #[test]
    fn classify_rejects_two_partials() {
        let catalog = Catalog::from_parts(&[1.0, 2.0], &[(4.0, 0.0), (4.0, 0.0)]).unwrap();
        let p = SystemParams::new(1.0, 0.0, 0.0, 7, 17).unwrap();
        let out = SocialOutcome::from_shifts(&catalog, &p, &[2.0, 2.0]);
        assert!(matches!(
            classify(&out, &catalog),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn classify_snaps_near_boundaries() {
        let catalog =
            Catalog::from_parts(&[1.0, 2.0, 3.0], &[(4.0, 0.0), (4.0, 0.0), (4.0, 0.0)]).unwrap();
        let p = SystemParams::new(1.0, 0.0, 0.0, 7, 17).unwrap();
        let out = SocialOutcome::from_shifts(&catalog, &p, &[4.0 * (1.0 - 1e-9), 1.0, 1e-9]);
        let class = classify(&out, &catalog).unwrap();
        assert_eq!(class.full, vec![0]);
        assert_eq!(class.partial.unwrap().k, 1);
        assert_eq!(class.none, vec![2]);
    }

    #[test]
    fn empty_or_unsorted_catalog_is_rejected() {
        assert!(Catalog::new(vec![]).is_err());
        assert!(Catalog::from_parts(&[2.0, 2.0], &[(1.0, 1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn boundary_classification() {
        let c = Classification::from_boundary(4, 2, 0.3);
        assert_eq!(c.full, vec![0, 1]);
        assert_eq!(c.partial, Some(PartialType { k: 2, ratio: 0.3 }));
        assert_eq!(c.none, vec![3]);
        let c = Classification::from_boundary(4, 2, 1.0);
        assert_eq!(c.full, vec![0, 1, 2]);
        assert!(c.partial.is_none());
        let c = Classification::from_boundary(4, 0, 0.0);
        assert_eq!(c.none, vec![0, 1, 2, 3]);
        assert_eq!(c.eta_of(0), 0.0);
    }
}
