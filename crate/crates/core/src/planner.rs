//! Expected social cost under demand uncertainty: the first-best benchmark,
//! which re-optimizes storage for every realization, and the
//! contract-constrained plan, which fixes one partition of types for all
//! realizations.
//!
//! For the contract plan, picking the boundary type `b` fixes types below it
//! at full investment and types above it at none. The expected cost is then
//! a convex quadratic in `η^b`, minimized in closed form and clipped to
//! `[0, 1]`; an outer loop compares all `K` boundaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Catalog, SystemParams};
use crate::scenario::{Scenario, ScenarioSet};
use crate::scm::{solve_scm, Classification, SocialOutcome, SNAP_TOLERANCE};

/// Relative slack allowed when checking `Sym^c ≥ Sym^b`.
pub const KAPPA_SLACK: f64 = 1e-9;

/// Relative gap under which two boundary candidates count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCandidate {
    pub b: usize,
    pub eta: f64,
    pub expected_cost: f64,
    /// Coefficient of `η²` in the expected cost.
    pub curvature: f64,
    /// Coefficient of `η` in the expected cost.
    pub linear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractPlan {
    pub sym_c: f64,
    pub boundary_type: usize,
    pub eta_b: f64,
    pub classification: Classification,
    pub candidates: Vec<BoundaryCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub sym_b: f64,
    pub sym_c: f64,
    pub boundary_type: usize,
    pub eta_b: f64,
    pub kappa: f64,
    pub classification: Classification,
}

fn check_inputs(scenarios: &ScenarioSet, catalog: &Catalog) -> Result<()> {
    if scenarios.num_types() != catalog.len() {
        return Err(Error::Scenario(format!(
            "scenario set has {} types, catalog has {}",
            scenarios.num_types(),
            catalog.len()
        )));
    }
    Ok(())
}

/// Complete-information optimum of every scenario, in scenario order.
pub fn escm_per_scenario(
    scenarios: &ScenarioSet,
    catalog: &Catalog,
    params: &SystemParams,
) -> Result<Vec<(SocialOutcome, Classification)>> {
    check_inputs(scenarios, catalog)?;
    scenarios
        .scenarios()
        .par_iter()
        .map(|s| solve_scm(&catalog.with_demands(&s.demands)?, params))
        .collect()
}

/// `Sym^b`: expected cost when storage is re-optimized for each realization.
pub fn solve_escm(
    scenarios: &ScenarioSet,
    catalog: &Catalog,
    params: &SystemParams,
) -> Result<f64> {
    let per = escm_per_scenario(scenarios, catalog, params)?;
    Ok(scenarios
        .scenarios()
        .iter()
        .zip(&per)
        .map(|(s, (out, _))| s.weight * out.total)
        .sum())
}

/// Cost of one realization when each type `k` shifts `ratios[k]·D^{k,p}`.
pub fn scenario_cost_with_ratios(
    thetas: &[f64],
    scenario: &Scenario,
    ratios: &[f64],
    params: &SystemParams,
) -> f64 {
    let mut storage = 0.0;
    let mut peak = 0.0;
    let mut offpeak = 0.0;
    for ((&theta, &(dp, doff)), &eta) in thetas.iter().zip(&scenario.demands).zip(ratios) {
        let s = eta * dp;
        storage += theta * s;
        peak += dp - s;
        offpeak += doff + s;
    }
    storage + params.peak_cost(peak.max(0.0)) + params.offpeak_cost(offpeak)
}

/// Expected cost of the fixed plan "types `< b` full, `b` at `eta`, rest none".
pub fn expected_cost_at(
    scenarios: &ScenarioSet,
    catalog: &Catalog,
    params: &SystemParams,
    b: usize,
    eta: f64,
) -> f64 {
    let thetas: Vec<f64> = catalog.thetas().collect();
    let ratios = boundary_ratios(catalog.len(), b, eta);
    scenarios
        .scenarios()
        .iter()
        .map(|s| s.weight * scenario_cost_with_ratios(&thetas, s, &ratios, params))
        .sum()
}

fn boundary_ratios(num_types: usize, b: usize, eta: f64) -> Vec<f64> {
    (0..num_types)
        .map(|k| match k.cmp(&b) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => eta,
            std::cmp::Ordering::Greater => 0.0,
        })
        .collect()
}

/// Closed-form optimal `η^b` for a fixed boundary type `b`.
pub fn boundary_candidate(
    scenarios: &ScenarioSet,
    catalog: &Catalog,
    params: &SystemParams,
    b: usize,
) -> Result<BoundaryCandidate> {
    check_inputs(scenarios, catalog)?;
    if b >= catalog.len() {
        return Err(Error::domain(format!(
            "boundary type {b} outside catalog of {}",
            catalog.len()
        )));
    }
    let theta_b = catalog.types()[b].theta;
    let hp = f64::from(params.hours_peak);
    let ho = f64::from(params.hours_offpeak);
    let mut curvature = 0.0;
    let mut linear = 0.0;
    for s in scenarios.scenarios() {
        let d = s.demands[b].0;
        // loads before type b shifts, with types < b fully shifted
        let below: f64 = s.demands[..b].iter().map(|&(p, _)| p).sum();
        let peak0: f64 = s.demands.iter().map(|&(p, _)| p).sum::<f64>() - below;
        let offpeak0: f64 = s.demands.iter().map(|&(_, o)| o).sum::<f64>() + below;
        curvature += s.weight * params.alpha * d * d * (1.0 / hp + 1.0 / ho);
        linear += s.weight
            * d
            * (theta_b - 2.0 * params.alpha * peak0 / hp + 2.0 * params.alpha * offpeak0 / ho);
    }
    let mut eta = if curvature > 0.0 {
        (-linear / (2.0 * curvature)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    if eta <= SNAP_TOLERANCE {
        eta = 0.0;
    } else if eta >= 1.0 - SNAP_TOLERANCE {
        eta = 1.0;
    }
    Ok(BoundaryCandidate {
        b,
        eta,
        expected_cost: expected_cost_at(scenarios, catalog, params, b, eta),
        curvature,
        linear,
    })
}

/// `Sym^c`: best fixed three-class plan over all boundary types.
pub fn solve_escm_c(
    scenarios: &ScenarioSet,
    catalog: &Catalog,
    params: &SystemParams,
) -> Result<ContractPlan> {
    params.validate()?;
    check_inputs(scenarios, catalog)?;
    let candidates = (0..catalog.len())
        .into_par_iter()
        .map(|b| boundary_candidate(scenarios, catalog, params, b))
        .collect::<Result<Vec<_>>>()?;
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.expected_cost < best.expected_cost - TIE_TOLERANCE * best.expected_cost.abs().max(1.0)
        {
            best = *c;
        }
    }
    Ok(ContractPlan {
        sym_c: best.expected_cost,
        boundary_type: best.b,
        eta_b: best.eta,
        classification: Classification::from_boundary(catalog.len(), best.b, best.eta),
        candidates,
    })
}

/// `κ = Sym^c / Sym^b`.
pub fn kappa(sym_c: f64, sym_b: f64) -> Result<f64> {
    if !(sym_b.is_finite() && sym_b > 0.0) {
        return Err(Error::domain(format!(
            "benchmark cost must be positive, got {sym_b}"
        )));
    }
    let ratio = sym_c / sym_b;
    if ratio < 1.0 - KAPPA_SLACK {
        return Err(Error::Infeasible(format!(
            "contract plan cost {sym_c} below the first-best benchmark {sym_b}"
        )));
    }
    Ok(ratio)
}

/// Benchmark, contract plan and their ratio in one call.
pub fn plan(
    scenarios: &ScenarioSet,
    catalog: &Catalog,
    params: &SystemParams,
) -> Result<PlanResult> {
    let sym_b = solve_escm(scenarios, catalog, params)?;
    let contract = solve_escm_c(scenarios, catalog, params)?;
    Ok(PlanResult {
        sym_b,
        sym_c: contract.sym_c,
        boundary_type: contract.boundary_type,
        eta_b: contract.eta_b,
        kappa: kappa(contract.sym_c, sym_b)?,
        classification: contract.classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::scm_oracle;
    use approx::assert_relative_eq;

    fn params() -> SystemParams {
        SystemParams::new(1.0, 3.0, 0.5, 7, 17).unwrap()
    }

    fn catalog(thetas: &[f64]) -> Catalog {
        Catalog::from_parts(thetas, &vec![(0.0, 0.0); thetas.len()]).unwrap()
    }

    /// Golden-section minimization of a unimodal function on [lo, hi].
    fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while hi - lo > 1e-12 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = f(x2);
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_scenario_has_no_information_gap() {
        let demands = vec![(3.0, 1.0), (6.0, 2.0), (9.0, 4.0)];
        let cat = Catalog::from_parts(&[0.2, 1.0, 4.0], &demands).unwrap();
        let set = ScenarioSet::single(demands).unwrap();
        let (out, class) = solve_scm(&cat, &params()).unwrap();
        let sym_b = solve_escm(&set, &cat, &params()).unwrap();
        assert_relative_eq!(sym_b, out.total, max_relative = 1e-15);
        let plan = solve_escm_c(&set, &cat, &params()).unwrap();
        assert_relative_eq!(plan.sym_c, sym_b, max_relative = 1e-9);
        assert_eq!(plan.classification.full, class.full);
        assert_eq!(plan.classification.none, class.none);
        assert_eq!(
            plan.classification.partial.map(|p| p.k),
            class.partial.map(|p| p.k)
        );
        assert_relative_eq!(
            plan.classification.eta_partial(),
            class.eta_partial(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn duplicated_scenario_changes_nothing() {
        let d = vec![(3.0, 1.0), (6.0, 2.0)];
        let cat = catalog(&[0.5, 2.0]);
        let one = ScenarioSet::single(d.clone()).unwrap();
        let two = ScenarioSet::uniform(2, vec![d.clone(), d]).unwrap();
        let p = params();
        assert_relative_eq!(
            solve_escm(&one, &cat, &p).unwrap(),
            solve_escm(&two, &cat, &p).unwrap(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            solve_escm_c(&one, &cat, &p).unwrap().sym_c,
            solve_escm_c(&two, &cat, &p).unwrap().sym_c,
            max_relative = 1e-14
        );
    }

    #[test]
    fn two_scenarios_average_oracle_optima() {
        let p = params();
        let cat = catalog(&[0.5, 2.0]);
        let a = vec![(3.0, 1.0), (6.0, 2.0)];
        let b = vec![(1.0, 4.0), (2.0, 5.0)];
        let set = ScenarioSet::uniform(2, vec![a.clone(), b.clone()]).unwrap();
        let oa = scm_oracle(&cat.with_demands(&a).unwrap(), &p, 801).unwrap();
        let ob = scm_oracle(&cat.with_demands(&b).unwrap(), &p, 801).unwrap();
        let expected = 0.5 * (oa.outcome.total + ob.outcome.total);
        let sym_b = solve_escm(&set, &cat, &p).unwrap();
        assert!(sym_b <= expected + 1e-9);
        assert!(expected - sym_b <= 0.5 * (oa.error_bound + ob.error_bound));
    }

    #[test]
    fn single_type_closed_form_matches_golden_section() {
        let p = params();
        let cat = catalog(&[1.5]);
        let set = ScenarioSet::uniform(1, vec![vec![(10.0, 4.0)], vec![(10.0, 12.0)]]).unwrap();
        let plan = solve_escm_c(&set, &cat, &p).unwrap();
        let eta = golden(|e| expected_cost_at(&set, &cat, &p, 0, e), 0.0, 1.0);
        assert!(
            (plan.eta_b - eta).abs() <= 1e-6,
            "{} vs {}",
            plan.eta_b,
            eta
        );
        assert!(plan.eta_b > 0.0 && plan.eta_b < 1.0);
    }

    #[test]
    fn fixed_partition_costs_more_when_the_partial_type_moves() {
        // alternating which type holds the big peak moves the socially partial type
        let p = SystemParams::new(1.0, 0.0, 0.0, 7, 17).unwrap();
        let cat = catalog(&[1.0, 2.0]);
        let set = ScenarioSet::uniform(
            2,
            vec![
                vec![(1.0, 0.0), (60.0, 10.0)],
                vec![(60.0, 10.0), (1.0, 0.0)],
            ],
        )
        .unwrap();
        let per = escm_per_scenario(&set, &cat, &p).unwrap();
        assert_ne!(per[0].1.partial.map(|t| t.k), per[1].1.partial.map(|t| t.k));
        let r = plan(&set, &cat, &p).unwrap();
        assert!(r.sym_c > r.sym_b * (1.0 + 1e-6));
        assert!(r.kappa > 1.0);
    }

    #[test]
    fn kappa_arithmetic() {
        assert_eq!(kappa(5.0, 5.0).unwrap(), 1.0);
        assert_relative_eq!(
            kappa(1.015 * 80.0, 80.0).unwrap(),
            1.015,
            max_relative = 1e-15
        );
        assert!(matches!(kappa(1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(kappa(0.9, 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn unprofitable_storage_lands_on_all_none() {
        let p = SystemParams::new(1.0, 0.0, 0.0, 7, 17).unwrap();
        let cat = catalog(&[100.0, 200.0, 300.0]);
        let set = ScenarioSet::single(vec![(7.0, 17.0); 3]).unwrap();
        let plan = solve_escm_c(&set, &cat, &p).unwrap();
        assert_eq!(plan.boundary_type, 0);
        assert_eq!(plan.eta_b, 0.0);
        assert_eq!(plan.classification.none, vec![0, 1, 2]);
    }

    #[test]
    fn ties_between_boundaries_prefer_smaller_b() {
        // b = 0 at η = 1 and b = 1 at η = 0 are the same plan
        let p = SystemParams::new(1.0, 0.0, 0.0, 7, 17).unwrap();
        let cat = catalog(&[0.0, 1000.0]);
        let set = ScenarioSet::single(vec![(1.0, 0.0), (200.0, 0.0)]).unwrap();
        let plan = solve_escm_c(&set, &cat, &p).unwrap();
        assert_eq!(
            plan.candidates[0].expected_cost,
            plan.candidates[1].expected_cost
        );
        assert_eq!((plan.boundary_type, plan.eta_b), (0, 1.0));
        assert_eq!(plan.classification.full, vec![0]);
        assert_eq!(plan.classification.none, vec![1]);
    }

    #[test]
    fn mismatched_type_counts_are_rejected() {
        let set = ScenarioSet::single(vec![(1.0, 1.0)]).unwrap();
        assert!(solve_escm(&set, &catalog(&[1.0, 2.0]), &params()).is_err());
        assert!(boundary_candidate(&set, &catalog(&[1.0]), &params(), 3).is_err());
    }
}
