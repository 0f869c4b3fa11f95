//! Decentralized outcome of a contract: every user picks the item that is
//! cheapest for them, invests as a price taker, and the system pays the
//! supply cost of the resulting loads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{Contract, COST_TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{
    solve_ucm, user_cost_under_item, ItemClass, SystemParams, User, UserDecision, UserId,
};
use crate::scenario::Population;

/// Relative tolerance for the aggregate-consistency warning.
const AGGREGATE_TOLERANCE: f64 = 1e-9;

/// When users commit to their storage capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    /// Each day the user solves its problem with that day's demand, so the
    /// shift is `η·D^p` of the realized day.
    #[default]
    PerScenario,
    /// Capacity is sized once at mean demand; each day shifts
    /// `min(capacity, realized D^p)` and pays for the full capacity.
    ExAnte,
}

impl Timing {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-scenario" => Some(Timing::PerScenario),
            "ex-ante" => Some(Timing::ExAnte),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Timing::PerScenario => "per-scenario",
            Timing::ExAnte => "ex-ante",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub user: UserId,
    pub item: ItemClass,
    pub decision: UserDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub users: Vec<UserOutcome>,
    pub peak_load: f64,
    pub offpeak_load: f64,
    pub cost_storage: f64,
    pub cost_peak: f64,
    pub cost_offpeak: f64,
    pub total: f64,
    /// Users per item, `F, P, N` order.
    pub class_counts: [usize; 3],
}

impl MarketOutcome {
    fn assemble(
        users: Vec<UserOutcome>,
        storage: f64,
        peak: f64,
        offpeak: f64,
        params: &SystemParams,
    ) -> Self {
        let mut class_counts = [0; 3];
        for u in &users {
            class_counts[u.item.index()] += 1;
        }
        let cost_peak = params.peak_cost(peak);
        let cost_offpeak = params.offpeak_cost(offpeak);
        MarketOutcome {
            users,
            peak_load: peak,
            offpeak_load: offpeak,
            cost_storage: storage,
            cost_peak,
            cost_offpeak,
            total: storage + cost_peak + cost_offpeak,
            class_counts,
        }
    }
}

/// Item a user selects: the cheapest one, ties broken toward the item
/// intended for its type, then toward the lowest `η`.
pub fn select_item(contract: &Contract, user: &User) -> Result<ItemClass> {
    let mut costs = [0.0; 3];
    for class in ItemClass::ALL {
        costs[class.index()] = user_cost_under_item(user, contract.item(class))?;
    }
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = COST_TIE_TOLERANCE * best.abs().max(1.0);
    let minimizers: Vec<ItemClass> = ItemClass::ALL
        .into_iter()
        .filter(|c| costs[c.index()] <= best + tol)
        .collect();
    let intended = contract.intended_class(user)?;
    if minimizers.contains(&intended) {
        return Ok(intended);
    }
    Ok(minimizers
        .into_iter()
        .min_by(|a, b| contract.item(*a).eta.total_cmp(&contract.item(*b).eta))
        .expect("at least one minimizer"))
}

/// One-day outcome. Users carry that day's demand. When `type_demands` is
/// given, per-type sums of user demand are compared against it and
/// mismatches are logged; the user values are used either way.
pub fn simulate(
    contract: &Contract,
    users: &[User],
    params: &SystemParams,
    type_demands: Option<&[(f64, f64)]>,
) -> Result<MarketOutcome> {
    params.validate()?;
    if let Some(expected) = type_demands {
        check_aggregates(users, expected);
    }
    let mut outcomes = Vec::with_capacity(users.len());
    let (mut storage, mut peak, mut offpeak) = (0.0, 0.0, 0.0);
    for u in users {
        let item = select_item(contract, u)?;
        let chosen = contract.item(item);
        let decision = solve_ucm(u, chosen.p_delta, chosen.eta)?;
        storage += u.theta * decision.capacity;
        peak += u.d_peak - decision.shift;
        offpeak += u.d_offpeak + decision.shift;
        outcomes.push(UserOutcome {
            user: u.id.clone(),
            item,
            decision,
        });
    }
    Ok(MarketOutcome::assemble(
        outcomes,
        storage,
        peak.max(0.0),
        offpeak,
        params,
    ))
}

fn check_aggregates(users: &[User], expected: &[(f64, f64)]) {
    let mut sums = vec![(0.0, 0.0); expected.len()];
    for u in users {
        match sums.get_mut(u.type_k) {
            Some(s) => {
                s.0 += u.d_peak;
                s.1 += u.d_offpeak;
            }
            None => log::warn!(
                "user {} has type {} outside the scenario's {} types",
                u.id,
                u.type_k,
                expected.len()
            ),
        }
    }
    for (k, (got, want)) in sums.iter().zip(expected).enumerate() {
        let close =
            |a: f64, b: f64| (a - b).abs() <= AGGREGATE_TOLERANCE * a.abs().max(b.abs()).max(1.0);
        if !(close(got.0, want.0) && close(got.1, want.1)) {
            log::warn!("type {k}: users sum to {got:?} but the scenario says {want:?}");
        }
    }
}

/// Expected outcome over a population's scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    /// Item chosen by each user, in population order.
    pub choices: Vec<ItemClass>,
    pub per_scenario: Vec<MarketOutcome>,
    pub expected_cost: f64,
    /// Expected cost with no storage anywhere.
    pub expected_no_storage: f64,
}

impl ExpectedOutcome {
    /// `κ^no`: no-storage cost over contract cost.
    pub fn kappa_no(&self) -> Result<f64> {
        if !(self.expected_cost > 0.0) {
            return Err(Error::domain(format!(
                "expected cost under the contract is {}, cannot form a ratio",
                self.expected_cost
            )));
        }
        Ok(self.expected_no_storage / self.expected_cost)
    }
}

/// Simulates every scenario of `population`. `users` are the population's
/// users at mean demand, in the same order; they select items once, against
/// those mean demands, and keep them for all scenarios.
pub fn simulate_scenarios(
    contract: &Contract,
    users: &[User],
    population: &Population,
    params: &SystemParams,
    timing: Timing,
) -> Result<ExpectedOutcome> {
    params.validate()?;
    if users.len() != population.num_users()
        || users
            .iter()
            .zip(population.ids())
            .any(|(u, id)| &u.id != id)
    {
        return Err(Error::Scenario("users do not match the population".into()));
    }
    let choices = users
        .iter()
        .map(|u| select_item(contract, u))
        .collect::<Result<Vec<_>>>()?;
    let planned = users
        .iter()
        .zip(&choices)
        .map(|(u, &c)| solve_ucm(u, contract.item(c).p_delta, contract.item(c).eta))
        .collect::<Result<Vec<_>>>()?;

    let per_scenario = (0..population.num_scenarios())
        .into_par_iter()
        .map(|s| {
            let day = population.scenario(s);
            let mut outcomes = Vec::with_capacity(users.len());
            let (mut storage, mut peak, mut offpeak) = (0.0, 0.0, 0.0);
            for (((u, &(dp, doff)), &item), plan) in
                users.iter().zip(day).zip(&choices).zip(&planned)
            {
                let decision = match timing {
                    Timing::PerScenario => {
                        let chosen = contract.item(item);
                        solve_ucm(&u.with_demand(dp, doff), chosen.p_delta, chosen.eta)?
                    }
                    Timing::ExAnte => UserDecision {
                        capacity: plan.capacity,
                        shift: plan.capacity.min(dp),
                    },
                };
                storage += u.theta * decision.capacity;
                peak += dp - decision.shift;
                offpeak += doff + decision.shift;
                outcomes.push(UserOutcome {
                    user: u.id.clone(),
                    item,
                    decision,
                });
            }
            Ok(MarketOutcome::assemble(
                outcomes,
                storage,
                peak.max(0.0),
                offpeak,
                params,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut expected_cost = 0.0;
    let mut expected_no_storage = 0.0;
    for (s, (w, out)) in population.weights().iter().zip(&per_scenario).enumerate() {
        let (p, o) = population
            .scenario(s)
            .iter()
            .fold((0.0, 0.0), |acc, &(p, o)| (acc.0 + p, acc.1 + o));
        expected_cost += w * out.total;
        expected_no_storage += w * params.no_storage_cost(p, o);
    }
    Ok(ExpectedOutcome {
        choices,
        per_scenario,
        expected_cost,
        expected_no_storage,
    })
}

/// `κ^no` of `contract` over the population's scenarios.
pub fn kappa_no(
    contract: &Contract,
    users: &[User],
    population: &Population,
    params: &SystemParams,
    timing: Timing,
) -> Result<f64> {
    simulate_scenarios(contract, users, population, params, timing)?.kappa_no()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{build_contract, PricePoint};
    use crate::model::Catalog;
    use crate::scm::{solve_scm, Classification, PartialType};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> SystemParams {
        SystemParams::new(1.0, 0.0, 0.0, 12, 12).unwrap()
    }

    fn one_user_population(days: Vec<(f64, f64)>) -> Population {
        Population::uniform(
            vec![UserId::new("u")],
            days.into_iter().map(|d| vec![d]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn no_storage_menu_reproduces_baseline() {
        let users = vec![
            User::new("a", 1.0, 3.0, 1.0, 0).unwrap(),
            User::new("b", 2.0, 4.0, 2.0, 1).unwrap(),
        ];
        let contract = Contract::no_storage(2, &users, 20.0).unwrap();
        let p = SystemParams::new(0.7, 3.0, 5.0, 7, 17).unwrap();
        let out = simulate(&contract, &users, &p, None).unwrap();
        assert_eq!(out.total, p.no_storage_cost(7.0, 3.0));
        let pop = Population::uniform(
            vec![UserId::new("a"), UserId::new("b")],
            vec![vec![(2.0, 1.0), (5.0, 2.0)], vec![(4.0, 1.0), (3.0, 2.0)]],
        )
        .unwrap();
        assert_eq!(
            kappa_no(&contract, &users, &pop, &p, Timing::PerScenario).unwrap(),
            1.0
        );
    }

    #[test]
    fn one_user_halving_peak_cost() {
        // α=1, β=γ=0, H=12/12, D=(10, 0). Shifting half the peak leaves 5 MWh
        // in each period: 25/12 + 25/12 against 100/12 with no storage.
        let theta = 0.1;
        let users = vec![User::new("u", theta, 10.0, 0.0, 0).unwrap()];
        let class = Classification {
            full: vec![],
            partial: Some(PartialType { k: 0, ratio: 0.5 }),
            none: vec![],
        };
        let point = PricePoint {
            p_full: 0.0,
            p_partial: 1.0,
            p_none: 0.0,
        };
        let contract = Contract::assemble(class, point, [1.0, 0.5, 0.0], &users, 20.0).unwrap();
        let out = simulate(&contract, &users, &params(), None).unwrap();
        assert_eq!(out.users[0].item, ItemClass::P);
        assert_relative_eq!(out.cost_peak, 25.0 / 12.0, max_relative = 1e-15);
        let expected = (100.0 / 12.0) / (50.0 / 12.0 + theta * 5.0);
        let pop = one_user_population(vec![(10.0, 0.0)]);
        assert_relative_eq!(
            kappa_no(&contract, &users, &pop, &params(), Timing::PerScenario).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn contract_reaches_complete_information_optimum() {
        let p = SystemParams::new(12.0, 1.0, 2.0, 12, 12).unwrap();
        let users = vec![
            User::new("a", 10.0, 5.0, 0.0, 0).unwrap(),
            User::new("b", 10.0, 5.0, 1.0, 0).unwrap(),
            User::new("c", 20.0, 3.0, 2.0, 1).unwrap(),
        ];
        let catalog = Catalog::from_parts(&[10.0, 20.0], &[(10.0, 1.0), (3.0, 2.0)]).unwrap();
        let (opt, class) = solve_scm(&catalog, &p).unwrap();
        let contract = build_contract(&class, &catalog, &users, 40.0).unwrap();
        let out = simulate(&contract, &users, &p, Some(&[(10.0, 1.0), (3.0, 2.0)])).unwrap();
        assert_relative_eq!(out.total, opt.total, max_relative = 1e-9);
    }

    #[test]
    fn over_incentive_creates_a_new_peak() {
        // everybody is told to store its whole peak: the valley becomes the peak
        let users: Vec<User> = (0..4)
            .map(|i| User::new(format!("u{i}"), 1.0, 5.0, 4.0, 0).unwrap())
            .collect();
        let class = Classification {
            full: vec![0],
            partial: None,
            none: vec![],
        };
        let point = PricePoint {
            p_full: 50.0,
            p_partial: 0.0,
            p_none: 0.0,
        };
        let contract = Contract::assemble(class, point, [1.0, 0.0, 0.0], &users, 60.0).unwrap();
        let out = simulate(&contract, &users, &params(), None).unwrap();
        let original_peak: f64 = users.iter().map(|u| u.d_peak).sum();
        assert_eq!(out.peak_load, 0.0);
        assert!(out.offpeak_load > original_peak);
    }

    #[test]
    fn ex_ante_caps_shift_at_realized_peak() {
        let users = vec![User::new("u", 0.1, 4.0, 0.0, 0).unwrap()];
        let class = Classification {
            full: vec![0],
            partial: None,
            none: vec![],
        };
        let point = PricePoint {
            p_full: 1.0,
            p_partial: 0.0,
            p_none: 0.0,
        };
        let contract = Contract::assemble(class, point, [1.0, 0.0, 0.0], &users, 20.0).unwrap();
        let pop = one_user_population(vec![(2.0, 0.0), (6.0, 0.0)]);
        let ex = simulate_scenarios(&contract, &users, &pop, &params(), Timing::ExAnte).unwrap();
        assert_eq!(
            ex.per_scenario[0].users[0].decision,
            UserDecision {
                capacity: 4.0,
                shift: 2.0
            }
        );
        assert_eq!(
            ex.per_scenario[1].users[0].decision,
            UserDecision {
                capacity: 4.0,
                shift: 4.0
            }
        );
        let per =
            simulate_scenarios(&contract, &users, &pop, &params(), Timing::PerScenario).unwrap();
        assert_eq!(per.per_scenario[1].users[0].decision.shift, 6.0);
    }

    #[test]
    fn tie_prefers_intended_then_lowest_eta() {
        let users = vec![User::new("u", 5.0, 2.0, 1.0, 0).unwrap()];
        // every item sits below θ, so all three cost the same
        let point = PricePoint {
            p_full: 1.0,
            p_partial: 2.0,
            p_none: 0.0,
        };
        let class = Classification {
            full: vec![0],
            partial: None,
            none: vec![],
        };
        let c = Contract::assemble(class, point, [1.0, 0.5, 0.0], &users, 20.0).unwrap();
        assert_eq!(select_item(&c, &users[0]).unwrap(), ItemClass::F);
        let class = Classification {
            full: vec![],
            partial: Some(PartialType { k: 0, ratio: 0.5 }),
            none: vec![],
        };
        let mut c = Contract::assemble(class, point, [1.0, 0.5, 0.0], &users, 20.0).unwrap();
        assert_eq!(select_item(&c, &users[0]).unwrap(), ItemClass::P);
        c.type_classes = vec![ItemClass::F];
        c.items[0].eta = 0.8;
        c.items[2].eta = 0.3;
        // intended F is still tied, so it wins
        assert_eq!(select_item(&c, &users[0]).unwrap(), ItemClass::F);
    }

    #[test]
    fn mismatched_population_rejected() {
        let users = vec![User::new("a", 1.0, 1.0, 1.0, 0).unwrap()];
        let contract = Contract::no_storage(1, &users, 20.0).unwrap();
        let pop = Population::uniform(vec![UserId::new("b")], vec![vec![(1.0, 1.0)]]).unwrap();
        assert!(
            simulate_scenarios(&contract, &users, &pop, &params(), Timing::PerScenario).is_err()
        );
    }

    proptest! {
        #[test]
        fn energy_is_conserved(
            demands in proptest::collection::vec((0.0..10.0f64, 0.0..10.0f64), 1..8),
            p_full in 0.0..30.0f64,
            eta in 0.0..=1.0f64,
        ) {
            let users: Vec<User> = demands
                .iter()
                .enumerate()
                .map(|(i, &(p, o))| User::new(format!("u{i}"), (i as f64) * 3.0, p, o, i % 2).unwrap())
                .collect();
            let class = Classification { full: vec![0], partial: None, none: vec![1] };
            let point = PricePoint { p_full, p_partial: 0.0, p_none: 0.0 };
            let contract = Contract::assemble(class, point, [eta, 0.0, 0.0], &users, 100.0).unwrap();
            let out = simulate(&contract, &users, &params(), None).unwrap();
            let total: f64 = demands.iter().map(|&(p, o)| p + o).sum();
            prop_assert!((out.peak_load + out.offpeak_load - total).abs() <= 1e-9 * total.max(1.0));
            for (u, o) in users.iter().zip(&out.users) {
                prop_assert!(o.decision.shift <= u.d_peak + 1e-12);
                prop_assert!(o.decision.shift == o.decision.capacity);
            }
            prop_assert!(out.peak_load >= 0.0);
        }
    }
}
