//! Three-item storage contracts.
//!
//! A classification of storage types into full / partial / none becomes a
//! menu of items `(p^Δ, η)`. The price differences must keep every class on
//! its own item (incentive compatibility) and make investors invest up to
//! their cap. With `θ^a` the costliest full type, `θ^b` the partial type and
//! `θ^c` the cheapest non-investing type, the feasible region is
//!
//! ```text
//! θ^b < p_P < θ^c
//! η_P·p_P + (1 − η_P)·θ^a < p_F < η_P·p_P + (1 − η_P)·θ^b
//! p_N ≥ 0
//! ```
//!
//! The left bound on `p_F` keeps class-F users off the partial item, the
//! right bound keeps class-P users off the full item. Absent classes use the
//! conventions `θ^a = 0` (no F), `η_P = 0, θ^b = θ^c` (no P) and `θ^c = +∞`
//! (no N); items for absent classes are emitted but inert.

mod format;

pub use format::{parse_contract, write_contract, CONTRACT_FORMAT};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    equalized_price_levels, user_cost_under_item, Catalog, ItemClass, TariffItem, User,
};
use crate::scm::Classification;

/// Default reference off-peak price, $/MWh.
pub const DEFAULT_P_O_REF: f64 = 20.0;

/// Relative tolerance below which two item costs count as equal.
pub const COST_TIE_TOLERANCE: f64 = 1e-9;

/// The price-difference region for one classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceDifferenceIntervals {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_c: f64,
    pub eta_p: f64,
    pub has_full: bool,
    pub has_partial: bool,
    pub has_none: bool,
}

/// One price difference per item, $/MWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub p_full: f64,
    pub p_partial: f64,
    pub p_none: f64,
}

impl PricePoint {
    pub fn get(&self, class: ItemClass) -> f64 {
        match class {
            ItemClass::F => self.p_full,
            ItemClass::P => self.p_partial,
            ItemClass::N => self.p_none,
        }
    }
}

impl PriceDifferenceIntervals {
    /// Open interval for `p_P`, with `+∞` when class N is empty.
    pub fn partial_interval(&self) -> (f64, f64) {
        (self.theta_b, self.theta_c)
    }

    /// Open interval for `p_F` given a choice of `p_P`. When P is empty the
    /// partial item is inert and `p_P` is ignored.
    pub fn full_interval(&self, p_partial: f64) -> (f64, f64) {
        if self.has_partial {
            let eta = self.eta_p;
            (
                eta * p_partial + (1.0 - eta) * self.theta_a,
                eta * p_partial + (1.0 - eta) * self.theta_b,
            )
        } else {
            (self.theta_a, self.theta_c)
        }
    }

    /// Checks every inequality of the region by direct substitution. Only
    /// items for non-empty classes are constrained.
    pub fn contains(&self, point: &PricePoint) -> bool {
        let eta = self.eta_p;
        let full_ok = !self.has_full || {
            let (lo, hi) = if self.has_partial {
                (
                    eta * self.theta_b + (1.0 - eta) * self.theta_a,
                    (point.p_partial - self.theta_b) * eta + self.theta_b,
                )
            } else {
                (self.theta_a, self.theta_c)
            };
            lo < point.p_full && point.p_full < hi
        };
        let partial_ok = !self.has_partial || {
            let coupled = if self.has_full {
                point.p_full / eta - self.theta_a * (1.0 - eta) / eta
            } else {
                f64::INFINITY
            };
            self.theta_b < point.p_partial && point.p_partial < self.theta_c.min(coupled)
        };
        full_ok && partial_ok && point.p_none >= 0.0
    }
}

/// Builds the price-difference region for `classification`.
///
/// Types without peak demand cannot invest and are ignored when locating
/// `θ^a` and `θ^c`.
pub fn price_difference_intervals(
    classification: &Classification,
    catalog: &Catalog,
) -> Result<PriceDifferenceIntervals> {
    if classification.num_types() != catalog.len() {
        return Err(Error::Infeasible(format!(
            "classification covers {} types, catalog has {}",
            classification.num_types(),
            catalog.len()
        )));
    }
    let theta = |k: usize| -> Result<f64> {
        catalog
            .get(k)
            .map(|t| t.theta)
            .ok_or_else(|| Error::Infeasible(format!("type {k} not in catalog")))
    };
    let active = |k: &&usize| catalog.get(**k).is_some_and(|t| t.d_peak > 0.0);

    let mut theta_a = None;
    for k in classification.full.iter().filter(active) {
        let t = theta(*k)?;
        theta_a = Some(theta_a.map_or(t, |a: f64| a.max(t)));
    }
    let mut theta_c = None;
    for k in classification.none.iter().filter(active) {
        let t = theta(*k)?;
        theta_c = Some(theta_c.map_or(t, |c: f64| c.min(t)));
    }
    let has_full = theta_a.is_some();
    let has_none = theta_c.is_some();
    let theta_a = theta_a.unwrap_or(0.0);
    let theta_c = theta_c.unwrap_or(f64::INFINITY);
    let (has_partial, theta_b, eta_p) = match classification.partial {
        Some(p) => {
            if !(p.ratio > 0.0 && p.ratio < 1.0) {
                return Err(Error::Infeasible(format!(
                    "partial ratio {} outside (0, 1)",
                    p.ratio
                )));
            }
            (true, theta(p.k)?, p.ratio)
        }
        None => (false, theta_c, 0.0),
    };

    let intervals = PriceDifferenceIntervals {
        theta_a,
        theta_b,
        theta_c,
        eta_p,
        has_full,
        has_partial,
        has_none,
    };
    // non-emptiness: only the bounds of classes that exist matter
    let ordered_ab = !has_full || theta_a < theta_b;
    let ordered_bc = !has_partial || theta_b < theta_c;
    if !(ordered_ab && ordered_bc) {
        return Err(Error::Infeasible(format!(
            "empty price-difference region: θ^a={theta_a}, θ^b={theta_b}, θ^c={theta_c}"
        )));
    }
    Ok(intervals)
}

/// Deterministic interior point of the region: `p_P` at the midpoint of its
/// interval, then `p_F` at the midpoint of the interval induced by that
/// `p_P`, and `p_N = 0`. Unbounded intervals are capped at `2·lo + 1`.
/// Items for empty classes get price difference 0.
pub fn select_point(intervals: &PriceDifferenceIntervals) -> Result<PricePoint> {
    let midpoint = |(lo, hi): (f64, f64)| -> Result<f64> {
        let hi = if hi.is_finite() { hi } else { 2.0 * lo + 1.0 };
        if !(lo < hi) {
            return Err(Error::Infeasible(format!("empty interval ({lo}, {hi})")));
        }
        Ok(0.5 * (lo + hi))
    };
    let p_partial = if intervals.has_partial {
        midpoint(intervals.partial_interval())?
    } else {
        0.0
    };
    let p_full = if intervals.has_full {
        midpoint(intervals.full_interval(p_partial))?
    } else {
        0.0
    };
    let point = PricePoint {
        p_full,
        p_partial,
        p_none: 0.0,
    };
    if !intervals.contains(&point) {
        return Err(Error::Infeasible(format!(
            "selected point {point:?} left the region {intervals:?}"
        )));
    }
    Ok(point)
}

/// A three-item menu with per-user price levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    /// Items in `F, P, N` order.
    pub items: [TariffItem; 3],
    pub classification: Classification,
    /// Intended item of each storage type.
    pub type_classes: Vec<ItemClass>,
    pub p_o_ref: f64,
    /// Human-readable remarks, e.g. inert items for empty classes.
    pub notes: Vec<String>,
}

impl Contract {
    /// Synthesizes price levels for an arbitrary menu. `etas` and the point
    /// are in `F, P, N` order.
    pub fn assemble(
        classification: Classification,
        point: PricePoint,
        etas: [f64; 3],
        users: &[User],
        p_o_ref: f64,
    ) -> Result<Self> {
        if !(p_o_ref.is_finite() && p_o_ref >= 0.0) {
            return Err(Error::domain(format!(
                "p_o_ref must be non-negative, got {p_o_ref}"
            )));
        }
        let num_types = classification.num_types();
        let mut type_classes = Vec::with_capacity(num_types);
        for k in 0..num_types {
            type_classes.push(classification.class_of(k).ok_or_else(|| {
                Error::Infeasible(format!("type {k} missing from classification"))
            })?);
        }
        for u in users {
            if u.type_k >= num_types {
                return Err(Error::domain(format!(
                    "user {} has type {} outside catalog",
                    u.id, u.type_k
                )));
            }
        }
        let items = ItemClass::ALL.map(|class| TariffItem {
            class,
            p_delta: point.get(class),
            eta: etas[class.index()],
            price_levels: Default::default(),
        });
        let mut contract = Contract {
            items,
            classification,
            type_classes,
            p_o_ref,
            notes: Vec::new(),
        };
        for u in users {
            for item in contract.items.iter_mut() {
                let levels = equalized_price_levels(u, item.p_delta, point.p_none, p_o_ref)?;
                item.price_levels.insert(u.id.clone(), levels);
            }
        }
        Ok(contract)
    }

    /// Menu under which nobody can invest: every item has `η = 0`.
    pub fn no_storage(num_types: usize, users: &[User], p_o_ref: f64) -> Result<Self> {
        let classification = Classification {
            full: Vec::new(),
            partial: None,
            none: (0..num_types).collect(),
        };
        let point = PricePoint {
            p_full: 0.0,
            p_partial: 0.0,
            p_none: 0.0,
        };
        Contract::assemble(classification, point, [0.0; 3], users, p_o_ref)
    }

    pub fn item(&self, class: ItemClass) -> &TariffItem {
        &self.items[class.index()]
    }

    pub fn price_point(&self) -> PricePoint {
        PricePoint {
            p_full: self.items[0].p_delta,
            p_partial: self.items[1].p_delta,
            p_none: self.items[2].p_delta,
        }
    }

    pub fn intended_class(&self, user: &User) -> Result<ItemClass> {
        self.type_classes.get(user.type_k).copied().ok_or_else(|| {
            Error::domain(format!(
                "user {} has type {} outside contract",
                user.id, user.type_k
            ))
        })
    }

    /// Same menu with different price differences; price levels are rebuilt.
    pub fn with_price_point(&self, point: PricePoint, users: &[User]) -> Result<Self> {
        let etas = self.items.each_ref().map(|i| i.eta);
        let mut c = Contract::assemble(
            self.classification.clone(),
            point,
            etas,
            users,
            self.p_o_ref,
        )?;
        c.notes = self.notes.clone();
        Ok(c)
    }
}

/// Smallest reference off-peak price keeping every user's off-peak price
/// non-negative under `point`.
pub fn required_p_o_ref(point: &PricePoint, users: &[User]) -> f64 {
    let widest = point.p_full.max(point.p_partial) - point.p_none;
    users
        .iter()
        .filter(|u| u.total_demand() > 0.0)
        .map(|u| widest * u.d_peak / u.total_demand())
        .fold(0.0, f64::max)
}

/// Builds the contract for `classification`: `η = (1, η_P, 0)`, price
/// differences from [`select_point`], and payment-equalizing price levels.
pub fn build_contract(
    classification: &Classification,
    catalog: &Catalog,
    users: &[User],
    p_o_ref: f64,
) -> Result<Contract> {
    for u in users {
        let t = catalog.get(u.type_k).ok_or_else(|| {
            Error::domain(format!(
                "user {} has type {} outside catalog",
                u.id, u.type_k
            ))
        })?;
        if (u.theta - t.theta).abs() > 1e-12 * t.theta.abs().max(1.0) {
            return Err(Error::domain(format!(
                "user {} has theta {} but its type {} costs {}",
                u.id, u.theta, u.type_k, t.theta
            )));
        }
    }
    let intervals = price_difference_intervals(classification, catalog)?;
    let point = select_point(&intervals)?;
    let mut contract = Contract::assemble(
        classification.clone(),
        point,
        [1.0, intervals.eta_p, 0.0],
        users,
        p_o_ref,
    )?;
    if !intervals.has_full {
        contract
            .notes
            .push("class F empty: item F is inert (p_delta = 0)".into());
    }
    if !intervals.has_partial {
        contract
            .notes
            .push("class P empty: item P is inert (eta = 0)".into());
    }
    if !intervals.has_none {
        contract.notes.push("class N empty".into());
    }
    Ok(contract)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcEntry {
    pub user: String,
    pub intended: ItemClass,
    /// Minimized cost under items `F, P, N`.
    pub costs: [f64; 3],
    /// `min over other items y of π(y) − π(intended)`.
    pub margin: f64,
    /// Whether the user invests at the item's cap (always true for class N).
    pub invests_at_cap: bool,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub entries: Vec<IcEntry>,
}

impl IcReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IcEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    /// Smallest margin over users who must strictly prefer their item.
    pub fn min_strict_margin(&self) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.intended != ItemClass::N && e.note.is_none())
            .map(|e| e.margin)
            .min_by(f64::total_cmp)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "user\tintended\tcost_F\tcost_P\tcost_N\tmargin\tinvests_at_cap\tpassed\tnote\n",
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.user,
                e.intended,
                e.costs[0],
                e.costs[1],
                e.costs[2],
                e.margin,
                e.invests_at_cap,
                e.passed,
                e.note.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

/// Checks that every user prefers its intended item and, for investing
/// classes, invests up to the item's cap.
///
/// Users with investing classes must prefer their item strictly. Under
/// payment equalization an item that induces no investment costs the same as
/// the no-storage item, so class-N users can only be indifferent; they pass
/// when no other item is strictly cheaper. Users without peak demand are
/// indifferent everywhere and pass with a note.
pub fn verify_ic(contract: &Contract, users: &[User]) -> Result<IcReport> {
    let entries = users
        .par_iter()
        .map(|u| ic_entry(contract, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(IcReport { entries })
}

fn ic_entry(contract: &Contract, user: &User) -> Result<IcEntry> {
    let intended = contract.intended_class(user)?;
    let mut costs = [0.0; 3];
    for class in ItemClass::ALL {
        costs[class.index()] = user_cost_under_item(user, contract.item(class))?;
    }
    let own = costs[intended.index()];
    let margin = ItemClass::ALL
        .iter()
        .filter(|&&c| c != intended)
        .map(|c| costs[c.index()] - own)
        .fold(f64::INFINITY, f64::min);
    let tol = COST_TIE_TOLERANCE * own.abs().max(1.0);
    let item = contract.item(intended);

    if user.d_peak <= 0.0 {
        return Ok(IcEntry {
            user: user.id.to_string(),
            intended,
            costs,
            margin,
            invests_at_cap: true,
            passed: margin >= -tol,
            note: Some("no peak demand: indifferent between items".into()),
        });
    }
    let (invests_at_cap, passed) = match intended {
        ItemClass::N => (true, margin >= -tol),
        _ => {
            let at_cap = user.theta < item.p_delta;
            (at_cap, at_cap && margin > tol)
        }
    };
    Ok(IcEntry {
        user: user.id.to_string(),
        intended,
        costs,
        margin,
        invests_at_cap,
        passed,
        note: None,
    })
}
