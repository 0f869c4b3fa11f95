//! Domain types, the two-period supply cost, and the single-user storage
//! decision under a price difference with an investment cap.
//!
//! Units are MWh for energy, $/MWh for prices and $/MWh-day for the
//! daily-amortized storage capacity cost.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hours in one operational day; the peak and off-peak periods partition it.
pub const HOURS_PER_DAY: u32 = 24;

/// Utility supply-cost coefficients and the ToU period lengths.
///
/// The hourly cost of serving `p` MW is `alpha·p² + beta·p + gamma`. A period
/// of `H` hours carrying `L` MWh is approximated by `H` hours at `L/H` MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub hours_peak: u32,
    pub hours_offpeak: u32,
}

impl SystemParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        hours_peak: u32,
        hours_offpeak: u32,
    ) -> Result<Self> {
        let params = SystemParams {
            alpha,
            beta,
            gamma,
            hours_peak,
            hours_offpeak,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::domain(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::domain(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::domain(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.hours_peak == 0 || self.hours_offpeak == 0 {
            return Err(Error::domain("both ToU periods need at least one hour"));
        }
        if self.hours_peak + self.hours_offpeak != HOURS_PER_DAY {
            return Err(Error::domain(format!(
                "peak and off-peak hours must sum to 24, got {} + {}",
                self.hours_peak, self.hours_offpeak
            )));
        }
        Ok(())
    }

    /// Peak-period supply cost for `load` MWh. No domain check.
    #[inline]
    pub fn peak_cost(&self, load: f64) -> f64 {
        period_cost(self, load, self.hours_peak)
    }

    #[inline]
    pub fn offpeak_cost(&self, load: f64) -> f64 {
        period_cost(self, load, self.hours_offpeak)
    }

    /// Derivative of [`SystemParams::peak_cost`] with respect to the load.
    #[inline]
    pub fn peak_marginal(&self, load: f64) -> f64 {
        2.0 * self.alpha * load / f64::from(self.hours_peak) + self.beta
    }

    #[inline]
    pub fn offpeak_marginal(&self, load: f64) -> f64 {
        2.0 * self.alpha * load / f64::from(self.hours_offpeak) + self.beta
    }

    /// Social cost of serving the given period loads with no storage at all.
    pub fn no_storage_cost(&self, peak: f64, offpeak: f64) -> f64 {
        self.peak_cost(peak) + self.offpeak_cost(offpeak)
    }
}

#[inline]
fn period_cost(params: &SystemParams, load: f64, hours: u32) -> f64 {
    let hours = f64::from(hours);
    params.alpha / hours * load * load + params.beta * load + params.gamma * hours
}

/// `g^p(L) = α/H^p·L² + β·L + γ·H^p`.
pub fn supply_cost_peak(load: f64, params: &SystemParams) -> Result<f64> {
    check_load(load)?;
    Ok(params.peak_cost(load))
}

/// `g^o(L) = α/H^o·L² + β·L + γ·H^o`.
pub fn supply_cost_offpeak(load: f64, params: &SystemParams) -> Result<f64> {
    check_load(load)?;
    Ok(params.offpeak_cost(load))
}

fn check_load(load: f64) -> Result<()> {
    if load.is_finite() && load >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "period load must be finite and non-negative, got {load}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

/// One end user: private storage cost and daily period demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    /// Daily-amortized unit storage capacity cost, $/MWh-day.
    pub theta: f64,
    pub d_peak: f64,
    pub d_offpeak: f64,
    /// Index into the storage-type catalog.
    pub type_k: usize,
}

impl User {
    pub fn new(
        id: impl Into<UserId>,
        theta: f64,
        d_peak: f64,
        d_offpeak: f64,
        type_k: usize,
    ) -> Result<Self> {
        let user = User {
            id: id.into(),
            theta,
            d_peak,
            d_offpeak,
            type_k,
        };
        user.validate()?;
        Ok(user)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::domain(format!(
                "user {}: theta must be non-negative",
                self.id
            )));
        }
        for (name, v) in [("peak", self.d_peak), ("off-peak", self.d_offpeak)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!(
                    "user {}: {name} demand must be non-negative, got {v}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// The same user facing a different daily demand realization.
    pub fn with_demand(&self, d_peak: f64, d_offpeak: f64) -> Self {
        User {
            d_peak,
            d_offpeak,
            ..self.clone()
        }
    }

    pub fn total_demand(&self) -> f64 {
        self.d_peak + self.d_offpeak
    }
}

impl From<String> for UserId {
    fn from(s: String) -> Self {
        UserId(s)
    }
}

/// A storage-cost class with its aggregate daily demands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageType {
    pub k: usize,
    pub theta: f64,
    pub d_peak: f64,
    pub d_offpeak: f64,
}

/// Storage types ordered by strictly increasing unit cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    types: Vec<StorageType>,
}

impl Catalog {
    /// Validates and re-indexes `types` so that `types[k].k == k`.
    pub fn new(mut types: Vec<StorageType>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::Catalog("catalog is empty".into()));
        }
        for (k, t) in types.iter_mut().enumerate() {
            if !(t.theta.is_finite() && t.theta >= 0.0) {
                return Err(Error::Catalog(format!(
                    "type {k}: theta must be finite and non-negative"
                )));
            }
            if !(t.d_peak.is_finite()
                && t.d_peak >= 0.0
                && t.d_offpeak.is_finite()
                && t.d_offpeak >= 0.0)
            {
                return Err(Error::Catalog(format!(
                    "type {k}: demands must be finite and non-negative"
                )));
            }
            t.k = k;
        }
        for pair in types.windows(2) {
            if pair[0].theta >= pair[1].theta {
                return Err(Error::Catalog(format!(
                    "storage costs must be strictly increasing: theta[{}]={} >= theta[{}]={}",
                    pair[0].k, pair[0].theta, pair[1].k, pair[1].theta
                )));
            }
        }
        Ok(Catalog { types })
    }

    /// Builds a catalog from parallel cost and `(peak, off-peak)` demand lists.
    pub fn from_parts(thetas: &[f64], demands: &[(f64, f64)]) -> Result<Self> {
        if thetas.len() != demands.len() {
            return Err(Error::Catalog(format!(
                "{} costs but {} demand pairs",
                thetas.len(),
                demands.len()
            )));
        }
        let types = thetas
            .iter()
            .zip(demands)
            .enumerate()
            .map(|(k, (&theta, &(d_peak, d_offpeak)))| StorageType {
                k,
                theta,
                d_peak,
                d_offpeak,
            })
            .collect();
        Catalog::new(types)
    }

    /// Same costs, new aggregate demands.
    pub fn with_demands(&self, demands: &[(f64, f64)]) -> Result<Self> {
        let thetas: Vec<f64> = self.thetas().collect();
        Catalog::from_parts(&thetas, demands)
    }

    pub fn types(&self) -> &[StorageType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&StorageType> {
        self.types.get(k)
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        self.types.iter().map(|t| t.theta)
    }

    pub fn total_peak(&self) -> f64 {
        self.types.iter().map(|t| t.d_peak).sum()
    }

    pub fn total_offpeak(&self) -> f64 {
        self.types.iter().map(|t| t.d_offpeak).sum()
    }
}

/// The three contract items, named after the class each is intended for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemClass {
    /// Full investment up to the user's peak demand.
    F,
    /// Partial investment, capped at a fraction of peak demand.
    P,
    /// No storage.
    N,
}

impl ItemClass {
    pub const ALL: [ItemClass; 3] = [ItemClass::F, ItemClass::P, ItemClass::N];

    pub fn index(self) -> usize {
        match self {
            ItemClass::F => 0,
            ItemClass::P => 1,
            ItemClass::N => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ItemClass::F => "F",
            ItemClass::P => "P",
            ItemClass::N => "N",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F" => Some(ItemClass::F),
            "P" => Some(ItemClass::P),
            "N" => Some(ItemClass::N),
            _ => None,
        }
    }
}

impl fmt::Display for ItemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A user's absolute peak and off-peak prices under one item, $/MWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceLevels {
    pub peak: f64,
    pub offpeak: f64,
}

impl PriceLevels {
    pub fn p_delta(&self) -> f64 {
        self.peak - self.offpeak
    }

    /// Daily bill when `shift` MWh is moved from the peak to the off-peak period.
    pub fn bill(&self, user: &User, shift: f64) -> f64 {
        self.peak * (user.d_peak - shift) + self.offpeak * (user.d_offpeak + shift)
    }
}

/// One contract item `(p^Δ, η)` with the per-user price levels realizing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffItem {
    pub class: ItemClass,
    pub p_delta: f64,
    /// Maximum ratio of invested capacity to the user's peak demand.
    pub eta: f64,
    pub price_levels: BTreeMap<UserId, PriceLevels>,
}

impl TariffItem {
    pub fn levels_for(&self, user: &UserId) -> Result<&PriceLevels> {
        self.price_levels.get(user).ok_or_else(|| Error::Pricing {
            user: user.to_string(),
            msg: format!("no price levels under item {}", self.class),
        })
    }
}

/// Invested capacity and daily shifted energy, both in MWh.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UserDecision {
    pub capacity: f64,
    pub shift: f64,
}

/// Cost-minimizing storage decision of one user facing price difference
/// `p_delta` and an investment cap of `eta_cap·D^p`.
///
/// All-or-nothing: invest to the cap when storage is cheaper than the price
/// difference, otherwise nothing. The tie `theta == p_delta` resolves to zero.
pub fn solve_ucm(user: &User, p_delta: f64, eta_cap: f64) -> Result<UserDecision> {
    if !(p_delta.is_finite() && p_delta >= 0.0) {
        return Err(Error::domain(format!(
            "price difference must be non-negative, got {p_delta}"
        )));
    }
    if !(0.0..=1.0).contains(&eta_cap) {
        return Err(Error::domain(format!(
            "investment cap must lie in [0, 1], got {eta_cap}"
        )));
    }
    Ok(ucm_decision(user.theta, user.d_peak, p_delta, eta_cap))
}

#[inline]
pub(crate) fn ucm_decision(theta: f64, d_peak: f64, p_delta: f64, eta_cap: f64) -> UserDecision {
    if theta < p_delta {
        let c = eta_cap * d_peak;
        UserDecision {
            capacity: c,
            shift: c,
        }
    } else {
        UserDecision::default()
    }
}

/// Per-user price levels that leave the no-storage bill identical across items.
///
/// Solves `p^p − p^o = p_delta` and `p^p·D^p + p^o·D^o = B` with the reference
/// payment `B = p_o_ref·(D^p + D^o) + p_delta_n·D^p`.
pub fn equalized_price_levels(
    user: &User,
    p_delta: f64,
    p_delta_n: f64,
    p_o_ref: f64,
) -> Result<PriceLevels> {
    let total = user.total_demand();
    if total <= 0.0 {
        return Ok(PriceLevels {
            peak: p_o_ref,
            offpeak: p_o_ref,
        });
    }
    let offpeak = p_o_ref + (p_delta_n - p_delta) * user.d_peak / total;
    if offpeak < 0.0 {
        return Err(Error::Pricing {
            user: user.id.to_string(),
            msg: format!(
                "implied off-peak price {offpeak:.6} is negative for p_delta {p_delta}; increase p_o_ref (currently {p_o_ref})"
            ),
        });
    }
    Ok(PriceLevels {
        peak: offpeak + p_delta,
        offpeak,
    })
}

/// Minimized daily cost (bill plus storage) of `user` under `item`.
pub fn user_cost_under_item(user: &User, item: &TariffItem) -> Result<f64> {
    let levels = item.levels_for(&user.id)?;
    let decision = solve_ucm(user, item.p_delta, item.eta)?;
    Ok(levels.bill(user, decision.shift) + user.theta * decision.capacity)
}
