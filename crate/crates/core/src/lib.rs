//! Time-of-use tariff contracts that steer end-user storage investment
//! toward the social optimum.

pub mod contract;
pub mod data;
pub mod error;
pub mod experiment;
pub mod market;
pub mod model;
pub mod planner;
pub mod scenario;
pub mod scm;

pub use contract::{
    build_contract, parse_contract, price_difference_intervals, required_p_o_ref, select_point,
    verify_ic, write_contract, Contract, IcEntry, IcReport, PriceDifferenceIntervals, PricePoint,
    CONTRACT_FORMAT, DEFAULT_P_O_REF,
};
pub use error::{Error, Result};
pub use market::{
    kappa_no, select_item, simulate, simulate_scenarios, ExpectedOutcome, MarketOutcome, Timing,
    UserOutcome,
};
pub use model::{
    equalized_price_levels, solve_ucm, supply_cost_offpeak, supply_cost_peak, user_cost_under_item,
    Catalog, ItemClass, PriceLevels, StorageType, SystemParams, TariffItem, User, UserDecision,
    UserId,
};
pub use planner::{
    kappa, plan, solve_escm, solve_escm_c, BoundaryCandidate, ContractPlan, PlanResult,
};
pub use scenario::{Population, Scenario, ScenarioSet};
pub use scm::{classify, scm_oracle, solve_scm, Classification, PartialType, SocialOutcome};
