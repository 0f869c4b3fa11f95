use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::contract::{
    build_contract, price_difference_intervals, required_p_o_ref, select_point, verify_ic,
    write_contract, Contract, IcReport, DEFAULT_P_O_REF,
};
use crate::data::{sample_type_groupings, spread_thetas};
use crate::error::{Error, Result};
use crate::market::{simulate, MarketOutcome};
use crate::model::{Catalog, SystemParams, User};
use crate::scm::{solve_scm, Classification, SocialOutcome};

use super::{write_file, ExperimentConfig};

/// Relative tolerance of the realized-versus-optimal check.
const OPTIMALITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CompleteReport {
    pub config_hash: String,
    pub seed: u64,
    pub catalog: Catalog,
    pub users: Vec<User>,
    pub optimum: SocialOutcome,
    pub classification: Classification,
    pub contract: Contract,
    pub ic: IcReport,
    pub realized: MarketOutcome,
    pub no_storage_cost: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    mode: &'a str,
    config_hash: &'a str,
    seed: u64,
    types: usize,
    users: usize,
    optimal_cost: f64,
    realized_cost: f64,
    realized_over_optimal: f64,
    optimality_check: &'a str,
    no_storage_cost: f64,
    kappa_no: f64,
    boundary: String,
    ic_passed: bool,
    ic_failures: usize,
    p_o_ref: f64,
}

impl CompleteReport {
    pub fn ratio(&self) -> f64 {
        self.realized.total / self.optimum.total
    }

    pub fn optimality_holds(&self) -> bool {
        (self.ratio() - 1.0).abs() <= OPTIMALITY_TOLERANCE
    }

    pub fn scm_tsv(&self) -> String {
        let mut out = String::from("type\ttheta\td_peak\td_offpeak\tclass\tcapacity\tshift\n");
        for (t, d) in self.catalog.types().iter().zip(&self.optimum.per_type) {
            let class = self.contract.type_classes[t.k];
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.k, t.theta, t.d_peak, t.d_offpeak, class, d.capacity, d.shift
            );
        }
        out
    }

    pub fn summary_toml(&self) -> String {
        let boundary = match self.classification.partial {
            Some(p) => format!("{}:{}", p.k, p.ratio),
            None => "none".into(),
        };
        let summary = Summary {
            mode: "complete",
            config_hash: &self.config_hash,
            seed: self.seed,
            types: self.catalog.len(),
            users: self.users.len(),
            optimal_cost: self.optimum.total,
            realized_cost: self.realized.total,
            realized_over_optimal: self.ratio(),
            optimality_check: if self.optimality_holds() {
                "pass"
            } else {
                "fail"
            },
            no_storage_cost: self.no_storage_cost,
            kappa_no: self.no_storage_cost / self.realized.total,
            boundary,
            ic_passed: self.ic.all_passed(),
            ic_failures: self.ic.failures().count(),
            p_o_ref: self.contract.p_o_ref,
        };
        toml::to_string(&summary).expect("summary serializes")
    }

    /// Writes `scm.tsv`, `contract.txt`, `ic.tsv` and `summary.toml`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let types: BTreeMap<_, _> = self
            .users
            .iter()
            .map(|u| (u.id.clone(), u.type_k))
            .collect();
        let header = format!("# config_hash={}\n# seed={}\n", self.config_hash, self.seed);
        Ok(vec![
            write_file(dir, "scm.tsv", &self.scm_tsv())?,
            write_file(
                dir,
                "contract.txt",
                &format!("{header}{}", write_contract(&self.contract, &types)?),
            )?,
            write_file(dir, "ic.tsv", &self.ic.to_tsv())?,
            write_file(dir, "summary.toml", &self.summary_toml())?,
        ])
    }
}

fn instance(config: &ExperimentConfig) -> Result<(Catalog, Vec<User>)> {
    if let Some((thetas, demands)) = config.explicit_instance() {
        let catalog =
            Catalog::from_parts(&thetas, &demands).map_err(|e| Error::Config(e.to_string()))?;
        let users = catalog
            .types()
            .iter()
            .map(|t| User::new(format!("type{}", t.k), t.theta, t.d_peak, t.d_offpeak, t.k))
            .collect::<Result<Vec<_>>>()?;
        return Ok((catalog, users));
    }
    let data = config.load_dataset()?;
    let population = config.population(&data, config.complete.solar_scale)?;
    let k = config.study.types;
    let grouping = sample_type_groupings(population.num_users(), k, 1, config.seed)?.remove(0);
    let theta_bar = config
        .complete
        .theta_bar
        .unwrap_or(config.study.theta_bar[0]);
    let thetas = spread_thetas(theta_bar, config.study.lambda_s, k)?;
    let users = population.users(&grouping, &thetas)?;
    let mean = population.type_scenarios(&grouping, k)?.mean_demands();
    Ok((Catalog::from_parts(&thetas, &mean)?, users))
}

/// Solves the complete-information problem, builds its contract and checks
/// that the decentralized outcome reaches the optimum.
pub fn run_complete_info(config: &ExperimentConfig) -> Result<CompleteReport> {
    config.validate()?;
    let params: SystemParams = config.params()?;
    let (catalog, users) = instance(config)?;
    let (optimum, classification) = solve_scm(&catalog, &params)?;
    let p_o_ref = match config.contract.p_o_ref {
        Some(p) => p,
        None => {
            let point = select_point(&price_difference_intervals(&classification, &catalog)?)?;
            required_p_o_ref(&point, &users).ceil().max(DEFAULT_P_O_REF)
        }
    };
    let contract = build_contract(&classification, &catalog, &users, p_o_ref)?;
    let ic = verify_ic(&contract, &users)?;
    let type_demands: Vec<(f64, f64)> = catalog
        .types()
        .iter()
        .map(|t| (t.d_peak, t.d_offpeak))
        .collect();
    let realized = simulate(&contract, &users, &params, Some(&type_demands))?;
    let no_storage_cost = params.no_storage_cost(catalog.total_peak(), catalog.total_offpeak());
    Ok(CompleteReport {
        config_hash: config.hash(),
        seed: config.seed,
        catalog,
        users,
        optimum,
        classification,
        contract,
        ic,
        realized,
        no_storage_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_instance_reaches_optimum() {
        let config = ExperimentConfig::from_toml(
            r#"
            [system]
            alpha = 12.0
            beta = 1.0
            gamma = 1.0
            [data]
            peak_hours = [12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23]
            [complete]
            thetas = [1.0, 4.0, 30.0]
            demands = [[3.0, 1.0], [4.0, 1.0], [2.0, 2.0]]
            "#,
        )
        .unwrap();
        let report = run_complete_info(&config).unwrap();
        assert!(report.optimality_holds(), "ratio {}", report.ratio());
        assert!(report.ic.all_passed());
        assert!(report
            .summary_toml()
            .contains("optimality_check = \"pass\""));
        assert_eq!(report.scm_tsv().lines().count(), 4);
    }

    #[test]
    fn storage_too_dear_matches_baseline() {
        let config = ExperimentConfig::from_toml(
            r#"
            [system]
            alpha = 0.01
            [complete]
            thetas = [500.0, 600.0]
            demands = [[3.0, 1.0], [4.0, 1.0]]
            "#,
        )
        .unwrap();
        let report = run_complete_info(&config).unwrap();
        assert_eq!(report.realized.total, report.no_storage_cost);
        assert_eq!(report.realized.class_counts, [0, 0, 2]);
    }

    #[test]
    fn synthetic_data_instance() {
        let config = ExperimentConfig::from_toml(
            r#"
            [system]
            alpha = 1.0
            beta = 20.0
            [data]
            demand_scale = 1000.0
            [synthetic]
            users = 8
            days = 4
            [complete]
            theta_bar = 10.0
            "#,
        )
        .unwrap();
        let report = run_complete_info(&config).unwrap();
        assert!(report.optimality_holds());
        assert!(report.ic.all_passed());
        assert_eq!(report.users.len(), 8);
    }
}
