use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::contract::{
    build_contract, price_difference_intervals, required_p_o_ref, select_point, verify_ic,
    DEFAULT_P_O_REF,
};
use crate::data::{sample_type_groupings, spread_thetas};
use crate::error::{Error, Result};
use crate::market::simulate_scenarios;
use crate::model::{Catalog, SystemParams};
use crate::planner::plan;
use crate::scenario::Population;

use super::{mean_std, worker_pool, write_file, ExperimentConfig};

const SWEEP_HEADER: &str = "# tou-sweep v1";
const SWEEP_COLUMNS: [&str; 10] = [
    "solar_scale",
    "theta_bar",
    "groupings",
    "kappa_mean",
    "kappa_std",
    "kappa_max",
    "kappa_no_mean",
    "kappa_no_std",
    "sim_gap_max",
    "ic_failures",
];

/// One grouping at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupingRow {
    pub solar_scale: f64,
    pub theta_bar: f64,
    pub grouping: usize,
    pub boundary_type: usize,
    pub eta_b: f64,
    pub sym_b: f64,
    pub sym_c: f64,
    pub kappa: f64,
    /// Expected cost of the simulated market.
    pub simulated: f64,
    pub kappa_no: f64,
    pub ic_failures: usize,
}

impl GroupingRow {
    /// `|simulated / Sym^c − 1|`.
    pub fn sim_gap(&self) -> f64 {
        (self.simulated / self.sym_c - 1.0).abs()
    }
}

/// Aggregate over groupings at one `(solar_scale, theta_bar)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub solar_scale: f64,
    pub theta_bar: f64,
    pub groupings: usize,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    pub kappa_max: f64,
    pub kappa_no_mean: f64,
    pub kappa_no_std: f64,
    pub sim_gap_max: f64,
    pub ic_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "{SWEEP_HEADER}\n# config_hash={}\n# seed={}\n",
            self.config_hash, self.seed
        );
        out.push_str(&SWEEP_COLUMNS.join("\t"));
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.solar_scale,
                r.theta_bar,
                r.groupings,
                r.kappa_mean,
                r.kappa_std,
                r.kappa_max,
                r.kappa_no_mean,
                r.kappa_no_std,
                r.sim_gap_max,
                r.ic_failures
            );
        }
        out
    }
}

/// Reads back the table written by [`SweepTable::to_tsv`].
pub fn parse_sweep(text: &str) -> Result<SweepTable> {
    let err = |line: usize, msg: String| Error::Parse {
        path: "<sweep>".into(),
        line: line as u64,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, SWEEP_HEADER)) => {}
        _ => return Err(err(1, format!("expected {SWEEP_HEADER:?}"))),
    }
    let mut meta = |key: &str| -> Result<String> {
        let (i, l) = lines
            .next()
            .ok_or_else(|| err(0, format!("missing {key}")))?;
        l.strip_prefix(&format!("# {key}="))
            .map(str::to_owned)
            .ok_or_else(|| err(i + 1, format!("expected `# {key}=`")))
    };
    let config_hash = meta("config_hash")?;
    let seed = meta("seed")?
        .parse()
        .map_err(|e| err(3, format!("seed: {e}")))?;
    match lines.next() {
        Some((_, l)) if l.split('\t').eq(SWEEP_COLUMNS) => {}
        Some((i, _)) => return Err(err(i + 1, "unexpected column header".into())),
        None => return Err(err(4, "missing column header".into())),
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != SWEEP_COLUMNS.len() {
            return Err(err(
                i + 1,
                format!("expected {} fields, got {}", SWEEP_COLUMNS.len(), f.len()),
            ));
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse()
                .map_err(|e| err(i + 1, format!("{}: {e}", SWEEP_COLUMNS[j])))
        };
        let int = |j: usize| -> Result<usize> {
            f[j].parse()
                .map_err(|e| err(i + 1, format!("{}: {e}", SWEEP_COLUMNS[j])))
        };
        rows.push(SweepRow {
            solar_scale: num(0)?,
            theta_bar: num(1)?,
            groupings: int(2)?,
            kappa_mean: num(3)?,
            kappa_std: num(4)?,
            kappa_max: num(5)?,
            kappa_no_mean: num(6)?,
            kappa_no_std: num(7)?,
            sim_gap_max: num(8)?,
            ic_failures: int(9)?,
        });
    }
    Ok(SweepTable {
        config_hash,
        seed,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub table: SweepTable,
    pub groupings: Vec<GroupingRow>,
    pub users: usize,
    pub scenarios: usize,
    pub dropped_series: usize,
    pub timing: &'static str,
}

#[derive(Serialize)]
struct Summary<'a> {
    mode: &'a str,
    config_hash: &'a str,
    seed: u64,
    timing: &'a str,
    users: usize,
    scenarios: usize,
    dropped_series: usize,
    sweep_points: usize,
    groupings_per_point: usize,
    kappa_min: f64,
    kappa_max: f64,
    kappa_std_max: f64,
    sim_gap_max: f64,
    ic_failures: usize,
}

impl SweepReport {
    pub fn groupings_tsv(&self) -> String {
        let mut out = format!(
            "# config_hash={}\n# seed={}\n",
            self.table.config_hash, self.table.seed
        );
        out.push_str("solar_scale\ttheta_bar\tgrouping\tboundary_type\teta_b\tsym_b\tsym_c\tkappa\tsimulated\tkappa_no\tic_failures\n");
        for g in &self.groupings {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                g.solar_scale,
                g.theta_bar,
                g.grouping,
                g.boundary_type,
                g.eta_b,
                g.sym_b,
                g.sym_c,
                g.kappa,
                g.simulated,
                g.kappa_no,
                g.ic_failures
            );
        }
        out
    }

    pub fn summary_toml(&self) -> String {
        let fold = |init: f64, f: fn(f64, f64) -> f64, get: fn(&GroupingRow) -> f64| {
            self.groupings.iter().map(get).fold(init, f)
        };
        let summary = Summary {
            mode: "incomplete",
            config_hash: &self.table.config_hash,
            seed: self.table.seed,
            timing: self.timing,
            users: self.users,
            scenarios: self.scenarios,
            dropped_series: self.dropped_series,
            sweep_points: self.table.rows.len(),
            groupings_per_point: self.table.rows.first().map_or(0, |r| r.groupings),
            kappa_min: fold(f64::INFINITY, f64::min, |g| g.kappa),
            kappa_max: fold(f64::NEG_INFINITY, f64::max, |g| g.kappa),
            kappa_std_max: self
                .table
                .rows
                .iter()
                .map(|r| r.kappa_std)
                .fold(0.0, f64::max),
            sim_gap_max: fold(0.0, f64::max, GroupingRow::sim_gap),
            ic_failures: self.groupings.iter().map(|g| g.ic_failures).sum(),
        };
        toml::to_string(&summary).expect("summary serializes")
    }

    /// Writes `sweep.tsv`, `groupings.tsv` and `summary.toml`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        Ok(vec![
            write_file(dir, "sweep.tsv", &self.table.to_tsv())?,
            write_file(dir, "groupings.tsv", &self.groupings_tsv())?,
            write_file(dir, "summary.toml", &self.summary_toml())?,
        ])
    }
}

fn evaluate(
    population: &Population,
    grouping: &[usize],
    index: usize,
    theta_bar: f64,
    solar_scale: f64,
    config: &ExperimentConfig,
    params: &SystemParams,
) -> Result<GroupingRow> {
    let k = config.study.types;
    let thetas = spread_thetas(theta_bar, config.study.lambda_s, k)?;
    let scenarios = population.type_scenarios(grouping, k)?;
    let users = population.users(grouping, &thetas)?;
    let catalog = Catalog::from_parts(&thetas, &scenarios.mean_demands())?;
    let planned = plan(&scenarios, &catalog, params)?;
    let p_o_ref = match config.contract.p_o_ref {
        Some(p) => p,
        None => {
            let point = select_point(&price_difference_intervals(
                &planned.classification,
                &catalog,
            )?)?;
            required_p_o_ref(&point, &users).ceil().max(DEFAULT_P_O_REF)
        }
    };
    let contract = build_contract(&planned.classification, &catalog, &users, p_o_ref)?;
    let ic_failures = verify_ic(&contract, &users)?.failures().count();
    let sim = simulate_scenarios(
        &contract,
        &users,
        population,
        params,
        config.contract.timing,
    )?;
    Ok(GroupingRow {
        solar_scale,
        theta_bar,
        grouping: index,
        boundary_type: planned.boundary_type,
        eta_b: planned.eta_b,
        sym_b: planned.sym_b,
        sym_c: planned.sym_c,
        kappa: planned.kappa,
        simulated: sim.expected_cost,
        kappa_no: sim.kappa_no()?,
        ic_failures,
    })
}

/// Sweeps `solar_scales × theta_bar`, evaluating every sampled grouping at
/// each point. The same groupings are reused at every point.
pub fn run_incomplete_info(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let params = config.params()?;
    let data = config.load_dataset()?;
    let pool = worker_pool(config.workers)?;
    let study = &config.study;

    pool.install(|| {
        let populations = study
            .solar_scales
            .par_iter()
            .map(|&s| config.population(&data, s))
            .collect::<Result<Vec<_>>>()?;
        let num_users = populations[0].num_users();
        let groupings =
            sample_type_groupings(num_users, study.types, study.groupings, config.seed)?;

        let mut tasks = Vec::new();
        for (si, &solar) in study.solar_scales.iter().enumerate() {
            for &theta_bar in &study.theta_bar {
                for g in 0..groupings.len() {
                    tasks.push((si, solar, theta_bar, g));
                }
            }
        }
        let rows = tasks
            .par_iter()
            .map(|&(si, solar, theta_bar, g)| {
                evaluate(
                    &populations[si],
                    &groupings[g],
                    g,
                    theta_bar,
                    solar,
                    config,
                    &params,
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let table_rows = rows
            .chunks(groupings.len())
            .map(|chunk| {
                let kappas: Vec<f64> = chunk.iter().map(|r| r.kappa).collect();
                let kappa_nos: Vec<f64> = chunk.iter().map(|r| r.kappa_no).collect();
                let (kappa_mean, kappa_std) = mean_std(&kappas);
                let (kappa_no_mean, kappa_no_std) = mean_std(&kappa_nos);
                SweepRow {
                    solar_scale: chunk[0].solar_scale,
                    theta_bar: chunk[0].theta_bar,
                    groupings: chunk.len(),
                    kappa_mean,
                    kappa_std,
                    kappa_max: kappas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    kappa_no_mean,
                    kappa_no_std,
                    sim_gap_max: chunk.iter().map(GroupingRow::sim_gap).fold(0.0, f64::max),
                    ic_failures: chunk.iter().map(|r| r.ic_failures).sum(),
                }
            })
            .collect();

        Ok(SweepReport {
            table: SweepTable {
                config_hash: config.hash(),
                seed: config.seed,
                rows: table_rows,
            },
            groupings: rows,
            users: num_users,
            scenarios: populations[0].num_scenarios(),
            dropped_series: data.dropped.len(),
            timing: config.contract.timing.label(),
        })
    })
}
