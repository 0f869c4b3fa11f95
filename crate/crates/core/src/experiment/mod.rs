//! End-to-end study runs driven by a TOML config.

mod complete;
mod incomplete;

pub use complete::{run_complete_info, CompleteReport};
pub use incomplete::{
    parse_sweep, run_incomplete_info, GroupingRow, SweepReport, SweepRow, SweepTable,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    build_population, ingest_csv, ingest_reader, write_synthetic_csv, HourlyDataset,
    NetLoadOptions, PeakWindow, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::market::Timing;
use crate::model::SystemParams;
use crate::scenario::Population;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub system: SystemConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub contract: ContractConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub complete: CompleteConfig,
}

fn default_seed() -> u64 {
    1
}

/// Supply-cost coefficients; period lengths come from the peak window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub peak_hours: Vec<u32>,
    pub curtail: bool,
    pub demand_scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            peak_hours: PeakWindow::default().hours(),
            curtail: true,
            demand_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractConfig {
    /// Reference off-peak price. When absent, the smallest value keeping
    /// every off-peak price non-negative is used, floored at the default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_o_ref: Option<f64>,
    pub timing: Timing,
}

impl Default for ContractConfig {
    fn default() -> Self {
        ContractConfig {
            p_o_ref: None,
            timing: Timing::PerScenario,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub types: usize,
    pub lambda_s: f64,
    pub theta_bar: Vec<f64>,
    pub solar_scales: Vec<f64>,
    pub groupings: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            types: 4,
            lambda_s: 1.0 / 3.0,
            theta_bar: vec![2.0, 15.0, 30.0, 50.0, 70.0, 90.0, 110.0, 130.0],
            solar_scales: vec![0.0, 1.0, 2.0],
            groupings: 100,
        }
    }
}

/// Complete-information instance: either explicit per-type `thetas` and
/// `demands`, or the data collapsed to mean demands under one grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompleteConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demands: Option<Vec<[f64; 2]>>,
    /// Mean storage cost when thetas come from the spread formula; defaults
    /// to the first sweep value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_bar: Option<f64>,
    pub solar_scale: f64,
}

impl Default for CompleteConfig {
    fn default() -> Self {
        CompleteConfig {
            thetas: None,
            demands: None,
            theta_bar: None,
            solar_scale: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params().map_err(|e| Error::Config(e.to_string()))?;
        let s = &self.study;
        if s.types == 0 {
            return Err(Error::Config("study.types must be at least 1".into()));
        }
        if s.groupings == 0 {
            return Err(Error::Config("study.groupings must be at least 1".into()));
        }
        if s.theta_bar.is_empty() || s.theta_bar.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config(
                "study.theta_bar must list positive costs".into(),
            ));
        }
        if s.solar_scales.is_empty() || s.solar_scales.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config(
                "study.solar_scales must list non-negative factors".into(),
            ));
        }
        crate::data::spread_thetas(s.theta_bar[0], s.lambda_s, s.types)?;
        if !(self.data.demand_scale.is_finite() && self.data.demand_scale > 0.0) {
            return Err(Error::Config("data.demand_scale must be positive".into()));
        }
        if let Some(p) = self.contract.p_o_ref {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Config(format!(
                    "contract.p_o_ref must be non-negative, got {p}"
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let c = &self.complete;
        match (&c.thetas, &c.demands) {
            (Some(t), Some(d)) if t.len() != d.len() || t.is_empty() => {
                return Err(Error::Config(format!(
                    "complete.thetas has {} entries but complete.demands has {}",
                    t.len(),
                    d.len()
                )))
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Config(
                    "complete.thetas and complete.demands go together".into(),
                ))
            }
            _ => {}
        }
        if !(c.solar_scale.is_finite() && c.solar_scale >= 0.0) {
            return Err(Error::Config(
                "complete.solar_scale must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<PeakWindow> {
        PeakWindow::new(&self.data.peak_hours)
    }

    pub fn params(&self) -> Result<SystemParams> {
        let w = self.window()?;
        SystemParams::new(
            self.system.alpha,
            self.system.beta,
            self.system.gamma,
            w.hours_peak(),
            w.hours_offpeak(),
        )
    }

    pub fn net_load_options(&self, solar_scale: f64) -> Result<NetLoadOptions> {
        Ok(NetLoadOptions {
            window: self.window()?,
            solar_scale,
            curtail: self.data.curtail,
            demand_scale: self.data.demand_scale,
        })
    }

    /// SHA-256 over the canonical TOML form of the config. The worker count
    /// does not affect results and is left out.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(&ExperimentConfig {
            workers: None,
            ..self.clone()
        })
        .expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Reads `data.path`, or generates the `[synthetic]` data in memory.
    pub fn load_dataset(&self) -> Result<HourlyDataset> {
        match (&self.data.path, &self.synthetic) {
            (Some(path), _) => ingest_csv(path),
            (None, Some(synth)) => {
                let mut buf = Vec::new();
                write_synthetic_csv(synth, &mut buf)?;
                ingest_reader(buf.as_slice(), "<synthetic>")
            }
            (None, None) => Err(Error::Config(
                "no data: set data.path, pass --data, or add a [synthetic] table".into(),
            )),
        }
    }

    pub fn population(&self, data: &HourlyDataset, solar_scale: f64) -> Result<Population> {
        build_population(data, &self.net_load_options(solar_scale)?)
    }

    /// Explicit complete-information instance, if configured.
    pub fn explicit_instance(&self) -> Option<(Vec<f64>, Vec<(f64, f64)>)> {
        let c = &self.complete;
        Some((
            c.thetas.clone()?,
            c.demands.as_ref()?.iter().map(|d| (d[0], d[1])).collect(),
        ))
    }
}

/// Bounded pool for sweep points.
pub(crate) fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [system]
        alpha = 1.0

        [synthetic]
        users = 4
        days = 3
    "#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.params().unwrap().hours_peak, 7);
        assert_eq!(c.study.types, 4);
        assert_eq!(c.contract.timing, Timing::PerScenario);
        assert_eq!(c.load_dataset().unwrap().users.len(), 4);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.workers = Some(7);
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for bad in [
            "[system]\nalpha = 0.0\n",
            "[system]\nalpha = 1.0\n[data]\npeak_hours = []\n",
            "[system]\nalpha = 1.0\n[study]\nlambda_s = 0.9\n",
            "[system]\nalpha = 1.0\n[study]\ngroupings = 0\n",
            "[system]\nalpha = 1.0\n[complete]\nthetas = [1.0]\n",
            "[system]\nalpha = 1.0\nbogus = 3\n",
            "[system]\nalpha = 1.0\n[contract]\ntiming = \"sometimes\"\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let back = ExperimentConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn mean_and_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
