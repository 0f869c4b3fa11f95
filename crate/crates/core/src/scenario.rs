//! Finite-support demand distributions over storage types.
//!
//! Persisted as line-oriented text:
//!
//! ```text
//! tou-scenario-set v1
//! types 2
//! scenarios 2
//! 0.5 1.2 3.4 0.7 2.0
//! 0.5 1.1 3.0 0.9 2.5
//! ```
//!
//! Each scenario line is the weight followed by `(peak, off-peak)` MWh per
//! type. Floats use the shortest representation that round-trips.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{User, UserId};

pub const SCENARIO_HEADER: &str = "tou-scenario-set v1";

/// Weights must sum to one within this absolute tolerance.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub weight: f64,
    /// `(D^{k,p}, D^{k,o})` for every type `k`.
    pub demands: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    num_types: usize,
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(num_types: usize, scenarios: Vec<Scenario>) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::Scenario("no storage types".into()));
        }
        if scenarios.is_empty() {
            return Err(Error::Scenario("no scenarios".into()));
        }
        let mut total = 0.0;
        for (i, s) in scenarios.iter().enumerate() {
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(Error::Scenario(format!(
                    "scenario {i}: weight {} is negative",
                    s.weight
                )));
            }
            if s.demands.len() != num_types {
                return Err(Error::Scenario(format!(
                    "scenario {i}: {} demand pairs for {num_types} types",
                    s.demands.len()
                )));
            }
            if s.demands
                .iter()
                .any(|&(p, o)| !(p.is_finite() && o.is_finite() && p >= 0.0 && o >= 0.0))
            {
                return Err(Error::Scenario(format!(
                    "scenario {i}: demands must be finite and non-negative"
                )));
            }
            total += s.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Scenario(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(ScenarioSet {
            num_types,
            scenarios,
        })
    }

    /// Equally weighted scenarios, one per demand vector.
    pub fn uniform(num_types: usize, demands: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let n = demands.len();
        if n == 0 {
            return Err(Error::Scenario("no scenarios".into()));
        }
        let weight = 1.0 / n as f64;
        let mut scenarios: Vec<Scenario> = demands
            .into_iter()
            .map(|demands| Scenario { weight, demands })
            .collect();
        // absorb rounding so the weights sum to one
        let drift = 1.0 - scenarios.iter().map(|s| s.weight).sum::<f64>();
        scenarios[n - 1].weight += drift;
        ScenarioSet::new(num_types, scenarios)
    }

    pub fn single(demands: Vec<(f64, f64)>) -> Result<Self> {
        let k = demands.len();
        ScenarioSet::new(
            k,
            vec![Scenario {
                weight: 1.0,
                demands,
            }],
        )
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Probability-weighted mean demand per type.
    pub fn mean_demands(&self) -> Vec<(f64, f64)> {
        let mut mean = vec![(0.0, 0.0); self.num_types];
        for s in &self.scenarios {
            for (m, &(p, o)) in mean.iter_mut().zip(&s.demands) {
                m.0 += s.weight * p;
                m.1 += s.weight * o;
            }
        }
        mean
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SCENARIO_HEADER}");
        let _ = writeln!(out, "types {}", self.num_types);
        let _ = writeln!(out, "scenarios {}", self.scenarios.len());
        for s in &self.scenarios {
            let _ = write!(out, "{}", s.weight);
            for (p, o) in &s.demands {
                let _ = write!(out, " {p} {o}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: "<scenario-set>".into(),
            line: line as u64,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == SCENARIO_HEADER => {}
            Some((i, l)) => return Err(err(i + 1, format!("unexpected header {l:?}"))),
            None => return Err(err(1, "empty input".into())),
        }
        let mut count = |key: &str| -> Result<usize> {
            let (i, l) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing `{key}` line")))?;
            l.trim()
                .strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| err(i + 1, format!("expected `{key} <n>`")))
        };
        let num_types = count("types")?;
        let expected = count("scenarios")?;
        let mut scenarios = Vec::with_capacity(expected);
        for (i, l) in lines {
            let values = l
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| err(i + 1, format!("{v:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != 1 + 2 * num_types {
                return Err(err(
                    i + 1,
                    format!(
                        "expected {} values, got {}",
                        1 + 2 * num_types,
                        values.len()
                    ),
                ));
            }
            let demands = values[1..].chunks_exact(2).map(|c| (c[0], c[1])).collect();
            scenarios.push(Scenario {
                weight: values[0],
                demands,
            });
        }
        if scenarios.len() != expected {
            return Err(err(
                0,
                format!(
                    "header announces {expected} scenarios, found {}",
                    scenarios.len()
                ),
            ));
        }
        ScenarioSet::new(num_types, scenarios)
    }
}

/// Per-user demand over a set of weighted days, before users are grouped
/// into storage types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    ids: Vec<UserId>,
    weights: Vec<f64>,
    /// `demands[s][u]` is user `u`'s `(peak, off-peak)` MWh in scenario `s`.
    demands: Vec<Vec<(f64, f64)>>,
}

impl Population {
    pub fn new(ids: Vec<UserId>, weights: Vec<f64>, demands: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Scenario("no users".into()));
        }
        if weights.is_empty() || weights.len() != demands.len() {
            return Err(Error::Scenario(format!(
                "{} weights for {} scenarios",
                weights.len(),
                demands.len()
            )));
        }
        // reuse the scenario-set checks with users standing in for types
        let scenarios = weights
            .iter()
            .zip(&demands)
            .map(|(&weight, d)| Scenario {
                weight,
                demands: d.clone(),
            })
            .collect();
        ScenarioSet::new(ids.len(), scenarios)?;
        Ok(Population {
            ids,
            weights,
            demands,
        })
    }

    /// Equal weights over the given days.
    pub fn uniform(ids: Vec<UserId>, demands: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let set = ScenarioSet::uniform(ids.len(), demands)?;
        let (weights, demands) = set
            .scenarios
            .into_iter()
            .map(|s| (s.weight, s.demands))
            .unzip();
        Population::new(ids, weights, demands)
    }

    pub fn ids(&self) -> &[UserId] {
        &self.ids
    }

    pub fn num_users(&self) -> usize {
        self.ids.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scenario(&self, s: usize) -> &[(f64, f64)] {
        &self.demands[s]
    }

    pub fn mean_demands(&self) -> Vec<(f64, f64)> {
        let mut mean = vec![(0.0, 0.0); self.ids.len()];
        for (w, day) in self.weights.iter().zip(&self.demands) {
            for (m, &(p, o)) in mean.iter_mut().zip(day) {
                m.0 += w * p;
                m.1 += w * o;
            }
        }
        mean
    }

    /// Users at their mean demand, with `assignment[u]` as type and the
    /// matching entry of `thetas` as storage cost.
    pub fn users(&self, assignment: &[usize], thetas: &[f64]) -> Result<Vec<User>> {
        self.check_assignment(assignment, thetas.len())?;
        self.ids
            .iter()
            .zip(self.mean_demands())
            .zip(assignment)
            .map(|((id, (p, o)), &k)| User::new(id.clone(), thetas[k], p, o, k))
            .collect()
    }

    /// Per-type aggregate demands in every scenario.
    pub fn type_scenarios(&self, assignment: &[usize], num_types: usize) -> Result<ScenarioSet> {
        self.check_assignment(assignment, num_types)?;
        let scenarios = self
            .weights
            .iter()
            .zip(&self.demands)
            .map(|(&weight, day)| {
                let mut demands = vec![(0.0, 0.0); num_types];
                for (&(p, o), &k) in day.iter().zip(assignment) {
                    demands[k].0 += p;
                    demands[k].1 += o;
                }
                Scenario { weight, demands }
            })
            .collect();
        ScenarioSet::new(num_types, scenarios)
    }

    fn check_assignment(&self, assignment: &[usize], num_types: usize) -> Result<()> {
        if assignment.len() != self.ids.len() {
            return Err(Error::Scenario(format!(
                "assignment covers {} of {} users",
                assignment.len(),
                self.ids.len()
            )));
        }
        if let Some(k) = assignment.iter().find(|&&k| k >= num_types) {
            return Err(Error::Scenario(format!(
                "type {k} outside {num_types} types"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validation() {
        assert!(ScenarioSet::new(1, vec![]).is_err());
        let s = |w: f64| Scenario {
            weight: w,
            demands: vec![(1.0, 1.0)],
        };
        assert!(ScenarioSet::new(1, vec![s(0.5), s(0.4)]).is_err());
        assert!(ScenarioSet::new(1, vec![s(1.5), s(-0.5)]).is_err());
        assert!(ScenarioSet::new(2, vec![s(1.0)]).is_err());
        assert!(ScenarioSet::new(1, vec![s(0.25), s(0.75)]).is_ok());
    }

    #[test]
    fn uniform_weights_sum_to_one() {
        let set = ScenarioSet::uniform(1, vec![vec![(1.0, 2.0)]; 361]).unwrap();
        let total: f64 = set.scenarios().iter().map(|s| s.weight).sum();
        assert!((total - 1.0).abs() <= WEIGHT_TOLERANCE);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(ScenarioSet::from_text("nope\n").is_err());
        let text = format!("{SCENARIO_HEADER}\ntypes 1\nscenarios 2\n1 1 1\n");
        assert!(ScenarioSet::from_text(&text).is_err());
        let text = format!("{SCENARIO_HEADER}\ntypes 1\nscenarios 1\n1 1\n");
        assert!(ScenarioSet::from_text(&text).is_err());
    }

    #[test]
    fn population_aggregates_by_type() {
        let ids = vec![UserId::new("a"), UserId::new("b"), UserId::new("c")];
        let pop = Population::uniform(
            ids,
            vec![
                vec![(1.0, 2.0), (3.0, 4.0), (5.0, 6.0)],
                vec![(3.0, 0.0), (1.0, 0.0), (0.0, 2.0)],
            ],
        )
        .unwrap();
        let set = pop.type_scenarios(&[0, 1, 0], 2).unwrap();
        assert_eq!(set.scenarios()[0].demands, vec![(6.0, 8.0), (3.0, 4.0)]);
        assert_eq!(set.scenarios()[1].demands, vec![(3.0, 2.0), (1.0, 0.0)]);
        let users = pop.users(&[0, 1, 0], &[7.0, 9.0]).unwrap();
        assert_eq!(
            (users[1].theta, users[1].d_peak, users[1].d_offpeak),
            (9.0, 2.0, 2.0)
        );
        assert!(pop.type_scenarios(&[0, 2, 0], 2).is_err());
        assert!(pop.users(&[0, 1], &[7.0, 9.0]).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(rows in proptest::collection::vec(proptest::collection::vec((0.0..1e3f64, 0.0..1e3f64), 3), 1..20)) {
            let set = ScenarioSet::uniform(3, rows).unwrap();
            let back = ScenarioSet::from_text(&set.to_text()).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_text(), set.to_text());
        }
    }
}
