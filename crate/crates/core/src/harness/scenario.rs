use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::arbitration::{derive_posteriors, BeliefModel, GenerativeModel};
use crate::market::EntryMode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub b: f64,
    pub f: f64,
    #[serde(default)]
    pub entry_mode: EntryMode,
    /// Trading passes over the agent list in multiple-entry mode.
    #[serde(default = "default_passes")]
    pub passes: usize,
}

fn default_passes() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub budget: f64,
    /// Expected value of one share, i.e. the expected outcome.
    pub valuation: f64,
    #[serde(default)]
    pub is_arbiter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefSpec {
    Generative(GenerativeModel),
    /// `mu` defaults to the market's closing price.
    Explicit {
        mu0: f64,
        mu1: f64,
        #[serde(default)]
        mu: Option<f64>,
    },
}

impl BeliefSpec {
    pub fn resolve(&self, closing_price: f64) -> Result<BeliefModel> {
        match self {
            BeliefSpec::Generative(g) => derive_posteriors(g),
            BeliefSpec::Explicit { mu0, mu1, mu } => {
                let mu = mu.unwrap_or(closing_price);
                BeliefModel::new(mu, *mu1, *mu0).map_err(|e| {
                    Error::Infeasible(format!("belief model with prior {mu} is invalid: {e}"))
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    /// Smallest scale guaranteeing truthfulness for the largest budget.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    #[default]
    Listed,
    /// Reshuffled from the seed on every pass.
    Shuffled,
}

/// A complete, reproducible experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub market: MarketParams,
    pub agents: Vec<AgentSpec>,
    /// Number of arbiters `m`. Agents flagged `is_arbiter` take the first
    /// seats; any remaining seats go to arbiters with no market position.
    pub arbiters: usize,
    pub beliefs: BeliefSpec,
    #[serde(default)]
    pub k: KPolicy,
    #[serde(default)]
    pub arrival: Arrival,
    #[serde(default)]
    pub seed: u64,
    /// Fixed arbiter signals; drawn from the belief model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signals: Option<Vec<u8>>,
    #[serde(default = "default_mc_samples")]
    pub monte_carlo_samples: usize,
}

fn default_mc_samples() -> usize {
    20_000
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arbiters < 2 {
            return Err(Error::invalid("arbiters", format!("need at least two, got {}", self.arbiters)));
        }
        let seated = self.agents.iter().filter(|a| a.is_arbiter).count();
        if seated > self.arbiters {
            return Err(Error::invalid(
                "agents",
                format!("{seated} agents flagged as arbiters but only {} seats", self.arbiters),
            ));
        }
        let mut seen = HashSet::new();
        for a in &self.agents {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::DuplicateAgent(a.id.clone()));
            }
            if !(0.0..=1.0).contains(&a.valuation) {
                return Err(Error::invalid("valuation", format!("agent `{}`: {}", a.id, a.valuation)));
            }
            if !(a.budget >= 0.0 && a.budget.is_finite()) {
                return Err(Error::invalid("B", format!("agent `{}`: {}", a.id, a.budget)));
            }
        }
        if let Some(signals) = &self.signals {
            if signals.len() != self.arbiters || signals.iter().any(|&s| s > 1) {
                return Err(Error::invalid("signals", "need one 0/1 signal per arbiter"));
            }
        }
        if let KPolicy::Fixed(k) = self.k {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::invalid("k", format!("must be non-negative, got {k}")));
            }
        }
        if self.market.entry_mode == EntryMode::Multiple && self.market.passes == 0 {
            return Err(Error::invalid("passes", "need at least one trading pass"));
        }
        if self.monte_carlo_samples < 2 {
            return Err(Error::invalid("monte_carlo_samples", "need at least two"));
        }
        Ok(())
    }

    /// Largest budget of any agent, the `B` in every incentive bound.
    pub fn max_budget(&self) -> f64 {
        self.agents.iter().map(|a| a.budget).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_document_with_defaults() {
        let s = Scenario::from_json(
            r#"{
                "market": {"b": 100, "f": 0.05},
                "agents": [{"id": "a", "budget": 10, "valuation": 0.7, "is_arbiter": true}],
                "arbiters": 3,
                "beliefs": {"explicit": {"mu0": 0.1, "mu1": 0.9}}
            }"#,
        )
        .unwrap();
        assert_eq!(s.market.entry_mode, EntryMode::Single);
        assert_eq!(s.k, KPolicy::Auto);
        assert_eq!(s.arrival, Arrival::Listed);
        assert_eq!(s.monte_carlo_samples, 20_000);
    }

    #[test]
    fn parses_fixed_k_and_generative_beliefs() {
        let s = Scenario::from_json(
            r#"{
                "market": {"b": 100, "f": 0.05, "entry_mode": "multiple", "passes": 2},
                "agents": [],
                "arbiters": 2,
                "beliefs": {"generative": {"p_event": 0.5, "p_signal_given_event": 0.9, "p_signal_given_no_event": 0.1}},
                "k": {"fixed": 3.5},
                "arrival": "shuffled",
                "seed": 9
            }"#,
        )
        .unwrap();
        assert_eq!(s.k, KPolicy::Fixed(3.5));
        assert!(matches!(s.beliefs, BeliefSpec::Generative(_)));
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let base = r#"{
            "market": {"b": 100, "f": 0.05},
            "agents": [AGENTS],
            "arbiters": ARB,
            "beliefs": {"explicit": {"mu0": 0.1, "mu1": 0.9}}
        }"#;
        let make = |agents: &str, arb: &str| base.replace("AGENTS", agents).replace("ARB", arb);
        assert!(Scenario::from_json(&make("", "1")).is_err());
        let two_arbiters = r#"{"id":"a","budget":1,"valuation":0.5,"is_arbiter":true},
                              {"id":"b","budget":1,"valuation":0.5,"is_arbiter":true}"#;
        assert!(Scenario::from_json(&make(two_arbiters, "2")).is_ok());
        let dup = r#"{"id":"a","budget":1,"valuation":0.5},{"id":"a","budget":1,"valuation":0.5}"#;
        assert!(Scenario::from_json(&make(dup, "2")).is_err());
        let bad_val = r#"{"id":"a","budget":1,"valuation":1.5}"#;
        assert!(Scenario::from_json(&make(bad_val, "2")).is_err());
    }

    #[test]
    fn closing_price_outside_posteriors_is_infeasible() {
        let spec = BeliefSpec::Explicit {
            mu0: 0.1,
            mu1: 0.9,
            mu: None,
        };
        assert!(spec.resolve(0.5).is_ok());
        assert!(matches!(spec.resolve(0.95), Err(Error::Infeasible(_))));
    }
}
