//! Scenario files: JSON documents describing users, feedback sequence,
//! objective and simulation settings. Validated completely before any
//! computation starts.
//!
//! ```json
//! {
//!   "network": {"model": "model1", "M": 4, "snr_min_db": 0, "snr_max_db": 20},
//!   "sequence": "ascending",
//!   "objective": "proportional_fair",
//!   "seed": 7,
//!   "sim": {"resource_units": 1000000, "batches": 100},
//!   "behaviors": {"1": 0.0}
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::analytics::{Scenario, User};
use crate::channel::{build_network, db_to_linear, ChannelModel, NetworkModel, NetworkSpec};
use crate::error::{Error, Result};
use crate::optimize::Objective;
use crate::region::{order_users, SequenceStrategy};
use crate::sim::{SimConfig, TerminalBehavior};

pub const DEFAULT_RESOURCE_UNITS: u64 = 1_000_000;
pub const DEFAULT_BATCHES: u64 = 100;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub id: u32,
    #[serde(default)]
    pub mean_snr_db: Option<f64>,
    /// Linear alternative to `mean_snr_db`.
    #[serde(default)]
    pub mean_snr: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub model: NetworkModel,
    #[serde(rename = "M")]
    pub users: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SequenceEntry {
    Named(String),
    /// 1-based indices into the user list.
    Permutation(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ObjectiveEntry {
    Named(String),
    Weighted { weighted_sum: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimEntry {
    #[serde(default)]
    pub resource_units: Option<u64>,
    #[serde(default)]
    pub batches: Option<u64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub widen: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub users: Option<Vec<UserEntry>>,
    #[serde(default)]
    pub network: Option<NetworkEntry>,
    #[serde(default)]
    pub sequence: Option<SequenceEntry>,
    #[serde(default)]
    pub objective: Option<ObjectiveEntry>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sim: Option<SimEntry>,
    /// User id → override threshold in nats.
    #[serde(default)]
    pub behaviors: BTreeMap<String, f64>,
    /// Weight rays for region sweeps with more than two users.
    #[serde(default)]
    pub grid: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    WeightedSum,
    ProportionalFair,
    MaxSum,
}

/// A validated scenario file. `models`, `ids` and `weights` follow the
/// listing order of the file; `scenario` is in feedback order.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub models: Vec<ChannelModel>,
    pub ids: Vec<u32>,
    pub sequence: SequenceStrategy,
    /// Feedback order as 0-based indices into the listing.
    pub order: Vec<usize>,
    pub objective_kind: ObjectiveKind,
    /// Objective with weights in feedback order.
    pub objective: Objective,
    /// Weights in listing order.
    pub weights: Vec<f64>,
    pub scenario: Scenario,
    pub seed: u64,
    pub sim: SimConfig,
    pub grid: Option<Vec<Vec<f64>>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("malformed scenario file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn channels(&self) -> Result<(Vec<ChannelModel>, Vec<u32>)> {
        match (&self.users, &self.network) {
            (Some(_), Some(_)) => Err(invalid("give either users or network, not both")),
            (None, None) => Err(invalid("scenario needs users or network")),
            (Some(users), None) => {
                if users.is_empty() {
                    return Err(invalid("users list is empty"));
                }
                let models = users
                    .iter()
                    .map(|u| match (u.mean_snr_db, u.mean_snr) {
                        (Some(db), None) if db.is_finite() => ChannelModel::rayleigh_db(db),
                        (None, Some(lin)) if lin > 0.0 && lin.is_finite() => ChannelModel::rayleigh(lin),
                        (None, Some(lin)) => Err(invalid(format!(
                            "user {}: linear mean_snr must be positive, got {lin}",
                            u.id
                        ))),
                        _ => Err(invalid(format!(
                            "user {}: give exactly one finite mean_snr_db or mean_snr",
                            u.id
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((models, users.iter().map(|u| u.id).collect()))
            }
            (None, Some(net)) => {
                if net.users == 0 {
                    return Err(invalid("network M must be >= 1"));
                }
                if !(net.snr_min_db.is_finite() && net.snr_max_db.is_finite()) {
                    return Err(invalid("network SNR limits must be finite"));
                }
                let models = build_network(&NetworkSpec {
                    users: net.users,
                    model: net.model,
                    snr_min: db_to_linear(net.snr_min_db),
                    snr_max: db_to_linear(net.snr_max_db),
                })?;
                Ok((models, (1..=net.users as u32).collect()))
            }
        }
    }

    fn sequence(&self, users: usize) -> Result<SequenceStrategy> {
        match &self.sequence {
            None => Ok(SequenceStrategy::Given((0..users).collect())),
            Some(SequenceEntry::Named(s)) => match s.as_str() {
                "ascending" => Ok(SequenceStrategy::AscendingMeanSnr),
                "descending" => Ok(SequenceStrategy::DescendingMeanSnr),
                other => Err(invalid(format!(
                    "unknown sequence {other:?} (expected ascending, descending or a permutation)"
                ))),
            },
            Some(SequenceEntry::Permutation(p)) => {
                if p.contains(&0) {
                    return Err(Error::InvalidPermutation(format!(
                        "sequence {p:?} must use 1-based indices"
                    )));
                }
                Ok(SequenceStrategy::Given(p.iter().map(|i| i - 1).collect()))
            }
        }
    }

    fn objective(&self, users: usize) -> Result<(ObjectiveKind, Vec<f64>)> {
        match &self.objective {
            None => Ok((ObjectiveKind::MaxSum, vec![1.0; users])),
            Some(ObjectiveEntry::Named(s)) => match s.as_str() {
                "max_sum" => Ok((ObjectiveKind::MaxSum, vec![1.0; users])),
                "proportional_fair" => Ok((ObjectiveKind::ProportionalFair, vec![1.0; users])),
                other => Err(invalid(format!(
                    "unknown objective {other:?} (expected max_sum, proportional_fair or {{\"weighted_sum\": [...]}})"
                ))),
            },
            Some(ObjectiveEntry::Weighted { weighted_sum }) => {
                if weighted_sum.len() != users {
                    return Err(Error::LengthMismatch {
                        what: "weighted_sum weights",
                        expected: users,
                        actual: weighted_sum.len(),
                    });
                }
                if weighted_sum.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
                    || weighted_sum.iter().all(|w| *w == 0.0)
                {
                    return Err(Error::InvalidWeights(
                        "weights must be finite, non-negative and not all zero".into(),
                    ));
                }
                Ok((ObjectiveKind::WeightedSum, weighted_sum.clone()))
            }
        }
    }

    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let (models, ids) = self.channels()?;
        let m = models.len();
        let sequence = self.sequence(m)?;
        let order = order_users(&models, &sequence)?;
        let (objective_kind, weights) = self.objective(m)?;

        let seq_weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        let users: Vec<User> = order
            .iter()
            .map(|&i| User {
                id: ids[i],
                channel: models[i],
            })
            .collect();
        let seed = self.seed.unwrap_or(0);
        let scenario = Scenario::new(users, seq_weights.clone(), seed)?;
        let objective = match objective_kind {
            ObjectiveKind::ProportionalFair => Objective::ProportionalFair,
            _ => Objective::WeightedSum(seq_weights),
        };

        let mut behaviors = vec![TerminalBehavior::Honest; m];
        for (key, &value) in &self.behaviors {
            let id: u32 = key
                .parse()
                .map_err(|_| invalid(format!("behavior key {key:?} is not a user id")))?;
            let pos = scenario
                .users()
                .iter()
                .position(|u| u.id == id)
                .ok_or_else(|| invalid(format!("behavior for unknown user {id}")))?;
            if !(value >= 0.0) {
                return Err(invalid(format!("override threshold for user {id} must be >= 0")));
            }
            behaviors[pos] = TerminalBehavior::OverrideThreshold(value);
        }
        let sim_entry = self.sim.clone().unwrap_or(SimEntry {
            resource_units: None,
            batches: None,
            epsilon: None,
            widen: None,
        });
        let mut sim = SimConfig::new(
            sim_entry.resource_units.unwrap_or(DEFAULT_RESOURCE_UNITS),
            sim_entry.batches.unwrap_or(DEFAULT_BATCHES),
            seed,
        )
        .with_behaviors(behaviors);
        if let Some(e) = sim_entry.epsilon {
            sim.epsilon = e;
        }
        if let Some(w) = sim_entry.widen {
            sim.widen = w;
        }
        if sim.resource_units == 0 || sim.batches == 0 || sim.batches > sim.resource_units {
            return Err(invalid("sim needs resource_units >= 1 and 1 <= batches <= resource_units"));
        }

        if let Some(grid) = &self.grid {
            if grid.iter().any(|w| w.len() != m) {
                return Err(invalid(format!("every grid weight vector needs {m} entries")));
            }
        }

        Ok(ResolvedScenario {
            models,
            ids,
            sequence,
            order,
            objective_kind,
            objective,
            weights,
            scenario,
            seed,
            sim,
            grid: self.grid.clone(),
        })
    }
}

impl ResolvedScenario {
    pub fn load(path: &Path) -> Result<Self> {
        ScenarioFile::load(path)?.resolve()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ScenarioFile::from_json(text)?.resolve()
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sim.seed = seed;
        self.scenario = Scenario::new(
            self.scenario.users().to_vec(),
            self.scenario.weights().to_vec(),
            seed,
        )
        .expect("already validated");
        self
    }
}
