//! Expected rates, access ratios and conditional rates of the switched
//! (threshold-ordered) scheduler for a fixed feedback sequence.

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, RateDistribution};
use crate::error::{Error, Result};
use crate::report::{PerformanceReport, Provenance, UserPerformance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: u32,
    pub channel: ChannelModel,
}

/// Users listed in feedback order (position 1 flags first), with the
/// per-user weights used by weighted objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    users: Vec<User>,
    weights: Vec<f64>,
    seed: u64,
}

impl Scenario {
    pub fn new(users: Vec<User>, weights: Vec<f64>, seed: u64) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidConfig("scenario needs at least one user".into()));
        }
        if weights.len() != users.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: users.len(),
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and non-negative, got {w}"
            )));
        }
        let mut ids: Vec<u32> = users.iter().map(|u| u.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("user ids must be unique".into()));
        }
        Ok(Self {
            users,
            weights,
            seed,
        })
    }

    /// Users `1..=M` with unit weights, in the given order.
    pub fn from_channels(channels: &[ChannelModel], seed: u64) -> Result<Self> {
        let users = channels
            .iter()
            .enumerate()
            .map(|(i, &channel)| User {
                id: i as u32 + 1,
                channel,
            })
            .collect();
        Self::new(users, vec![1.0; channels.len()], seed)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.users.clone(), weights, self.seed)
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn channels(&self) -> Vec<ChannelModel> {
        self.users.iter().map(|u| u.channel).collect()
    }
}

/// Per-user rate thresholds in nats/s/Hz, aligned with feedback order.
///
/// `+∞` marks a user that never flags (zero weight ahead of a
/// positive-weight user); it contributes `F(r*) = 1` to prefix products.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector(Vec<f64>);

impl ThresholdVector {
    pub const NEVER_FLAG: f64 = f64::INFINITY;

    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::Domain(format!("thresholds must be >= 0, got {r}")));
        }
        Ok(Self(rates))
    }

    pub fn from_snr(snrs: &[f64]) -> Result<Self> {
        Self::new(snrs.iter().map(|g| g.ln_1p()).collect())
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `γ*_i = e^{r*_i} − 1`.
    pub fn snr_view(&self) -> Vec<f64> {
        snr_threshold_view(self)
    }
}

pub fn snr_threshold_view(thresholds: &ThresholdVector) -> Vec<f64> {
    thresholds.0.iter().map(|r| r.exp_m1()).collect()
}

impl Serialize for ThresholdVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serialize_thresholds(&self.0, serializer)
    }
}

impl<'de> Deserialize<'de> for ThresholdVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = deserialize_thresholds(deserializer)?;
        ThresholdVector::new(raw).map_err(de::Error::custom)
    }
}

/// JSON has no infinity; never-flag thresholds are written as `"inf"`.
pub(crate) fn serialize_thresholds<S: Serializer>(
    values: &[f64],
    serializer: S,
) -> Result<S::Ok, S::Error> {
    let mut seq = serializer.serialize_seq(Some(values.len()))?;
    for v in values {
        if v.is_finite() {
            seq.serialize_element(v)?;
        } else {
            seq.serialize_element("inf")?;
        }
    }
    seq.end()
}

pub(crate) fn deserialize_thresholds<'de, D: Deserializer<'de>>(
    deserializer: D,
) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Number(f64),
        Tag(String),
    }
    Vec::<Wire>::deserialize(deserializer)?
        .into_iter()
        .map(|w| match w {
            Wire::Number(x) => Ok(x),
            Wire::Tag(s) if s == "inf" => Ok(f64::INFINITY),
            Wire::Tag(s) => Err(de::Error::custom(format!("bad threshold {s:?}"))),
        })
        .collect()
}

/// Tail integral `∫_{r*}^∞ r f_R(r) dr`.
pub fn conditional_rate<D: RateDistribution + ?Sized>(dist: &D, threshold: f64) -> Result<f64> {
    dist.conditional_rate(threshold)
}

/// Per-user analytic quantities before they are attached to user ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchedStats {
    pub rate: f64,
    pub access_ratio: f64,
    pub conditional_rate: f64,
    pub success_probability: f64,
    /// `Π_{j<i} F_j(r*_j)`: probability that user `i` gets to test its channel.
    pub opportunity: f64,
}

/// Expected rates for any family, in feedback order.
pub fn switched_stats<D: RateDistribution>(
    dists: &[D],
    thresholds: &[f64],
) -> Result<Vec<SwitchedStats>> {
    if dists.len() != thresholds.len() {
        return Err(Error::LengthMismatch {
            what: "thresholds",
            expected: dists.len(),
            actual: thresholds.len(),
        });
    }
    let mut prefix = 1.0;
    dists
        .iter()
        .zip(thresholds)
        .map(|(dist, &thr)| {
            let below = dist.rate_cdf(thr);
            let success = dist.rate_sf(thr);
            let tail = dist.conditional_rate(thr)?;
            let stats = SwitchedStats {
                rate: tail * prefix,
                access_ratio: success * prefix,
                conditional_rate: tail,
                success_probability: success,
                opportunity: prefix,
            };
            prefix *= below;
            Ok(stats)
        })
        .collect()
}

pub fn expected_rates(scenario: &Scenario, thresholds: &ThresholdVector) -> Result<PerformanceReport> {
    let stats = switched_stats(&scenario.channels(), thresholds.rates())?;
    Ok(report_from_stats(scenario, &stats))
}

pub(crate) fn report_from_stats(scenario: &Scenario, stats: &[SwitchedStats]) -> PerformanceReport {
    let users = scenario
        .users()
        .iter()
        .zip(stats)
        .enumerate()
        .map(|(i, (user, s))| UserPerformance {
            user_id: user.id,
            position: i + 1,
            rate: s.rate,
            access_ratio: s.access_ratio,
            conditional_rate: Some(s.conditional_rate),
            success_probability: Some(s.success_probability),
            ..UserPerformance::default()
        })
        .collect();
    PerformanceReport::new(users, scenario.weights(), Provenance::Analytic)
}
