//! Monte Carlo simulation of the ordered flag protocol.
//!
//! Each resource unit draws an independent rate for every user. Users test
//! their rate against their threshold in feedback order and the first one
//! that passes is served. If nobody passes the unit is idle and carries
//! zero rate.
//!
//! Units are split into batches that run in parallel. Every (batch, user)
//! pair owns its own ChaCha stream, and batch results are reduced in batch
//! order, so output does not depend on the thread count.

pub mod monitor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{Scenario, ThresholdVector};
use crate::error::{Error, Result};
use crate::metrics::Unit;
use crate::report::{PerformanceReport, Provenance, UserPerformance};

pub use monitor::{detect_misbehavior, MonitorState, MonitorStatus, MonitorVerdict, OpportunityStats};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_WIDEN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalBehavior {
    #[default]
    Honest,
    /// Flags against this rate instead of the threshold it reported.
    OverrideThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub resource_units: u64,
    pub batches: u64,
    pub seed: u64,
    /// One entry per user in feedback order; empty means all honest.
    #[serde(default)]
    pub behaviors: Vec<TerminalBehavior>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_widen")]
    pub widen: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_widen() -> f64 {
    DEFAULT_WIDEN
}

impl SimConfig {
    pub fn new(resource_units: u64, batches: u64, seed: u64) -> Self {
        Self {
            resource_units,
            batches,
            seed,
            behaviors: Vec::new(),
            epsilon: DEFAULT_EPSILON,
            widen: DEFAULT_WIDEN,
        }
    }

    pub fn with_behaviors(mut self, behaviors: Vec<TerminalBehavior>) -> Self {
        self.behaviors = behaviors;
        self
    }

    fn validate(&self, users: usize) -> Result<()> {
        if self.resource_units == 0 {
            return Err(Error::InvalidConfig("resource_units must be >= 1".into()));
        }
        if self.batches == 0 || self.batches > self.resource_units {
            return Err(Error::InvalidConfig(format!(
                "batches must be in 1..=resource_units, got {}",
                self.batches
            )));
        }
        if !self.behaviors.is_empty() && self.behaviors.len() != users {
            return Err(Error::LengthMismatch {
                what: "behaviors",
                expected: users,
                actual: self.behaviors.len(),
            });
        }
        for b in &self.behaviors {
            if let TerminalBehavior::OverrideThreshold(t) = b {
                if !(*t >= 0.0) {
                    return Err(Error::InvalidConfig(format!("override threshold must be >= 0, got {t}")));
                }
            }
        }
        if !(self.epsilon >= 0.0 && self.widen >= 0.0) {
            return Err(Error::InvalidConfig("epsilon and widen must be >= 0".into()));
        }
        if users >= 1 << 20 {
            return Err(Error::InvalidConfig("too many users for the RNG stream layout".into()));
        }
        Ok(())
    }
}

/// Protocol-level counters. The integer counts satisfy
/// `Σ wins + idle_units = units` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStats {
    pub flags_per_unit: f64,
    /// Mini-slot index of the winning flag, averaged over non-idle units.
    pub mean_flag_position: Option<f64>,
    pub idle_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_fraction_se: Option<f64>,
    pub units: u64,
    pub idle_units: u64,
    pub wins: Vec<u64>,
    pub flag_position_sum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLoadSummary {
    pub flags_per_unit: f64,
    pub mean_flag_position: Option<f64>,
    /// Messages per unit a full-feedback scheduler needs (one per user).
    pub full_feedback_messages: usize,
    pub ratio: f64,
}

pub fn feedback_load_comparison(stats: &FeedbackStats, users: usize) -> FeedbackLoadSummary {
    FeedbackLoadSummary {
        flags_per_unit: stats.flags_per_unit,
        mean_flag_position: stats.mean_flag_position,
        full_feedback_messages: users,
        ratio: stats.flags_per_unit / users as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub report: PerformanceReport,
    pub feedback: FeedbackStats,
    pub monitor: MonitorState,
}

/// JSON layout of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub report: PerformanceReport,
    pub feedback: FeedbackStats,
    pub monitor: Vec<MonitorVerdict>,
}

impl SimOutcome {
    pub fn verdicts(&self) -> Vec<MonitorVerdict> {
        detect_misbehavior(&self.monitor, self.report.users.len())
    }

    pub fn to_output(&self, unit: Unit) -> SimOutput {
        SimOutput {
            report: self.report.in_unit(unit),
            feedback: self.feedback.clone(),
            monitor: self.verdicts(),
        }
    }
}

struct BatchTally {
    units: u64,
    idle: u64,
    position_sum: u64,
    rate_sum: Vec<f64>,
    wins: Vec<u64>,
    monitor: MonitorState,
}

fn stream_id(batch: u64, user: usize) -> u64 {
    (batch << 20) | user as u64
}

fn run_batch(
    scenario: &Scenario,
    reported: &[f64],
    flag_at: &[f64],
    config: &SimConfig,
    batch: u64,
    units: u64,
) -> BatchTally {
    let m = scenario.len();
    let channels = scenario.channels();
    let mut rngs: Vec<ChaCha8Rng> = (0..m)
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(stream_id(batch, u));
            rng
        })
        .collect();
    let ids = scenario.users().iter().map(|u| u.id).collect();
    let mut tally = BatchTally {
        units,
        idle: 0,
        position_sum: 0,
        rate_sum: vec![0.0; m],
        wins: vec![0; m],
        monitor: MonitorState::new(ids, reported.to_vec(), config.epsilon, config.widen),
    };
    let mut rates = vec![0.0; m];
    for _ in 0..units {
        for (r, (ch, rng)) in rates.iter_mut().zip(channels.iter().zip(rngs.iter_mut())) {
            *r = ch.sample_rate(rng);
        }
        let mut winner = None;
        let mut honest_path = true;
        // The omniscient condition keeps going past the winner when the
        // winner's true rate was below what it reported.
        for i in 0..m {
            if winner.is_some() && !honest_path {
                break;
            }
            let flags = rates[i] >= flag_at[i];
            if honest_path {
                tally.monitor.omniscient[i].record(flags, rates[i]);
            }
            if winner.is_none() {
                tally.monitor.observed[i].record(flags, rates[i]);
                if flags {
                    winner = Some(i);
                }
            }
            honest_path &= rates[i] < reported[i];
        }
        match winner {
            Some(i) => {
                tally.wins[i] += 1;
                tally.rate_sum[i] += rates[i];
                tally.position_sum += i as u64 + 1;
            }
            None => tally.idle += 1,
        }
    }
    tally
}

/// Runs `config.resource_units` units in `config.batches` batches.
/// Thresholds are rate thresholds in feedback order; they are the reported
/// thresholds, which overriding users ignore when deciding to flag.
pub fn simulate(scenario: &Scenario, thresholds: &ThresholdVector, config: &SimConfig) -> Result<SimOutcome> {
    let m = scenario.len();
    if thresholds.len() != m {
        return Err(Error::LengthMismatch {
            what: "thresholds",
            expected: m,
            actual: thresholds.len(),
        });
    }
    config.validate(m)?;
    let reported = thresholds.rates().to_vec();
    let flag_at: Vec<f64> = (0..m)
        .map(|i| match config.behaviors.get(i).copied().unwrap_or_default() {
            TerminalBehavior::Honest => reported[i],
            TerminalBehavior::OverrideThreshold(t) => t,
        })
        .collect();
    let base = config.resource_units / config.batches;
    let extra = config.resource_units % config.batches;
    let tallies: Vec<BatchTally> = (0..config.batches)
        .into_par_iter()
        .map(|b| {
            let units = base + u64::from(b < extra);
            run_batch(scenario, &reported, &flag_at, config, b, units)
        })
        .collect();
    Ok(reduce(scenario, tallies))
}

/// Standard error of the mean of batch means, `None` with a single batch.
fn batch_se(means: &[f64]) -> Option<f64> {
    let b = means.len();
    if b < 2 {
        return None;
    }
    let mean = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    Some((var / b as f64).sqrt())
}

fn reduce(scenario: &Scenario, tallies: Vec<BatchTally>) -> SimOutcome {
    let m = scenario.len();
    let mut iter = tallies.iter();
    let first = iter.next().expect("at least one batch");
    let mut monitor = first.monitor.clone();
    for t in iter {
        monitor.merge(&t.monitor);
    }
    let units: u64 = tallies.iter().map(|t| t.units).sum();
    let idle: u64 = tallies.iter().map(|t| t.idle).sum();
    let position_sum: u64 = tallies.iter().map(|t| t.position_sum).sum();
    let n = units as f64;

    let users = (0..m)
        .map(|i| {
            let rate_sum: f64 = tallies.iter().map(|t| t.rate_sum[i]).sum();
            let wins: u64 = tallies.iter().map(|t| t.wins[i]).sum();
            let rate_means: Vec<f64> = tallies.iter().map(|t| t.rate_sum[i] / t.units as f64).collect();
            let win_means: Vec<f64> = tallies.iter().map(|t| t.wins[i] as f64 / t.units as f64).collect();
            let obs = &monitor.observed[i];
            let k = obs.opportunities as f64;
            let p = obs.success_ratio();
            let c = obs.conditional_rate();
            UserPerformance {
                user_id: scenario.users()[i].id,
                position: i + 1,
                rate: rate_sum / n,
                access_ratio: wins as f64 / n,
                conditional_rate: c,
                success_probability: p,
                rate_se: batch_se(&rate_means),
                access_ratio_se: batch_se(&win_means),
                conditional_rate_se: c.filter(|_| k > 1.0).map(|c| ((obs.rate_sq_sum / k - c * c).max(0.0) / k).sqrt()),
                success_probability_se: p.filter(|_| k > 1.0).map(|p| (p * (1.0 - p) / k).sqrt()),
            }
        })
        .collect();
    let mut report = PerformanceReport::new(users, scenario.weights(), Provenance::MonteCarlo);
    let sum_means: Vec<f64> = tallies
        .iter()
        .map(|t| t.rate_sum.iter().sum::<f64>() / t.units as f64)
        .collect();
    report.sum_rate_se = batch_se(&sum_means);

    let idle_means: Vec<f64> = tallies.iter().map(|t| t.idle as f64 / t.units as f64).collect();
    let flagged = units - idle;
    let feedback = FeedbackStats {
        flags_per_unit: flagged as f64 / n,
        mean_flag_position: (flagged > 0).then(|| position_sum as f64 / flagged as f64),
        idle_fraction: idle as f64 / n,
        idle_fraction_se: batch_se(&idle_means),
        units,
        idle_units: idle,
        wins: (0..m).map(|i| tallies.iter().map(|t| t.wins[i]).sum()).collect(),
        flag_position_sum: position_sum,
    };
    SimOutcome {
        report,
        feedback,
        monitor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::expected_rates;
    use crate::channel::ChannelModel;
    use crate::optimize::{optimize_pf, optimize_weighted_sum, rayleigh_max_sum_iid};

    fn scenario(snrs: &[f64]) -> Scenario {
        let ch: Vec<_> = snrs.iter().map(|&g| ChannelModel::rayleigh(g).unwrap()).collect();
        Scenario::from_channels(&ch, 5).unwrap()
    }

    #[test]
    fn single_user_is_always_served() {
        let s = scenario(&[3.0]);
        let out = simulate(&s, &ThresholdVector::new(vec![0.0]).unwrap(), &SimConfig::new(5000, 4, 1)).unwrap();
        assert_eq!(out.report.users[0].access_ratio, 1.0);
        assert_eq!(out.feedback.idle_fraction, 0.0);
        assert_eq!(out.feedback.mean_flag_position, Some(1.0));
        let load = feedback_load_comparison(&out.feedback, 1);
        assert_eq!(load.ratio, 1.0);
    }

    #[test]
    fn two_user_max_sum_matches_formula() {
        let s = scenario(&[10.0, 10.0]);
        let opt = optimize_weighted_sum(&s).unwrap();
        let out = simulate(&s, &opt.thresholds, &SimConfig::new(400_000, 40, 2011)).unwrap();
        let expected = rayleigh_max_sum_iid(10.0, 2).unwrap();
        let se = out.report.sum_rate_se.unwrap();
        assert!((out.report.sum_rate - expected).abs() < 3.0 * se);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let s = scenario(&[1.0, 4.0, 9.0]);
        let thr = ThresholdVector::new(vec![0.9, 0.4, 0.0]).unwrap();
        let cfg = SimConfig::new(30_000, 7, 99);
        let a = simulate(&s, &thr, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&s, &thr, &cfg).unwrap());
        assert_eq!(
            serde_json::to_string(&a.to_output(Unit::Nats)).unwrap(),
            serde_json::to_string(&b.to_output(Unit::Nats)).unwrap()
        );
    }

    #[test]
    fn accounting_identity_with_idle_units() {
        let s = scenario(&[1.0, 2.0]);
        let thr = ThresholdVector::new(vec![0.8, 0.6]).unwrap();
        let out = simulate(&s, &thr, &SimConfig::new(50_001, 10, 3)).unwrap();
        let f = &out.feedback;
        assert_eq!(f.wins.iter().sum::<u64>() + f.idle_units, f.units);
        assert!(f.idle_units > 0);
        let ar: f64 = out.report.access_ratios().iter().sum();
        assert!((ar - (1.0 - f.idle_fraction)).abs() < 1e-12);
        assert!(f.flags_per_unit <= 1.0);
        // Idle probability Π F_j(r*_j).
        let analytic: f64 = s.channels().iter().zip(thr.rates()).map(|(c, &t)| {
            use crate::channel::RateDistribution;
            c.rate_cdf(t)
        }).product();
        assert!((f.idle_fraction - analytic).abs() < 3.0 * f.idle_fraction_se.unwrap());
    }

    #[test]
    fn empirical_rates_match_analytics() {
        let s = scenario(&[0.5, 3.0, 12.0]);
        let opt = optimize_pf(&s).unwrap();
        let out = simulate(&s, &opt.thresholds, &SimConfig::new(300_000, 30, 17)).unwrap();
        let analytic = expected_rates(&s, &opt.thresholds).unwrap();
        for (e, a) in out.report.users.iter().zip(&analytic.users) {
            assert!((e.rate - a.rate).abs() < 3.0 * e.rate_se.unwrap(), "{e:?} vs {a:?}");
            assert!((e.access_ratio - a.access_ratio).abs() < 3.0 * e.access_ratio_se.unwrap());
        }
    }

    #[test]
    fn cheater_at_front_is_flagged() {
        let s = scenario(&[1.0, 1.0, 1.0]);
        let opt = optimize_pf(&s).unwrap();
        let cfg = SimConfig::new(20_000, 4, 8).with_behaviors(vec![
            TerminalBehavior::OverrideThreshold(0.0),
            TerminalBehavior::Honest,
            TerminalBehavior::Honest,
        ]);
        let out = simulate(&s, &opt.thresholds, &cfg).unwrap();
        let v = out.verdicts();
        assert!(v[0].flagged);
        // The cheater always flags, so nobody behind it gets a chance.
        assert_eq!(v[1].status, MonitorStatus::InsufficientData);
        assert!(!v[1].flagged && !v[2].flagged);
    }

    #[test]
    fn config_validation() {
        let s = scenario(&[1.0, 1.0]);
        let thr = ThresholdVector::new(vec![0.5, 0.0]).unwrap();
        assert!(simulate(&s, &thr, &SimConfig::new(0, 1, 0)).is_err());
        assert!(simulate(&s, &thr, &SimConfig::new(10, 0, 0)).is_err());
        assert!(simulate(&s, &thr, &SimConfig::new(10, 11, 0)).is_err());
        let bad = SimConfig::new(10, 1, 0).with_behaviors(vec![TerminalBehavior::Honest]);
        assert!(simulate(&s, &thr, &bad).is_err());
        let neg = SimConfig::new(10, 1, 0)
            .with_behaviors(vec![TerminalBehavior::OverrideThreshold(-1.0), TerminalBehavior::Honest]);
        assert!(simulate(&s, &thr, &neg).is_err());
        assert!(simulate(&s, &ThresholdVector::new(vec![0.0]).unwrap(), &SimConfig::new(10, 1, 0)).is_err());
    }

    #[test]
    fn behavior_json_shape() {
        let v = serde_json::to_value(TerminalBehavior::OverrideThreshold(0.0)).unwrap();
        assert_eq!(v, serde_json::json!({"override_threshold": 0.0}));
        assert_eq!(serde_json::to_value(TerminalBehavior::Honest).unwrap(), "honest");
    }
}
