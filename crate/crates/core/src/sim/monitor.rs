//! Base-station monitor for users who flag with a threshold other than the
//! one they reported.
//!
//! Whenever user `i` has the opportunity to flag, the monitor records
//! whether it flagged and the rate it requested (zero if it stayed
//! silent). From those it estimates the success probability `P_i` and the
//! tail integral `C_i`, and checks the PF identity
//! `r*_i (1 − P_i) / C_i = M − i`.

use serde::{Deserialize, Serialize};

/// Running sums for one user under one notion of "opportunity".
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpportunityStats {
    pub opportunities: u64,
    pub flags: u64,
    /// Σ requested rate over opportunities (silent opportunities add 0).
    pub rate_sum: f64,
    pub rate_sq_sum: f64,
}

impl OpportunityStats {
    pub fn record(&mut self, flagged: bool, rate: f64) {
        self.opportunities += 1;
        if flagged {
            self.flags += 1;
            self.rate_sum += rate;
            self.rate_sq_sum += rate * rate;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.opportunities += other.opportunities;
        self.flags += other.flags;
        self.rate_sum += other.rate_sum;
        self.rate_sq_sum += other.rate_sq_sum;
    }

    /// `P̂`, or `None` without samples.
    pub fn success_ratio(&self) -> Option<f64> {
        (self.opportunities > 0).then(|| self.flags as f64 / self.opportunities as f64)
    }

    /// `Ĉ`, the mean requested rate per opportunity.
    pub fn conditional_rate(&self) -> Option<f64> {
        (self.opportunities > 0).then(|| self.rate_sum / self.opportunities as f64)
    }

    /// Statistic `|r* (1 − P̂)/Ĉ − target|` and its delta-method standard
    /// error.
    pub fn statistic(&self, reported: f64, target: f64) -> Option<(f64, f64)> {
        let n = self.opportunities as f64;
        let p = self.success_ratio()?;
        let c = self.conditional_rate()?;
        if reported == 0.0 {
            return Some((target.abs(), 0.0));
        }
        if c == 0.0 {
            return Some((f64::INFINITY, 0.0));
        }
        let value = reported * (1.0 - p) / c;
        let grad_p = -reported / c;
        let grad_c = -reported * (1.0 - p) / (c * c);
        let var_i = p * (1.0 - p);
        let var_x = (self.rate_sq_sum / n - c * c).max(0.0);
        let cov = c - p * c;
        let var = (grad_p * grad_p * var_i + 2.0 * grad_p * grad_c * cov + grad_c * grad_c * var_x) / n;
        Some(((value - target).abs(), var.max(0.0).sqrt()))
    }
}

/// Per-user monitor state. `observed` counts opportunities the base
/// station can see (no earlier flag in the guard period). `omniscient`
/// counts the ones where every earlier user's true rate was below its
/// reported threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    pub user_ids: Vec<u32>,
    pub reported_thresholds: Vec<f64>,
    pub observed: Vec<OpportunityStats>,
    pub omniscient: Vec<OpportunityStats>,
    pub epsilon: f64,
    /// Multiplier on the statistic's standard error added to `epsilon`.
    pub widen: f64,
}

impl MonitorState {
    pub fn new(user_ids: Vec<u32>, reported_thresholds: Vec<f64>, epsilon: f64, widen: f64) -> Self {
        let m = user_ids.len();
        Self {
            user_ids,
            reported_thresholds,
            observed: vec![OpportunityStats::default(); m],
            omniscient: vec![OpportunityStats::default(); m],
            epsilon,
            widen,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.observed.iter_mut().zip(&other.observed) {
            a.merge(b);
        }
        for (a, b) in self.omniscient.iter_mut().zip(&other.omniscient) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorStatus {
    Ok,
    Flagged,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub user_id: u32,
    pub position: usize,
    /// `None` without opportunity samples.
    pub statistic: Option<f64>,
    pub standard_error: Option<f64>,
    /// Same statistic on the omniscient opportunity set, for diagnostics.
    pub omniscient_statistic: Option<f64>,
    pub flagged: bool,
    pub samples: u64,
    pub status: MonitorStatus,
}

/// Flags user `i` when its observed statistic exceeds
/// `ε + widen · SE`. Users with no opportunity samples are reported as
/// insufficient data and never flagged.
pub fn detect_misbehavior(monitor: &MonitorState, users: usize) -> Vec<MonitorVerdict> {
    (0..monitor.user_ids.len())
        .map(|i| {
            let target = users.saturating_sub(i + 1) as f64;
            let reported = monitor.reported_thresholds[i];
            let observed = monitor.observed[i].statistic(reported, target);
            let omniscient = monitor.omniscient[i].statistic(reported, target).map(|s| s.0);
            let (statistic, se, flagged, status) = match observed {
                None => (None, None, false, MonitorStatus::InsufficientData),
                Some((s, se)) => {
                    let flagged = s > monitor.epsilon + monitor.widen * se;
                    let status = if flagged {
                        MonitorStatus::Flagged
                    } else {
                        MonitorStatus::Ok
                    };
                    (Some(s), Some(se), flagged, status)
                }
            };
            MonitorVerdict {
                user_id: monitor.user_ids[i],
                position: i + 1,
                statistic,
                standard_error: se,
                omniscient_statistic: omniscient,
                flagged,
                samples: monitor.observed[i].opportunities,
                status,
            }
        })
        .collect()
}
