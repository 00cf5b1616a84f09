//! Per-user threshold optimization.
//!
//! Weighted-sum objectives are solved with the backward recursion
//! `μ_i r*_i = μ_{i+1} [C_{i+1}(r*_{i+1}) + r*_{i+1} F_{i+1}(r*_{i+1})]`
//! from `r*_M = 0`, where `C` is the tail integral `∫_{r*}^∞ r f_R dr`.
//! The proportional-fair objective decouples: each user solves
//! `r* F(r*) / C(r*) = M − i` on its own channel statistics.

use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    deserialize_thresholds, report_from_stats, serialize_thresholds, switched_stats, Scenario,
    ThresholdVector,
};
use crate::channel::{ChannelModel, RateDistribution};
use crate::error::{Error, Result};
use crate::metrics::{convert_units, Unit};
use crate::numerics::{exp_scaled_e1, find_root, RootSpec};
use crate::report::PerformanceReport;

/// Central finite-difference step on the rate thresholds.
pub const FD_STEP: f64 = 1e-5;
/// Relative agreement required between analytic and finite-difference
/// gradients.
pub const GRADIENT_REL_TOL: f64 = 1e-4;
/// Absolute slack for the agreement test where both gradients vanish and
/// only finite-difference round-off is left.
pub const GRADIENT_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    WeightedSum(Vec<f64>),
    ProportionalFair,
}

impl Objective {
    pub fn max_sum(users: usize) -> Self {
        Objective::WeightedSum(vec![1.0; users])
    }

    fn validate(&self, users: usize) -> Result<()> {
        if let Objective::WeightedSum(w) = self {
            validate_weights(w, users)?;
        }
        Ok(())
    }
}

fn validate_weights(weights: &[f64], users: usize) -> Result<()> {
    if weights.len() != users {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: users,
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidWeights("weights must be finite and >= 0".into()));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InvalidWeights("at least one weight must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub objective: Objective,
    pub thresholds: ThresholdVector,
    pub objective_value: f64,
    pub report: PerformanceReport,
    pub stationarity: StationarityCheck,
}

impl OptimizationResult {
    /// Largest stationarity gradient over positions `i < M`.
    pub fn residual(&self) -> f64 {
        self.stationarity.residual
    }

    pub fn to_wire(&self, unit: Unit) -> OptimizationResultWire {
        let scale = convert_units(1.0, Unit::Nats, unit);
        let (kind, weights) = match &self.objective {
            Objective::WeightedSum(w) => ("weighted_sum", Some(w.clone())),
            Objective::ProportionalFair => ("proportional_fair", None),
        };
        // Σ log R shifts by M·log(scale) rather than scaling.
        let objective = match self.objective {
            Objective::WeightedSum(_) => self.objective_value * scale,
            Objective::ProportionalFair => {
                self.objective_value + self.thresholds.len() as f64 * scale.ln()
            }
        };
        OptimizationResultWire {
            objective_kind: kind.to_string(),
            weights,
            thresholds_rate: self.thresholds.rates().iter().map(|r| r * scale).collect(),
            thresholds_snr: self.thresholds.snr_view(),
            objective,
            residual: self.stationarity.residual,
            gradient_agreement: self.stationarity.agree,
            unit,
            report: self.report.in_unit(unit),
        }
    }
}

/// JSON layout of an optimization result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResultWire {
    pub objective_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(
        serialize_with = "serialize_thresholds_field",
        deserialize_with = "deserialize_thresholds"
    )]
    pub thresholds_rate: Vec<f64>,
    #[serde(
        serialize_with = "serialize_thresholds_field",
        deserialize_with = "deserialize_thresholds"
    )]
    pub thresholds_snr: Vec<f64>,
    pub objective: f64,
    pub residual: f64,
    pub gradient_agreement: bool,
    pub unit: Unit,
    pub report: PerformanceReport,
}

fn serialize_thresholds_field<S: serde::Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    serialize_thresholds(v, s)
}

impl OptimizationResultWire {
    /// Rate thresholds converted back to nats.
    pub fn thresholds(&self) -> Result<ThresholdVector> {
        let scale = convert_units(1.0, self.unit, Unit::Nats);
        ThresholdVector::new(self.thresholds_rate.iter().map(|r| r * scale).collect())
    }
}

// ---------------------------------------------------------------------------
// Weighted sum
// ---------------------------------------------------------------------------

/// Backward recursion for any family; returns thresholds and the optimal
/// weighted sum `Φ = μ_k [C_k(r*_k) + r*_k F_k(r*_k)]` (`k` = first user with
/// positive weight).
///
/// A zero-weight user ahead of positive-weight users never flags
/// (`r* = +∞`). If every later weight is zero too, its threshold is 0.
pub fn weighted_sum_thresholds<D: RateDistribution>(
    dists: &[D],
    weights: &[f64],
) -> Result<(Vec<f64>, f64)> {
    validate_weights(weights, dists.len())?;
    let m = dists.len();
    let mut thresholds = vec![0.0; m];
    // Optimal weighted sum collected by the users behind position i.
    let mut value_after = 0.0;
    for i in (0..m).rev() {
        let mu = weights[i];
        let threshold = if mu > 0.0 {
            value_after / mu
        } else if value_after > 0.0 {
            ThresholdVector::NEVER_FLAG
        } else {
            0.0
        };
        if i + 1 < m && threshold == 0.0 {
            log::warn!("interior threshold at position {} collapsed to zero", i + 1);
        }
        thresholds[i] = threshold;
        if mu > 0.0 {
            let dist = &dists[i];
            value_after = mu * (dist.conditional_rate(threshold)? + threshold * dist.rate_cdf(threshold));
        }
    }
    Ok((thresholds, value_after))
}

/// Same recursion written directly in SNR thresholds for Rayleigh users:
/// `μ_i ln(1+γ*_i) = μ_{i+1} [e^{1/γ̄} E1((1+γ*)/γ̄) + ln(1+γ*)]_{i+1}`.
/// Returns SNR thresholds.
pub fn rayleigh_weighted_sum_snr_thresholds(mean_snrs: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    validate_weights(weights, mean_snrs.len())?;
    let m = mean_snrs.len();
    let mut snr_thresholds = vec![0.0; m];
    let mut value_after = 0.0;
    for i in (0..m).rev() {
        let mu = weights[i];
        let gamma = if mu > 0.0 {
            (value_after / mu).exp_m1()
        } else if value_after > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        snr_thresholds[i] = gamma;
        if mu > 0.0 {
            value_after = mu * rayleigh_continuation(mean_snrs[i], gamma)?;
        }
    }
    Ok(snr_thresholds)
}

/// `e^{1/γ̄} E1((1+γ*)/γ̄) + ln(1+γ*)`; the exponential is folded into the
/// scaled `E1` so it cannot overflow.
fn rayleigh_continuation(mean_snr: f64, snr_threshold: f64) -> Result<f64> {
    if mean_snr <= 0.0 {
        return Err(Error::Domain(format!("mean SNR must be positive, got {mean_snr}")));
    }
    let y = (1.0 + snr_threshold) / mean_snr;
    Ok((-snr_threshold / mean_snr).exp() * exp_scaled_e1(y)? + snr_threshold.ln_1p())
}

/// Max sum rate of `M` i.i.d. Rayleigh users with optimal thresholds.
pub fn rayleigh_max_sum_iid(mean_snr: f64, users: usize) -> Result<f64> {
    if users == 0 {
        return Err(Error::InvalidConfig("need at least one user".into()));
    }
    let snrs = vec![mean_snr; users];
    let gammas = rayleigh_weighted_sum_snr_thresholds(&snrs, &vec![1.0; users])?;
    rayleigh_continuation(mean_snr, gammas[0])
}

/// Thresholds rebuilt from the forward-sum form
/// `μ_i r*_i = Σ_{j>i} μ_j C_j(r*_j) Π_{i<k<j} F_k(r*_k)` at the given
/// thresholds. At an optimum this reproduces them.
pub fn tail_sum_thresholds<D: RateDistribution>(
    dists: &[D],
    weights: &[f64],
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    validate_weights(weights, dists.len())?;
    let m = dists.len();
    let tails = dists
        .iter()
        .zip(thresholds)
        .map(|(d, &t)| d.conditional_rate(t))
        .collect::<Result<Vec<_>>>()?;
    let below: Vec<f64> = dists.iter().zip(thresholds).map(|(d, &t)| d.rate_cdf(t)).collect();
    Ok((0..m)
        .map(|i| {
            let mut through = 1.0;
            let mut total = 0.0;
            for j in (i + 1)..m {
                total += weights[j] * tails[j] * through;
                through *= below[j];
            }
            if weights[i] > 0.0 {
                total / weights[i]
            } else if total > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect())
}

pub fn optimize_weighted_sum(scenario: &Scenario) -> Result<OptimizationResult> {
    let objective = Objective::WeightedSum(scenario.weights().to_vec());
    let channels = scenario.channels();
    let (thresholds, value) = weighted_sum_thresholds(&channels, scenario.weights())?;
    finish(scenario, &channels, objective, thresholds, Some(value))
}

// ---------------------------------------------------------------------------
// Proportional fairness
// ---------------------------------------------------------------------------

/// Solves `r* F(r*) / C(r*) = users_after` by bisection. The left side is
/// increasing in `r*`, so the root is unique.
pub fn pf_threshold<D: RateDistribution + ?Sized>(dist: &D, users_after: usize) -> Result<f64> {
    if users_after == 0 {
        return Ok(0.0);
    }
    let target = users_after as f64;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let statistic = |r: f64| match dist.conditional_rate(r) {
        Ok(tail) => r * dist.rate_cdf(r) / tail - target,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let root = find_root(statistic, 0.0, 1.0, &RootSpec::default());
    match failure.into_inner() {
        Some(e) => Err(e),
        None => root,
    }
}

pub fn pf_thresholds<D: RateDistribution>(dists: &[D]) -> Result<Vec<f64>> {
    let m = dists.len();
    dists
        .par_iter()
        .enumerate()
        .map(|(i, d)| pf_threshold(d, m - 1 - i))
        .collect()
}

pub fn optimize_pf(scenario: &Scenario) -> Result<OptimizationResult> {
    let channels = scenario.channels();
    let thresholds = pf_thresholds(&channels)?;
    finish(scenario, &channels, Objective::ProportionalFair, thresholds, None)
}

/// Feeds `μ_i = 1/R_i` from the PF operating point through the weighted
/// recursion once and returns the largest threshold discrepancy.
pub fn pf_weight_consistency<D: RateDistribution>(dists: &[D], pf_thresholds: &[f64]) -> Result<f64> {
    let stats = switched_stats(dists, pf_thresholds)?;
    let weights: Vec<f64> = stats.iter().map(|s| 1.0 / s.rate).collect();
    let (rebuilt, _) = weighted_sum_thresholds(dists, &weights)?;
    Ok(rebuilt
        .iter()
        .zip(pf_thresholds)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn optimize(scenario: &Scenario, objective: &Objective) -> Result<OptimizationResult> {
    objective.validate(scenario.len())?;
    match objective {
        Objective::WeightedSum(w) => optimize_weighted_sum(&scenario.with_weights(w.clone())?),
        Objective::ProportionalFair => optimize_pf(scenario),
    }
}

fn finish(
    scenario: &Scenario,
    channels: &[ChannelModel],
    objective: Objective,
    thresholds: Vec<f64>,
    closed_value: Option<f64>,
) -> Result<OptimizationResult> {
    let stats = switched_stats(channels, &thresholds)?;
    let report = report_from_stats(scenario, &stats);
    let objective_value = match closed_value {
        Some(v) => v,
        None => objective_value(channels, &thresholds, &objective)?,
    };
    let stationarity = stationarity_check(channels, &thresholds, &objective)?;
    if !stationarity.agree {
        log::warn!(
            "analytic and finite-difference gradients disagree: {:?} vs {:?}",
            stationarity.analytic,
            stationarity.finite_difference
        );
    }
    Ok(OptimizationResult {
        objective,
        thresholds: ThresholdVector::new(thresholds)?,
        objective_value,
        report,
        stationarity,
    })
}

// ---------------------------------------------------------------------------
// Stationarity
// ---------------------------------------------------------------------------

/// `Σ μ_i R_i` or `Σ ln R_i`.
pub fn objective_value<D: RateDistribution>(
    dists: &[D],
    thresholds: &[f64],
    objective: &Objective,
) -> Result<f64> {
    let stats = switched_stats(dists, thresholds)?;
    Ok(match objective {
        Objective::WeightedSum(w) => stats.iter().zip(w).map(|(s, w)| w * s.rate).sum(),
        Objective::ProportionalFair => stats.iter().map(|s| s.rate.ln()).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityCheck {
    /// `∂Φ/∂r*_i` assembled from the closed-form partial derivatives,
    /// positions `0..M-1` (the last user is excluded). Never-flag positions
    /// are reported as 0.
    pub analytic: Vec<f64>,
    /// Same gradient by central differences of `Φ`.
    pub finite_difference: Vec<f64>,
    /// `max_i max(|analytic_i|, |finite_difference_i|)`.
    pub residual: f64,
    pub agree: bool,
}

/// Partial derivatives of each `R_j` with respect to `r*_i`:
/// zero for `j < i`, `−r*_i f_i Π_{k<i} F_k` on the diagonal and
/// `C_j f_i Π_{k<j, k≠i} F_k` for `j > i`.
pub fn rate_jacobian<D: RateDistribution>(dists: &[D], thresholds: &[f64]) -> Result<Vec<Vec<f64>>> {
    let stats = switched_stats(dists, thresholds)?;
    let m = dists.len();
    let below: Vec<f64> = dists.iter().zip(thresholds).map(|(d, &t)| d.rate_cdf(t)).collect();
    let mut jac = vec![vec![0.0; m]; m];
    for i in 0..m {
        let t = thresholds[i];
        if !t.is_finite() {
            continue;
        }
        let density = dists[i].rate_pdf(t);
        jac[i][i] = -t * density * stats[i].opportunity;
        let mut others = stats[i].opportunity;
        for j in (i + 1)..m {
            jac[i][j] = stats[j].conditional_rate * density * others;
            others *= below[j];
        }
    }
    Ok(jac)
}

pub fn stationarity_check<D: RateDistribution>(
    dists: &[D],
    thresholds: &[f64],
    objective: &Objective,
) -> Result<StationarityCheck> {
    let m = dists.len();
    let stats = switched_stats(dists, thresholds)?;
    let objective_weights: Vec<f64> = match objective {
        Objective::WeightedSum(w) => w.clone(),
        Objective::ProportionalFair => stats.iter().map(|s| 1.0 / s.rate).collect(),
    };
    let jac = rate_jacobian(dists, thresholds)?;
    let interior = m.saturating_sub(1);
    let mut analytic = vec![0.0; interior];
    let mut finite_difference = vec![0.0; interior];
    let mut probe = thresholds.to_vec();
    let phi = |t: &[f64]| objective_value(dists, t, objective);
    for i in 0..interior {
        if !thresholds[i].is_finite() {
            continue;
        }
        analytic[i] = jac[i].iter().zip(&objective_weights).map(|(d, w)| d * w).sum();
        let t = thresholds[i];
        finite_difference[i] = if t >= FD_STEP {
            probe[i] = t + FD_STEP;
            let up = phi(&probe)?;
            probe[i] = t - FD_STEP;
            let down = phi(&probe)?;
            (up - down) / (2.0 * FD_STEP)
        } else {
            // One-sided second-order stencil at the boundary r* = 0.
            let here = phi(&probe)?;
            probe[i] = t + FD_STEP;
            let one = phi(&probe)?;
            probe[i] = t + 2.0 * FD_STEP;
            let two = phi(&probe)?;
            (-3.0 * here + 4.0 * one - two) / (2.0 * FD_STEP)
        };
        probe[i] = t;
    }
    let residual = analytic
        .iter()
        .zip(&finite_difference)
        .map(|(a, f)| a.abs().max(f.abs()))
        .fold(0.0, f64::max);
    let agree = analytic.iter().zip(&finite_difference).all(|(a, f)| {
        (a - f).abs() <= GRADIENT_REL_TOL * a.abs().max(f.abs()) + GRADIENT_ABS_FLOOR
    });
    Ok(StationarityCheck {
        analytic,
        finite_difference,
        residual,
        agree,
    })
}

pub fn stationarity_residual(
    scenario: &Scenario,
    thresholds: &ThresholdVector,
    objective: &Objective,
) -> Result<f64> {
    objective.validate(scenario.len())?;
    Ok(stationarity_check(&scenario.channels(), thresholds.rates(), objective)?.residual)
}
