//! Full-feedback selection benchmark: every user reports its rate and the
//! base station serves `argmax_i μ_i r_i`.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::analytics::Scenario;
use crate::channel::{ChannelModel, RateDistribution};
use crate::error::{Error, Result};
use crate::numerics::{exp_scaled_e1, integrate, pairwise_sum, QuadratureSpec};
use crate::report::{PerformanceReport, Provenance, UserPerformance};

/// Beyond this many users the alternating binomial sum loses too many
/// digits to cancellation and the i.i.d. capacity is integrated instead.
pub const BINOMIAL_SUM_MAX_USERS: usize = 30;

fn seld_quadrature() -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        max_subdivisions: 200,
    }
}

/// Selection rates, access ratios and the weights that produced them.
/// Serializes exactly like its [`PerformanceReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeldReport {
    pub weights: Vec<f64>,
    pub report: PerformanceReport,
}

impl Serialize for SeldReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.report.serialize(serializer)
    }
}

/// `(R_i, AR_i)` for each user. Integrated in the rate domain:
/// `R_i = ∫ r f_i(r) Π_{j≠i} F_j(μ_i r / μ_j) dr`, and `AR_i` is the same
/// integral without the factor `r`.
pub fn seld_rates_for<D: RateDistribution>(dists: &[D], weights: &[f64]) -> Result<Vec<(f64, f64)>> {
    if dists.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: dists.len(),
            actual: weights.len(),
        });
    }
    if dists.is_empty() {
        return Err(Error::InvalidConfig("need at least one user".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidWeights(
            "selection weights must be finite and > 0; drop zero-weight users first".into(),
        ));
    }
    let spec = seld_quadrature();
    (0..dists.len())
        .into_par_iter()
        .map(|i| {
            let wins = |r: f64| {
                dists
                    .iter()
                    .zip(weights)
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, (d, w))| d.rate_cdf(weights[i] * r / w))
                    .product::<f64>()
                    * dists[i].rate_pdf(r)
            };
            let rate = integrate(|r| r * wins(r), 0.0, f64::INFINITY, &spec)?;
            let access = integrate(wins, 0.0, f64::INFINITY, &spec)?;
            Ok((rate, access))
        })
        .collect()
}

pub fn seld_rates(models: &[ChannelModel], weights: &[f64]) -> Result<SeldReport> {
    let scenario = Scenario::from_channels(models, 0)?.with_weights(weights.to_vec())?;
    seld_report(&scenario)
}

/// Selection benchmark for a scenario, using its weights and user ids.
pub fn seld_report(scenario: &Scenario) -> Result<SeldReport> {
    let pairs = seld_rates_for(&scenario.channels(), scenario.weights())?;
    let users = scenario
        .users()
        .iter()
        .zip(&pairs)
        .enumerate()
        .map(|(i, (u, &(rate, access)))| UserPerformance {
            user_id: u.id,
            position: i + 1,
            rate,
            access_ratio: access,
            ..UserPerformance::default()
        })
        .collect();
    Ok(SeldReport {
        weights: scenario.weights().to_vec(),
        report: PerformanceReport::new(users, scenario.weights(), Provenance::AnalyticSeld),
    })
}

/// Sum capacity of `M` i.i.d. Rayleigh users under max-rate selection:
/// `Σ_{i=1}^M (−1)^{i−1} C(M,i) e^{i/γ̄} E1(i/γ̄)`.
pub fn seld_iid_sum_capacity(mean_snr: f64, users: usize) -> Result<f64> {
    if users == 0 {
        return Err(Error::InvalidConfig("need at least one user".into()));
    }
    let channel = ChannelModel::rayleigh(mean_snr)?;
    if users > BINOMIAL_SUM_MAX_USERS {
        return seld_iid_sum_by_quadrature(&channel, users);
    }
    let mut terms = Vec::with_capacity(users);
    let mut binom = 1.0;
    for i in 1..=users {
        binom *= (users + 1 - i) as f64 / i as f64;
        let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
        terms.push(sign * binom * exp_scaled_e1(i as f64 / mean_snr)?);
    }
    Ok(pairwise_sum(&terms))
}

/// `M ∫ r f(r) F(r)^{M−1} dr`: the mean of the largest of `M` rates.
pub fn seld_iid_sum_by_quadrature<D: RateDistribution>(dist: &D, users: usize) -> Result<f64> {
    let m = users as f64;
    integrate(
        |r| m * r * dist.rate_pdf(r) * dist.rate_cdf(r).powi(users as i32 - 1),
        0.0,
        f64::INFINITY,
        &seld_quadrature(),
    )
}

/// Selection operating point where each weight is the inverse of the rate
/// it yields (`μ_i ∝ 1/R_i`), found by damped iteration on `ln μ`.
///
/// The rates react strongly to the weights when mean SNRs differ, so the
/// plain iteration can cycle; the damping is halved whenever a step fails
/// to shrink the update.
pub fn seld_proportional_fair(models: &[ChannelModel]) -> Result<SeldReport> {
    const TOLERANCE: f64 = 1e-10;
    const MAX_ITERATIONS: usize = 2000;
    const MIN_DAMPING: f64 = 1e-4;
    let m = models.len();
    let mut log_w = vec![0.0; m];
    let mut damping: f64 = 0.5;
    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let weights: Vec<f64> = log_w.iter().map(|l: &f64| l.exp()).collect();
        let pairs = seld_rates_for(models, &weights)?;
        // Fixed-point residual: target ln μ_i = −ln R_i, up to a common shift.
        let mut target: Vec<f64> = pairs.iter().map(|(rate, _)| -rate.ln()).collect();
        let top = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        target.iter_mut().for_each(|l| *l -= top);
        let step = target
            .iter()
            .zip(&log_w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if step < TOLERANCE {
            return seld_rates(models, &weights);
        }
        if step >= 0.9 * last_step {
            damping = (damping * 0.5).max(MIN_DAMPING);
        }
        last_step = step;
        for (lw, t) in log_w.iter_mut().zip(&target) {
            *lw += damping * (t - *lw);
        }
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        log_w.iter_mut().for_each(|l| *l -= top);
    }
    Err(Error::RootNonConvergence {
        iterations: MAX_ITERATIONS,
        width: last_step,
    })
}
