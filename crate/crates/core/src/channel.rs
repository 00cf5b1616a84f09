//! Fading channel models in the SNR and rate domains, samplers, and the
//! asymmetric network generators.
//!
//! Rates are in nats/s/Hz (`r = ln(1 + γ)`) and SNRs are linear power
//! ratios throughout. dB values only appear at the configuration boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{exp_scaled_e1, integrate, QuadratureSpec};

/// Rate-domain view of a fading channel. Downstream analytics are generic
/// over this trait, so a new fading family only has to provide a density
/// and a distribution function.
pub trait RateDistribution: Sync {
    /// `f_R(r)`; zero for `r < 0`.
    fn rate_pdf(&self, r: f64) -> f64;

    /// `F_R(r)`; `F_R(+∞) = 1`.
    fn rate_cdf(&self, r: f64) -> f64;

    /// `1 − F_R(r)`. Override when the tail can be computed without
    /// cancellation.
    fn rate_sf(&self, r: f64) -> f64 {
        1.0 - self.rate_cdf(r)
    }

    /// Tail integral `∫_t^∞ r f_R(r) dr`. The default is quadrature.
    fn conditional_rate(&self, threshold: f64) -> Result<f64> {
        conditional_rate_by_quadrature(self, threshold)
    }

    /// Unconditional mean rate `∫_0^∞ r f_R(r) dr`.
    fn mean_rate(&self) -> Result<f64> {
        self.conditional_rate(0.0)
    }
}

/// Generic quadrature path for the tail integral, usable with any family.
pub fn conditional_rate_by_quadrature<D>(dist: &D, threshold: f64) -> Result<f64>
where
    D: RateDistribution + ?Sized,
{
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Domain(format!(
            "rate threshold must be >= 0, got {threshold}"
        )));
    }
    if threshold == f64::INFINITY {
        return Ok(0.0);
    }
    integrate(
        |r| r * dist.rate_pdf(r),
        threshold,
        f64::INFINITY,
        &QuadratureSpec::default(),
    )
}

/// Wraps a distribution and hides any closed forms it has, forcing the
/// quadrature route. Used to cross-check fast paths.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOnly<'a, D: ?Sized>(pub &'a D);

impl<D: RateDistribution + ?Sized> RateDistribution for QuadratureOnly<'_, D> {
    fn rate_pdf(&self, r: f64) -> f64 {
        self.0.rate_pdf(r)
    }

    fn rate_cdf(&self, r: f64) -> f64 {
        self.0.rate_cdf(r)
    }

    fn rate_sf(&self, r: f64) -> f64 {
        self.0.rate_sf(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FadingFamily {
    RayleighSiso,
}

/// A single user's fading channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    family: FadingFamily,
    mean_snr: f64,
}

impl ChannelModel {
    pub fn rayleigh(mean_snr: f64) -> Result<Self> {
        if !(mean_snr > 0.0 && mean_snr.is_finite()) {
            return Err(Error::Domain(format!(
                "mean SNR must be positive and finite (linear), got {mean_snr}"
            )));
        }
        Ok(Self {
            family: FadingFamily::RayleighSiso,
            mean_snr,
        })
    }

    pub fn rayleigh_db(mean_snr_db: f64) -> Result<Self> {
        Self::rayleigh(db_to_linear(mean_snr_db))
    }

    pub fn family(&self) -> FadingFamily {
        self.family
    }

    /// Average SNR `γ̄` (linear).
    pub fn mean_snr(&self) -> f64 {
        self.mean_snr
    }

    pub fn snr_pdf(&self, snr: f64) -> Result<f64> {
        if snr.is_nan() || snr < 0.0 {
            return Err(Error::Domain(format!("SNR must be >= 0, got {snr}")));
        }
        match self.family {
            FadingFamily::RayleighSiso => Ok((-snr / self.mean_snr).exp() / self.mean_snr),
        }
    }

    pub fn snr_cdf(&self, snr: f64) -> f64 {
        if snr <= 0.0 {
            return 0.0;
        }
        match self.family {
            FadingFamily::RayleighSiso => -(-snr / self.mean_snr).exp_m1(),
        }
    }

    /// Inverse-CDF draw of the instantaneous SNR.
    pub fn sample_snr<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            FadingFamily::RayleighSiso => {
                // 1 - U lies in (0, 1], so the log is finite.
                let u: f64 = 1.0 - rng.random::<f64>();
                -self.mean_snr * u.ln()
            }
        }
    }

    pub fn sample_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rate_from_snr(self.sample_snr(rng))
    }
}

impl RateDistribution for ChannelModel {
    fn rate_pdf(&self, r: f64) -> f64 {
        if !(r >= 0.0) || r == f64::INFINITY {
            return 0.0;
        }
        match self.family {
            // e^r f_Γ(e^r - 1), assembled in the exponent to avoid inf·0.
            FadingFamily::RayleighSiso => {
                (r - r.exp_m1() / self.mean_snr).exp() / self.mean_snr
            }
        }
    }

    fn rate_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.snr_cdf(r.exp_m1())
    }

    fn rate_sf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        match self.family {
            FadingFamily::RayleighSiso => (-r.exp_m1() / self.mean_snr).exp(),
        }
    }

    /// `e^{-γ*/γ̄} ln(1+γ*) + e^{1/γ̄} E1((1+γ*)/γ̄)` with `γ* = e^{r*} − 1`,
    /// evaluated as `e^{-γ*/γ̄} [r* + e^y E1(y)]`, `y = (1+γ*)/γ̄`.
    fn conditional_rate(&self, threshold: f64) -> Result<f64> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::Domain(format!(
                "rate threshold must be >= 0, got {threshold}"
            )));
        }
        if threshold == f64::INFINITY {
            return Ok(0.0);
        }
        match self.family {
            FadingFamily::RayleighSiso => {
                let snr_threshold = threshold.exp_m1();
                let survival = (-snr_threshold / self.mean_snr).exp();
                if survival == 0.0 {
                    return Ok(0.0);
                }
                let y = (1.0 + snr_threshold) / self.mean_snr;
                Ok(survival * (threshold + exp_scaled_e1(y)?))
            }
        }
    }
}

/// `ln(1 + γ)` in nats/s/Hz.
pub fn rate_from_snr(snr: f64) -> f64 {
    snr.ln_1p()
}

/// `e^r − 1`.
pub fn snr_from_rate(rate: f64) -> f64 {
    rate.exp_m1()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkModel {
    /// Every user at `snr_max`.
    Identical,
    /// Mean SNRs evenly spaced (linear) between `snr_min` and `snr_max`.
    Model1,
    /// Evenly spaced in `√γ̄`.
    Model2,
}

/// User population description; SNR limits are linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    pub users: usize,
    pub model: NetworkModel,
    pub snr_min: f64,
    pub snr_max: f64,
}

impl NetworkSpec {
    fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::InvalidConfig("network needs at least one user".into()));
        }
        if !(self.snr_min > 0.0 && self.snr_min.is_finite() && self.snr_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "network SNR limits must be positive and finite, got [{}, {}]",
                self.snr_min, self.snr_max
            )));
        }
        if self.snr_min > self.snr_max {
            return Err(Error::InvalidConfig(format!(
                "snr_min {} exceeds snr_max {}",
                self.snr_min, self.snr_max
            )));
        }
        Ok(())
    }
}

/// Mean SNR per user, in user-index order (1-based `i` in the formulas).
pub fn build_network(spec: &NetworkSpec) -> Result<Vec<ChannelModel>> {
    spec.validate()?;
    let m = spec.users as f64;
    (1..=spec.users)
        .map(|i| {
            let position = (2.0 * i as f64 - 1.0) / (2.0 * m);
            let mean = match spec.model {
                NetworkModel::Identical => spec.snr_max,
                NetworkModel::Model1 => spec.snr_min + position * (spec.snr_max - spec.snr_min),
                NetworkModel::Model2 => {
                    let lo = spec.snr_min.sqrt();
                    let root = lo + position * (spec.snr_max.sqrt() - lo);
                    root * root
                }
            };
            ChannelModel::rayleigh(mean)
        })
        .collect()
}
