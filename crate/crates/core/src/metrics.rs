//! Fairness indices, rate units and the switched-vs-selection capacity gap.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, RateDistribution};
use crate::error::{Error, Result};
use crate::optimize::rayleigh_max_sum_iid;
use crate::report::PerformanceReport;
use crate::seld::seld_iid_sum_capacity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Nats,
    Bits,
}

impl Unit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Nats => "nats",
            Unit::Bits => "bits",
        }
    }
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(Unit::Nats),
            "bits" => Ok(Unit::Bits),
            other => Err(Error::InvalidConfig(format!(
                "unknown unit {other:?} (expected nats or bits)"
            ))),
        }
    }
}

/// Converts a rate expressed in `from` into `to`.
pub fn convert_units(value: f64, from: Unit, to: Unit) -> f64 {
    match (from, to) {
        (Unit::Nats, Unit::Bits) => value / std::f64::consts::LN_2,
        (Unit::Bits, Unit::Nats) => value * std::f64::consts::LN_2,
        _ => value,
    }
}

/// Jain's index `(Σx)² / (M Σx²)`.
pub fn jain_index(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Domain("Jain index of an empty list".into()));
    }
    if x.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain("Jain index needs finite non-negative inputs".into()));
    }
    let sum: f64 = x.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Domain("Jain index of an all-zero list".into()));
    }
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    Ok(sum * sum / (x.len() as f64 * sum_sq))
}

/// `R_i` over the user's own unconditional mean rate (its rate if it were
/// always scheduled).
pub fn mud_gain_metric<D: RateDistribution>(report: &PerformanceReport, dists: &[D]) -> Result<Vec<f64>> {
    if report.users.len() != dists.len() {
        return Err(Error::LengthMismatch {
            what: "channel models",
            expected: report.users.len(),
            actual: dists.len(),
        });
    }
    let to_nats = convert_units(1.0, report.unit, Unit::Nats);
    report
        .users
        .iter()
        .zip(dists)
        .map(|(u, d)| Ok(u.rate * to_nats / d.mean_rate()?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    /// Jain's index over access ratios.
    pub jain_access: f64,
    /// Jain's index over normalized rates `R_i / E[r_i]`.
    pub jain_mud_gain: f64,
    pub basis: crate::report::Provenance,
}

pub fn fairness_summary<D: RateDistribution>(
    report: &PerformanceReport,
    dists: &[D],
) -> Result<FairnessSummary> {
    Ok(FairnessSummary {
        jain_access: jain_index(&report.access_ratios())?,
        jain_mud_gain: jain_index(&mud_gain_metric(report, dists)?)?,
        basis: report.provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub mean_snr_db: f64,
    #[serde(rename = "M")]
    pub users: usize,
    pub swid_sum: f64,
    pub seld_sum: f64,
    pub gap: f64,
    pub ratio: f64,
    pub unit: Unit,
}

/// Max sum rate of the switched scheme against the full-feedback sum
/// capacity for i.i.d. Rayleigh users, for every `(γ̄, M)` pair.
pub fn gap_vs_full_feedback(
    mean_snrs_db: &[f64],
    user_counts: &[usize],
    unit: Unit,
) -> Result<Vec<GapRow>> {
    let mut rows = Vec::with_capacity(mean_snrs_db.len() * user_counts.len());
    for &db in mean_snrs_db {
        let channel = ChannelModel::rayleigh_db(db)?;
        for &m in user_counts {
            let swid = rayleigh_max_sum_iid(channel.mean_snr(), m)?;
            let seld = seld_iid_sum_capacity(channel.mean_snr(), m)?;
            rows.push(GapRow {
                mean_snr_db: db,
                users: m,
                swid_sum: convert_units(swid, Unit::Nats, unit),
                seld_sum: convert_units(seld, Unit::Nats, unit),
                gap: convert_units(seld - swid, Unit::Nats, unit),
                ratio: swid / seld,
                unit,
            });
        }
    }
    Ok(rows)
}

pub fn gap_table_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("mean_snr_db,M,swid_sum,seld_sum,gap,ratio,unit\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.mean_snr_db,
            r.users,
            r.swid_sum,
            r.seld_sum,
            r.gap,
            r.ratio,
            r.unit.as_str()
        ));
    }
    out
}
