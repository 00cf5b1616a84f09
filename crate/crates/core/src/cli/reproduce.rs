//! Preset grids behind `--reproduce figK`. Every preset prints a CSV table.

use crate::channel::{build_network, ChannelModel, NetworkModel, NetworkSpec, RateDistribution};
use crate::error::Result;
use crate::metrics::{convert_units, gap_table_csv, gap_vs_full_feedback, jain_index, mud_gain_metric, Unit};
use crate::optimize::{optimize, pf_threshold, Objective};
use crate::region::{default_weight_grid, order_users, sweep_region, Scheme, SequenceStrategy};
use crate::report::PerformanceReport;
use crate::seld::{seld_proportional_fair, seld_rates};
use crate::{Scenario, User};

use super::region_csv;

/// Mean SNRs (dB) of the threshold and rate-PDF figures.
pub const THRESHOLD_SNRS_DB: [f64; 4] = [-10.0, 0.0, 10.0, 20.0];
pub const MAX_USERS_AFTER: usize = 20;
pub const GAP_SNRS_DB: [f64; 4] = [0.0, 6.0, 12.0, 18.0];
pub const GAP_MAX_USERS: usize = 20;
/// Network comparison figures sweep M = 1 ..= this.
pub const NETWORK_MAX_USERS: usize = 10;
pub const NETWORK_SNR_MIN_DB: f64 = 0.0;
pub const NETWORK_SNR_MAX_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Two-user rate regions at 10 dB / 0 dB.
    RateRegion,
    /// PF rate thresholds over the mean rate, against users after.
    RateThresholds,
    /// PF SNR thresholds over the mean SNR.
    SnrThresholds,
    /// Density of `r / E[r]`.
    NormalizedRatePdf,
    /// i.i.d. sum capacity of both schemes.
    SumCapacity,
    /// Their ratio.
    CapacityRatio,
    /// Model 1 sum rates, max-sum and PF.
    Model1SumRate,
    /// Model 1 Jain index over access ratios.
    Model1Fairness,
    /// Model 2 PF sum rates.
    Model2SumRate,
    /// Model 2 Jain index over normalized rates.
    Model2Fairness,
}

impl Figure {
    pub fn from_number(n: u8) -> Option<Self> {
        use Figure::*;
        Some(match n {
            1 => RateRegion,
            2 => RateThresholds,
            3 => SnrThresholds,
            4 => NormalizedRatePdf,
            5 => SumCapacity,
            6 => CapacityRatio,
            7 => Model1SumRate,
            8 => Model1Fairness,
            9 => Model2SumRate,
            10 => Model2Fairness,
            _ => return None,
        })
    }
}

pub fn render(fig: Figure, unit: Unit) -> Result<String> {
    match fig {
        Figure::RateRegion => rate_region(unit),
        Figure::RateThresholds => pf_threshold_table(true, unit),
        Figure::SnrThresholds => pf_threshold_table(false, unit),
        Figure::NormalizedRatePdf => normalized_pdf(),
        Figure::SumCapacity | Figure::CapacityRatio => {
            let counts: Vec<usize> = (1..=GAP_MAX_USERS).collect();
            Ok(gap_table_csv(&gap_vs_full_feedback(&GAP_SNRS_DB, &counts, unit)?))
        }
        Figure::Model1SumRate | Figure::Model1Fairness => network_table(NetworkModel::Model1, true, unit),
        Figure::Model2SumRate | Figure::Model2Fairness => network_table(NetworkModel::Model2, false, unit),
    }
}

pub fn fig1_models() -> Result<Vec<ChannelModel>> {
    Ok(vec![ChannelModel::rayleigh_db(10.0)?, ChannelModel::rayleigh_db(0.0)?])
}

fn rate_region(unit: Unit) -> Result<String> {
    let models = fig1_models()?;
    let grid = default_weight_grid(101);
    let seld = sweep_region(&models, Scheme::Seld, &SequenceStrategy::AscendingMeanSnr, &grid)?;
    let asc = sweep_region(&models, Scheme::Swid, &SequenceStrategy::AscendingMeanSnr, &grid)?;
    let desc = sweep_region(&models, Scheme::Swid, &SequenceStrategy::DescendingMeanSnr, &grid)?;
    region_csv(&seld, &[asc, desc], unit)
}

fn pf_threshold_table(rate_domain: bool, unit: Unit) -> Result<String> {
    let mut out = if rate_domain {
        String::from("mean_snr_db,users_after,threshold_rate,normalized,unit\n")
    } else {
        String::from("mean_snr_db,users_after,threshold_snr,normalized\n")
    };
    for &db in &THRESHOLD_SNRS_DB {
        let ch = ChannelModel::rayleigh_db(db)?;
        let mean = ch.mean_rate()?;
        for n in 0..=MAX_USERS_AFTER {
            let r = pf_threshold(&ch, n)?;
            if rate_domain {
                out.push_str(&format!(
                    "{db},{n},{},{},{}\n",
                    convert_units(r, Unit::Nats, unit),
                    r / mean,
                    unit.as_str()
                ));
            } else {
                let g = r.exp_m1();
                out.push_str(&format!("{db},{n},{g},{}\n", g / ch.mean_snr()));
            }
        }
    }
    Ok(out)
}

fn normalized_pdf() -> Result<String> {
    let mut out = String::from("mean_snr_db,x,pdf\n");
    for &db in &THRESHOLD_SNRS_DB {
        let ch = ChannelModel::rayleigh_db(db)?;
        let mean = ch.mean_rate()?;
        for k in 0..=500 {
            let x = k as f64 * 0.01;
            out.push_str(&format!("{db},{x},{}\n", mean * ch.rate_pdf(x * mean)));
        }
    }
    Ok(out)
}

struct NetworkRow {
    users: usize,
    /// Indexed by user id − 1.
    models: Vec<ChannelModel>,
    scheme: Scheme,
    sequence: &'static str,
    objective: &'static str,
    report: PerformanceReport,
}

fn network_table(model: NetworkModel, with_max_sum: bool, unit: Unit) -> Result<String> {
    let mut rows = Vec::new();
    for m in 1..=NETWORK_MAX_USERS {
        let models = build_network(&NetworkSpec {
            users: m,
            model,
            snr_min: crate::channel::db_to_linear(NETWORK_SNR_MIN_DB),
            snr_max: crate::channel::db_to_linear(NETWORK_SNR_MAX_DB),
        })?;
        let mut objectives = vec![("proportional_fair", Objective::ProportionalFair)];
        if with_max_sum {
            objectives.insert(0, ("max_sum", Objective::max_sum(m)));
        }
        for (label, objective) in &objectives {
            let seld = match objective {
                Objective::ProportionalFair => seld_proportional_fair(&models)?,
                Objective::WeightedSum(w) => seld_rates(&models, w)?,
            };
            rows.push(NetworkRow {
                users: m,
                models: models.clone(),
                scheme: Scheme::Seld,
                sequence: "none",
                objective: label,
                report: seld.report,
            });
            for (seq_label, seq) in [
                ("ascending", SequenceStrategy::AscendingMeanSnr),
                ("descending", SequenceStrategy::DescendingMeanSnr),
            ] {
                let order = order_users(&models, &seq)?;
                let users = order
                    .iter()
                    .map(|&i| User {
                        id: i as u32 + 1,
                        channel: models[i],
                    })
                    .collect();
                let scenario = Scenario::new(users, vec![1.0; m], 0)?;
                let result = optimize(&scenario, objective)?;
                rows.push(NetworkRow {
                    users: m,
                    models: models.clone(),
                    scheme: Scheme::Swid,
                    sequence: seq_label,
                    objective: label,
                    report: result.report,
                });
            }
        }
    }
    let mut out = String::from("M,scheme,sequence,objective,sum_rate,jain_access,jain_mud_gain,unit\n");
    for row in rows {
        let channels: Vec<ChannelModel> =
            row.report.users.iter().map(|u| row.models[u.user_id as usize - 1]).collect();
        let jain_access = jain_index(&row.report.access_ratios())?;
        let jain_mud = jain_index(&mud_gain_metric(&row.report, &channels)?)?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.users,
            row.scheme.as_str(),
            row.sequence,
            row.objective,
            convert_units(row.report.sum_rate, Unit::Nats, unit),
            jain_access,
            jain_mud,
            unit.as_str()
        ));
    }
    Ok(out)
}
