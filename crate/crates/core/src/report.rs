//! Per-user performance reports shared by the analytic, benchmark and
//! Monte Carlo paths, with their JSON and CSV encodings.

use serde::{Deserialize, Serialize};

use crate::metrics::{convert_units, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Analytic,
    MonteCarlo,
    #[serde(rename = "Analytic-SelD")]
    AnalyticSeld,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Analytic => "Analytic",
            Provenance::MonteCarlo => "MonteCarlo",
            Provenance::AnalyticSeld => "Analytic-SelD",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserPerformance {
    pub user_id: u32,
    /// 1-based position in the feedback sequence.
    pub position: usize,
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(rename = "AR")]
    pub access_ratio: f64,
    #[serde(rename = "Rc")]
    pub conditional_rate: Option<f64>,
    #[serde(rename = "P")]
    pub success_probability: Option<f64>,
    #[serde(rename = "R_se", default, skip_serializing_if = "Option::is_none")]
    pub rate_se: Option<f64>,
    #[serde(rename = "AR_se", default, skip_serializing_if = "Option::is_none")]
    pub access_ratio_se: Option<f64>,
    #[serde(rename = "Rc_se", default, skip_serializing_if = "Option::is_none")]
    pub conditional_rate_se: Option<f64>,
    #[serde(rename = "P_se", default, skip_serializing_if = "Option::is_none")]
    pub success_probability_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub provenance: Provenance,
    pub unit: Unit,
    pub users: Vec<UserPerformance>,
    pub sum_rate: f64,
    pub weighted_sum: f64,
    pub product_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sum_rate_se: Option<f64>,
}

impl PerformanceReport {
    /// Builds a report in nats and fills in the aggregates. `weights` is
    /// aligned with `users`.
    pub fn new(users: Vec<UserPerformance>, weights: &[f64], provenance: Provenance) -> Self {
        let sum_rate = users.iter().map(|u| u.rate).sum();
        let weighted_sum = users.iter().zip(weights).map(|(u, w)| u.rate * w).sum();
        let product_rate = users.iter().map(|u| u.rate).product();
        Self {
            provenance,
            unit: Unit::Nats,
            users,
            sum_rate,
            weighted_sum,
            product_rate,
            sum_rate_se: None,
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.rate).collect()
    }

    pub fn access_ratios(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.access_ratio).collect()
    }

    /// Copy with every rate-valued field expressed in `unit`.
    pub fn in_unit(&self, unit: Unit) -> Self {
        let factor = convert_units(1.0, self.unit, unit);
        let scale = |x: f64| x * factor;
        let mut out = self.clone();
        out.unit = unit;
        for u in &mut out.users {
            u.rate = scale(u.rate);
            u.conditional_rate = u.conditional_rate.map(scale);
            u.rate_se = u.rate_se.map(scale);
            u.conditional_rate_se = u.conditional_rate_se.map(scale);
        }
        out.sum_rate = scale(out.sum_rate);
        out.weighted_sum = scale(out.weighted_sum);
        out.product_rate *= factor.powi(out.users.len() as i32);
        out.sum_rate_se = out.sum_rate_se.map(scale);
        out
    }

    /// One row per user, then a `total` footer row carrying the aggregates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_id,position,R,AR,Rc,P,sum_rate,weighted_sum,provenance,unit\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for u in &self.users {
            out.push_str(&format!(
                "{},{},{},{},{},{},,,{},{}\n",
                u.user_id,
                u.position,
                u.rate,
                u.access_ratio,
                opt(u.conditional_rate),
                opt(u.success_probability),
                self.provenance.as_str(),
                self.unit.as_str(),
            ));
        }
        let total_ar: f64 = self.users.iter().map(|u| u.access_ratio).sum();
        out.push_str(&format!(
            "total,,{},{},,,{},{},{},{}\n",
            self.sum_rate,
            total_ar,
            self.sum_rate,
            self.weighted_sum,
            self.provenance.as_str(),
            self.unit.as_str(),
        ));
        out
    }
}
