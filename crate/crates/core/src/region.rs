//! Achievable rate regions: weight sweeps for both schemes, feedback
//! sequence orderings and time-sharing hulls.
//!
//! Rates in a [`RegionPoint`] are indexed by the user's position in the
//! model list, not by its place in the feedback sequence, so curves built
//! with different sequences can be compared directly.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::switched_stats;
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::metrics::{convert_units, Unit};
use crate::optimize::weighted_sum_thresholds;
use crate::seld::seld_rates_for;

/// Exhaustive sequence enumeration is capped at this many users.
pub const MAX_ENUMERATED_USERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceStrategy {
    AscendingMeanSnr,
    DescendingMeanSnr,
    /// Feedback order as 0-based indices into the model list.
    Given(Vec<usize>),
}

impl fmt::Display for SequenceStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceStrategy::AscendingMeanSnr => f.write_str("ascending"),
            SequenceStrategy::DescendingMeanSnr => f.write_str("descending"),
            SequenceStrategy::Given(p) => {
                let parts: Vec<String> = p.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "given:{}", parts.join("-"))
            }
        }
    }
}

/// Checks that `perm` is a bijection on `0..users`.
pub fn check_permutation(perm: &[usize], users: usize) -> Result<()> {
    if perm.len() != users {
        return Err(Error::InvalidPermutation(format!(
            "expected {users} entries, got {}",
            perm.len()
        )));
    }
    let mut seen = vec![false; users];
    for &i in perm {
        if i >= users || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidPermutation(format!(
                "{perm:?} is not a permutation of 0..{users}"
            )));
        }
    }
    Ok(())
}

/// Feedback order as 0-based indices. Sorting is stable, so users with
/// equal mean SNR keep their listed order.
pub fn order_users(models: &[ChannelModel], strategy: &SequenceStrategy) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..models.len()).collect();
    match strategy {
        SequenceStrategy::AscendingMeanSnr => {
            order.sort_by(|&a, &b| models[a].mean_snr().total_cmp(&models[b].mean_snr()));
        }
        SequenceStrategy::DescendingMeanSnr => {
            order.sort_by(|&a, &b| models[b].mean_snr().total_cmp(&models[a].mean_snr()));
        }
        SequenceStrategy::Given(perm) => {
            check_permutation(perm, models.len())?;
            order.clone_from(perm);
        }
    }
    Ok(order)
}

/// Every feedback order of `users` users.
pub fn all_sequences(users: usize) -> Result<Vec<Vec<usize>>> {
    if users > MAX_ENUMERATED_USERS {
        return Err(Error::InvalidConfig(format!(
            "sequence enumeration is limited to {MAX_ENUMERATED_USERS} users, got {users}"
        )));
    }
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                extend(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut vec![false; users], &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "MUSwiD")]
    Swid,
    #[serde(rename = "MUSelD")]
    Seld,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Swid => "MUSwiD",
            Scheme::Seld => "MUSelD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub weights: Vec<f64>,
    /// Nats, indexed like the model list.
    pub rates: Vec<f64>,
    pub scheme: Scheme,
    pub sequence: String,
    pub on_hull: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCurve {
    pub points: Vec<RegionPoint>,
    /// Upper-right hull vertices. For two users they run from the largest
    /// `R_2` to the largest `R_1`.
    pub hull: Vec<Vec<f64>>,
}

/// `μ = (cos²θ, sin²θ)` for `steps` values of θ evenly covering `[0, π/2]`,
/// with the end points written exactly as `(1, 0)` and `(0, 1)`.
pub fn default_weight_grid(steps: usize) -> Vec<Vec<f64>> {
    let steps = steps.max(2);
    (0..steps)
        .map(|k| {
            if k == 0 {
                vec![1.0, 0.0]
            } else if k == steps - 1 {
                vec![0.0, 1.0]
            } else {
                let theta = std::f64::consts::FRAC_PI_2 * k as f64 / (steps - 1) as f64;
                let c = theta.cos();
                let s = theta.sin();
                vec![c * c, s * s]
            }
        })
        .collect()
}

fn swid_point(models: &[ChannelModel], order: &[usize], weights: &[f64]) -> Result<Vec<f64>> {
    let seq_models: Vec<ChannelModel> = order.iter().map(|&i| models[i]).collect();
    let seq_weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    let (thresholds, _) = weighted_sum_thresholds(&seq_models, &seq_weights)?;
    let stats = switched_stats(&seq_models, &thresholds)?;
    let mut rates = vec![0.0; models.len()];
    for (s, &i) in stats.iter().zip(order) {
        rates[i] = s.rate;
    }
    Ok(rates)
}

/// Zero-weight users are never selected and are left out of the integral.
fn seld_point(models: &[ChannelModel], weights: &[f64]) -> Result<Vec<f64>> {
    let active: Vec<usize> = (0..models.len()).filter(|&i| weights[i] > 0.0).collect();
    let sub_models: Vec<ChannelModel> = active.iter().map(|&i| models[i]).collect();
    let sub_weights: Vec<f64> = active.iter().map(|&i| weights[i]).collect();
    let pairs = seld_rates_for(&sub_models, &sub_weights)?;
    let mut rates = vec![0.0; models.len()];
    for (&(r, _), &i) in pairs.iter().zip(&active) {
        rates[i] = r;
    }
    Ok(rates)
}

/// One boundary point per weight vector, computed in parallel and kept in
/// grid order. The sequence is ignored for the selection scheme.
pub fn sweep_region(
    models: &[ChannelModel],
    scheme: Scheme,
    sequence: &SequenceStrategy,
    grid: &[Vec<f64>],
) -> Result<RegionCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("weight grid is empty".into()));
    }
    if models.is_empty() {
        return Err(Error::InvalidConfig("need at least one user".into()));
    }
    for w in grid {
        if w.len() != models.len() {
            return Err(Error::LengthMismatch {
                what: "grid weights",
                expected: models.len(),
                actual: w.len(),
            });
        }
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || w.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidWeights(format!("bad grid weight vector {w:?}")));
        }
    }
    let order = order_users(models, sequence)?;
    let label = match scheme {
        Scheme::Swid => sequence.to_string(),
        Scheme::Seld => "none".to_string(),
    };
    let points = grid
        .par_iter()
        .map(|w| {
            let rates = match scheme {
                Scheme::Swid => swid_point(models, &order, w)?,
                Scheme::Seld => seld_point(models, w)?,
            };
            Ok(RegionPoint {
                weights: w.clone(),
                rates,
                scheme,
                sequence: label.clone(),
                on_hull: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(with_hull(points))
}

/// Upper-right hull of the union of all curves' points. Hull edges joining
/// points from different sequences are time-sharing segments.
pub fn timeshare_hull(curves: &[RegionCurve]) -> Result<RegionCurve> {
    let points: Vec<RegionPoint> = curves.iter().flat_map(|c| c.points.iter().cloned()).collect();
    if points.is_empty() {
        return Ok(RegionCurve {
            points,
            hull: Vec::new(),
        });
    }
    let dim = points[0].rates.len();
    if points.iter().any(|p| p.rates.len() != dim) {
        return Err(Error::InvalidConfig("curves cover different user sets".into()));
    }
    Ok(with_hull(points))
}

fn with_hull(mut points: Vec<RegionPoint>) -> RegionCurve {
    let rates: Vec<Vec<f64>> = points.iter().map(|p| p.rates.clone()).collect();
    let hull = if rates[0].len() == 2 {
        let pts: Vec<[f64; 2]> = rates.iter().map(|r| [r[0], r[1]]).collect();
        upper_right_hull_2d(&pts).into_iter().map(|p| p.to_vec()).collect()
    } else {
        support_hull(&points)
    };
    for p in &mut points {
        p.on_hull = hull.iter().any(|h| h == &p.rates);
    }
    RegionCurve { points, hull }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Part of the upper convex hull running from the highest point (ties:
/// rightmost) to the rightmost point (ties: highest).
pub fn upper_right_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(b[1].total_cmp(&a[1])));
    sorted.dedup();
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in sorted {
        if let Some(last) = upper.last() {
            if last[0] == p[0] {
                // Same abscissa: the first one seen is the highest.
                continue;
            }
        }
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) >= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    let top = upper
        .iter()
        .enumerate()
        .max_by(|a, b| a.1[1].total_cmp(&b.1[1]).then(a.1[0].total_cmp(&b.1[0])))
        .map(|(i, _)| i)
        .unwrap_or(0);
    upper.split_off(top)
}

/// Points that maximize `μ·R` for some weight vector of the sweep.
fn support_hull(points: &[RegionPoint]) -> Vec<Vec<f64>> {
    let mut hull: Vec<Vec<f64>> = Vec::new();
    for w in points.iter().map(|p| &p.weights) {
        let best = points
            .iter()
            .max_by(|a, b| dot(w, &a.rates).total_cmp(&dot(w, &b.rates)))
            .expect("non-empty");
        if !hull.contains(&best.rates) {
            hull.push(best.rates.clone());
        }
    }
    hull
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl RegionCurve {
    /// Whether `rates` lies in the region closed under time sharing and
    /// rate reduction, up to `tol`.
    ///
    /// Two users: interpolates the hull polyline. More users: the point
    /// must not beat the curve's best weighted sum for any swept weight.
    pub fn weakly_contains(&self, rates: &[f64], tol: f64) -> bool {
        if self.hull.is_empty() {
            return false;
        }
        if rates.len() == 2 && self.hull[0].len() == 2 {
            return below_polyline(&self.hull, rates[0], rates[1], tol);
        }
        self.points.iter().all(|p| {
            let best = self
                .points
                .iter()
                .map(|q| dot(&p.weights, &q.rates))
                .fold(f64::NEG_INFINITY, f64::max);
            dot(&p.weights, rates) <= best + tol
        })
    }

    /// Every point of `other` is weakly inside this curve's region.
    pub fn dominates(&self, other: &RegionCurve, tol: f64) -> bool {
        other.points.iter().all(|p| self.weakly_contains(&p.rates, tol))
    }

    /// Scheme, sequence, weights, rates, hull flag, unit. Rates are written
    /// in `unit`.
    pub fn to_csv(&self, unit: Unit) -> String {
        let m = self.points.first().map_or(0, |p| p.rates.len());
        let mut header = vec!["scheme".to_string(), "sequence".to_string()];
        header.extend((1..=m).map(|i| format!("mu_{i}")));
        header.extend((1..=m).map(|i| format!("R_{i}")));
        header.push("on_hull".into());
        header.push("unit".into());
        let mut out = header.join(",");
        out.push('\n');
        let scale = convert_units(1.0, Unit::Nats, unit);
        for p in &self.points {
            let mut row = vec![p.scheme.as_str().to_string(), p.sequence.clone()];
            row.extend(p.weights.iter().map(|w| w.to_string()));
            row.extend(p.rates.iter().map(|r| (r * scale).to_string()));
            row.push(if p.on_hull { "1" } else { "0" }.into());
            row.push(unit.as_str().into());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn below_polyline(hull: &[Vec<f64>], x: f64, y: f64, tol: f64) -> bool {
    let first = &hull[0];
    let last = &hull[hull.len() - 1];
    if x <= first[0] + tol {
        return y <= first[1] + tol;
    }
    if x > last[0] + tol {
        return false;
    }
    if x >= last[0] {
        return y <= last[1] + tol;
    }
    for seg in hull.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        if x >= a[0] && x <= b[0] {
            let t = if b[0] > a[0] { (x - a[0]) / (b[0] - a[0]) } else { 1.0 };
            let edge = a[1] + t * (b[1] - a[1]);
            return y <= edge + tol;
        }
    }
    false
}
