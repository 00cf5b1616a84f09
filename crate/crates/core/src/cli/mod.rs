//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 when
//! a numerical routine fails (quadrature or root finding).

mod reproduce;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analytics::ThresholdVector;
use crate::config::{ObjectiveKind, ResolvedScenario};
use crate::error::Error;
use crate::metrics::{fairness_summary, gap_table_csv, gap_vs_full_feedback, mud_gain_metric, FairnessSummary, Unit};
use crate::optimize::{optimize, OptimizationResultWire};
use crate::region::{all_sequences, default_weight_grid, sweep_region, timeshare_hull, RegionCurve, Scheme, SequenceStrategy};
use crate::report::PerformanceReport;
use crate::seld::{seld_proportional_fair, seld_report};
use crate::sim::simulate;

pub use reproduce::Figure;

#[derive(Debug, Parser)]
#[command(name = "swidopt", version, about = "Switched-diversity scheduling: thresholds, rate regions, simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; written atomically. Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Rate unit for outputs: nats or bits.
    #[arg(long, global = true, default_value = "nats")]
    pub unit: Unit,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "SWIDOPT_THREADS")]
    pub threads: Option<usize>,
    /// Emit the preset grid for a figure (fig1 .. fig10) instead of using --config.
    #[arg(long, global = true)]
    pub reproduce: Option<Figure>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize per-user thresholds for the scenario objective.
    Optimize,
    /// Sweep rate-region boundaries for both schemes.
    Region {
        /// Number of points in the two-user weight grid.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Sweep every feedback order (at most 5 users).
        #[arg(long)]
        all_sequences: bool,
    },
    /// Monte Carlo run of the flag protocol.
    Simulate {
        /// Thresholds from a previous `optimize` run; optimizes inline if absent.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        units: Option<u64>,
        #[arg(long)]
        batches: Option<u64>,
    },
    /// Full-feedback selection benchmark for the scenario.
    Benchmark,
    /// Fairness report for the scenario, or the capacity gap table.
    Report {
        /// Capacity gap against full feedback for i.i.d. users.
        #[arg(long)]
        gap: bool,
        /// Mean SNRs in dB for --gap.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        snr: Vec<f64>,
        /// User counts for --gap: `a..b` (inclusive) or a comma list.
        #[arg(long)]
        m: Option<String>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    match out {
        Some(path) => write_atomic(path, contents)?,
        None => std::io::stdout().write_all(contents.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn wants_csv(out: Option<&Path>) -> bool {
    out.and_then(|p| p.extension()).is_some_and(|e| e == "csv")
}

/// `"1..20"` (inclusive) or `"2,4,8"`.
pub fn parse_user_counts(text: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Usage(format!("cannot parse user counts {text:?}"));
    let counts: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<CliResult<_>>()?
    };
    if counts.is_empty() || counts.contains(&0) {
        return Err(CliError::Usage("user counts must be >= 1".into()));
    }
    Ok(counts)
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: u8 = s
            .strip_prefix("fig")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("expected fig1 .. fig10, got {s:?}"))?;
        Figure::from_number(n).ok_or_else(|| format!("expected fig1 .. fig10, got {s:?}"))
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.out.as_deref();
    if let Some(fig) = cli.reproduce {
        let body = reproduce::render(fig, cli.unit)?;
        return emit(out, &body);
    }
    let scenario = load(&cli)?;
    let body = match &cli.command {
        Command::Optimize => cmd_optimize(&scenario, cli.unit, out)?,
        Command::Region { grid, all_sequences } => cmd_region(&scenario, *grid, *all_sequences, cli.unit)?,
        Command::Simulate {
            thresholds,
            units,
            batches,
        } => cmd_simulate(&scenario, thresholds.as_deref(), *units, *batches, cli.unit, out)?,
        Command::Benchmark => cmd_benchmark(&scenario, cli.unit, out)?,
        Command::Report { gap, snr, m } => cmd_report(scenario.as_ref(), *gap, snr, m.as_deref(), cli.unit, out)?,
    };
    emit(out, &body)
}

fn load(cli: &Cli) -> CliResult<Option<ResolvedScenario>> {
    let needs_config = !matches!(cli.command, Command::Report { gap: true, .. });
    match &cli.config {
        Some(path) => {
            let mut r = ResolvedScenario::load(path)?;
            if let Some(seed) = cli.seed {
                r = r.with_seed(seed);
            }
            Ok(Some(r))
        }
        None if needs_config => Err(CliError::Usage("--config is required (or use --reproduce)".into())),
        None => Ok(None),
    }
}

fn require(s: &Option<ResolvedScenario>) -> CliResult<&ResolvedScenario> {
    s.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))
}

fn objective_label(kind: ObjectiveKind) -> &'static str {
    match kind {
        ObjectiveKind::WeightedSum => "weighted_sum",
        ObjectiveKind::ProportionalFair => "proportional_fair",
        ObjectiveKind::MaxSum => "max_sum",
    }
}

fn report_body(report: &PerformanceReport, unit: Unit, out: Option<&Path>) -> CliResult<String> {
    let report = report.in_unit(unit);
    if wants_csv(out) {
        Ok(report.to_csv())
    } else {
        to_json(&report)
    }
}

fn cmd_optimize(s: &Option<ResolvedScenario>, unit: Unit, out: Option<&Path>) -> CliResult<String> {
    let s = require(s)?;
    let result = optimize(&s.scenario, &s.objective)?;
    if wants_csv(out) {
        return report_body(&result.report, unit, out);
    }
    let mut wire = result.to_wire(unit);
    wire.objective_kind = objective_label(s.objective_kind).to_string();
    to_json(&wire)
}

/// Selection rows first, then the switched curves with `on_hull` marking
/// the time-sharing hull across all switched sequences.
pub fn region_csv(seld: &RegionCurve, swid: &[RegionCurve], unit: Unit) -> crate::Result<String> {
    let hull = timeshare_hull(swid)?;
    let combined = RegionCurve {
        points: seld.points.iter().cloned().chain(hull.points).collect(),
        hull: Vec::new(),
    };
    Ok(combined.to_csv(unit))
}

fn cmd_region(s: &Option<ResolvedScenario>, steps: usize, enumerate: bool, unit: Unit) -> CliResult<String> {
    let s = require(s)?;
    let m = s.models.len();
    let grid = match (&s.grid, m) {
        (Some(g), _) => g.clone(),
        (None, 2) => default_weight_grid(steps),
        (None, _) => {
            let mut rays: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            rays.push(vec![1.0; m]);
            rays
        }
    };
    let sequences = if enumerate {
        all_sequences(m)?.into_iter().map(SequenceStrategy::Given).collect()
    } else {
        vec![s.sequence.clone()]
    };
    let seld = sweep_region(&s.models, Scheme::Seld, &s.sequence, &grid)?;
    let swid = sequences
        .iter()
        .map(|seq| sweep_region(&s.models, Scheme::Swid, seq, &grid))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(region_csv(&seld, &swid, unit)?)
}

fn read_thresholds(path: &Path) -> CliResult<ThresholdVector> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let wire: OptimizationResultWire = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("malformed thresholds file: {e}")))?;
    Ok(wire.thresholds()?)
}

fn cmd_simulate(
    s: &Option<ResolvedScenario>,
    thresholds: Option<&Path>,
    units: Option<u64>,
    batches: Option<u64>,
    unit: Unit,
    out: Option<&Path>,
) -> CliResult<String> {
    let s = require(s)?;
    let thresholds = match thresholds {
        Some(path) => read_thresholds(path)?,
        None => optimize(&s.scenario, &s.objective)?.thresholds,
    };
    let mut config = s.sim.clone();
    if let Some(u) = units {
        config.resource_units = u;
    }
    if let Some(b) = batches {
        config.batches = b;
    }
    let outcome = simulate(&s.scenario, &thresholds, &config)?;
    if wants_csv(out) {
        return report_body(&outcome.report, unit, out);
    }
    to_json(&outcome.to_output(unit))
}

fn cmd_benchmark(s: &Option<ResolvedScenario>, unit: Unit, out: Option<&Path>) -> CliResult<String> {
    let s = require(s)?;
    let seld = match s.objective_kind {
        ObjectiveKind::ProportionalFair => seld_proportional_fair(&s.scenario.channels())?,
        _ => seld_report(&s.scenario)?,
    };
    report_body(&seld.report, unit, out)
}

#[derive(Serialize)]
struct ScenarioReport {
    objective_kind: &'static str,
    report: PerformanceReport,
    fairness: FairnessSummary,
    mud_gain: Vec<f64>,
}

fn cmd_report(
    s: Option<&ResolvedScenario>,
    gap: bool,
    snr: &[f64],
    m: Option<&str>,
    unit: Unit,
    out: Option<&Path>,
) -> CliResult<String> {
    if gap {
        let snrs = if snr.is_empty() { vec![0.0, 6.0, 12.0, 18.0] } else { snr.to_vec() };
        let counts = parse_user_counts(m.unwrap_or("1..20"))?;
        let rows = gap_vs_full_feedback(&snrs, &counts, unit)?;
        return if out.and_then(|p| p.extension()).is_some_and(|e| e == "json") {
            to_json(&rows)
        } else {
            Ok(gap_table_csv(&rows))
        };
    }
    let s = s.ok_or_else(|| CliError::Usage("--config is required without --gap".into()))?;
    let result = optimize(&s.scenario, &s.objective)?;
    if wants_csv(out) {
        return report_body(&result.report, unit, out);
    }
    let channels = s.scenario.channels();
    let body = ScenarioReport {
        objective_kind: objective_label(s.objective_kind),
        fairness: fairness_summary(&result.report, &channels)?,
        mud_gain: mud_gain_metric(&result.report, &channels)?,
        report: result.report.in_unit(unit),
    };
    to_json(&body)
}
