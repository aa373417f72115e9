//! Capacity-scaling sweep: builds the relay system for every (n, seed, mode)
//! cell, accounts scheduled airtime, realizes contention around the bottleneck
//! under CSMA, and emits deterministic CSV plus JSON artifacts.
//!
//! Determinism contract: `sweep.csv` depends only on the configuration, never
//! on wall-clock or worker count, so a rerun is byte-identical. Runtimes and
//! failure details go to `sweep.json` only.

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use capcore::{
    enumerate_family, fit_rates, generate_network, min_flow_rate, sample_pairs,
    sample_pairs_permutation, simulate_ipcs, tdma_throughput, two_stage_schedule,
    build_highway_system, BackoffRates, Error, FamilySpec, FlowReport, Link, LinkClass,
    RoutePlan, ScheduleParams, SensingMode, SimOptions, TwoStageSchedule, ENUM_CAP,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{mode_label, ExperimentConfig, Pairing};

/// Keeps the pair-sampling stream independent of the placement stream.
const PAIR_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Demanded slot share is shaved by this much so fitted rates stay strictly
/// inside the capacity region.
const TARGET_HEADROOM: f64 = 1e-3;

/// Convergence tolerance for exact rate fitting inside a sweep row.
const FIT_TOL: f64 = 1e-4;

/// How the bottleneck neighbourhood's throughput was realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    /// Sensing component was small enough to fit rates on the exact chain.
    Exact,
    /// Contention ball simulated under idealized sensing.
    Simulated,
}

impl RateMethod {
    fn label(self) -> &'static str {
        match self {
            RateMethod::Exact => "exact",
            RateMethod::Simulated => "simulated",
        }
    }
}

/// One sweep cell. Optional fields are absent on failed rows.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub n: u64,
    pub seed: u64,
    pub mode: &'static str,
    /// "ok" or a short failure kind.
    pub status: String,
    pub method: Option<RateMethod>,
    pub min_flow_rate: Option<f64>,
    /// Worst rate under pure slot entitlements, before contention realization.
    pub scheduled_rate: Option<f64>,
    pub max_relay_load: Option<f64>,
    pub percolation_retries: u32,
    pub bottleneck_class: Option<&'static str>,
    pub bottleneck_pair: Option<usize>,
    /// Wall-clock seconds for this row (JSON only; excluded from the CSV).
    pub runtime_s: f64,
    /// Failure detail (JSON only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SweepRow {
    fn failed(n: u64, seed: u64, mode: SensingMode, retries: u32, err: &Error, t0: Instant) -> Self {
        SweepRow {
            n,
            seed,
            mode: mode_label(mode),
            status: failure_kind(err).to_string(),
            method: None,
            min_flow_rate: None,
            scheduled_rate: None,
            max_relay_load: None,
            percolation_retries: retries,
            bottleneck_class: None,
            bottleneck_pair: None,
            runtime_s: t0.elapsed().as_secs_f64(),
            message: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Median normalized rates for one (mode, n) cell.
#[derive(Clone, Debug, Serialize)]
pub struct MedianPoint {
    pub n: u64,
    pub rows: usize,
    pub median_rate: f64,
    pub median_rate_sqrt_n: f64,
    pub median_rate_sqrt_n_log_n: f64,
}

/// Scaling summary for one sensing mode.
#[derive(Clone, Debug, Serialize)]
pub struct ModeSummary {
    pub mode: &'static str,
    pub ok_rows: usize,
    pub failed_rows: usize,
    pub points: Vec<MedianPoint>,
    /// Least-squares slope of `log(median rate)` against `log n`.
    pub slope: Option<f64>,
    /// Fraction of rows with a backbone-stage bottleneck, over ok rows.
    pub backbone_bottleneck_share: Option<f64>,
}

/// Everything the sweep produced.
#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<ModeSummary>,
}

/// Runs the full grid and returns rows in (n, seed, mode) order.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<SweepOutcome> {
    let mut tasks = Vec::new();
    for &n in &cfg.n {
        for &seed in &cfg.seeds {
            for (mi, &mode) in cfg.modes.iter().enumerate() {
                tasks.push((n, seed, mode, mi));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("cannot build worker pool")?;
    let rows: std::result::Result<Vec<SweepRow>, Error> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, seed, mode, mi)| run_row(cfg, n, seed, mode, mi))
            .collect()
    });
    let rows = rows.context("sweep row failed")?;
    if rows.iter().all(|r| !r.is_ok()) {
        // Nothing was built at any size; surface the first failure loudly.
        let detail = rows
            .iter()
            .find_map(|r| r.message.clone())
            .unwrap_or_else(|| "no rows succeeded".into());
        return Err(Error::PercolationFailure {
            orientation: "sweep",
            slab: 0,
        })
        .with_context(|| format!("every sweep row failed to build: {detail}"));
    }
    let summary = summarize(cfg, &rows);
    Ok(SweepOutcome { rows, summary })
}

/// Builds, schedules, and rate-realizes one cell of the sweep grid.
fn run_row(
    cfg: &ExperimentConfig,
    n: u64,
    seed: u64,
    mode: SensingMode,
    mode_index: usize,
) -> std::result::Result<SweepRow, Error> {
    let t0 = Instant::now();
    let nodes = generate_network(n, seed)?;
    let pair_seed = seed ^ PAIR_STREAM_SALT;
    let pairs = match cfg.pairing {
        Pairing::Permutation => sample_pairs_permutation(&nodes, pair_seed)?,
        Pairing::Uniform => sample_pairs(&nodes, pair_seed)?,
    };
    let (system, plan) = match build_highway_system(&nodes, &pairs, &cfg.highway) {
        Ok(v) => v,
        Err(e) if e.is_construction_failure() => {
            return Ok(SweepRow::failed(n, seed, mode, cfg.highway.max_grid_retries, &e, t0))
        }
        Err(e) => return Err(e),
    };
    let retries = doubling_count(cfg.highway.c1, system.params.c1);
    let sched_params = ScheduleParams {
        sensing: mode,
        k_p: cfg.schedule.k_p,
        k_b_min: cfg.schedule.k_b_min,
        delta_p: cfg.schedule.delta_p,
    };
    let schedules = match two_stage_schedule(&plan, &cfg.radio, &sched_params) {
        Ok(v) => v,
        Err(e) if e.is_construction_failure() => {
            return Ok(SweepRow::failed(n, seed, mode, retries, &e, t0))
        }
        Err(e) => return Err(e),
    };
    let report = min_flow_rate(&plan, &schedules, mode)?;
    let (airtime, method) = realize_rates(cfg, &plan, &schedules, &report, mode, n, seed, mode_index)?;

    // Worst delivered rate over pairs once the realized airtime replaces the
    // scheduled entitlement on the bottleneck's stage.
    let mut min_rate = f64::INFINITY;
    let mut bottleneck_pair = 0;
    let mut bottleneck_link = 0;
    for (pair, route) in plan.routes.iter().enumerate() {
        for &l in route {
            let rate = airtime[l] / plan.loads[l];
            if rate < min_rate {
                min_rate = rate;
                bottleneck_pair = pair;
                bottleneck_link = l;
            }
        }
    }
    if !min_rate.is_finite() {
        return Err(Error::InvalidParameter(
            "sweep produced a non-finite flow rate".into(),
        ));
    }
    let class = match plan.links[bottleneck_link].class {
        LinkClass::Backbone => "backbone",
        LinkClass::Peripheral => "peripheral",
    };
    Ok(SweepRow {
        n,
        seed,
        mode: mode_label(mode),
        status: "ok".into(),
        method: Some(method),
        min_flow_rate: Some(min_rate),
        scheduled_rate: Some(report.min_rate),
        max_relay_load: Some(plan.max_backbone_load.max(plan.max_peripheral_load)),
        percolation_retries: retries,
        bottleneck_class: Some(class),
        bottleneck_pair: Some(bottleneck_pair),
        runtime_s: t0.elapsed().as_secs_f64(),
        message: None,
    })
}

/// Scheduled airtime for every link, with the bottleneck link's sensing
/// neighbourhood re-realized under CSMA: exactly (rate fitting on the sensing
/// component) when the component is enumerable, otherwise by simulating the
/// contention ball under idealized sensing.
#[allow(clippy::too_many_arguments)]
fn realize_rates(
    cfg: &ExperimentConfig,
    plan: &RoutePlan,
    schedules: &TwoStageSchedule,
    report: &FlowReport,
    mode: SensingMode,
    n: u64,
    seed: u64,
    mode_index: usize,
) -> std::result::Result<(Vec<f64>, RateMethod), Error> {
    let (share_p, share_b) = mode.stage_shares();
    let air_p = tdma_throughput(&schedules.peripheral)?;
    let air_b = tdma_throughput(&schedules.backbone)?;
    let mut airtime: Vec<f64> = plan
        .links
        .iter()
        .enumerate()
        .map(|(i, link)| match link.class {
            LinkClass::Peripheral => share_p * air_p[i],
            LinkClass::Backbone => share_b * air_b[i],
        })
        .collect();

    let bottleneck_class = plan.links[report.bottleneck_link].class;
    let (r_cs, period, share) = match bottleneck_class {
        LinkClass::Backbone => (
            schedules.r_cs_backbone,
            schedules.backbone.period(),
            share_b,
        ),
        LinkClass::Peripheral => (
            schedules.r_cs_peripheral,
            schedules.peripheral.period(),
            share_p,
        ),
    };
    let stage_air = match bottleneck_class {
        LinkClass::Backbone => &air_b,
        LinkClass::Peripheral => &air_p,
    };
    let stage: Vec<usize> = (0..plan.links.len())
        .filter(|&i| plan.links[i].class == bottleneck_class)
        .collect();
    let slot_share = (1.0 - TARGET_HEADROOM) / period as f64;

    // Contention never hands a link more than its certified slot entitlement:
    // the neighbourhood model omits contenders beyond it, so uncapped airtime
    // would be optimistic and would shuffle the bottleneck between rows.
    let component = sensing_component(plan, &stage, report.bottleneck_link, r_cs, ENUM_CAP + 1);
    if component.len() <= ENUM_CAP {
        let links: Vec<Link> = component.iter().map(|&i| plan.links[i]).collect();
        let family = enumerate_family(&links, &FamilySpec::PairwiseCs { r_cs }, &cfg.radio)?;
        let fit = fit_rates(&family, &vec![slot_share; links.len()], FIT_TOL)?;
        for (k, &li) in component.iter().enumerate() {
            airtime[li] = share * fit.achieved[k].min(stage_air[li]);
        }
        Ok((airtime, RateMethod::Exact))
    } else {
        let ball = contention_ball(
            plan,
            &stage,
            report.bottleneck_link,
            cfg.sweep.ball_radius * r_cs,
            cfg.sweep.ball_cap,
        );
        let links: Vec<Link> = ball.iter().map(|&i| plan.links[i]).collect();
        let nu = cfg.sweep.boost * slot_share / (1.0 - slot_share);
        let rates = BackoffRates::uniform(links.len(), nu)?;
        let opts = SimOptions::summary_only(cfg.sweep_events(), row_seed(n, seed, mode_index));
        let trace = simulate_ipcs(&links, r_cs, &rates, &cfg.radio, &opts)?;
        for (k, &li) in ball.iter().enumerate() {
            airtime[li] = share * trace.per_link_airtime[k].min(stage_air[li]);
        }
        Ok((airtime, RateMethod::Simulated))
    }
}

/// Links of `stage` reachable from `start` through pairwise sensing conflicts
/// (transmitters closer than `r_cs`), stopping once `cap` links are found.
fn sensing_component(
    plan: &RoutePlan,
    stage: &[usize],
    start: usize,
    r_cs: f64,
    cap: usize,
) -> Vec<usize> {
    let mut seen = vec![start];
    let mut frontier = vec![start];
    while let Some(i) = frontier.pop() {
        let ti = plan.links[i].tx;
        for &j in stage {
            if seen.contains(&j) {
                continue;
            }
            if ti.dist(plan.links[j].tx) < r_cs {
                seen.push(j);
                frontier.push(j);
                if seen.len() >= cap {
                    seen.sort_unstable();
                    return seen;
                }
            }
        }
    }
    seen.sort_unstable();
    seen
}

/// Nearest `cap` stage links whose transmitters sit within `radius` of the
/// bottleneck transmitter; the bottleneck link itself always qualifies.
fn contention_ball(
    plan: &RoutePlan,
    stage: &[usize],
    center: usize,
    radius: f64,
    cap: usize,
) -> Vec<usize> {
    let c = plan.links[center].tx;
    let mut by_dist: Vec<(f64, usize)> = stage
        .iter()
        .filter_map(|&i| {
            let d = plan.links[i].tx.dist(c);
            (d <= radius).then_some((d, i))
        })
        .collect();
    by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    by_dist.truncate(cap.max(1));
    let mut ball: Vec<usize> = by_dist.into_iter().map(|(_, i)| i).collect();
    ball.sort_unstable();
    ball
}

/// Deterministic per-row stream for contention simulation.
fn row_seed(n: u64, seed: u64, mode_index: usize) -> u64 {
    let mut z = seed
        ^ n.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((mode_index as u64) << 48);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How many times the cell side was doubled before percolation succeeded.
fn doubling_count(configured_c1: f64, final_c1: f64) -> u32 {
    if final_c1 <= configured_c1 {
        0
    } else {
        (final_c1 / configured_c1).log2().round().max(0.0) as u32
    }
}

fn failure_kind(err: &Error) -> &'static str {
    match err {
        Error::PercolationFailure { .. } => "percolation",
        Error::AssociationFailure { .. } => "association",
        Error::MissingJunction { .. } => "missing-junction",
        Error::CertificationFailure { .. } => "certification",
        _ => "error",
    }
}

/// Twelve-significant-digit scientific notation; the sweep CSV's only float
/// format, chosen so reruns are byte-identical.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Renders the deterministic CSV (fixed column set, no runtimes).
pub fn render_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "n,seed,mode,status,method,min_flow_rate,scheduled_rate,rate_sqrt_n,\
         rate_sqrt_n_log_n,max_relay_load,percolation_retries,bottleneck_class\n",
    );
    for row in rows {
        let (method, rate, scheduled, sqrt_n, sqrt_n_log_n, load, class) = match row.min_flow_rate
        {
            Some(rate) => {
                let nf = row.n as f64;
                (
                    row.method.map(RateMethod::label).unwrap_or(""),
                    sig12(rate),
                    row.scheduled_rate.map(sig12).unwrap_or_default(),
                    sig12(rate * nf.sqrt()),
                    sig12(rate * (nf * nf.ln()).sqrt()),
                    format!("{}", row.max_relay_load.unwrap_or(0.0)),
                    row.bottleneck_class.unwrap_or(""),
                )
            }
            None => (
                "",
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "",
            ),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.n,
            row.seed,
            row.mode,
            row.status,
            method,
            rate,
            scheduled,
            sqrt_n,
            sqrt_n_log_n,
            load,
            row.percolation_retries,
            class,
        );
    }
    out
}

/// Writes sweep.csv, sweep.json, and sweep_summary.json into the out dir.
pub fn write_artifacts(cfg: &ExperimentConfig, outcome: &SweepOutcome) -> Result<()> {
    cfg.prepare_out_dir()?;
    let csv_path = cfg.out_dir.join("sweep.csv");
    fs::write(&csv_path, render_csv(&outcome.rows))
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    let json_path = cfg.out_dir.join("sweep.json");
    fs::write(&json_path, serde_json::to_string_pretty(&outcome)?)
        .with_context(|| format!("cannot write {}", json_path.display()))?;
    let summary_path = cfg.out_dir.join("sweep_summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&outcome.summary)?)
        .with_context(|| format!("cannot write {}", summary_path.display()))?;
    Ok(())
}

/// Per-mode medians, log-log slope, and bottleneck mix.
fn summarize(cfg: &ExperimentConfig, rows: &[SweepRow]) -> Vec<ModeSummary> {
    cfg.modes
        .iter()
        .map(|&mode| {
            let label = mode_label(mode);
            let mode_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.mode == label).collect();
            let ok: Vec<&&SweepRow> = mode_rows.iter().filter(|r| r.is_ok()).collect();
            let mut points = Vec::new();
            for &n in &cfg.n {
                let rates: Vec<f64> = ok
                    .iter()
                    .filter(|r| r.n == n)
                    .filter_map(|r| r.min_flow_rate)
                    .collect();
                if rates.is_empty() {
                    continue;
                }
                let m = median(&rates);
                let nf = n as f64;
                points.push(MedianPoint {
                    n,
                    rows: rates.len(),
                    median_rate: m,
                    median_rate_sqrt_n: m * nf.sqrt(),
                    median_rate_sqrt_n_log_n: m * (nf * nf.ln()).sqrt(),
                });
            }
            let slope = log_log_slope(
                &points
                    .iter()
                    .map(|p| (p.n as f64, p.median_rate))
                    .collect::<Vec<_>>(),
            );
            let backbone = if ok.is_empty() {
                None
            } else {
                let hits = ok
                    .iter()
                    .filter(|r| r.bottleneck_class == Some("backbone"))
                    .count();
                Some(hits as f64 / ok.len() as f64)
            };
            ModeSummary {
                mode: label,
                ok_rows: ok.len(),
                failed_rows: mode_rows.len() - ok.len(),
                points,
                slope,
                backbone_bottleneck_share: backbone,
            }
        })
        .collect()
}

/// Median of an unsorted, non-empty slice (mean of the central pair).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Least-squares slope of `ln y` against `ln x`; `None` below two points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    (denom.abs() > 1e-12).then(|| (n * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_pins_twelve_significant_digits() {
        assert_eq!(sig12(0.0123456789012345), "1.23456789012e-2");
        assert_eq!(sig12(1.0), "1.00000000000e0");
    }

    #[test]
    fn median_handles_even_and_odd_lengths() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn log_log_slope_recovers_a_power_law() {
        let pts: Vec<(f64, f64)> = [256.0, 1024.0, 4096.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(-0.5)))
            .collect();
        let slope = log_log_slope(&pts).unwrap();
        assert!((slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn doubling_count_tracks_retry_growth() {
        assert_eq!(doubling_count(2.0, 2.0), 0);
        assert_eq!(doubling_count(2.0, 4.0), 1);
        assert_eq!(doubling_count(2.0, 8.0), 2);
    }

    #[test]
    fn row_seed_separates_modes_and_sizes() {
        let a = row_seed(256, 1, 0);
        assert_ne!(a, row_seed(256, 1, 1));
        assert_ne!(a, row_seed(1024, 1, 0));
        assert_ne!(a, row_seed(256, 2, 0));
        assert_eq!(a, row_seed(256, 1, 0));
    }
}
