//! Carrier-sense multiple access dynamics over a feasible-state family.
//!
//! Each idle link runs an exponential back-off count-down with its own rate;
//! when the count-down fires and joining the current transmitter set keeps the
//! state feasible, the link transmits for an exponential unit-mean hold,
//! otherwise the count-down freezes until the blockers clear. The resulting
//! continuous-time chain is reversible with a product-form stationary law.
//! This module computes that law exactly, simulates the chain event by event,
//! simulates the physical carrier-sensing variant driven by received-power
//! steps, accounts TDMA schedules, and fits back-off rates to hit per-link
//! throughput demands by dual ascent.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{FeasibleFamily, FeasibleState, RadioConfig};
use crate::numeric::{geq_tol, log_sum_exp};
use crate::spatial::Link;

/// Per-link back-off rates; `nu[i]` is the mean count-down frequency of link
/// `i`. All rates must be finite and strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackoffRates {
    pub nu: Vec<f64>,
}

impl BackoffRates {
    /// Validates and wraps a rate vector.
    pub fn new(nu: Vec<f64>) -> Result<Self> {
        for (i, &v) in nu.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "back-off rate for link {i} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(BackoffRates { nu })
    }

    /// Same rate for every one of `n` links.
    pub fn uniform(n: usize, rate: f64) -> Result<Self> {
        Self::new(vec![rate; n])
    }

    /// Number of links covered by the rate vector.
    pub fn len(&self) -> usize {
        self.nu.len()
    }

    /// True when the vector covers no links.
    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }
}

/// Exact stationary law of the CSMA chain on a feasible family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryDistribution {
    /// Probability of each feasible transmitter set.
    pub probabilities: BTreeMap<FeasibleState, f64>,
    /// Long-run fraction of time each link spends transmitting.
    pub per_link_throughput: Vec<f64>,
}

impl StationaryDistribution {
    /// Probability of one state (zero for states outside the family).
    pub fn probability(&self, state: &FeasibleState) -> f64 {
        self.probabilities.get(state).copied().unwrap_or(0.0)
    }
}

/// Checks that `family` is a valid chain state space over links `0..n`:
/// contains the empty state, is downward closed, and references no link
/// outside the rate vector.
fn validate_state_space(family: &FeasibleFamily, n: usize) -> Result<()> {
    if !family.contains(&FeasibleState::empty()) {
        return Err(Error::InvalidParameter(
            "state family must contain the empty state".into(),
        ));
    }
    for state in family {
        if let Some(&max) = state.members().last() {
            if max as usize >= n {
                return Err(Error::InvalidParameter(format!(
                    "state {state} references link {max}, but only {n} rates were given"
                )));
            }
        }
        for link in state.iter() {
            let sub = state.without(link);
            if !family.contains(&sub) {
                return Err(Error::NotDownwardClosed {
                    state: state.clone(),
                    missing: sub,
                });
            }
        }
    }
    Ok(())
}

/// Computes the product-form stationary distribution: each feasible state `S`
/// has probability proportional to the product of the back-off rates of its
/// members. Weights are combined in log space so extreme rates stay stable.
pub fn stationary(family: &FeasibleFamily, rates: &BackoffRates) -> Result<StationaryDistribution> {
    validate_state_space(family, rates.len())?;
    let log_nu: Vec<f64> = rates.nu.iter().map(|v| v.ln()).collect();
    let log_weights: Vec<f64> = family
        .iter()
        .map(|s| s.iter().map(|i| log_nu[i as usize]).sum())
        .collect();
    let log_z = log_sum_exp(&log_weights);

    let mut probabilities = BTreeMap::new();
    let mut per_link_throughput = vec![0.0; rates.len()];
    for (state, &lw) in family.iter().zip(&log_weights) {
        let p = (lw - log_z).exp();
        for i in state.iter() {
            per_link_throughput[i as usize] += p;
        }
        probabilities.insert(state.clone(), p);
    }
    Ok(StationaryDistribution {
        probabilities,
        per_link_throughput,
    })
}

/// Total variation distance between two distributions over feasible states.
/// States absent from a map carry probability zero.
pub fn total_variation(
    p: &BTreeMap<FeasibleState, f64>,
    q: &BTreeMap<FeasibleState, f64>,
) -> f64 {
    let mut sum = 0.0;
    for (state, &pv) in p {
        sum += (pv - q.get(state).copied().unwrap_or(0.0)).abs();
    }
    for (state, &qv) in q {
        if !p.contains_key(state) {
            sum += qv.abs();
        }
    }
    0.5 * sum
}

/// What happened at one simulation event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimEventKind {
    /// A link began transmitting.
    Start,
    /// A link finished transmitting.
    End,
}

/// One timestamped transition of a simulated chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    /// Simulation time of the transition.
    pub t: f64,
    /// Link that changed activity.
    pub link: u32,
    /// Whether the link started or ended a transmission.
    pub ev: SimEventKind,
}

/// Controls for the event-driven simulators.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Number of transitions (starts plus ends) to simulate.
    pub horizon: u64,
    /// RNG seed; identical options replay an identical trace.
    pub seed: u64,
    /// Whether to keep the full event log (occupancy is always recorded).
    pub record_events: bool,
}

impl SimOptions {
    /// Options with event recording enabled.
    pub fn new(horizon: u64, seed: u64) -> Self {
        SimOptions {
            horizon,
            seed,
            record_events: true,
        }
    }

    /// Options that keep only occupancy and airtime, not the event log.
    pub fn summary_only(horizon: u64, seed: u64) -> Self {
        SimOptions {
            horizon,
            seed,
            record_events: false,
        }
    }
}

/// Outcome of an event-driven simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTrace {
    /// Seed the run was driven by.
    pub seed: u64,
    /// Total simulated time.
    pub total_time: f64,
    /// Event log in time order (empty when recording was disabled).
    pub events: Vec<SimEvent>,
    /// Fraction of time spent in each visited transmitter set.
    pub occupancy: BTreeMap<FeasibleState, f64>,
    /// Fraction of time each link spent transmitting.
    pub per_link_airtime: Vec<f64>,
}

impl SimTrace {
    /// Writes the event log as newline-delimited JSON objects
    /// `{"t": …, "link": …, "ev": "start" | "end"}`.
    pub fn write_events_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        for event in &self.events {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes the occupancy measure as CSV with a `state,probability` header;
    /// states are JSON arrays of link indices.
    pub fn write_occupancy_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "state,probability")?;
        for (state, prob) in &self.occupancy {
            let cells: Vec<String> = state.iter().map(|i| i.to_string()).collect();
            writeln!(out, "\"[{}]\",{}", cells.join(","), prob)?;
        }
        Ok(())
    }
}

/// Accumulates dwell time and emits the finished trace.
struct TraceBuilder {
    seed: u64,
    record_events: bool,
    events: Vec<SimEvent>,
    occupancy: HashMap<FeasibleState, f64>,
    airtime: Vec<f64>,
    total_time: f64,
}

impl TraceBuilder {
    fn new(n_links: usize, opts: &SimOptions) -> Self {
        TraceBuilder {
            seed: opts.seed,
            record_events: opts.record_events,
            events: if opts.record_events {
                Vec::with_capacity(opts.horizon.min(1 << 24) as usize)
            } else {
                Vec::new()
            },
            occupancy: HashMap::new(),
            airtime: vec![0.0; n_links],
            total_time: 0.0,
        }
    }

    fn dwell(&mut self, state: &FeasibleState, dt: f64) {
        *self.occupancy.entry(state.clone()).or_insert(0.0) += dt;
        for i in state.iter() {
            self.airtime[i as usize] += dt;
        }
        self.total_time += dt;
    }

    fn transition(&mut self, t: f64, link: u32, ev: SimEventKind) {
        if self.record_events {
            self.events.push(SimEvent { t, link, ev });
        }
    }

    fn finish(mut self) -> SimTrace {
        let norm = if self.total_time > 0.0 {
            self.total_time
        } else {
            // A chain with no transitions available sits in its initial state
            // forever; report that state as the whole occupancy.
            1.0
        };
        let occupancy = self
            .occupancy
            .into_iter()
            .map(|(s, v)| (s, v / norm))
            .collect();
        for v in &mut self.airtime {
            *v /= norm;
        }
        SimTrace {
            seed: self.seed,
            total_time: self.total_time,
            events: self.events,
            occupancy,
            per_link_airtime: self.airtime,
        }
    }
}

/// Draws an exponential holding time with the given total rate.
fn exp_holding(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    // 1 - U lies in (0, 1], so the logarithm is always finite.
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

/// Simulates the idealized chain on a feasible family for a fixed number of
/// transitions. Links whose activation would leave the family are excluded
/// from the race entirely; by memorylessness this is equivalent to freezing
/// their count-downs.
pub fn simulate_ctmc(
    family: &FeasibleFamily,
    rates: &BackoffRates,
    opts: &SimOptions,
) -> Result<SimTrace> {
    let n = rates.len();
    validate_state_space(family, n)?;

    // Intern states and precompute the transition structure once.
    let states: Vec<&FeasibleState> = family.iter().collect();
    let index: HashMap<&FeasibleState, usize> =
        states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut additions: Vec<Vec<(u32, usize)>> = Vec::with_capacity(states.len());
    let mut removals: Vec<Vec<(u32, usize)>> = Vec::with_capacity(states.len());
    let mut addition_rate: Vec<f64> = Vec::with_capacity(states.len());
    for state in &states {
        let mut add = Vec::new();
        for i in 0..n as u32 {
            if state.contains(i) {
                continue;
            }
            if let Some(&target) = index.get(&state.with(i)) {
                add.push((i, target));
            }
        }
        addition_rate.push(add.iter().map(|&(i, _)| rates.nu[i as usize]).sum());
        removals.push(
            state
                .iter()
                .map(|i| (i, index[&state.without(i)]))
                .collect(),
        );
        additions.push(add);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut builder = TraceBuilder::new(n, opts);
    let mut current = index[&FeasibleState::empty()];
    let mut clock = 0.0;
    for _ in 0..opts.horizon {
        let add_rate = addition_rate[current];
        let total = add_rate + removals[current].len() as f64;
        if total == 0.0 {
            // Nothing can ever start: the chain is stuck in the empty state.
            break;
        }
        let dt = exp_holding(&mut rng, total);
        builder.dwell(states[current], dt);
        clock += dt;

        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = None;
        if pick < add_rate {
            for &(link, target) in &additions[current] {
                pick -= rates.nu[link as usize];
                if pick < 0.0 {
                    chosen = Some((link, target, SimEventKind::Start));
                    break;
                }
            }
        }
        let (link, target, kind) = chosen.unwrap_or_else(|| {
            // Each active transmission ends at unit rate, so the residual
            // weight picks uniformly among the removals.
            let rem = &removals[current];
            let slot = (((pick - add_rate).max(0.0)) as usize).min(rem.len() - 1);
            let (link, target) = rem[slot];
            (link, target, SimEventKind::End)
        });
        builder.transition(clock, link, kind);
        current = target;
    }
    if builder.total_time == 0.0 {
        // Record the state the chain is stuck in.
        builder.dwell(states[current], 0.0);
        builder.occupancy.insert(states[current].clone(), 1.0);
    }
    Ok(builder.finish())
}

/// Simulates carrier sensing as transmitters actually measure it: each link
/// tracks a counter of in-range active transmitters, bumped whenever the
/// received power jumps by at least the power of a transmitter at the sensing
/// range, and may start only while its counter is zero.
pub fn simulate_ipcs(
    links: &[Link],
    r_cs: f64,
    rates: &BackoffRates,
    cfg: &RadioConfig,
    opts: &SimOptions,
) -> Result<SimTrace> {
    let n = links.len();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "carrier-sensing simulation needs at least one link".into(),
        ));
    }
    if rates.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} links but {} back-off rates",
            n,
            rates.len()
        )));
    }
    if !(r_cs > 0.0) || !r_cs.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sensing range must be positive and finite, got {r_cs}"
        )));
    }
    cfg.validate()?;

    // A start (or end) by transmitter k moves every other link's received
    // level by P·d^-alpha; the counter reacts when that step reaches the
    // power of a transmitter sitting exactly at the sensing range.
    let threshold = cfg.p_tx * r_cs.powf(-cfg.alpha);
    let mut counted = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if i == k {
                continue;
            }
            let d = links[i].tx.dist(links[k].tx);
            let step = if d > 0.0 {
                cfg.p_tx * d.powf(-cfg.alpha)
            } else {
                f64::INFINITY
            };
            counted[i][k] = geq_tol(step, threshold);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut builder = TraceBuilder::new(n, opts);
    let mut active = vec![false; n];
    let mut counter = vec![0i64; n];
    let mut state = FeasibleState::empty();
    let mut clock = 0.0;
    for _ in 0..opts.horizon {
        // Race between active transmissions (unit rate) and the count-downs
        // of idle links that currently sense a clear channel.
        let mut total = 0.0;
        for i in 0..n {
            if active[i] {
                total += 1.0;
            } else if counter[i] == 0 {
                total += rates.nu[i];
            }
        }
        debug_assert!(total > 0.0, "some link is always eligible");
        let dt = exp_holding(&mut rng, total);
        builder.dwell(&state, dt);
        clock += dt;

        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for i in 0..n {
            let w = if active[i] {
                1.0
            } else if counter[i] == 0 {
                rates.nu[i]
            } else {
                continue;
            };
            pick -= w;
            if pick < 0.0 {
                chosen = i;
                break;
            }
        }
        if active[chosen] {
            active[chosen] = false;
            state = state.without(chosen as u32);
            for other in 0..n {
                if other != chosen && counted[other][chosen] {
                    counter[other] -= 1;
                }
            }
            builder.transition(clock, chosen as u32, SimEventKind::End);
        } else {
            active[chosen] = true;
            state = state.with(chosen as u32);
            for other in 0..n {
                if other != chosen && counted[other][chosen] {
                    counter[other] += 1;
                }
            }
            builder.transition(clock, chosen as u32, SimEventKind::Start);
        }
    }
    Ok(builder.finish())
}

/// A periodic slotted schedule: slot `t` activates exactly the links in
/// `states[t % period]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    states: Vec<FeasibleState>,
    n_links: usize,
}

impl Schedule {
    /// Builds a schedule over links `0..n_links`, rejecting slots that
    /// reference links outside that range.
    pub fn new(states: Vec<FeasibleState>, n_links: usize) -> Result<Self> {
        for (slot, state) in states.iter().enumerate() {
            if let Some(&max) = state.members().last() {
                if max as usize >= n_links {
                    return Err(Error::InvalidParameter(format!(
                        "slot {slot} activates link {max}, outside 0..{n_links}"
                    )));
                }
            }
        }
        Ok(Schedule { states, n_links })
    }

    /// Slot states in order.
    pub fn states(&self) -> &[FeasibleState] {
        &self.states
    }

    /// Period of the schedule (number of slots).
    pub fn period(&self) -> usize {
        self.states.len()
    }

    /// Number of links the schedule covers.
    pub fn n_links(&self) -> usize {
        self.n_links
    }
}

/// Per-link throughput delivered by a periodic schedule: the fraction of
/// slots in which the link is active.
pub fn tdma_throughput(schedule: &Schedule) -> Result<Vec<f64>> {
    let m = schedule.period();
    if m == 0 {
        return Err(Error::InvalidParameter(
            "schedule must have at least one slot".into(),
        ));
    }
    let mut counts = vec![0usize; schedule.n_links()];
    for state in schedule.states() {
        for i in state.iter() {
            counts[i as usize] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / m as f64).collect())
}

/// Result of fitting back-off rates against throughput demands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted rates; `stationary` under them meets every demand up to the
    /// requested tolerance.
    pub rates: BackoffRates,
    /// Per-link throughput actually achieved by the fitted rates.
    pub achieved: Vec<f64>,
    /// Solver sweeps consumed.
    pub iterations: usize,
}

/// Finds every maximal clique of the pairwise-conflict graph induced by the
/// family (links `i`, `j` conflict when `{i, j}` is infeasible) and returns
/// the one with the largest total demand, if any clique's demand reaches 1.
fn worst_clique_certificate(
    family: &FeasibleFamily,
    targets: &[f64],
) -> Option<(Vec<u32>, f64)> {
    let n = targets.len();
    let feasible_alone: Vec<bool> = (0..n as u32)
        .map(|i| family.contains(&FeasibleState::new(vec![i])))
        .collect();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    i != j
                        && feasible_alone[i]
                        && feasible_alone[j]
                        && !family.contains(&FeasibleState::new(vec![i as u32, j as u32]))
                })
                .collect()
        })
        .collect();

    let mut worst: Option<(Vec<u32>, f64)> = None;
    let mut consider = |clique: &Vec<u32>| {
        let total: f64 = clique.iter().map(|&i| targets[i as usize]).sum();
        if geq_tol(total, 1.0) && worst.as_ref().is_none_or(|(_, t)| total > *t) {
            worst = Some((clique.clone(), total));
        }
    };

    // Bron-Kerbosch with pivoting over the links that can transmit at all.
    fn extend(
        r: &mut Vec<u32>,
        mut p: Vec<usize>,
        mut x: Vec<usize>,
        adj: &[Vec<bool>],
        report: &mut dyn FnMut(&Vec<u32>),
    ) {
        if p.is_empty() && x.is_empty() {
            report(r);
            return;
        }
        let pivot = *p.iter().chain(x.iter()).next().unwrap();
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
        for v in candidates {
            r.push(v as u32);
            let p2 = p.iter().copied().filter(|&u| adj[v][u]).collect();
            let x2 = x.iter().copied().filter(|&u| adj[v][u]).collect();
            extend(r, p2, x2, adj, report);
            r.pop();
            p.retain(|&u| u != v);
            x.push(v);
        }
    }

    let vertices: Vec<usize> = (0..n).filter(|&i| feasible_alone[i]).collect();
    extend(
        &mut Vec::new(),
        vertices,
        Vec::new(),
        &adj,
        &mut |clique| consider(clique),
    );
    worst
}

const FIT_MAX_SWEEPS: usize = 5_000;

/// Fits back-off rates so that the stationary throughput of every link
/// reaches its demand within `tol`. Each sweep matches every demanding
/// link's marginal exactly given the others' current rates (coordinate
/// ascent on the product form's concave log-likelihood), and the solver
/// stops once every shortfall is below `tol / 2`. Exact coordinate updates
/// keep convergence fast even when the demands sit very close to the
/// capacity boundary, where gradient steps stall.
///
/// Demands must leave slack: any set of mutually exclusive links whose
/// demands sum to 1 or more is rejected with that set as a certificate, and
/// demands on the capacity boundary that defeat the ascent are reported as
/// non-convergence.
pub fn fit_rates(family: &FeasibleFamily, targets: &[f64], tol: f64) -> Result<FitResult> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    let n = targets.len();
    validate_state_space(family, n)?;
    for (i, &c) in targets.iter().enumerate() {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "demand for link {i} must be finite and non-negative, got {c}"
            )));
        }
        if c > 0.0 && !family.contains(&FeasibleState::new(vec![i as u32])) {
            return Err(Error::UnschedulableLink { link: i, target: c });
        }
    }
    if let Some((clique, total)) = worst_clique_certificate(family, targets) {
        return Err(Error::InfeasibleTargets { clique, total });
    }

    let members: Vec<Vec<usize>> = family
        .iter()
        .map(|s| s.iter().map(|i| i as usize).collect())
        .collect();
    let mut lambda = vec![0.0f64; n];
    let mut log_weights = vec![0.0f64; members.len()];
    let mut marginals = vec![0.0f64; n];

    // Streaming log-sum-exp: fold `x` into a running (max, scaled sum) pair.
    let fold_lse = |acc: &mut (f64, f64), x: f64| {
        if x > acc.0 {
            acc.1 = acc.1 * (acc.0 - x).exp() + 1.0;
            acc.0 = x;
        } else {
            acc.1 += (x - acc.0).exp();
        }
    };

    let mut iterations = 0usize;
    let mut max_violation = f64::INFINITY;
    while iterations < FIT_MAX_SWEEPS {
        iterations += 1;
        for (i, &c) in targets.iter().enumerate() {
            if c <= 0.0 {
                continue;
            }
            // Split the family's mass into states with and without link i,
            // leaving λ_i out, then solve marginal(i) = c for λ_i exactly.
            let mut with_i = (f64::NEG_INFINITY, 0.0);
            let mut without_i = (f64::NEG_INFINITY, 0.0);
            for m in &members {
                let mut s = 0.0;
                let mut has = false;
                for &j in m {
                    if j == i {
                        has = true;
                    } else {
                        s += lambda[j];
                    }
                }
                if has {
                    fold_lse(&mut with_i, s);
                } else {
                    fold_lse(&mut without_i, s);
                }
            }
            let log_a = with_i.0 + with_i.1.ln();
            let log_b = without_i.0 + without_i.1.ln();
            lambda[i] = c.ln() - (1.0 - c).ln() + log_b - log_a;
        }

        for (lw, m) in log_weights.iter_mut().zip(&members) {
            *lw = m.iter().map(|&i| lambda[i]).sum();
        }
        let log_z = log_sum_exp(&log_weights);
        marginals.iter_mut().for_each(|v| *v = 0.0);
        for (lw, m) in log_weights.iter().zip(&members) {
            let p = (*lw - log_z).exp();
            for &i in m {
                marginals[i] += p;
            }
        }
        max_violation = targets
            .iter()
            .zip(&marginals)
            .map(|(c, m)| c - m)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_violation < tol / 2.0 {
            let rates = BackoffRates::new(lambda.iter().map(|l| l.exp()).collect())?;
            let achieved = stationary(family, &rates)?.per_link_throughput;
            return Ok(FitResult {
                rates,
                achieved,
                iterations,
            });
        }
    }
    Err(Error::FitDidNotConverge {
        iterations,
        max_violation,
    })
}
