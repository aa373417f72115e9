//! Feasible-family membership predicates and brute-force oracles.
//!
//! A *feasible state* is a set of links that may transmit simultaneously; a
//! *feasible family* is the set of all such states under one model. Thirteen
//! models are implemented, tagged `a.0`–`e.1`:
//!
//! * `a.*` — uni-directional interference safety (DATA only): fixed exclusion
//!   range, pairwise SIR, pairwise SINR, aggregate SINR.
//! * `b.*` — bi-directional counterparts for ACK-based transfer, measuring the
//!   four-way endpoint gap between links instead of transmitter→receiver
//!   distance.
//! * `c.1`/`c.2` — carrier-sensing decision models: pairwise
//!   transmitter-separation, and threshold-based admission in some start
//!   order.
//! * `d.1`/`d.2`, `e.1` — dual-channel variants for backbone/peripheral link
//!   classes, full- or half-duplex.
//!
//! Every family is downward closed, which the enumeration oracle exploits for
//! pruning. Inequalities are evaluated with a small relative tolerance so that
//! boundary equality counts as feasible.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{geq_tol, leq_tol};
use crate::spatial::{link_gap, Link, LinkClass};

/// Largest link count accepted by the exhaustive oracles.
pub const ENUM_CAP: usize = 20;

/// Radio-layer parameters shared by the feasibility models.
///
/// `beta_overrides` replaces the SINR threshold for individual links (sparse
/// `(link index, β)` list); links this long-hop or power-limited can be given
/// a relaxed threshold without touching the rest of the instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub p_tx: f64,
    pub n0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub r_tx: f64,
    pub r_xcl: f64,
    pub r_cs: f64,
    pub t_cs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta_overrides: Vec<(u32, f64)>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig::reference()
    }
}

impl RadioConfig {
    /// A baseline configuration exercised throughout the test suite: unit
    /// power and transmission range, no noise.
    pub fn reference() -> Self {
        RadioConfig {
            p_tx: 1.0,
            n0: 0.0,
            alpha: 4.0,
            beta: 1.0,
            delta: 0.5,
            r_tx: 1.0,
            r_xcl: 1.5,
            r_cs: 4.0,
            t_cs: 1.0,
            beta_overrides: Vec::new(),
        }
    }

    /// Check the standing parameter assumptions: `alpha > 2`, `beta > 0`,
    /// `delta > 0`, `r_xcl > r_tx > 0`, and that a link of length `r_tx` is
    /// admissible at all (`P_tx · r_tx^(−α) ≥ β·N0`).
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "path-loss exponent alpha must exceed 2, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "SINR threshold beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "guard-zone coefficient delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.r_tx > 0.0 && self.r_xcl > self.r_tx) {
            return Err(Error::InvalidParameter(format!(
                "ranges must satisfy r_xcl > r_tx > 0, got r_xcl={} r_tx={}",
                self.r_xcl, self.r_tx
            )));
        }
        if !geq_tol(self.p_tx * self.r_tx.powf(-self.alpha), self.beta * self.n0) {
            return Err(Error::InvalidParameter(format!(
                "a maximum-length link is never admissible: P_tx·r_tx^(−α) = {} < β·N0 = {}",
                self.p_tx * self.r_tx.powf(-self.alpha),
                self.beta * self.n0
            )));
        }
        Ok(())
    }

    /// SINR threshold effective for link `i`: a per-link override if present,
    /// otherwise `default_beta` (the model's β parameter).
    fn beta_for(&self, i: usize, default_beta: f64) -> f64 {
        self.beta_overrides
            .iter()
            .find(|(k, _)| *k as usize == i)
            .map(|(_, b)| *b)
            .unwrap_or(default_beta)
    }
}

/// One feasibility model plus the parameters it reads.
///
/// Serializes as `{"model": "<tag>", "params": {...}}` with tags `a.0`–`e.1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params")]
pub enum FamilySpec {
    /// Fixed exclusion range around each receiver; links capped at `r_tx`.
    #[serde(rename = "a.0")]
    UniFixedRange { r_xcl: f64, r_tx: f64 },
    /// Guard zone of `(1+Δ)·len` around each receiver (noise-absent SIR).
    #[serde(rename = "a.1")]
    UniPairwiseSir { delta: f64 },
    /// SINR threshold against each single interferer at the receiver.
    #[serde(rename = "a.2")]
    UniPairwiseSinr { beta: f64 },
    /// SINR threshold against the summed interference at the receiver.
    #[serde(rename = "a.3")]
    UniAggregateSinr { beta: f64 },
    /// As `a.0`, but interference is measured by the four-way endpoint gap.
    #[serde(rename = "b.0")]
    BiFixedRange { r_xcl: f64, r_tx: f64 },
    /// As `a.1` over the endpoint gap.
    #[serde(rename = "b.1")]
    BiPairwiseSir { delta: f64 },
    /// As `a.2` over the endpoint gap.
    #[serde(rename = "b.2")]
    BiPairwiseSinr { beta: f64 },
    /// As `a.3` over the endpoint gap. `precise_denominator` switches to the
    /// sharper per-endpoint interference sum (no subset relations are claimed
    /// for that variant; the conservative form is the default).
    #[serde(rename = "b.3")]
    BiAggregateSinr {
        beta: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        precise_denominator: bool,
    },
    /// Transmitters pairwise at least `r_cs` apart.
    #[serde(rename = "c.1")]
    PairwiseCs { r_cs: f64 },
    /// Some start order keeps measured power below `t_cs` at each admission.
    #[serde(rename = "c.2")]
    AggregateCs { t_cs: f64 },
    /// Per-class transmitter separation; cross-class pairs are unconstrained
    /// (a backbone node acts as two virtual nodes, one per channel).
    #[serde(rename = "d.1")]
    DualCsFull { r_cs_b: f64, r_cs_p: f64 },
    /// Transmitter separation at the larger of the two classes' ranges, for
    /// every pair regardless of class.
    #[serde(rename = "d.2")]
    DualCsHalf { r_cs_b: f64, r_cs_p: f64 },
    /// Per-channel bi-directional aggregate SINR plus global endpoint
    /// disjointness (half-duplex nodes touch at most one active link).
    #[serde(rename = "e.1")]
    DualAggSinrHalf { beta_b: f64, beta_p: f64 },
}

impl FamilySpec {
    /// The model's tag string (`"a.0"` … `"e.1"`).
    pub fn tag(&self) -> &'static str {
        match self {
            FamilySpec::UniFixedRange { .. } => "a.0",
            FamilySpec::UniPairwiseSir { .. } => "a.1",
            FamilySpec::UniPairwiseSinr { .. } => "a.2",
            FamilySpec::UniAggregateSinr { .. } => "a.3",
            FamilySpec::BiFixedRange { .. } => "b.0",
            FamilySpec::BiPairwiseSir { .. } => "b.1",
            FamilySpec::BiPairwiseSinr { .. } => "b.2",
            FamilySpec::BiAggregateSinr { .. } => "b.3",
            FamilySpec::PairwiseCs { .. } => "c.1",
            FamilySpec::AggregateCs { .. } => "c.2",
            FamilySpec::DualCsFull { .. } => "d.1",
            FamilySpec::DualCsHalf { .. } => "d.2",
            FamilySpec::DualAggSinrHalf { .. } => "e.1",
        }
    }

    /// True when membership is a conjunction of per-link and per-pair
    /// constraints, so the family is exactly the independent sets of a
    /// conflict graph.
    pub fn is_pairwise(&self) -> bool {
        !matches!(
            self,
            FamilySpec::UniAggregateSinr { .. }
                | FamilySpec::BiAggregateSinr { .. }
                | FamilySpec::AggregateCs { .. }
                | FamilySpec::DualAggSinrHalf { .. }
        )
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A set of simultaneously transmitting links, stored as sorted indices into
/// a fixed link list. Serializes as a plain sorted index array.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Default)]
#[serde(transparent)]
pub struct FeasibleState {
    members: Vec<u32>,
}

// Deserialization re-normalizes, so arbitrary input arrays (unsorted, with
// duplicates) still produce a canonical state.
impl<'de> Deserialize<'de> for FeasibleState {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        Ok(FeasibleState::new(Vec::<u32>::deserialize(deserializer)?))
    }
}

impl FeasibleState {
    pub fn new(mut members: Vec<u32>) -> Self {
        members.sort_unstable();
        members.dedup();
        FeasibleState { members }
    }

    pub fn empty() -> Self {
        FeasibleState::default()
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, link: u32) -> bool {
        self.members.binary_search(&link).is_ok()
    }

    /// This state with `link` added (no-op if present).
    pub fn with(&self, link: u32) -> Self {
        let mut members = self.members.clone();
        if let Err(pos) = members.binary_search(&link) {
            members.insert(pos, link);
        }
        FeasibleState { members }
    }

    /// This state with `link` removed (no-op if absent).
    pub fn without(&self, link: u32) -> Self {
        let mut members = self.members.clone();
        if let Ok(pos) = members.binary_search(&link) {
            members.remove(pos);
        }
        FeasibleState { members }
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.members.iter().copied()
    }
}

impl fmt::Display for FeasibleState {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{{")?;
        for (k, m) in self.members.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<u32> for FeasibleState {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        FeasibleState::new(iter.into_iter().collect())
    }
}

/// All feasible states of one model over one link list.
pub type FeasibleFamily = BTreeSet<FeasibleState>;

fn check_indices(state: &FeasibleState, links: &[Link]) -> Result<()> {
    if let Some(&bad) = state.members.iter().find(|&&m| m as usize >= links.len()) {
        return Err(Error::InvalidParameter(format!(
            "state references link {bad}, but only {} links exist",
            links.len()
        )));
    }
    Ok(())
}

/// Received power over distance `d` under path loss `alpha`.
fn path_power(p_tx: f64, d: f64, alpha: f64) -> f64 {
    p_tx * d.powf(-alpha)
}

/// Interferer `j`'s transmitter as seen from `i`'s receiver.
fn uni_dist(links: &[Link], i: u32, j: u32) -> f64 {
    links[j as usize].tx.dist(links[i as usize].rx)
}

/// Four-way endpoint gap between links `i` and `j`.
fn bi_dist(links: &[Link], i: u32, j: u32) -> f64 {
    link_gap(&links[i as usize], &links[j as usize])
}

/// Pairwise check shared by the fixed-range and SIR models: every link obeys
/// its per-link bound and every ordered pair its separation requirement.
fn pairwise_ok(
    state: &FeasibleState,
    per_link: impl Fn(u32) -> bool,
    pair_sep: impl Fn(u32, u32) -> bool,
) -> bool {
    state.iter().all(&per_link)
        && state
            .iter()
            .all(|i| state.iter().filter(|&j| j != i).all(|j| pair_sep(i, j)))
}

/// Pairwise SINR at `i`'s receiver against each single interferer, plus the
/// per-link admission requirement (`P_tx·len^(−α) ≥ β·N0`), which the pair
/// constraints do not imply for singleton states.
fn pairwise_sinr_ok(
    state: &FeasibleState,
    links: &[Link],
    cfg: &RadioConfig,
    beta: f64,
    dist: impl Fn(&[Link], u32, u32) -> f64,
) -> bool {
    state.iter().all(|i| {
        let beta_i = cfg.beta_for(i as usize, beta);
        let signal = path_power(cfg.p_tx, links[i as usize].len(), cfg.alpha);
        geq_tol(signal, beta_i * cfg.n0)
            && state.iter().filter(|&j| j != i).all(|j| {
                let interference = path_power(cfg.p_tx, dist(links, i, j), cfg.alpha);
                geq_tol(signal, beta_i * (cfg.n0 + interference))
            })
    })
}

/// Aggregate SINR at `i`'s receiver against the summed interference. The
/// singleton case degenerates to the admission requirement.
fn aggregate_sinr_ok(
    state: &FeasibleState,
    links: &[Link],
    cfg: &RadioConfig,
    beta: f64,
    dist: impl Fn(&[Link], u32, u32) -> f64,
) -> bool {
    state.iter().all(|i| {
        let beta_i = cfg.beta_for(i as usize, beta);
        let signal = path_power(cfg.p_tx, links[i as usize].len(), cfg.alpha);
        let interference: f64 = state
            .iter()
            .filter(|&j| j != i)
            .map(|j| path_power(cfg.p_tx, dist(links, i, j), cfg.alpha))
            .sum();
        geq_tol(signal, beta_i * (cfg.n0 + interference))
    })
}

/// Sharper denominator variant for the bi-directional aggregate model: sum
/// interference separately at the transmitter and at the receiver (each
/// interferer contributing through its nearer endpoint) and take the smaller
/// of the two sums.
fn aggregate_sinr_precise_ok(
    state: &FeasibleState,
    links: &[Link],
    cfg: &RadioConfig,
    beta: f64,
) -> bool {
    state.iter().all(|i| {
        let li = &links[i as usize];
        let beta_i = cfg.beta_for(i as usize, beta);
        let signal = path_power(cfg.p_tx, li.len(), cfg.alpha);
        let (mut at_tx, mut at_rx) = (0.0, 0.0);
        for j in state.iter().filter(|&j| j != i) {
            let lj = &links[j as usize];
            at_tx += path_power(cfg.p_tx, lj.tx.dist(li.tx).min(lj.rx.dist(li.tx)), cfg.alpha);
            at_rx += path_power(cfg.p_tx, lj.tx.dist(li.rx).min(lj.rx.dist(li.rx)), cfg.alpha);
        }
        geq_tol(signal, beta_i * (cfg.n0 + at_tx.min(at_rx)))
    })
}

/// Search for an admission order: links start transmitting one at a time, and
/// each must measure total power (noise plus already-active transmitters) at
/// or below `t_cs` when it starts. Returns one valid order, or `None`.
///
/// Greedy choice is unsafe — admitting one candidate can disqualify another —
/// so this backtracks, memoizing placed-sets that lead nowhere. The caller
/// keeps `|state| ≤ 20`, bounding the memo at 2^20 masks.
pub fn admission_order(
    state: &FeasibleState,
    links: &[Link],
    cfg: &RadioConfig,
    t_cs: f64,
) -> Result<Option<Vec<u32>>> {
    check_indices(state, links)?;
    if state.len() > ENUM_CAP {
        return Err(Error::EnumerationCap {
            got: state.len(),
            cap: ENUM_CAP,
        });
    }
    let members: Vec<u32> = state.iter().collect();
    let m = members.len();
    // power[a][b] = received power at transmitter a from transmitter b
    let power: Vec<Vec<f64>> = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    let d = links[members[b] as usize]
                        .tx
                        .dist(links[members[a] as usize].tx);
                    path_power(cfg.p_tx, d, cfg.alpha)
                })
                .collect()
        })
        .collect();

    let mut dead: HashSet<u32> = HashSet::new();
    let mut order: Vec<usize> = Vec::with_capacity(m);

    fn go(
        placed: u32,
        m: usize,
        power: &[Vec<f64>],
        n0: f64,
        t_cs: f64,
        dead: &mut HashSet<u32>,
        order: &mut Vec<usize>,
    ) -> bool {
        if order.len() == m {
            return true;
        }
        if dead.contains(&placed) {
            return false;
        }
        for k in 0..m {
            if placed & (1 << k) != 0 {
                continue;
            }
            let level: f64 = n0
                + (0..m)
                    .filter(|&j| placed & (1 << j) != 0)
                    .map(|j| power[k][j])
                    .sum::<f64>();
            if leq_tol(level, t_cs) {
                order.push(k);
                if go(placed | (1 << k), m, power, n0, t_cs, dead, order) {
                    return true;
                }
                order.pop();
            }
        }
        dead.insert(placed);
        false
    }

    if go(0, m, &power, cfg.n0, t_cs, &mut dead, &mut order) {
        Ok(Some(order.into_iter().map(|k| members[k]).collect()))
    } else {
        Ok(None)
    }
}

/// Decide membership of `state` in the family of `spec` over `links`.
///
/// Exact evaluation of each model's defining inequalities; boundary equality
/// counts as feasible. Aggregate carrier sensing (`c.2`) searches admission
/// orders by backtracking.
pub fn is_feasible(
    state: &FeasibleState,
    links: &[Link],
    spec: &FamilySpec,
    cfg: &RadioConfig,
) -> Result<bool> {
    check_indices(state, links)?;
    let ok = match *spec {
        FamilySpec::UniFixedRange { r_xcl, r_tx } => pairwise_ok(
            state,
            |i| leq_tol(links[i as usize].len(), r_tx),
            |i, j| geq_tol(uni_dist(links, i, j), r_xcl),
        ),
        FamilySpec::UniPairwiseSir { delta } => pairwise_ok(
            state,
            |_| true,
            |i, j| geq_tol(uni_dist(links, i, j), (1.0 + delta) * links[i as usize].len()),
        ),
        FamilySpec::UniPairwiseSinr { beta } => pairwise_sinr_ok(state, links, cfg, beta, uni_dist),
        FamilySpec::UniAggregateSinr { beta } => {
            aggregate_sinr_ok(state, links, cfg, beta, uni_dist)
        }
        FamilySpec::BiFixedRange { r_xcl, r_tx } => pairwise_ok(
            state,
            |i| leq_tol(links[i as usize].len(), r_tx),
            |i, j| geq_tol(bi_dist(links, i, j), r_xcl),
        ),
        FamilySpec::BiPairwiseSir { delta } => pairwise_ok(
            state,
            |_| true,
            |i, j| geq_tol(bi_dist(links, i, j), (1.0 + delta) * links[i as usize].len()),
        ),
        FamilySpec::BiPairwiseSinr { beta } => pairwise_sinr_ok(state, links, cfg, beta, bi_dist),
        FamilySpec::BiAggregateSinr {
            beta,
            precise_denominator,
        } => {
            if precise_denominator {
                aggregate_sinr_precise_ok(state, links, cfg, beta)
            } else {
                aggregate_sinr_ok(state, links, cfg, beta, bi_dist)
            }
        }
        FamilySpec::PairwiseCs { r_cs } => pairwise_ok(
            state,
            |_| true,
            |i, j| {
                geq_tol(
                    links[j as usize].tx.dist(links[i as usize].tx),
                    r_cs,
                )
            },
        ),
        FamilySpec::AggregateCs { t_cs } => admission_order(state, links, cfg, t_cs)?.is_some(),
        FamilySpec::DualCsFull { r_cs_b, r_cs_p } => pairwise_ok(
            state,
            |_| true,
            |i, j| {
                let (ci, cj) = (links[i as usize].class, links[j as usize].class);
                if ci != cj {
                    return true; // independent channels, full duplex
                }
                let range = match ci {
                    LinkClass::Backbone => r_cs_b,
                    LinkClass::Peripheral => r_cs_p,
                };
                geq_tol(links[j as usize].tx.dist(links[i as usize].tx), range)
            },
        ),
        FamilySpec::DualCsHalf { r_cs_b, r_cs_p } => pairwise_ok(
            state,
            |_| true,
            |i, j| {
                let range_of = |c: LinkClass| match c {
                    LinkClass::Backbone => r_cs_b,
                    LinkClass::Peripheral => r_cs_p,
                };
                let range = range_of(links[i as usize].class).max(range_of(links[j as usize].class));
                geq_tol(links[j as usize].tx.dist(links[i as usize].tx), range)
            },
        ),
        FamilySpec::DualAggSinrHalf { beta_b, beta_p } => {
            let class_ok = |class: LinkClass, beta: f64| {
                let sub: FeasibleState = state
                    .iter()
                    .filter(|&i| links[i as usize].class == class)
                    .collect();
                aggregate_sinr_ok(&sub, links, cfg, beta, bi_dist)
            };
            // Half-duplexity: no node may appear on two active links, on any
            // channel. Endpoints are compared by exact coordinates.
            let disjoint = pairwise_ok(state, |_| true, |i, j| {
                let (a, b) = (&links[i as usize], &links[j as usize]);
                a.tx != b.tx && a.tx != b.rx && a.rx != b.tx && a.rx != b.rx
            });
            disjoint && class_ok(LinkClass::Backbone, beta_b) && class_ok(LinkClass::Peripheral, beta_p)
        }
    };
    Ok(ok)
}

/// Enumerate the complete feasible family of `spec` over `links`.
///
/// Depth-first search in canonical index order, pruned by downward closure:
/// once a state is infeasible no superset of it is visited. Refuses instances
/// larger than `cap`.
pub fn enumerate_family_capped(
    links: &[Link],
    spec: &FamilySpec,
    cfg: &RadioConfig,
    cap: usize,
) -> Result<FeasibleFamily> {
    if links.len() > cap {
        return Err(Error::EnumerationCap {
            got: links.len(),
            cap,
        });
    }
    let mut family = FeasibleFamily::new();
    family.insert(FeasibleState::empty());
    let mut stack: Vec<(FeasibleState, u32)> = vec![(FeasibleState::empty(), 0)];
    while let Some((state, next)) = stack.pop() {
        for k in next..links.len() as u32 {
            let candidate = state.with(k);
            if is_feasible(&candidate, links, spec, cfg)? {
                family.insert(candidate.clone());
                stack.push((candidate, k + 1));
            }
        }
    }
    Ok(family)
}

/// [`enumerate_family_capped`] at the default cap of [`ENUM_CAP`] links.
pub fn enumerate_family(
    links: &[Link],
    spec: &FamilySpec,
    cfg: &RadioConfig,
) -> Result<FeasibleFamily> {
    enumerate_family_capped(links, spec, cfg, ENUM_CAP)
}

/// Outcome of a family-inclusion check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Inclusion {
    /// Every state feasible under the candidate-subset spec is feasible under
    /// the candidate-superset spec.
    Holds,
    /// A smallest (by cardinality) state feasible under the subset spec but
    /// not the superset spec.
    Counterexample(FeasibleState),
}

impl Inclusion {
    pub fn holds(&self) -> bool {
        matches!(self, Inclusion::Holds)
    }
}

/// Check `family(spec_sup) ⊇ family(spec_sub)` on this instance by exhausting
/// the subset family; a violation is reported as a minimal counterexample.
pub fn check_inclusion(
    spec_sup: &FamilySpec,
    spec_sub: &FamilySpec,
    links: &[Link],
    cfg: &RadioConfig,
) -> Result<Inclusion> {
    let sub_family = enumerate_family(links, spec_sub, cfg)?;
    let mut states: Vec<&FeasibleState> = sub_family.iter().collect();
    states.sort_by_key(|s| (s.len(), s.members().to_vec()));
    for state in states {
        if !is_feasible(state, links, spec_sup, cfg)? {
            return Ok(Inclusion::Counterexample(state.clone()));
        }
    }
    Ok(Inclusion::Holds)
}

/// Conflict structure of a pairwise model: vertices are links, an edge joins
/// two links that cannot transmit together, and a self-loop marks a link that
/// cannot transmit at all (over-length, or failing admission). The family of
/// the model is exactly the independent sets (loops excluded).
#[derive(Clone, Debug)]
pub struct ConflictGraph {
    n: usize,
    bits: Vec<u64>,
}

impl ConflictGraph {
    fn set(&mut self, i: usize, j: usize) {
        let at = i * self.n + j;
        self.bits[at / 64] |= 1 << (at % 64);
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// True when `{i, j}` is infeasible (for `i == j`: when `{i}` is).
    pub fn conflicts(&self, i: usize, j: usize) -> bool {
        let at = i * self.n + j;
        self.bits[at / 64] & (1 << (at % 64)) != 0
    }

    /// Number of edges, counting self-loops.
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|i| (i..self.n).filter(|&j| self.conflicts(i, j)).count())
            .sum()
    }

    /// True when no two members conflict and no member carries a self-loop.
    pub fn is_independent(&self, state: &FeasibleState) -> bool {
        let members: Vec<u32> = state.iter().collect();
        members.iter().all(|&i| !self.conflicts(i as usize, i as usize))
            && members.iter().enumerate().all(|(k, &i)| {
                members[k + 1..]
                    .iter()
                    .all(|&j| !self.conflicts(i as usize, j as usize))
            })
    }

    /// All independent sets, via the same pruned search as family
    /// enumeration.
    pub fn independent_sets(&self) -> FeasibleFamily {
        let mut family = FeasibleFamily::new();
        family.insert(FeasibleState::empty());
        let mut stack: Vec<(FeasibleState, u32)> = vec![(FeasibleState::empty(), 0)];
        while let Some((state, next)) = stack.pop() {
            for k in next..self.n as u32 {
                let candidate = state.with(k);
                if self.is_independent(&candidate) {
                    family.insert(candidate.clone());
                    stack.push((candidate, k + 1));
                }
            }
        }
        family
    }
}

/// Build the conflict graph of a pairwise model. Aggregate models (`a.3`,
/// `b.3`, `c.2`, `e.1`) have no pairwise representation and are rejected.
pub fn conflict_graph(
    links: &[Link],
    spec: &FamilySpec,
    cfg: &RadioConfig,
) -> Result<ConflictGraph> {
    if !spec.is_pairwise() {
        return Err(Error::AggregateConflictGraph { model: spec.tag() });
    }
    let n = links.len();
    let mut graph = ConflictGraph {
        n,
        bits: vec![0; (n * n).div_ceil(64).max(1)],
    };
    for i in 0..n as u32 {
        if !is_feasible(&FeasibleState::new(vec![i]), links, spec, cfg)? {
            graph.set(i as usize, i as usize);
        }
        for j in i + 1..n as u32 {
            if !is_feasible(&FeasibleState::new(vec![i, j]), links, spec, cfg)? {
                graph.set(i as usize, j as usize);
                graph.set(j as usize, i as usize);
            }
        }
    }
    Ok(graph)
}
