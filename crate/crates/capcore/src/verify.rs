//! Randomized audit of the inclusion laws behind hidden-node-free design.
//!
//! Each law pairs a closed-form hypothesis on the radio parameters with a
//! family inclusion or a scalar inequality. `check_law` draws random link
//! instances whose parameters satisfy the hypothesis (with random slack) and
//! brute-force-enumerates both families; [`MarginMode::Stripped`] instead
//! removes the hypothesis margin and hunts for a counterexample, confirming
//! the margin is load-bearing rather than decorative.

use crate::error::{Error, Result};
use crate::feasibility::{
    check_inclusion, enumerate_family, FamilySpec, Inclusion, RadioConfig,
};
use crate::hnf::{bidir_margin, penalty_constant};
use crate::spatial::{Link, LinkClass, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One verifiable inclusion law (or scalar inequality) with a closed-form
/// hypothesis, named by what it claims.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InclusionLaw {
    /// A guard zone of `(1+Δ)·len` is weaker than a SINR threshold `β`
    /// whenever `Δ ≤ β^(1/α) − 1`: the relative-range family contains the
    /// single-interferer SINR family, which contains the aggregate one.
    SirMarginRelaxesSinr,
    /// A fixed exclusion range wide enough to cover the interference budget
    /// (via the ring-packing constant) forces aggregate-SINR feasibility.
    AggregateContainsFixedRange,
    /// Measuring a fixed exclusion range over the four-way endpoint gap is
    /// sandwiched between the receiver-only ranges `r_xcl` and
    /// `r_xcl + 2·r_tx`.
    BidirFixedRangeSandwich,
    /// The endpoint-gap guard-zone family sits between the receiver-only
    /// families at margins `Δ` and `Δ + 2`.
    BidirSirSandwich,
    /// The endpoint-gap single-interferer SINR family sits between the
    /// receiver-only families at thresholds `β` and `(2 + β^(1/α))^α`.
    BidirSinrSandwich,
    /// Same sandwich for aggregate SINR, at the same inflated threshold.
    BidirAggregateSandwich,
    /// Pairwise carrier sensing at `r_xcl + 2·r_tx` forces the bidirectional
    /// fixed-range family, which in turn forces sensing feasibility at
    /// `r_xcl`.
    SensingContainsFixedRange,
    /// Scaling the denominator: for `γ > 1`, `A/(N0 + γB) < β` implies
    /// `A/(N0 + B) < γβ`.
    ScaledDenominatorMonotone,
    /// Interferers pairwise `r_xcl`-separated from a receiver contribute
    /// aggregate path loss at most `k(α)·(r_xcl − r_tx)^(−α)`.
    RingPackingBound,
}

impl InclusionLaw {
    /// Every law, in the order reports are conventionally listed.
    pub const ALL: [InclusionLaw; 9] = [
        InclusionLaw::SirMarginRelaxesSinr,
        InclusionLaw::AggregateContainsFixedRange,
        InclusionLaw::BidirFixedRangeSandwich,
        InclusionLaw::BidirSirSandwich,
        InclusionLaw::BidirSinrSandwich,
        InclusionLaw::BidirAggregateSandwich,
        InclusionLaw::SensingContainsFixedRange,
        InclusionLaw::ScaledDenominatorMonotone,
        InclusionLaw::RingPackingBound,
    ];

    /// Stable kebab-case identifier used in CLI selections and reports.
    pub fn name(self) -> &'static str {
        match self {
            InclusionLaw::SirMarginRelaxesSinr => "sir-margin-relaxes-sinr",
            InclusionLaw::AggregateContainsFixedRange => "aggregate-contains-fixed-range",
            InclusionLaw::BidirFixedRangeSandwich => "bidir-fixed-range-sandwich",
            InclusionLaw::BidirSirSandwich => "bidir-sir-sandwich",
            InclusionLaw::BidirSinrSandwich => "bidir-sinr-sandwich",
            InclusionLaw::BidirAggregateSandwich => "bidir-aggregate-sandwich",
            InclusionLaw::SensingContainsFixedRange => "sensing-contains-fixed-range",
            InclusionLaw::ScaledDenominatorMonotone => "scaled-denominator-monotone",
            InclusionLaw::RingPackingBound => "ring-packing-bound",
        }
    }

    /// Inverse of [`name`](Self::name).
    pub fn from_name(name: &str) -> Option<InclusionLaw> {
        InclusionLaw::ALL.iter().copied().find(|l| l.name() == name)
    }

    /// Whether the law has a finite hypothesis margin whose removal can be
    /// falsified on small instances. The ring-packing bound does not: its
    /// slack at ≤ 8 links is structural, so a stripped variant would hunt a
    /// counterexample that cannot exist at this scale.
    pub fn strippable(self) -> bool {
        !matches!(self, InclusionLaw::RingPackingBound)
    }
}

/// Whether hypothesis margins are honored (audit mode) or removed
/// (counterexample hunt, stopping at the first find).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginMode {
    Honored,
    Stripped,
}

/// Outcome of checking one law over many random instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub law: InclusionLaw,
    pub margins: MarginMode,
    /// Random instances drawn.
    pub instances: u64,
    /// Individual inclusion or inequality evaluations performed.
    pub checks: u64,
    pub violations: u64,
    /// Human-readable rendering of the first violation, if any.
    pub counterexample: Option<String>,
}

impl LawReport {
    /// True when the audit saw no violation.
    pub fn clean(&self) -> bool {
        self.violations == 0
    }
}

/// True when every report in a suite run is violation-free.
pub fn suite_passes(reports: &[LawReport]) -> bool {
    reports.iter().all(LawReport::clean)
}

/// Checks every law in `laws` with `instances` random instances each,
/// deriving per-law seeds from `seed`. In stripped mode each law stops at its
/// first counterexample; laws without a strippable margin error there.
pub fn run_suite(
    laws: &[InclusionLaw],
    instances: u64,
    seed: u64,
    margins: MarginMode,
) -> Result<Vec<LawReport>> {
    laws.iter()
        .enumerate()
        .map(|(i, &law)| {
            let law_seed = seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            check_law(law, instances, law_seed, margins)
        })
        .collect()
}

/// Audits one law over `instances` random instances (each with at most 8
/// links). Honored mode scans everything and counts all violations; stripped
/// mode removes the hypothesis margin and returns at the first counterexample
/// found.
pub fn check_law(
    law: InclusionLaw,
    instances: u64,
    seed: u64,
    margins: MarginMode,
) -> Result<LawReport> {
    if margins == MarginMode::Stripped && !law.strippable() {
        return Err(Error::InvalidParameter(format!(
            "law {} has no hypothesis margin to strip at small instance sizes",
            law.name()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match law {
        InclusionLaw::ScaledDenominatorMonotone => {
            check_scaled_denominator(law, instances, &mut rng, margins)
        }
        InclusionLaw::RingPackingBound => check_ring_packing(law, instances, &mut rng),
        _ => check_family_inclusions(law, instances, &mut rng, margins),
    }
}

/// One sampled instance: a radio configuration, a link set, and the
/// (superset, subset) family pairs the law asserts over them.
struct InstancePlan {
    cfg: RadioConfig,
    links: Vec<Link>,
    pairs: Vec<(FamilySpec, FamilySpec)>,
    params: String,
}

fn check_family_inclusions(
    law: InclusionLaw,
    instances: u64,
    rng: &mut ChaCha8Rng,
    margins: MarginMode,
) -> Result<LawReport> {
    let mut report = LawReport {
        law,
        margins,
        instances: 0,
        checks: 0,
        violations: 0,
        counterexample: None,
    };
    for _ in 0..instances {
        report.instances += 1;
        let plan = plan_instance(law, rng, margins)?;
        for (sup, sub) in &plan.pairs {
            report.checks += 1;
            if let Inclusion::Counterexample(state) =
                check_inclusion(sup, sub, &plan.links, &plan.cfg)?
            {
                report.violations += 1;
                if report.counterexample.is_none() {
                    report.counterexample = Some(format!(
                        "{}: state {:?} lies in {} but outside {}",
                        plan.params,
                        state.members(),
                        sub.tag(),
                        sup.tag()
                    ));
                }
                if margins == MarginMode::Stripped {
                    return Ok(report);
                }
            }
        }
    }
    Ok(report)
}

fn plan_instance(
    law: InclusionLaw,
    rng: &mut ChaCha8Rng,
    margins: MarginMode,
) -> Result<InstancePlan> {
    let stripped = margins == MarginMode::Stripped;
    let n_links = rng.gen_range(2..=8usize);
    match law {
        InclusionLaw::SirMarginRelaxesSinr => {
            let alpha = rng.gen_range(2.5..6.0);
            let beta: f64 = rng.gen_range(1.05..4.0);
            let bound = beta.powf(1.0 / alpha) - 1.0;
            let delta = if stripped {
                bound * rng.gen_range(1.5..3.0) + 0.05
            } else {
                bound * rng.gen_range(0.05..1.0)
            };
            // Noise only shrinks the SINR families, so the inclusion holds
            // for any level below the single-link budget.
            let n0 = if stripped || rng.gen_bool(0.5) {
                0.0
            } else {
                rng.gen_range(0.0..0.4) / beta
            };
            let side = rng.gen_range(2.0..3.5);
            let links = random_links(rng, n_links, side, 0.3, 1.0);
            let sir = FamilySpec::UniPairwiseSir { delta };
            let pw = FamilySpec::UniPairwiseSinr { beta };
            let ag = FamilySpec::UniAggregateSinr { beta };
            let pairs = if stripped {
                vec![(sir, pw)]
            } else {
                vec![(sir, pw), (pw, ag)]
            };
            Ok(InstancePlan {
                cfg: base_cfg(alpha, beta, delta, n0),
                links,
                pairs,
                params: format!("alpha={alpha:.3} beta={beta:.3} delta={delta:.3} n0={n0:.3}"),
            })
        }
        InclusionLaw::AggregateContainsFixedRange => {
            let alpha = rng.gen_range(2.5..6.0);
            let beta = if stripped {
                rng.gen_range(1.0..3.0)
            } else {
                rng.gen_range(0.5..3.0)
            };
            let r_tx: f64 = rng.gen_range(0.6..1.2);
            let budget_full = r_tx.powf(-alpha) / beta;
            let n0 = if stripped {
                0.0
            } else {
                rng.gen_range(0.0..0.6) * budget_full
            };
            // Conservative end of the packing-constant bracket: a larger
            // k(α) only widens the required range.
            let k_hi = penalty_constant(alpha, 1e-3)?.hi;
            let required = ((budget_full - n0) / k_hi).powf(-1.0 / alpha) + r_tx;
            let r_xcl = if stripped {
                r_tx * rng.gen_range(1.05..1.4)
            } else {
                required * rng.gen_range(1.0..1.6)
            };
            let side = r_xcl * rng.gen_range(2.0..3.2);
            let links = random_links(rng, n_links, side, 0.3 * r_tx, r_tx);
            let mut cfg = base_cfg(alpha, beta, 0.5, n0);
            cfg.r_tx = r_tx;
            cfg.r_xcl = r_xcl;
            Ok(InstancePlan {
                cfg,
                links,
                pairs: vec![(
                    FamilySpec::UniAggregateSinr { beta },
                    FamilySpec::UniFixedRange { r_xcl, r_tx },
                )],
                params: format!(
                    "alpha={alpha:.3} beta={beta:.3} r_tx={r_tx:.3} r_xcl={r_xcl:.3} n0={n0:.4}"
                ),
            })
        }
        InclusionLaw::BidirFixedRangeSandwich => {
            let r_tx = rng.gen_range(0.6..1.2);
            let r_xcl = r_tx * rng.gen_range(1.1..2.5);
            let wide = if stripped {
                r_xcl
            } else {
                r_xcl + 2.0 * r_tx + rng.gen_range(0.0..0.6) * r_tx
            };
            let side = (wide + 2.0 * r_tx) * rng.gen_range(1.4..2.4);
            let links = random_links(rng, n_links, side, 0.3 * r_tx, r_tx);
            let uni = FamilySpec::UniFixedRange { r_xcl, r_tx };
            let bi = FamilySpec::BiFixedRange { r_xcl, r_tx };
            let uni_wide = FamilySpec::UniFixedRange { r_xcl: wide, r_tx };
            let pairs = if stripped {
                vec![(bi, uni_wide)]
            } else {
                vec![(uni, bi), (bi, uni_wide)]
            };
            let mut cfg = base_cfg(4.0, 1.0, 0.5, 0.0);
            cfg.r_tx = r_tx;
            cfg.r_xcl = r_xcl;
            Ok(InstancePlan {
                cfg,
                links,
                pairs,
                params: format!("r_tx={r_tx:.3} r_xcl={r_xcl:.3} r_xcl'={wide:.3}"),
            })
        }
        InclusionLaw::BidirSirSandwich => {
            let delta: f64 = rng.gen_range(0.1..1.5);
            let wide = if stripped {
                delta
            } else {
                delta + 2.0 + rng.gen_range(0.0..0.5)
            };
            let side = (1.0 + wide) * rng.gen_range(1.5..2.6);
            let links = random_links(rng, n_links, side, 0.2, 1.0);
            let uni = FamilySpec::UniPairwiseSir { delta };
            let bi = FamilySpec::BiPairwiseSir { delta };
            let uni_wide = FamilySpec::UniPairwiseSir { delta: wide };
            let pairs = if stripped {
                vec![(bi, uni_wide)]
            } else {
                vec![(uni, bi), (bi, uni_wide)]
            };
            Ok(InstancePlan {
                cfg: base_cfg(4.0, 1.0, delta, 0.0),
                links,
                pairs,
                params: format!("delta={delta:.3} delta'={wide:.3}"),
            })
        }
        InclusionLaw::BidirSinrSandwich | InclusionLaw::BidirAggregateSandwich => {
            let alpha = rng.gen_range(2.5..6.0);
            let beta: f64 = rng.gen_range(0.5..3.0);
            let wide = if stripped {
                beta
            } else {
                bidir_margin(beta, alpha) * (1.0 + rng.gen_range(0.0..0.3))
            };
            let reach = wide.powf(1.0 / alpha).max(beta.powf(1.0 / alpha));
            let side = reach * rng.gen_range(1.6..2.8);
            let n0 = if stripped {
                0.0
            } else {
                rng.gen_range(0.0..0.5) / wide
            };
            let links = random_links(rng, n_links, side, 0.25, 1.0);
            let (uni, bi, uni_wide) = if law == InclusionLaw::BidirSinrSandwich {
                (
                    FamilySpec::UniPairwiseSinr { beta },
                    FamilySpec::BiPairwiseSinr { beta },
                    FamilySpec::UniPairwiseSinr { beta: wide },
                )
            } else {
                (
                    FamilySpec::UniAggregateSinr { beta },
                    FamilySpec::BiAggregateSinr {
                        beta,
                        precise_denominator: false,
                    },
                    FamilySpec::UniAggregateSinr { beta: wide },
                )
            };
            let pairs = if stripped {
                vec![(bi, uni_wide)]
            } else {
                vec![(uni, bi), (bi, uni_wide)]
            };
            Ok(InstancePlan {
                cfg: base_cfg(alpha, beta, 0.5, n0),
                links,
                pairs,
                params: format!("alpha={alpha:.3} beta={beta:.3} beta'={wide:.3} n0={n0:.4}"),
            })
        }
        InclusionLaw::SensingContainsFixedRange => {
            let r_tx = rng.gen_range(0.6..1.2);
            let r_xcl = r_tx * rng.gen_range(1.1..2.5);
            let r_cs = if stripped {
                r_xcl
            } else {
                r_xcl + 2.0 * r_tx + rng.gen_range(0.0..0.5) * r_tx
            };
            let side = (r_cs + r_tx) * rng.gen_range(1.4..2.4);
            let links = random_links(rng, n_links, side, 0.3 * r_tx, r_tx);
            let bi = FamilySpec::BiFixedRange { r_xcl, r_tx };
            let cs_near = FamilySpec::PairwiseCs { r_cs: r_xcl };
            let cs_wide = FamilySpec::PairwiseCs { r_cs };
            let pairs = if stripped {
                vec![(bi, cs_wide)]
            } else {
                vec![(cs_near, bi), (bi, cs_wide)]
            };
            let mut cfg = base_cfg(4.0, 1.0, 0.5, 0.0);
            cfg.r_tx = r_tx;
            cfg.r_xcl = r_xcl;
            cfg.r_cs = r_cs;
            Ok(InstancePlan {
                cfg,
                links,
                pairs,
                params: format!("r_tx={r_tx:.3} r_xcl={r_xcl:.3} r_cs={r_cs:.3}"),
            })
        }
        InclusionLaw::ScaledDenominatorMonotone | InclusionLaw::RingPackingBound => {
            unreachable!("scalar laws are checked by dedicated drivers")
        }
    }
}

fn check_scaled_denominator(
    law: InclusionLaw,
    instances: u64,
    rng: &mut ChaCha8Rng,
    margins: MarginMode,
) -> Result<LawReport> {
    let stripped = margins == MarginMode::Stripped;
    let mut report = LawReport {
        law,
        margins,
        instances: 0,
        checks: 0,
        violations: 0,
        counterexample: None,
    };
    for _ in 0..instances {
        report.instances += 1;
        let alpha = rng.gen_range(2.5..6.0);
        let n = rng.gen_range(2..=8usize);
        let side = rng.gen_range(1.5..4.0);
        let links = random_links(rng, n, side, 0.2, 1.0);
        let i = rng.gen_range(0..n);
        let signal = links[i].len().powf(-alpha);
        let interference: f64 = links
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, l)| l.tx.dist(links[i].rx).powf(-alpha))
            .sum();
        let n0 = rng.gen_range(0.0..1.0) * signal;
        let gamma = if stripped {
            rng.gen_range(0.3..0.95)
        } else {
            rng.gen_range(1.02..4.0)
        };
        // Choose β just above the scaled-denominator ratio so the premise
        // holds strictly, then test the conclusion.
        let slack = if stripped {
            rng.gen_range(1.001..1.02)
        } else {
            rng.gen_range(1.001..1.5)
        };
        let beta = signal / (n0 + gamma * interference) * slack;
        report.checks += 1;
        if signal / (n0 + interference) >= gamma * beta {
            report.violations += 1;
            if report.counterexample.is_none() {
                report.counterexample = Some(format!(
                    "A={signal:.4} B={interference:.4} N0={n0:.4} gamma={gamma:.3} beta={beta:.4}: \
                     A/(N0+gamma*B) < beta yet A/(N0+B) >= gamma*beta"
                ));
            }
            if stripped {
                return Ok(report);
            }
        }
    }
    Ok(report)
}

fn check_ring_packing(law: InclusionLaw, instances: u64, rng: &mut ChaCha8Rng) -> Result<LawReport> {
    let mut report = LawReport {
        law,
        margins: MarginMode::Honored,
        instances: 0,
        checks: 0,
        violations: 0,
        counterexample: None,
    };
    for _ in 0..instances {
        report.instances += 1;
        let alpha = rng.gen_range(2.5..6.0);
        let r_tx = rng.gen_range(0.5..1.0);
        let r_xcl = r_tx * rng.gen_range(1.3..3.0);
        let side = r_xcl * rng.gen_range(2.0..3.5);
        let n = rng.gen_range(3..=8usize);
        let links = random_links(rng, n, side, 0.3 * r_tx, r_tx);
        // The sharp end of the bracket: verifying against k.lo certifies the
        // inequality for the true constant as well.
        let k_lo = penalty_constant(alpha, 1e-3)?.lo;
        let cap = k_lo * (r_xcl - r_tx).powf(-alpha);
        let mut cfg = base_cfg(alpha, 1.0, 0.5, 0.0);
        cfg.r_tx = r_tx;
        cfg.r_xcl = r_xcl;
        let spec = FamilySpec::UniFixedRange { r_xcl, r_tx };
        let family = enumerate_family(&links, &spec, &cfg)?;
        for state in family.iter() {
            if state.len() < 2 {
                continue;
            }
            for i in state.iter() {
                let sum: f64 = state
                    .iter()
                    .filter(|&j| j != i)
                    .map(|j| {
                        links[j as usize]
                            .tx
                            .dist(links[i as usize].rx)
                            .powf(-alpha)
                    })
                    .sum();
                report.checks += 1;
                if sum > cap {
                    report.violations += 1;
                    if report.counterexample.is_none() {
                        report.counterexample = Some(format!(
                            "alpha={alpha:.3} r_tx={r_tx:.3} r_xcl={r_xcl:.3}: state {:?} \
                             puts path-loss sum {sum:.4} above the cap {cap:.4} at link {i}",
                            state.members()
                        ));
                    }
                }
            }
        }
    }
    Ok(report)
}

fn base_cfg(alpha: f64, beta: f64, delta: f64, n0: f64) -> RadioConfig {
    RadioConfig {
        alpha,
        beta,
        delta,
        n0,
        ..RadioConfig::reference()
    }
}

fn random_links(
    rng: &mut ChaCha8Rng,
    n: usize,
    side: f64,
    min_len: f64,
    max_len: f64,
) -> Vec<Link> {
    (0..n)
        .map(|_| {
            let tx = Point::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side));
            let len = rng.gen_range(min_len..max_len);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let rx = Point::new(tx.x + len * angle.cos(), tx.y + len * angle.sin());
            Link::new(tx, rx, LinkClass::Peripheral)
        })
        .collect()
}
