//! Subcommand implementations: instance generation, law auditing and
//! certification, throughput cross-checks, sensing simulation, and the sweep.

use std::fs;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use capcore::{
    certify_hnf, enumerate_family, fit_rates, generate_network, is_feasible, required_cs_range,
    run_suite, sample_pairs, sample_pairs_permutation, simulate_ctmc, simulate_ipcs, stationary,
    tdma_throughput, total_variation, BackoffRates, CsFormula, FamilySpec, FeasibleFamily,
    FeasibleState, InclusionLaw, Link, LinkClass, MarginMode, Point, Schedule, SimOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{family_tag, ExperimentConfig, Pairing};
use crate::sweep::{run_sweep, write_artifacts};

/// What a subcommand found; `violation` drives the process exit code.
pub struct Outcome {
    pub violation: bool,
}

impl Outcome {
    fn clean() -> Self {
        Outcome { violation: false }
    }
}

const VERIFY_STREAM: u64 = 0xAE01_7C11_0000_0001;
const THROUGHPUT_STREAM: u64 = 0xAE01_7C11_0000_0002;
const IPCS_STREAM: u64 = 0xAE01_7C11_0000_0003;
const PAIR_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Samples links with uniformly placed transmitters in a `side × side` box
/// and uniformly oriented receivers at distance `len_lo..=len_hi`.
fn random_links(
    rng: &mut ChaCha8Rng,
    n: usize,
    side: f64,
    len_lo: f64,
    len_hi: f64,
) -> Vec<Link> {
    (0..n)
        .map(|_| {
            let tx = Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side);
            let len = rng.gen_range(len_lo..=len_hi);
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            let rx = Point::new(tx.x + len * ang.cos(), tx.y + len * ang.sin());
            Link::new(tx, rx, LinkClass::Peripheral)
        })
        .collect()
}

/// `gen`: draw the placement and traffic pattern for the first configured
/// size and write them as one JSON document.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.prepare_out_dir()?;
    let n = cfg.n[0];
    let seed = cfg.seeds[0];
    let nodes = generate_network(n, seed)?;
    let pairs = match cfg.pairing {
        Pairing::Permutation => sample_pairs_permutation(&nodes, seed ^ PAIR_STREAM_SALT)?,
        Pairing::Uniform => sample_pairs(&nodes, seed ^ PAIR_STREAM_SALT)?,
    };
    let path = cfg.out_dir.join("network.json");
    let doc = json!({
        "n": n,
        "seed": seed,
        "side_length": nodes.side_length,
        "node_count": nodes.len(),
        "nodes": nodes,
        "pairs": pairs,
    });
    fs::write(&path, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!(
        "generated {} nodes on a {:.2}-side square with {} source-sink pairs",
        nodes.len(),
        nodes.side_length,
        pairs.pairs.len()
    );
    println!("wrote {}", path.display());
    Ok(Outcome::clean())
}

fn formula_label(f: &CsFormula) -> &'static str {
    match f {
        CsFormula::FixedRange => "r_xcl + 2·r_tx",
        CsFormula::PairwiseSir => "(3 + Δ)·r_tx",
        CsFormula::PairwiseSinr => "single-interferer power budget + 2·r_tx",
        CsFormula::AggregateSinr => "packing-weighted power budget + 3·r_tx",
    }
}

/// `hnf`: print and persist the sensing range that makes the configured
/// bi-directional model hidden-node-free.
pub fn cmd_hnf(cfg: &ExperimentConfig) -> Result<Outcome> {
    let cond = required_cs_range(&cfg.target_model, &cfg.radio)?;
    println!("target model        {}", family_tag(&cond.target_model));
    println!("required r_cs       {:.6}", cond.r_cs_required);
    println!("formula             {}", formula_label(&cond.formula));
    if let Some(chain) = cond.chain_r_cs {
        println!("packing-chain bound {chain:.6}");
    }
    if let Some(p) = &cond.penalty {
        println!(
            "interference constant in [{:.6}, {:.6}] after {} exact ring terms",
            p.lo, p.hi, p.terms
        );
    }
    cfg.prepare_out_dir()?;
    let path = cfg.out_dir.join("hnf_condition.json");
    fs::write(&path, serde_json::to_string_pretty(&cond)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(Outcome::clean())
}

/// Positive-control outcome at one shrunken sensing range.
#[derive(Clone, Debug, Serialize)]
pub struct ControlReport {
    /// Fraction of the required range the control ran at.
    pub factor: f64,
    pub searched: u64,
    /// 1-based instance index where the first violation appeared.
    pub fired_at: Option<u64>,
}

/// Certification results for one target model.
#[derive(Clone, Debug, Serialize)]
pub struct CertReport {
    pub target: String,
    pub r_cs_required: f64,
    pub instances: u64,
    pub violations: u64,
    pub halved_control: ControlReport,
    /// Run only when halving cannot fire: shrinks the range until violating
    /// geometry exists at all, demonstrating the detector is live.
    pub deep_control: Option<ControlReport>,
}

fn control_search(
    cfg: &ExperimentConfig,
    spec: &FamilySpec,
    rng: &mut ChaCha8Rng,
    r_cs: f64,
    r_required: f64,
) -> Result<ControlReport> {
    let r_tx = cfg.radio.r_tx;
    // Small box and long links bias the draw toward packable violations.
    let side = (1.6 * r_cs).max(r_cs + 2.5 * r_tx);
    let budget = cfg.verify.counterexample_budget;
    for k in 0..budget {
        let links = random_links(rng, cfg.verify.certify_links, side, 0.6 * r_tx, r_tx);
        if !certify_hnf(&links, r_cs, spec, &cfg.radio)?.is_certified() {
            return Ok(ControlReport {
                factor: r_cs / r_required,
                searched: k + 1,
                fired_at: Some(k + 1),
            });
        }
    }
    Ok(ControlReport {
        factor: r_cs / r_required,
        searched: budget,
        fired_at: None,
    })
}

/// Certifies one target's prescribed sensing range on random instances and
/// runs the shrunken-range positive controls.
pub fn certify_target(
    cfg: &ExperimentConfig,
    spec: &FamilySpec,
    rng: &mut ChaCha8Rng,
) -> Result<CertReport> {
    let cond = required_cs_range(spec, &cfg.radio)?;
    let r_req = cond.r_cs_required;
    let r_tx = cfg.radio.r_tx;
    let mut violations = 0u64;
    for _ in 0..cfg.verify.certify_instances {
        let links = random_links(
            rng,
            cfg.verify.certify_links,
            1.3 * r_req,
            0.3 * r_tx,
            r_tx,
        );
        if !certify_hnf(&links, r_req, spec, &cfg.radio)?.is_certified() {
            violations += 1;
        }
    }
    let halved = control_search(cfg, spec, rng, 0.5 * r_req, r_req)?;
    let deep = if halved.fired_at.is_none() {
        // Violating geometry needs receiver gaps below the guard distance;
        // once the sensing range stops separating receivers (below ~2·r_tx)
        // it must exist for every model.
        let deep_range = (1.9 * r_tx).min(0.5 * r_req);
        Some(control_search(cfg, spec, rng, deep_range, r_req)?)
    } else {
        None
    };
    Ok(CertReport {
        target: family_tag(spec),
        r_cs_required: r_req,
        instances: cfg.verify.certify_instances,
        violations,
        halved_control: halved,
        deep_control: deep,
    })
}

/// `verify`: audit the inclusion laws on random instances, then certify the
/// prescribed sensing ranges with positive controls.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seed = cfg.seeds[0];
    let margins = if cfg.verify.strip_margins {
        MarginMode::Stripped
    } else {
        MarginMode::Honored
    };
    let mut laws: Vec<InclusionLaw> = match &cfg.verify.laws {
        None => InclusionLaw::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|s| {
                InclusionLaw::from_name(s)
                    .ok_or_else(|| anyhow!("config: unknown inclusion law {s:?}"))
            })
            .collect::<Result<_>>()?,
    };
    if margins == MarginMode::Stripped {
        let skipped: Vec<&str> = laws
            .iter()
            .filter(|l| !l.strippable())
            .map(|l| l.name())
            .collect();
        if !skipped.is_empty() {
            eprintln!(
                "warning: {} carry no strippable margin, skipping under stripped margins",
                skipped.join(", ")
            );
        }
        laws.retain(|l| l.strippable());
    }
    if laws.is_empty() {
        eprintln!("warning: no laws selected; the audit stage is a trivial pass");
    }

    let reports = run_suite(&laws, cfg.verify.instances, seed, margins)?;
    let mut violation = false;
    println!(
        "{:<34} {:>9} {:>9} {:>10}",
        "law", "instances", "checks", "violations"
    );
    for r in &reports {
        println!(
            "{:<34} {:>9} {:>9} {:>10}",
            r.law.name(),
            r.instances,
            r.checks,
            r.violations
        );
        if let Some(ce) = &r.counterexample {
            println!("    counterexample: {ce}");
        }
        violation |= !r.clean();
    }

    // Certification stage; skipped when stripping margins, where violations
    // are the expected output of the audit above.
    let mut certs: Vec<CertReport> = Vec::new();
    if margins == MarginMode::Honored {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ VERIFY_STREAM);
        println!();
        println!(
            "{:<6} {:>12} {:>10} {:>10}  control",
            "target", "r_cs", "instances", "violations"
        );
        for spec in cfg.certify_target_specs() {
            let report = certify_target(cfg, &spec, &mut rng)?;
            violation |= report.violations > 0;
            let control = match (&report.halved_control.fired_at, &report.deep_control) {
                (Some(at), _) => format!("0.5× fired at instance {at}"),
                (None, Some(deep)) => match deep.fired_at {
                    Some(at) => format!(
                        "0.5× silent in {} (prescription conservative); {:.2}× fired at {at}",
                        report.halved_control.searched, deep.factor
                    ),
                    None => format!(
                        "0.5× and {:.2}× both silent in {}",
                        deep.factor, report.halved_control.searched
                    ),
                },
                (None, None) => "0.5× silent".into(),
            };
            println!(
                "{:<6} {:>12.6} {:>10} {:>10}  {control}",
                report.target, report.r_cs_required, report.instances, report.violations
            );
            certs.push(report);
        }
    }

    cfg.prepare_out_dir()?;
    let path = cfg.out_dir.join("verify_report.json");
    let doc = json!({
        "margins": margins,
        "instances_per_law": cfg.verify.instances,
        "laws": reports,
        "certification": certs,
    });
    fs::write(&path, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!();
    println!(
        "{}; wrote {}",
        if violation {
            "violations found"
        } else {
            "all checks clean"
        },
        path.display()
    );
    Ok(Outcome { violation })
}

#[derive(Clone, Debug, Serialize)]
struct ThroughputRow {
    instance: u64,
    states: usize,
    tv: f64,
    max_shortfall: f64,
    ok: bool,
}

/// Random cyclic schedule drawn from the family, padded with singleton slots
/// so every link gets strictly positive frequency.
fn random_schedule(
    rng: &mut ChaCha8Rng,
    family: &FeasibleFamily,
    n_links: usize,
) -> Result<Schedule> {
    let states: Vec<&FeasibleState> = family.iter().collect();
    let mut slots: Vec<FeasibleState> = (0..6)
        .map(|_| states[rng.gen_range(0..states.len())].clone())
        .collect();
    let mut covered = vec![false; n_links];
    for slot in &slots {
        for &i in slot.members() {
            covered[i as usize] = true;
        }
    }
    for (i, seen) in covered.iter().enumerate() {
        if !seen {
            slots.push(FeasibleState::new(vec![i as u32]));
        }
    }
    Ok(Schedule::new(slots, n_links)?)
}

/// `throughput`: validate the product-form chain against simulation and show
/// CSMA can match any scheduled baseline on random instances.
pub fn cmd_throughput(cfg: &ExperimentConfig) -> Result<Outcome> {
    let t = cfg.throughput;
    let seed = cfg.seeds[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ THROUGHPUT_STREAM);
    let r_tx = cfg.radio.r_tx;
    let sensing = FamilySpec::PairwiseCs {
        r_cs: cfg.radio.r_cs,
    };
    let mut violation = false;

    // Closed form first: a lone link must occupy ν/(1+ν) of the timeline.
    {
        let links = random_links(&mut rng, 1, r_tx, 0.5 * r_tx, r_tx);
        let family = enumerate_family(&links, &sensing, &cfg.radio)?;
        let rates = BackoffRates::uniform(1, 2.0)?;
        let got = stationary(&family, &rates)?.per_link_throughput[0];
        let want = 2.0 / 3.0;
        if (got - want).abs() > 1e-12 {
            println!("single-link closed form failed: got {got}, want {want}");
            violation = true;
        } else {
            println!("single-link closed form: {got:.12} = ν/(1+ν)");
        }
    }

    let mut rows = Vec::new();
    println!(
        "{:>8} {:>7} {:>12} {:>14} {:>6}",
        "instance", "states", "tv", "max shortfall", "ok"
    );
    for i in 0..t.instances {
        let links = random_links(
            &mut rng,
            t.n_links,
            1.15 * cfg.radio.r_cs,
            0.3 * r_tx,
            r_tx,
        );
        let family = enumerate_family(&links, &sensing, &cfg.radio)?;
        let nu: Vec<f64> = (0..t.n_links)
            .map(|_| rng.gen_range(t.nu_lo..=t.nu_hi))
            .collect();
        let rates = BackoffRates::new(nu)?;
        let exact = stationary(&family, &rates)?;
        let sim_seed = seed.wrapping_add((i + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let trace = simulate_ctmc(&family, &rates, &SimOptions::summary_only(t.horizon, sim_seed))?;
        let tv = total_variation(&trace.occupancy, &exact.probabilities);

        // Scheduled baseline the fitted rates must dominate up to the slack.
        let schedule = random_schedule(&mut rng, &family, t.n_links)?;
        let base = tdma_throughput(&schedule)?;
        let targets: Vec<f64> = base.iter().map(|b| b * (1.0 - 0.5 * t.tdma_slack)).collect();
        let fit = fit_rates(&family, &targets, t.fit_tol)?;
        let achieved = stationary(&family, &fit.rates)?.per_link_throughput;
        let max_shortfall = base
            .iter()
            .zip(&achieved)
            .map(|(b, a)| b - a)
            .fold(f64::NEG_INFINITY, f64::max);

        let ok = tv < t.tv_tol && max_shortfall <= t.tdma_slack;
        violation |= !ok;
        println!(
            "{:>8} {:>7} {:>12.6} {:>14.8} {:>6}",
            i,
            family.len(),
            tv,
            max_shortfall,
            if ok { "yes" } else { "NO" }
        );
        rows.push(ThroughputRow {
            instance: i,
            states: family.len(),
            tv,
            max_shortfall,
            ok,
        });
    }

    cfg.prepare_out_dir()?;
    let path = cfg.out_dir.join("throughput_report.json");
    fs::write(&path, serde_json::to_string_pretty(&rows)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!(
        "{}; wrote {}",
        if violation {
            "violations found"
        } else {
            "simulation matches the product form and dominates every baseline"
        },
        path.display()
    );
    Ok(Outcome { violation })
}

/// `ipcs`: simulate idealized per-packet carrier sensing at the prescribed
/// range and check it never leaves the sensing or target families.
pub fn cmd_ipcs(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seed = cfg.seeds[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ IPCS_STREAM);
    let r_tx = cfg.radio.r_tx;
    let cond = required_cs_range(&cfg.target_model, &cfg.radio)?;
    let r_cs = cond.r_cs_required;
    let links = random_links(&mut rng, cfg.ipcs.n_links, 1.3 * r_cs, 0.3 * r_tx, r_tx);
    let rates = BackoffRates::uniform(cfg.ipcs.n_links, cfg.ipcs.nu)?;
    let opts = SimOptions::new(cfg.ipcs.horizon, seed);
    let trace = simulate_ipcs(&links, r_cs, &rates, &cfg.radio, &opts)?;

    let sensing = FamilySpec::PairwiseCs { r_cs };
    let mut outside_sensing = 0usize;
    let mut outside_target = 0usize;
    for state in trace.occupancy.keys() {
        if !is_feasible(state, &links, &sensing, &cfg.radio)? {
            outside_sensing += 1;
        }
        if !is_feasible(state, &links, &cfg.target_model, &cfg.radio)? {
            outside_target += 1;
        }
    }
    let family = enumerate_family(&links, &sensing, &cfg.radio)?;
    let exact = stationary(&family, &rates)?;
    let tv = total_variation(&trace.occupancy, &exact.probabilities);

    cfg.prepare_out_dir()?;
    let events_path = cfg.out_dir.join("ipcs_events.ndjson");
    let mut events_file = fs::File::create(&events_path)
        .with_context(|| format!("cannot write {}", events_path.display()))?;
    trace.write_events_ndjson(&mut events_file)?;
    let occ_path = cfg.out_dir.join("ipcs_occupancy.csv");
    let mut occ_file = fs::File::create(&occ_path)
        .with_context(|| format!("cannot write {}", occ_path.display()))?;
    trace.write_occupancy_csv(&mut occ_file)?;

    println!(
        "simulated {} events on {} links at r_cs = {:.4} (target {})",
        cfg.ipcs.horizon,
        cfg.ipcs.n_links,
        r_cs,
        family_tag(&cfg.target_model)
    );
    println!(
        "states visited {}, outside sensing family {}, outside target family {}",
        trace.occupancy.len(),
        outside_sensing,
        outside_target
    );
    println!(
        "occupancy distance to the product form: {tv:.6} (tolerance {})",
        cfg.ipcs.tv_tol
    );
    println!("wrote {} and {}", events_path.display(), occ_path.display());

    let violation = outside_sensing > 0 || outside_target > 0 || tv >= cfg.ipcs.tv_tol;
    if violation {
        println!("violations found");
    }
    Ok(Outcome { violation })
}

/// `sweep`: run the full grid and report per-mode scaling.
pub fn cmd_sweep(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Outcome> {
    let t0 = Instant::now();
    let outcome = run_sweep(cfg, jobs)?;
    write_artifacts(cfg, &outcome)?;
    for m in &outcome.summary {
        let slope = m
            .slope
            .map(|s| format!("{s:+.3}"))
            .unwrap_or_else(|| "n/a".into());
        let backbone = m
            .backbone_bottleneck_share
            .map(|s| format!("{:.0}%", 100.0 * s))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "mode {:<12} rows {}/{} ok, log-log slope {}, backbone bottlenecks {}",
            m.mode,
            m.ok_rows,
            m.ok_rows + m.failed_rows,
            slope,
            backbone
        );
        for p in &m.points {
            println!(
                "    n {:>6}  median rate {:.6e}  ·√n {:.6e}  ·√(n ln n) {:.6e}  ({} rows)",
                p.n, p.median_rate, p.median_rate_sqrt_n, p.median_rate_sqrt_n_log_n, p.rows
            );
        }
    }
    println!(
        "wrote sweep.csv, sweep.json, sweep_summary.json to {} in {:.1}s",
        cfg.out_dir.display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(Outcome::clean())
}
