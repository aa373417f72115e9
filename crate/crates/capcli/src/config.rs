//! Experiment configuration: one JSON document drives every subcommand.
//!
//! Every field has a default, so a config file only needs the keys it wants
//! to change; unknown keys are rejected so typos fail loudly instead of
//! silently running the defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use capcore::{FamilySpec, HighwayParams, RadioConfig, SensingMode, ENUM_CAP};
use serde::{Deserialize, Serialize};

/// Top-level experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Network sizes to sweep (expected node counts, each at least 64).
    pub n: Vec<u64>,
    /// Seeds applied to every network size.
    pub seeds: Vec<u64>,
    /// Sensing/duplex deployments to run.
    pub modes: Vec<SensingMode>,
    /// Bi-directional interference model the design must satisfy (b.0–b.3).
    pub target_model: FamilySpec,
    /// Radio parameters shared by all commands.
    pub radio: RadioConfig,
    /// Relay-construction constants.
    pub highway: HighwayParams,
    /// Two-stage schedule knobs.
    pub schedule: ScheduleSection,
    /// Default event budget for simulations that do not set their own.
    pub horizon: u64,
    /// Directory all output files are written into.
    pub out_dir: PathBuf,
    /// How source–sink pairs are drawn.
    pub pairing: Pairing,
    pub verify: VerifySection,
    pub throughput: ThroughputSection,
    pub ipcs: IpcsSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: vec![256, 1024, 4096, 16384],
            seeds: (1..=20).collect(),
            modes: vec![
                SensingMode::DualFull,
                SensingMode::DualHalf,
                SensingMode::SingleFull,
            ],
            target_model: FamilySpec::BiPairwiseSir { delta: 0.5 },
            radio: RadioConfig::reference(),
            highway: HighwayParams::default(),
            schedule: ScheduleSection::default(),
            horizon: 150_000,
            out_dir: PathBuf::from("./out"),
            pairing: Pairing::Permutation,
            verify: VerifySection::default(),
            throughput: ThroughputSection::default(),
            ipcs: IpcsSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Two-stage schedule knobs (the sensing mode itself comes from `modes`).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// Peripheral-stage reuse factor.
    pub k_p: usize,
    /// Smallest backbone-stage reuse factor.
    pub k_b_min: usize,
    /// Guard-zone coefficient granted to long peripheral hops.
    pub delta_p: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            k_p: 3,
            k_b_min: 3,
            delta_p: 0.25,
        }
    }
}

/// Traffic pattern for source–sink selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Random derangement: every node sources one flow and sinks one flow.
    Permutation,
    /// Independent uniform draws (sinks may repeat).
    Uniform,
}

/// Inclusion-law audit and certification settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Law names to audit; absent means all, empty means none.
    pub laws: Option<Vec<String>>,
    /// Random instances per law.
    pub instances: u64,
    /// Drop the laws' hypothesis margins to demonstrate counterexamples.
    pub strip_margins: bool,
    /// Target models ("b.0"–"b.3") to certify; absent means all four.
    pub certify_targets: Option<Vec<String>>,
    /// Random instances per certification target.
    pub certify_instances: u64,
    /// Links per certification instance.
    pub certify_links: usize,
    /// Instance budget when searching for a positive-control violation.
    pub counterexample_budget: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            laws: None,
            instances: 1000,
            strip_margins: false,
            certify_targets: None,
            certify_instances: 1000,
            certify_links: 6,
            counterexample_budget: 10_000,
        }
    }
}

/// Throughput cross-validation settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThroughputSection {
    /// Random instances to check.
    pub instances: u64,
    /// Links per instance.
    pub n_links: usize,
    /// Back-off rate range sampled per link.
    pub nu_lo: f64,
    pub nu_hi: f64,
    /// Events per simulated trace.
    pub horizon: u64,
    /// Total-variation tolerance between simulation and the product form.
    pub tv_tol: f64,
    /// Allowed per-link shortfall against a scheduled baseline.
    pub tdma_slack: f64,
    /// Rate-fitting convergence tolerance.
    pub fit_tol: f64,
}

impl Default for ThroughputSection {
    fn default() -> Self {
        ThroughputSection {
            instances: 20,
            n_links: 5,
            nu_lo: 0.2,
            nu_hi: 5.0,
            horizon: 1_000_000,
            tv_tol: 0.01,
            tdma_slack: 1e-3,
            fit_tol: 1e-4,
        }
    }
}

/// Idealized-sensing simulator settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpcsSection {
    /// Links in the simulated instance.
    pub n_links: usize,
    /// Events to simulate.
    pub horizon: u64,
    /// Uniform back-off rate.
    pub nu: f64,
    /// Total-variation tolerance against the sensing family's product form.
    pub tv_tol: f64,
}

impl Default for IpcsSection {
    fn default() -> Self {
        IpcsSection {
            n_links: 5,
            // The occupancy estimate needs roughly 10x more events than the
            // tolerance's scale: at 1e5 the estimator sits ~2.5 sigma from
            // 0.01, so unlucky instance draws fail spuriously.
            horizon: 1_000_000,
            nu: 1.0,
            tv_tol: 0.01,
        }
    }
}

/// Sweep-specific settings for realizing contention at the bottleneck.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Events per contention simulation (0 falls back to `horizon`).
    pub sim_events: u64,
    /// Most links simulated around the bottleneck.
    pub ball_cap: usize,
    /// Neighbourhood radius in units of the stage sensing range.
    pub ball_radius: f64,
    /// Back-off aggressiveness relative to the slot-share odds.
    pub boost: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sim_events: 150_000,
            ball_cap: 64,
            ball_radius: 1.5,
            boost: 32.0,
        }
    }
}

impl ExperimentConfig {
    /// Reads, parses, and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::from_json(&text)
            .with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Parses and validates a configuration document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("cannot parse config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks parameter ranges shared by all subcommands.
    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            bail!("config: `n` must list at least one network size");
        }
        if let Some(&bad) = self.n.iter().find(|&&v| v < 64) {
            bail!("config: network sizes must be at least 64, got {bad}");
        }
        if self.seeds.is_empty() {
            bail!("config: `seeds` must list at least one seed");
        }
        if self.modes.is_empty() {
            bail!("config: `modes` must list at least one sensing mode");
        }
        match self.target_model {
            FamilySpec::BiFixedRange { .. }
            | FamilySpec::BiPairwiseSir { .. }
            | FamilySpec::BiPairwiseSinr { .. }
            | FamilySpec::BiAggregateSinr { .. } => {}
            ref other => bail!(
                "config: `target_model` must be a bi-directional model (b.0–b.3), got {}",
                family_tag(other)
            ),
        }
        self.radio
            .validate()
            .context("config: invalid `radio` section")?;
        for (name, v) in [
            ("c1", self.highway.c1),
            ("c2", self.highway.c2),
            ("c3", self.highway.c3),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                bail!("config: highway constant `{name}` must be positive and finite, got {v}");
            }
        }
        if self.schedule.k_p < 2 {
            bail!("config: schedule `k_p` must be at least 2");
        }
        if self.schedule.k_b_min < 1 {
            bail!("config: schedule `k_b_min` must be at least 1");
        }
        if !(self.schedule.delta_p > 0.0) {
            bail!("config: schedule `delta_p` must be positive");
        }
        if self.horizon == 0 {
            bail!("config: `horizon` must be positive");
        }
        if let Some(names) = &self.verify.certify_targets {
            for name in names {
                if !matches!(name.as_str(), "b.0" | "b.1" | "b.2" | "b.3") {
                    bail!("config: unknown certification target {name:?} (expected b.0–b.3)");
                }
            }
        }
        if self.verify.certify_links == 0 || self.verify.certify_links > ENUM_CAP {
            bail!(
                "config: `verify.certify_links` must be in 1..={ENUM_CAP}, got {}",
                self.verify.certify_links
            );
        }
        if self.throughput.n_links == 0 || self.throughput.n_links > ENUM_CAP {
            bail!(
                "config: `throughput.n_links` must be in 1..={ENUM_CAP}, got {}",
                self.throughput.n_links
            );
        }
        if !(self.throughput.nu_lo > 0.0) || self.throughput.nu_hi < self.throughput.nu_lo {
            bail!(
                "config: back-off range must satisfy 0 < nu_lo <= nu_hi, got [{}, {}]",
                self.throughput.nu_lo,
                self.throughput.nu_hi
            );
        }
        for (name, v) in [
            ("throughput.tv_tol", self.throughput.tv_tol),
            ("throughput.tdma_slack", self.throughput.tdma_slack),
            ("throughput.fit_tol", self.throughput.fit_tol),
            ("ipcs.tv_tol", self.ipcs.tv_tol),
            ("ipcs.nu", self.ipcs.nu),
            ("sweep.boost", self.sweep.boost),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                bail!("config: `{name}` must be positive and finite, got {v}");
            }
        }
        if self.ipcs.n_links == 0 || self.ipcs.n_links > ENUM_CAP {
            bail!(
                "config: `ipcs.n_links` must be in 1..={ENUM_CAP}, got {}",
                self.ipcs.n_links
            );
        }
        if self.sweep.ball_cap == 0 {
            bail!("config: `sweep.ball_cap` must be at least 1");
        }
        if !(self.sweep.ball_radius >= 1.0) {
            bail!(
                "config: `sweep.ball_radius` must be at least 1 sensing range, got {}",
                self.sweep.ball_radius
            );
        }
        Ok(())
    }

    /// Event budget for sweep contention simulations.
    pub fn sweep_events(&self) -> u64 {
        if self.sweep.sim_events == 0 {
            self.horizon
        } else {
            self.sweep.sim_events
        }
    }

    /// The models the certification suite should cover, in b.0–b.3 order.
    pub fn certify_target_specs(&self) -> Vec<FamilySpec> {
        let wanted: Vec<&str> = match &self.verify.certify_targets {
            Some(names) => names.iter().map(String::as_str).collect(),
            None => vec!["b.0", "b.1", "b.2", "b.3"],
        };
        let r = &self.radio;
        ["b.0", "b.1", "b.2", "b.3"]
            .iter()
            .filter(|tag| wanted.contains(*tag))
            .map(|tag| match *tag {
                "b.0" => FamilySpec::BiFixedRange {
                    r_xcl: r.r_xcl,
                    r_tx: r.r_tx,
                },
                "b.1" => FamilySpec::BiPairwiseSir { delta: r.delta },
                "b.2" => FamilySpec::BiPairwiseSinr { beta: r.beta },
                _ => FamilySpec::BiAggregateSinr {
                    beta: r.beta,
                    precise_denominator: false,
                },
            })
            .collect()
    }

    /// Creates the output directory and proves it is writable.
    pub fn prepare_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).with_context(|| {
            format!("cannot create output directory {}", self.out_dir.display())
        })?;
        let probe = self.out_dir.join(".write_probe");
        fs::write(&probe, b"probe")
            .with_context(|| format!("output directory {} is not writable", self.out_dir.display()))?;
        fs::remove_file(&probe).ok();
        Ok(())
    }
}

/// The serialized model tag of a family spec ("a.1", "b.3", "c.1", ...).
pub fn family_tag(spec: &FamilySpec) -> String {
    serde_json::to_value(spec)
        .ok()
        .and_then(|v| v.get("model").and_then(|m| m.as_str()).map(str::to_owned))
        .unwrap_or_else(|| format!("{spec:?}"))
}

/// Stable lowercase label for a sensing mode (used in CSV and tables).
pub fn mode_label(mode: SensingMode) -> &'static str {
    match mode {
        SensingMode::SingleFull => "single_full",
        SensingMode::DualFull => "dual_full",
        SensingMode::DualHalf => "dual_half",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_document_fills_in_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"n": [128], "seeds": [7], "radio": {"alpha": 3.5}}"#,
        )
        .unwrap();
        assert_eq!(cfg.n, vec![128]);
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.radio.alpha, 3.5);
        assert_eq!(cfg.radio.p_tx, 1.0);
        assert_eq!(cfg.modes.len(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"n_nodes": [128]}"#).unwrap_err();
        assert!(err.to_string().contains("cannot parse config"));
    }

    #[test]
    fn undersized_networks_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"n": [32]}"#).unwrap_err();
        assert!(format!("{err:#}").contains("at least 64"));
    }

    #[test]
    fn unidirectional_target_model_is_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"target_model": {"model": "a.1", "params": {"delta": 0.5}}}"#,
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("bi-directional"));
    }

    #[test]
    fn certify_targets_resolve_against_the_radio() {
        let cfg = ExperimentConfig::from_json(r#"{"verify": {"certify_targets": ["b.1"]}}"#)
            .unwrap();
        let specs = cfg.certify_target_specs();
        assert_eq!(specs.len(), 1);
        assert_eq!(family_tag(&specs[0]), "b.1");
    }

    #[test]
    fn mode_labels_are_stable() {
        assert_eq!(mode_label(SensingMode::DualFull), "dual_full");
        assert_eq!(mode_label(SensingMode::DualHalf), "dual_half");
        assert_eq!(mode_label(SensingMode::SingleFull), "single_full");
    }
}
