//! Capacity analysis toolkit for planar wireless networks under carrier-sense
//! multiple access.
//!
//! The crate is organized around five building blocks:
//!
//! - [`spatial`]: random node placement on the unit-density square, source–sink
//!   pairing, and link geometry.
//! - [`feasibility`]: interference and carrier-sensing models expressed as
//!   downward-closed families of concurrently active link sets, with
//!   enumeration, inclusion checking, and conflict graphs.
//! - [`hnf`]: hidden-node-free design — sensing ranges large enough that every
//!   state a sensing schedule can produce is safe for a target interference
//!   model, plus the penalty constant that bounds aggregate interference.
//! - [`csma`]: the idealized CSMA continuous-time Markov chain — product-form
//!   stationary distribution, event-driven simulation, counter-based sensing
//!   simulation, and backoff-rate fitting against TDMA targets.
//! - [`highway`]: backbone/peripheral routing over crossing-path highways and
//!   the two-stage schedule used for capacity scaling experiments.
//!
//! [`verify`] ties the pieces together with randomized checks of the inclusion
//! laws that justify the sensing-range prescriptions.

// Validation guards are written `!(x > lo)` so NaN fails them; the suggested
// `x <= lo` rewrite would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csma;
pub mod error;
pub mod feasibility;
pub mod hnf;
pub mod highway;
pub mod numeric;
pub mod spatial;
pub mod verify;

pub use error::{Error, Result};

pub use csma::{
    fit_rates, simulate_ctmc, simulate_ipcs, stationary, tdma_throughput, total_variation,
    BackoffRates, FitResult, Schedule, SimEvent, SimEventKind, SimOptions, SimTrace,
    StationaryDistribution,
};
pub use feasibility::{
    admission_order, check_inclusion, conflict_graph, enumerate_family, enumerate_family_capped,
    is_feasible, ConflictGraph, FamilySpec, FeasibleFamily, FeasibleState, Inclusion, RadioConfig,
    ENUM_CAP,
};
pub use hnf::{
    bidir_margin, certify_hnf, certify_hnf_sampled, penalty_constant, penalty_constant_with_terms,
    required_cs_range, Certification, CsFormula, EchoedInputs, HnfCondition, PenaltyBound,
};
pub use highway::{
    associate_peripherals, build_grid, build_highway_system, build_highways, min_flow_rate,
    plan_routes, two_stage_schedule, Association, CellGrid, FlowReport, HighwayParams,
    HighwaySystem, RoutePlan, ScheduleParams, SensingMode, TwoStageSchedule,
};
pub use spatial::{
    generate_network, generate_network_fixed, link_gap, sample_pairs, sample_pairs_permutation,
    Link, LinkClass, NodeSet, Point, SourceSinkPairs,
};
pub use verify::{check_law, run_suite, suite_passes, InclusionLaw, LawReport, MarginMode};
