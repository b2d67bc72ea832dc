//! Overlaps, overlap graphs, Poincaré and log-Sobolev certificates, the
//! multiscale separation plan, and recommended schedules.

mod decomposition;
mod graph;
mod lsi;
mod multiscale;
mod overlap;
mod schedule;

pub use decomposition::{decomposition_checks_1d, DecompositionReport, PairCheck};
pub use graph::{build_graph, OverlapGraph};
pub use lsi::{
    default_family, default_grid_1d, lsi_bound, lsi_bound_per_component, verify_lsi_1d, LsiCertificate,
    LsiCheckEntry, LsiCheckReport, TestFunction,
};
pub use multiscale::{
    cluster_constant, ln_delta_prime, mixing_time, multiscale_plan, threshold_recursion, threshold_small_weights,
    MultiscaleOptions, MultiscalePlan, RecursionInputs, ScaleStep, Termination, ThresholdTrace, WeightSplit,
};
pub use overlap::{default_method, overlap, overlap_matrix, MethodTag, OverlapEstimate, OverlapMatrix, OverlapMethod};
pub use schedule::{schedule_params, ScheduleConstants, ScheduleParams};
