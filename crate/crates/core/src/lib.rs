//! Parent-to-child generalized belief propagation over region graphs,
//! with a stochastic variant whose per-edge cost can drop by multiple
//! orders of magnitude in the alphabet size.
//!
//! The crate is organized bottom-up:
//!
//! * [`table`] — dense tables over variable scopes with broadcasting,
//!   marginalization and instrumented fused kernels;
//! * [`model`] — discrete Markov random fields and the Potts-grid
//!   benchmark generator;
//! * [`regions`] — region graphs with validated structure and derived
//!   closures, plus the grid-cluster and Bethe constructions;
//! * [`edges`] — per-edge update structure: numerator/denominator message
//!   sets, symbolic potential quotients, update classification and the
//!   complexity analyzer;
//! * [`gbp`] — the deterministic fixed-point engine and region beliefs;
//! * [`sgbp`] — the stochastic engine with Robbins-Monro step schedules;
//! * [`oracle`] — exhaustive enumeration and literal nested-loop update
//!   evaluation for differential testing.

pub mod edges;
pub mod error;
pub mod gbp;
pub mod model;
pub mod oracle;
pub mod regions;
pub mod rng;
pub mod sgbp;
pub mod table;

pub use edges::{analyze_graph, analysis_report, AnalysisReport, EdgeClass, EdgeMetadata};
pub use error::{Error, Result};
pub use gbp::{
    compute_belief, estimate_contraction, estimate_contraction_damped, gbp_iterate,
    gbp_update_edge, mhat, run_to_fixed_point, variable_marginal, Belief, BeliefReference,
    ContractionProbe, GbpOptions, GbpRun, MessageSet, OpsBreakdown, UpdateOrder, MIN_MESSAGE,
};
pub use model::{build_model, make_potts, Factor, Model, ModelSpec, PottsParams};
pub use oracle::{exact_marginals, reference_update, ExactResult};
pub use regions::{
    bethe_regions, build_region_graph, grid_cluster_regions, Region, RegionGraph, RegionGraphSpec,
};
pub use sgbp::{
    build_q_and_k, mean_trace, sgbp_run, sgbp_update_edge, IterationRecord, MeanTrace, RunTrace,
    SgbpEngine, SgbpOptions, StepSchedule,
};
pub use table::{pointwise, FactorTable, PointwiseOp};
