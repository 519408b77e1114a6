//! Planning library for distributed supervised learning over an operator
//! network: which learner pairs should exchange model state, which
//! information nodes should stream extra training data to which learners,
//! and how many epochs to run, so that error and deadline targets are met
//! at the lowest operating cost.
//!
//! The crate is organized around the pipeline the planners share:
//!
//! * [`model`]: topology, candidate edges, selections, dataset accounting,
//!   and the spectral gap of the cooperation graph.
//! * [`stochastic`]: per-epoch duration laws on pdf grids, plus exact
//!   closed forms for symmetric exponential and uniform instances.
//! * [`learning`]: the error law, the minimal epoch count, costs and the
//!   feasibility margin of a selection.
//! * [`optimize`]: the planners (two-level greedy climb, uniform-degree
//!   sweep, genetic search, exhaustive search).
//! * [`simulate`]: a Monte Carlo replica of the epoch process, used to
//!   validate the analytic pipeline and to produce schedule traces.
//! * [`scenario`]: reproducible random instance generation.

pub mod error;
pub mod learning;
pub mod model;
pub mod optimize;
pub mod scenario;
pub mod simulate;
pub mod stochastic;

pub use error::{Error, Result};
pub use learning::{
    evaluate, fit_profile, min_epochs, per_epoch_cost, predicted_error, total_cost,
    read_observations_csv, write_observations_csv, EpochCount, Evaluation, Evaluator,
    FitResult, InfeasibleReason, LearningProfile, ProfileObservation, EPOCH_CAP,
};
pub use model::{
    average_dataset_size, samples_at, spectral_gap, validate_topology, IlCandidate, INode,
    LNode, LlCandidate, Selection, Topology, FORMAT_VERSION,
};
pub use optimize::ga::{ga, ga_degree, GaOutcome, GaParams};
pub use optimize::{
    brute_force, cheapest_uniform, double_climb, greedy_submodular, opt_unif, solution_cost,
    write_trace_csv, BruteForceOutcome, BruteForceParams, DoubleClimbOutcome, DoubleClimbParams,
    OptUnifOutcome, Solution, TraceEntry, MARGIN_TOL,
};
pub use scenario::{random_instance, InstanceParams, RICH_MULTIPLIER};
pub use simulate::{
    monte_carlo, replication_gantt, run_replication, write_gantt_csv, DrawMode, GanttEvent,
    SimStats,
};
pub use stochastic::{
    closed_form_time_exponential, closed_form_time_uniform, convolve, epoch_duration_pdf,
    expected_learning_time, max_of_independent, to_grid, DistributionSpec, EpochEngine,
    GridFunction, GridParams,
};
