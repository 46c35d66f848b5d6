//! Randomized experiments for comparing two predetermined matching plans on
//! a finite population.
//!
//! The pieces, in pipeline order:
//!
//! - [`matching`]: matchings, outcomes, and the disagreement set — the match
//!   pairs appearing in exactly one of the two plans.
//! - [`decompose`]: the unique split of a one-to-one disagreement set into
//!   alternating paths and cycles.
//! - [`many_to_one`]: feasible (non-unique) decompositions under supplier
//!   capacities, via an auxiliary digraph, augmenting paths, and Euler-walk
//!   cycle splitting.
//! - [`design`]: sequential conditional randomization along each component,
//!   plus closed-form selection probabilities.
//! - [`estimate`]: Horvitz–Thompson estimation, exact and worst-case
//!   variances, estimable variance upper bounds, confidence intervals.
//! - [`optimize`]: minimax choice of the randomization probability.
//! - [`sim`]: exhaustive enumeration oracle and Monte Carlo harness.
//! - [`io`]: the CSV/JSON formats shared by the CLI stages.

pub mod decompose;
pub mod design;
pub mod error;
pub mod estimate;
pub mod io;
pub mod many_to_one;
pub mod matching;
pub mod optimize;
pub mod sim;

pub use decompose::{decompose_one_to_one, AlternatingComponent, ComponentKind, EdgeLabel};
pub use design::{
    ap_randomize, ap_randomize_rep, joint_prob, naive_randomize, unconditional_prob,
    AssignmentRealization, DesignKind, DesignParams, NaivePick,
};
pub use error::{
    DecomposeError, DesignError, EstimateError, MatchingError, OptimizeError, SimError,
};
pub use estimate::{
    confidence_interval, estimate_report, ht_estimate, naive_variance, variance_bound,
    variance_bound_estimate, variance_exact, worst_case_variance, EstimateReport,
};
pub use many_to_one::{
    build_aux_digraph, build_flow_network, decompose_many_to_one, edmonds_karp,
    eulerian_cycle_decomposition, validate_decomposition,
};
pub use matching::{
    ate_ground_truth, build_disagreement, AgentId, DisagreementSet, MatchEdge, Matching, Mode,
    OutcomeTable,
};
pub use optimize::{asymptotic_p, optimize_p, OptimalDesign};
pub use sim::{enumerate_oracle, normality_check, run_simulation, ScenarioSpec, SimReport};
