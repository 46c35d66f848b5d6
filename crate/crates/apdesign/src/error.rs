//! Error types shared across the crate.

use thiserror::Error;

use crate::matching::{AgentId, MatchEdge};

/// Errors raised while building or validating matchings and disagreement sets.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("agent id 0 is reserved for \"unmatched\" and cannot label an agent")]
    ZeroAgentId,
    #[error("edge endpoints must differ (got {0})")]
    SelfEdge(AgentId),
    #[error("agent {0} is matched to more than one partner")]
    DuplicatePartner(AgentId),
    #[error("supplier {0} exceeds its capacity")]
    CapacityExceeded(AgentId),
    #[error("demand {0} is matched to more than one supplier")]
    DemandReused(AgentId),
    #[error("agent {0} is not part of the population")]
    UnknownAgent(AgentId),
    #[error("id {0} appears on both the supplier and the demand side")]
    SideOverlap(AgentId),
    #[error("matchings have different modes")]
    ModeMismatch,
    #[error("matchings are defined on different populations")]
    PopulationMismatch,
    #[error("matchings have different capacities")]
    CapacityMismatch,
    #[error("edge {0} carries both a t- and a c-label")]
    OverlappingEdge(MatchEdge),
    #[error("outcome missing for edge {0}")]
    MissingOutcome(MatchEdge),
    #[error("outcome for edge {0} lies outside [0, {1}]")]
    OutcomeOutOfBounds(MatchEdge, f64),
}

/// Errors raised while decomposing a disagreement set into alternating components.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("agent {0} has two t-edges or two c-edges in the disagreement set")]
    DegreeViolation(AgentId),
    #[error("component is not a valid alternating path or cycle: {0}")]
    MalformedComponent(String),
    #[error("vertex is unbalanced in the residual digraph: {0}")]
    UnbalancedVertex(String),
}

/// Errors raised by the randomized design and its probability computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("design parameter p must lie in (0, 1], got {0}")]
    InvalidP(f64),
    #[error("edge index {index} out of range for component of length {k}")]
    IndexOutOfRange { index: usize, k: usize },
}

/// Errors raised during estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("invalid component length {0} for the requested kind")]
    InvalidK(usize),
    #[error("assignment does not align with components: {0}")]
    ShapeMismatch(String),
    #[error("assignment violates design feasibility: {0}")]
    InfeasibleAssignment(String),
    #[error("outcome missing for selected edge {0}")]
    MissingOutcome(MatchEdge),
    #[error("confidence level alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("variance estimate must be nonnegative, got {0}")]
    NegativeVariance(f64),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Errors raised by the minimax design optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid component length {0} for the requested kind")]
    InvalidK(usize),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Errors raised by the simulation harness.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("component too large for exhaustive enumeration (k = {0}, limit 20)")]
    TooLarge(usize),
    #[error(transparent)]
    File(#[from] crate::io::FileError),
    #[error("too few samples for the normality check (need >= 100, got {0})")]
    TooFewSamples(usize),
    #[error("replications must be >= 1")]
    NoReplications,
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}
