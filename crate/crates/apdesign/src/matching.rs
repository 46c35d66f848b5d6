//! Core data model: matchings, outcomes, and the disagreement set.
//!
//! Two predetermined matching plans (treatment and control) over the same
//! population are compared through the set of match pairs that appear in
//! exactly one of them. Everything downstream (decomposition, randomization,
//! estimation) operates on that disagreement set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MatchingError;

/// Opaque, 1-based agent identifier. Id 0 is reserved to mean "unmatched"
/// in input files and is rejected here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct AgentId(u32);

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = u32::deserialize(deserializer)?;
        AgentId::new(raw).map_err(serde::de::Error::custom)
    }
}

impl AgentId {
    pub fn new(id: u32) -> Result<Self, MatchingError> {
        if id == 0 {
            return Err(MatchingError::ZeroAgentId);
        }
        Ok(AgentId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A single match pair. One-to-one edges are stored with `a < b` so each
/// pair appears exactly once; many-to-one edges are stored as
/// (supplier, demand).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchEdge {
    pub a: AgentId,
    pub b: AgentId,
}

impl MatchEdge {
    /// Canonical one-to-one edge: endpoints sorted so `a < b`.
    pub fn one_to_one(x: AgentId, y: AgentId) -> Result<Self, MatchingError> {
        if x == y {
            return Err(MatchingError::SelfEdge(x));
        }
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        Ok(MatchEdge { a, b })
    }

    /// Many-to-one edge: `a` is the supplier, `b` the demand.
    pub fn many_to_one(supplier: AgentId, demand: AgentId) -> Result<Self, MatchingError> {
        if supplier == demand {
            return Err(MatchingError::SelfEdge(supplier));
        }
        Ok(MatchEdge {
            a: supplier,
            b: demand,
        })
    }
}

impl fmt::Display for MatchEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    OneToOne,
    ManyToOne,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::OneToOne => write!(f, "one-to-one"),
            Mode::ManyToOne => write!(f, "many-to-one"),
        }
    }
}

/// The agents a matching is defined over. One-to-one populations are a single
/// set; many-to-one populations keep suppliers and demands apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Population {
    OneSided(BTreeSet<AgentId>),
    TwoSided {
        suppliers: BTreeSet<AgentId>,
        demands: BTreeSet<AgentId>,
    },
}

/// A feasible set of match pairs with capacity metadata. Invariants are
/// validated at construction; values are immutable afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    mode: Mode,
    edges: BTreeSet<MatchEdge>,
    capacity: Option<u32>,
    population: Population,
}

impl Matching {
    /// Build and validate a one-to-one matching: no agent may appear in more
    /// than one edge, and all endpoints must belong to the population.
    pub fn one_to_one(
        edges: impl IntoIterator<Item = MatchEdge>,
        population: BTreeSet<AgentId>,
    ) -> Result<Self, MatchingError> {
        let edges: BTreeSet<MatchEdge> = edges.into_iter().collect();
        let mut seen: BTreeSet<AgentId> = BTreeSet::new();
        for e in &edges {
            for v in [e.a, e.b] {
                if !population.contains(&v) {
                    return Err(MatchingError::UnknownAgent(v));
                }
                if !seen.insert(v) {
                    return Err(MatchingError::DuplicatePartner(v));
                }
            }
        }
        Ok(Matching {
            mode: Mode::OneToOne,
            edges,
            capacity: None,
            population: Population::OneSided(population),
        })
    }

    /// Build and validate a many-to-one matching: each supplier may appear in
    /// at most `capacity` edges and each demand in at most one.
    pub fn many_to_one(
        edges: impl IntoIterator<Item = MatchEdge>,
        suppliers: BTreeSet<AgentId>,
        demands: BTreeSet<AgentId>,
        capacity: u32,
    ) -> Result<Self, MatchingError> {
        if let Some(&v) = suppliers.intersection(&demands).next() {
            return Err(MatchingError::SideOverlap(v));
        }
        let edges: BTreeSet<MatchEdge> = edges.into_iter().collect();
        let mut supplier_load: BTreeMap<AgentId, u32> = BTreeMap::new();
        let mut demand_used: BTreeSet<AgentId> = BTreeSet::new();
        for e in &edges {
            if !suppliers.contains(&e.a) {
                return Err(MatchingError::UnknownAgent(e.a));
            }
            if !demands.contains(&e.b) {
                return Err(MatchingError::UnknownAgent(e.b));
            }
            let load = supplier_load.entry(e.a).or_insert(0);
            *load += 1;
            if *load > capacity {
                return Err(MatchingError::CapacityExceeded(e.a));
            }
            if !demand_used.insert(e.b) {
                return Err(MatchingError::DemandReused(e.b));
            }
        }
        Ok(Matching {
            mode: Mode::ManyToOne,
            edges,
            capacity: Some(capacity),
            population: Population::TwoSided { suppliers, demands },
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn edges(&self) -> &BTreeSet<MatchEdge> {
        &self.edges
    }

    pub fn capacity(&self) -> Option<u32> {
        self.capacity
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    /// Default estimand normalizer: the number of match pairs per plan for
    /// one-to-one, C0 * |suppliers| for many-to-one.
    pub fn default_normalizer(&self) -> f64 {
        match (&self.population, self.capacity) {
            (Population::TwoSided { suppliers, .. }, Some(c0)) => {
                c0 as f64 * suppliers.len() as f64
            }
            _ => self.edges.len() as f64,
        }
    }

    /// Alternative many-to-one normalizer: the number of demands M.
    pub fn demand_count_normalizer(&self) -> Option<f64> {
        match &self.population {
            Population::TwoSided { demands, .. } => Some(demands.len() as f64),
            Population::OneSided(_) => None,
        }
    }
}

/// Potential outcomes per (canonical) match pair, with an optional bound B.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    entries: BTreeMap<MatchEdge, f64>,
    bound: Option<f64>,
}

impl OutcomeTable {
    pub fn new(
        entries: impl IntoIterator<Item = (MatchEdge, f64)>,
        bound: Option<f64>,
    ) -> Result<Self, MatchingError> {
        let entries: BTreeMap<MatchEdge, f64> = entries.into_iter().collect();
        if let Some(b) = bound {
            for (&e, &y) in &entries {
                if !(0.0..=b).contains(&y) {
                    return Err(MatchingError::OutcomeOutOfBounds(e, b));
                }
            }
        }
        Ok(OutcomeTable { entries, bound })
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    /// Look up the outcome of the pair {u, v}. Y is defined on pairs, not
    /// directed pairs, so both endpoint orders are tried.
    pub fn get(&self, u: AgentId, v: AgentId) -> Option<f64> {
        self.entries
            .get(&MatchEdge { a: u, b: v })
            .or_else(|| self.entries.get(&MatchEdge { a: v, b: u }))
            .copied()
    }

    pub fn get_edge(&self, e: MatchEdge) -> Option<f64> {
        self.get(e.a, e.b)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MatchEdge, &f64)> {
        self.entries.iter()
    }
}

/// The labeled edge sets of pairs appearing in exactly one matching:
/// t-matches (treatment only) and c-matches (control only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementSet {
    t_edges: BTreeSet<MatchEdge>,
    c_edges: BTreeSet<MatchEdge>,
}

impl DisagreementSet {
    /// The labeled sets must be disjoint: a pair present in both matchings is
    /// shared, not a disagreement.
    pub fn new(
        t_edges: impl IntoIterator<Item = MatchEdge>,
        c_edges: impl IntoIterator<Item = MatchEdge>,
    ) -> Result<Self, MatchingError> {
        let t_edges: BTreeSet<MatchEdge> = t_edges.into_iter().collect();
        let c_edges: BTreeSet<MatchEdge> = c_edges.into_iter().collect();
        if let Some(&e) = t_edges.intersection(&c_edges).next() {
            return Err(MatchingError::OverlappingEdge(e));
        }
        Ok(DisagreementSet { t_edges, c_edges })
    }

    pub fn t_edges(&self) -> &BTreeSet<MatchEdge> {
        &self.t_edges
    }

    pub fn c_edges(&self) -> &BTreeSet<MatchEdge> {
        &self.c_edges
    }

    pub fn len(&self) -> usize {
        self.t_edges.len() + self.c_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_edges.is_empty() && self.c_edges.is_empty()
    }
}

/// Compute the disagreement set of two matchings: t-edges are pairs only in
/// `mt`, c-edges pairs only in `mc`; shared pairs are excluded.
pub fn build_disagreement(mt: &Matching, mc: &Matching) -> Result<DisagreementSet, MatchingError> {
    if mt.mode() != mc.mode() {
        return Err(MatchingError::ModeMismatch);
    }
    if mt.population() != mc.population() {
        return Err(MatchingError::PopulationMismatch);
    }
    if mt.capacity() != mc.capacity() {
        return Err(MatchingError::CapacityMismatch);
    }
    let t_edges = mt.edges().difference(mc.edges()).copied();
    let c_edges = mc.edges().difference(mt.edges()).copied();
    DisagreementSet::new(t_edges, c_edges)
}

/// Ground-truth average treatment effect (sum over `mt` minus sum over `mc`,
/// divided by the caller-supplied normalizer). Requires full potential
/// outcomes, so this is a simulation oracle, not an estimator.
pub fn ate_ground_truth(
    mt: &Matching,
    mc: &Matching,
    y: &OutcomeTable,
    n: f64,
) -> Result<f64, MatchingError> {
    let mut total = 0.0;
    for &e in mt.edges() {
        total += y.get_edge(e).ok_or(MatchingError::MissingOutcome(e))?;
    }
    for &e in mc.edges() {
        total -= y.get_edge(e).ok_or(MatchingError::MissingOutcome(e))?;
    }
    Ok(total / n)
}
