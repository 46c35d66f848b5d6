//! Alternating path/cycle components and the one-to-one decomposition.
//!
//! In a one-to-one disagreement set every agent touches at most one t-edge
//! and one c-edge, so each connected component is an alternating path or an
//! even cycle and the decomposition is unique. Output is canonicalized so
//! repeated runs are byte-identical: a path starts at its smaller-id
//! endpoint, a cycle starts at its smallest agent and follows that agent's
//! t-edge first, and components are sorted by their smallest contained agent.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::DecomposeError;
use crate::matching::{AgentId, DisagreementSet, MatchEdge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    T,
    C,
}

impl EdgeLabel {
    pub fn other(self) -> EdgeLabel {
        match self {
            EdgeLabel::T => EdgeLabel::C,
            EdgeLabel::C => EdgeLabel::T,
        }
    }

    /// Sign of the label in the estimator: t-matches enter positively,
    /// c-matches negatively.
    pub fn sign(self) -> f64 {
        match self {
            EdgeLabel::T => 1.0,
            EdgeLabel::C => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Path,
    Cycle,
}

/// An ordered alternating path or cycle: `k + 1` vertices and `k` labels,
/// where `labels[j]` labels the edge `(vertices[j], vertices[j+1])`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternatingComponent {
    pub kind: ComponentKind,
    pub vertices: Vec<AgentId>,
    pub labels: Vec<EdgeLabel>,
}

impl AlternatingComponent {
    pub fn new(
        kind: ComponentKind,
        vertices: Vec<AgentId>,
        labels: Vec<EdgeLabel>,
    ) -> Result<Self, DecomposeError> {
        let c = AlternatingComponent {
            kind,
            vertices,
            labels,
        };
        c.check()?;
        Ok(c)
    }

    /// Number of edges.
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn is_cycle(&self) -> bool {
        self.kind == ComponentKind::Cycle
    }

    /// Edges in traversal order, paired with their labels.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId, EdgeLabel)> + '_ {
        self.vertices
            .windows(2)
            .zip(self.labels.iter())
            .map(|(w, &l)| (w[0], w[1], l))
    }

    pub fn min_vertex(&self) -> AgentId {
        *self.vertices.iter().min().expect("component is nonempty")
    }

    fn check(&self) -> Result<(), DecomposeError> {
        let bad = |msg: String| Err(DecomposeError::MalformedComponent(msg));
        let k = self.labels.len();
        if k == 0 || self.vertices.len() != k + 1 {
            return bad(format!(
                "{} vertices with {} labels",
                self.vertices.len(),
                k
            ));
        }
        for w in self.labels.windows(2) {
            if w[0] == w[1] {
                return bad("consecutive edges share a label".into());
            }
        }
        let closed = self.vertices[0] == self.vertices[k];
        match self.kind {
            ComponentKind::Path => {
                if closed {
                    return bad("path endpoints coincide".into());
                }
                let mut seen = self.vertices.clone();
                seen.sort_unstable();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    return bad("path revisits a vertex".into());
                }
            }
            ComponentKind::Cycle => {
                if !closed {
                    return bad("cycle does not close".into());
                }
                if k < 4 || k % 2 != 0 {
                    return bad(format!("cycle length {} is not an even k >= 4", k));
                }
                if self.labels[0] == self.labels[k - 1] {
                    return bad("cycle closure repeats a label".into());
                }
                let mut interior = self.vertices[..k].to_vec();
                interior.sort_unstable();
                if interior.windows(2).any(|w| w[0] == w[1]) {
                    return bad("cycle revisits a vertex".into());
                }
            }
        }
        Ok(())
    }

    /// Reverse traversal direction in place. Alternation, endpoints, and
    /// cycle closure are preserved.
    fn reverse(&mut self) {
        self.vertices.reverse();
        self.labels.reverse();
    }

    /// Rotate a cycle so traversal starts at `start` (which must be an
    /// interior vertex position).
    fn rotate_cycle(&mut self, start: usize) {
        debug_assert!(self.is_cycle());
        let k = self.k();
        self.vertices.pop();
        self.vertices.rotate_left(start);
        let first = self.vertices[0];
        self.vertices.push(first);
        self.labels.rotate_left(start);
        debug_assert_eq!(self.labels.len(), k);
    }

    /// Canonical form: paths start at the smaller-id endpoint; cycles start
    /// at their smallest vertex and leave it along its t-labeled edge.
    pub fn canonicalize(&mut self) {
        match self.kind {
            ComponentKind::Path => {
                let k = self.k();
                if self.vertices[0] > self.vertices[k] {
                    self.reverse();
                }
            }
            ComponentKind::Cycle => {
                let k = self.k();
                let (start, _) = self.vertices[..k]
                    .iter()
                    .enumerate()
                    .min_by_key(|&(_, v)| v)
                    .expect("cycle is nonempty");
                self.rotate_cycle(start);
                // The start vertex is incident to labels[0] (outgoing) and
                // labels[k-1] (incoming); exactly one of them is T.
                if self.labels[0] != EdgeLabel::T {
                    self.reverse();
                }
            }
        }
    }
}

/// Decompose a one-to-one disagreement set into its unique collection of
/// alternating paths and cycles.
pub fn decompose_one_to_one(
    d: &DisagreementSet,
) -> Result<Vec<AlternatingComponent>, DecomposeError> {
    // Per-agent t/c neighbor; more than one of either label is a violation.
    let mut t_adj: BTreeMap<AgentId, AgentId> = BTreeMap::new();
    let mut c_adj: BTreeMap<AgentId, AgentId> = BTreeMap::new();
    let insert = |adj: &mut BTreeMap<AgentId, AgentId>, e: &MatchEdge| {
        for (u, v) in [(e.a, e.b), (e.b, e.a)] {
            if adj.insert(u, v).is_some() {
                return Err(DecomposeError::DegreeViolation(u));
            }
        }
        Ok(())
    };
    for e in d.t_edges() {
        insert(&mut t_adj, e)?;
    }
    for e in d.c_edges() {
        insert(&mut c_adj, e)?;
    }

    let neighbor = |v: AgentId, l: EdgeLabel| -> Option<AgentId> {
        match l {
            EdgeLabel::T => t_adj.get(&v).copied(),
            EdgeLabel::C => c_adj.get(&v).copied(),
        }
    };
    let degree =
        |v: AgentId| -> usize { t_adj.contains_key(&v) as usize + c_adj.contains_key(&v) as usize };

    // Alternating walk from `origin` starting with label `first`; stops at a
    // dead end (path) or on return to the origin (cycle).
    let walk = |origin: AgentId, first: EdgeLabel| {
        let mut verts = vec![origin];
        let mut labels = Vec::new();
        let (mut v, mut l) = (origin, first);
        while let Some(u) = neighbor(v, l) {
            labels.push(l);
            verts.push(u);
            if u == origin {
                break;
            }
            v = u;
            l = l.other();
        }
        (verts, labels)
    };

    let vertices: Vec<AgentId> = t_adj.keys().chain(c_adj.keys()).copied().collect();
    let mut visited: BTreeSet<AgentId> = BTreeSet::new();
    let mut components = Vec::new();
    let mut emit = |verts: Vec<AgentId>,
                    labels: Vec<EdgeLabel>,
                    visited: &mut BTreeSet<AgentId>|
     -> Result<(), DecomposeError> {
        visited.extend(verts.iter().copied());
        let kind = if verts.len() > 1 && verts[0] == verts[verts.len() - 1] {
            ComponentKind::Cycle
        } else {
            ComponentKind::Path
        };
        let mut comp = AlternatingComponent::new(kind, verts, labels)?;
        comp.canonicalize();
        components.push(comp);
        Ok(())
    };

    // Paths first: every path has two degree-1 endpoints, so walking from
    // each unvisited degree-1 vertex covers them end to end.
    for &v in vertices.iter().filter(|&&v| degree(v) == 1) {
        if visited.contains(&v) {
            continue;
        }
        let first = if t_adj.contains_key(&v) {
            EdgeLabel::T
        } else {
            EdgeLabel::C
        };
        let (verts, labels) = walk(v, first);
        emit(verts, labels, &mut visited)?;
    }
    // Whatever remains lies on cycles; every cycle vertex carries one t- and
    // one c-edge, so leaving along the t-edge is always possible.
    for &v in &vertices {
        if visited.contains(&v) {
            continue;
        }
        let (verts, labels) = walk(v, EdgeLabel::T);
        emit(verts, labels, &mut visited)?;
    }
    components.sort_by_key(|c| c.min_vertex());
    Ok(components)
}
