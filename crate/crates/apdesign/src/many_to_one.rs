//! Feasible alternating decompositions for many-to-one disagreement sets.
//!
//! Unlike the one-to-one case the decomposition is not unique, and an
//! arbitrary one can violate supplier capacities under randomization. The
//! construction here guarantees feasibility: the disagreement set maps to a
//! directed multigraph on suppliers (plus degree-1 demands), unbalanced
//! vertices are paired off by augmenting paths in a unit-capacity flow
//! network, and the balanced remainder splits into simple directed cycles by
//! an Euler-walk procedure. Every simple directed path or cycle expands back
//! to an alternating component over the original (supplier, demand) edges.
//!
//! Tie-breaks (BFS adjacency order, Euler start vertex and arc choice) are
//! fixed so the output is byte-deterministic; any choice would be valid.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::decompose::{AlternatingComponent, ComponentKind, EdgeLabel};
use crate::error::DecomposeError;
use crate::matching::{AgentId, DisagreementSet, MatchEdge};

/// Vertex of the auxiliary digraph. Suppliers order before demands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AuxVertex {
    Supplier(AgentId),
    Demand(AgentId),
}

impl AuxVertex {
    pub fn agent(self) -> AgentId {
        match self {
            AuxVertex::Supplier(a) | AuxVertex::Demand(a) => a,
        }
    }
}

/// What a directed arc stands for in the disagreement set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcExpansion {
    /// supplier -> supplier through a demand matched to both: a t-edge
    /// (from, d) followed by a c-edge (to, d).
    SharedDemand(AgentId),
    /// supplier -> degree-1 demand, a single t-edge.
    TreatmentLeaf,
    /// degree-1 demand -> supplier, a single c-edge.
    ControlLeaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxArc {
    pub from: AuxVertex,
    pub to: AuxVertex,
    pub expansion: ArcExpansion,
}

impl AuxArc {
    /// The demand this arc involves; parallel arcs differ in their label.
    pub fn label(&self) -> AgentId {
        match self.expansion {
            ArcExpansion::SharedDemand(d) => d,
            ArcExpansion::TreatmentLeaf => self.to.agent(),
            ArcExpansion::ControlLeaf => self.from.agent(),
        }
    }
}

/// Directed multigraph with deterministic adjacency order.
#[derive(Debug, Clone)]
pub struct AuxDigraph {
    arcs: Vec<AuxArc>,
    out_arcs: BTreeMap<AuxVertex, Vec<usize>>,
}

impl AuxDigraph {
    pub fn from_arcs(mut arcs: Vec<AuxArc>) -> Self {
        arcs.sort_by_key(|a| (a.from, a.to, a.label()));
        let mut out_arcs: BTreeMap<AuxVertex, Vec<usize>> = BTreeMap::new();
        for (i, arc) in arcs.iter().enumerate() {
            out_arcs.entry(arc.from).or_default().push(i);
            out_arcs.entry(arc.to).or_default();
        }
        AuxDigraph { arcs, out_arcs }
    }

    pub fn arcs(&self) -> &[AuxArc] {
        &self.arcs
    }

    pub fn vertices(&self) -> impl Iterator<Item = AuxVertex> + '_ {
        self.out_arcs.keys().copied()
    }

    pub fn out_degree(&self, v: AuxVertex) -> usize {
        self.out_arcs.get(&v).map_or(0, Vec::len)
    }

    pub fn in_degree(&self, v: AuxVertex) -> usize {
        self.arcs.iter().filter(|a| a.to == v).count()
    }
}

/// Build the auxiliary digraph for a many-to-one disagreement set and fail
/// if any demand carries two t-edges or two c-edges.
pub fn build_aux_digraph(d: &DisagreementSet) -> Result<AuxDigraph, DecomposeError> {
    let mut t_of: BTreeMap<AgentId, AgentId> = BTreeMap::new();
    let mut c_of: BTreeMap<AgentId, AgentId> = BTreeMap::new();
    for e in d.t_edges() {
        if t_of.insert(e.b, e.a).is_some() {
            return Err(DecomposeError::DegreeViolation(e.b));
        }
    }
    for e in d.c_edges() {
        if c_of.insert(e.b, e.a).is_some() {
            return Err(DecomposeError::DegreeViolation(e.b));
        }
    }
    let demands: BTreeSet<AgentId> = t_of.keys().chain(c_of.keys()).copied().collect();
    let mut arcs = Vec::new();
    for &demand in &demands {
        match (t_of.get(&demand), c_of.get(&demand)) {
            (Some(&st), Some(&sc)) => arcs.push(AuxArc {
                from: AuxVertex::Supplier(st),
                to: AuxVertex::Supplier(sc),
                expansion: ArcExpansion::SharedDemand(demand),
            }),
            (Some(&st), None) => arcs.push(AuxArc {
                from: AuxVertex::Supplier(st),
                to: AuxVertex::Demand(demand),
                expansion: ArcExpansion::TreatmentLeaf,
            }),
            (None, Some(&sc)) => arcs.push(AuxArc {
                from: AuxVertex::Demand(demand),
                to: AuxVertex::Supplier(sc),
                expansion: ArcExpansion::ControlLeaf,
            }),
            (None, None) => unreachable!("demand collected from one of the maps"),
        }
    }
    Ok(AuxDigraph::from_arcs(arcs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: u32,
    /// Index of the underlying auxiliary arc; source/sink arcs carry none.
    pub aux_arc: Option<usize>,
}

/// Unit-capacity flow network over the auxiliary digraph with a super-source
/// feeding surplus vertices and a super-sink draining deficit vertices.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub node_count: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<FlowArc>,
    /// Total imbalance: the number of alternating paths the flow stage
    /// must extract.
    pub c_prime: u32,
    node_of: BTreeMap<AuxVertex, usize>,
}

impl FlowNetwork {
    pub fn node_of(&self, v: AuxVertex) -> Option<usize> {
        self.node_of.get(&v).copied()
    }
}

pub fn build_flow_network(g: &AuxDigraph) -> FlowNetwork {
    let node_of: BTreeMap<AuxVertex, usize> =
        g.vertices().enumerate().map(|(i, v)| (v, i)).collect();
    let n = node_of.len();
    let (source, sink) = (n, n + 1);
    let mut arcs = Vec::new();
    for v in g.vertices() {
        let surplus = g.out_degree(v) as i64 - g.in_degree(v) as i64;
        if surplus > 0 {
            arcs.push(FlowArc {
                from: source,
                to: node_of[&v],
                capacity: surplus as u32,
                aux_arc: None,
            });
        } else if surplus < 0 {
            arcs.push(FlowArc {
                from: node_of[&v],
                to: sink,
                capacity: (-surplus) as u32,
                aux_arc: None,
            });
        }
    }
    for (i, arc) in g.arcs().iter().enumerate() {
        arcs.push(FlowArc {
            from: node_of[&arc.from],
            to: node_of[&arc.to],
            capacity: 1,
            aux_arc: Some(i),
        });
    }
    let c_prime = arcs
        .iter()
        .filter(|a| a.from == source)
        .map(|a| a.capacity)
        .sum();
    FlowNetwork {
        node_count: n + 2,
        source,
        sink,
        arcs,
        c_prime,
        node_of,
    }
}

/// Breadth-first augmenting paths from the super-source to the super-sink;
/// each returned path is the sequence of auxiliary arc indices it crosses,
/// a simple directed path from a surplus vertex to a deficit vertex.
pub fn edmonds_karp(net: &FlowNetwork) -> Vec<Vec<usize>> {
    let mut residual: Vec<u32> = net.arcs.iter().map(|a| a.capacity).collect();
    // Adjacency sorted by construction order: source/sink arcs by vertex,
    // original arcs by (from, to, label).
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); net.node_count];
    for (i, arc) in net.arcs.iter().enumerate() {
        adjacency[arc.from].push(i);
    }
    let mut paths = Vec::new();
    loop {
        match bfs_residual(net, &residual, &adjacency) {
            None => break,
            Some(path_arcs) => {
                let delta = path_arcs.iter().map(|&i| residual[i]).min().unwrap_or(0);
                let mut aux_path = Vec::new();
                for &i in &path_arcs {
                    residual[i] -= delta;
                    if let Some(aux) = net.arcs[i].aux_arc {
                        aux_path.push(aux);
                    }
                }
                paths.push(aux_path);
            }
        }
    }
    paths
}

/// One breadth-first search over arcs with positive residual capacity.
fn bfs_residual(
    net: &FlowNetwork,
    residual: &[u32],
    adjacency: &[Vec<usize>],
) -> Option<Vec<usize>> {
    let mut parent_arc: Vec<Option<usize>> = vec![None; net.node_count];
    let mut visited = vec![false; net.node_count];
    let mut queue = VecDeque::new();
    visited[net.source] = true;
    queue.push_back(net.source);
    while let Some(u) = queue.pop_front() {
        for &i in &adjacency[u] {
            if residual[i] == 0 {
                continue;
            }
            let v = net.arcs[i].to;
            if !visited[v] {
                visited[v] = true;
                parent_arc[v] = Some(i);
                if v == net.sink {
                    let mut path = Vec::new();
                    let mut node = net.sink;
                    while let Some(arc) = parent_arc[node] {
                        path.push(arc);
                        node = net.arcs[arc].from;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(v);
            }
        }
    }
    None
}

/// Split an Eulerian digraph (every vertex balanced) into simple directed
/// cycles whose arcs partition the arc set.
pub fn eulerian_cycle_decomposition(g: &AuxDigraph) -> Result<Vec<Vec<usize>>, DecomposeError> {
    let all: Vec<usize> = (0..g.arcs().len()).collect();
    eulerian_cycles_over(g, &all)
}

/// Same, restricted to the arc subset `active`.
pub(crate) fn eulerian_cycles_over(
    g: &AuxDigraph,
    active: &[usize],
) -> Result<Vec<Vec<usize>>, DecomposeError> {
    let active_set: BTreeSet<usize> = active.iter().copied().collect();
    // Balance must hold on the active subgraph.
    let mut balance: BTreeMap<AuxVertex, i64> = BTreeMap::new();
    for &i in &active_set {
        *balance.entry(g.arcs()[i].from).or_insert(0) += 1;
        *balance.entry(g.arcs()[i].to).or_insert(0) -= 1;
    }
    if let Some((&v, _)) = balance.iter().find(|&(_, &b)| b != 0) {
        return Err(DecomposeError::UnbalancedVertex(format!("{:?}", v)));
    }

    // Unused outgoing arcs per vertex, smallest label first.
    let mut out: BTreeMap<AuxVertex, Vec<usize>> = BTreeMap::new();
    for &i in &active_set {
        out.entry(g.arcs()[i].from).or_default().push(i);
    }
    for list in out.values_mut() {
        list.sort_by_key(|&i| (g.arcs()[i].label(), g.arcs()[i].to, i));
    }
    let mut cursor: BTreeMap<AuxVertex, usize> = out.keys().map(|&v| (v, 0)).collect();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut cycles = Vec::new();

    loop {
        // Smallest vertex that still has an unused outgoing arc.
        let start = out
            .iter()
            .find_map(|(&v, list)| (cursor[&v] < list.len()).then_some(v));
        let Some(v0) = start else { break };

        // Step 1: closed walk from v0 until it sticks (necessarily at v0).
        let mut walk_arcs = Vec::new();
        let mut v = v0;
        loop {
            let Some(list) = out.get(&v) else { break };
            let c = cursor.get_mut(&v).expect("cursor exists for every vertex");
            while *c < list.len() && used.contains(&list[*c]) {
                *c += 1;
            }
            if *c >= list.len() {
                break;
            }
            let arc = list[*c];
            *c += 1;
            used.insert(arc);
            walk_arcs.push(arc);
            v = g.arcs()[arc].to;
        }
        debug_assert_eq!(v, v0, "closed walk must return to its start");

        // Step 2: split the walk into simple cycles. A stack of
        // (vertex, incoming arc) plays the role of the first-position map;
        // closing a cycle pops its interior so those vertices may appear in
        // later cycles.
        let mut stack: Vec<(AuxVertex, Option<usize>)> = vec![(v0, None)];
        let mut pos: BTreeMap<AuxVertex, usize> = [(v0, 0)].into();
        for &arc in &walk_arcs {
            let to = g.arcs()[arc].to;
            if let Some(&j) = pos.get(&to) {
                let mut cycle: Vec<usize> = stack[j + 1..]
                    .iter()
                    .map(|&(_, a)| a.expect("interior stack entries carry arcs"))
                    .collect();
                cycle.push(arc);
                for (u, _) in stack.drain(j + 1..) {
                    pos.remove(&u);
                }
                cycles.push(cycle);
            } else {
                stack.push((to, Some(arc)));
                pos.insert(to, stack.len() - 1);
            }
        }
        debug_assert_eq!(stack.len(), 1, "walk fully consumed into cycles");
    }
    Ok(cycles)
}

/// Expand a simple directed path or cycle of auxiliary arcs into an
/// alternating component over the original (supplier, demand) edges.
pub fn expand_arcs(
    g: &AuxDigraph,
    arc_ids: &[usize],
    closed: bool,
) -> Result<AlternatingComponent, DecomposeError> {
    let first = &g.arcs()[arc_ids[0]];
    let mut vertices = vec![first.from.agent()];
    let mut labels = Vec::new();
    for &i in arc_ids {
        let arc = &g.arcs()[i];
        match arc.expansion {
            ArcExpansion::SharedDemand(d) => {
                vertices.push(d);
                labels.push(EdgeLabel::T);
                vertices.push(arc.to.agent());
                labels.push(EdgeLabel::C);
            }
            ArcExpansion::TreatmentLeaf => {
                vertices.push(arc.to.agent());
                labels.push(EdgeLabel::T);
            }
            ArcExpansion::ControlLeaf => {
                vertices.push(arc.to.agent());
                labels.push(EdgeLabel::C);
            }
        }
    }
    let kind = if closed {
        ComponentKind::Cycle
    } else {
        ComponentKind::Path
    };
    AlternatingComponent::new(kind, vertices, labels)
}

/// Full many-to-one decomposition: augmenting paths absorb the vertex
/// imbalance, the balanced remainder splits into cycles, and both families
/// expand back to alternating components.
pub fn decompose_many_to_one(
    d: &DisagreementSet,
) -> Result<Vec<AlternatingComponent>, DecomposeError> {
    let aux = build_aux_digraph(d)?;
    let net = build_flow_network(&aux);
    let flow_paths = edmonds_karp(&net);

    let mut used: BTreeSet<usize> = BTreeSet::new();
    for path in &flow_paths {
        used.extend(path.iter().copied());
    }
    let remaining: Vec<usize> = (0..aux.arcs().len())
        .filter(|i| !used.contains(i))
        .collect();
    let cycles = eulerian_cycles_over(&aux, &remaining)?;

    let mut components = Vec::new();
    for path in &flow_paths {
        let mut comp = expand_arcs(&aux, path, false)?;
        comp.canonicalize();
        components.push(comp);
    }
    for cycle in &cycles {
        let mut comp = expand_arcs(&aux, cycle, true)?;
        comp.canonicalize();
        components.push(comp);
    }
    components.sort_by_key(|c| (c.min_vertex(), c.vertices.clone()));
    Ok(components)
}

/// Per-condition feasibility report for a proposed decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub pass: bool,
    pub conditions: Vec<ConditionReport>,
}

impl DecompositionReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

/// Check a proposed decomposition against the feasibility conditions:
/// exact-once edge cover, supplier multiplicity at most C0, demand
/// multiplicity at most one, no vertex revisited within a component, and
/// label alternation. Violations are report entries, not errors.
pub fn validate_decomposition(
    d: &DisagreementSet,
    components: &[AlternatingComponent],
    capacity: u32,
) -> DecompositionReport {
    let suppliers: BTreeSet<AgentId> = d
        .t_edges()
        .iter()
        .chain(d.c_edges().iter())
        .map(|e| e.a)
        .collect();
    let demands: BTreeSet<AgentId> = d
        .t_edges()
        .iter()
        .chain(d.c_edges().iter())
        .map(|e| e.b)
        .collect();

    let mut conditions = Vec::new();

    // Condition 1: every disagreement edge covered exactly once.
    let mut cover: BTreeMap<(MatchEdge, EdgeLabel), usize> = BTreeMap::new();
    let mut alien = Vec::new();
    for comp in components {
        for (u, v, l) in comp.edges() {
            let edge = if suppliers.contains(&u) && demands.contains(&v) {
                MatchEdge { a: u, b: v }
            } else if suppliers.contains(&v) && demands.contains(&u) {
                MatchEdge { a: v, b: u }
            } else {
                alien.push(format!("edge ({},{}) is not supplier-demand", u, v));
                continue;
            };
            *cover.entry((edge, l)).or_insert(0) += 1;
        }
    }
    let mut witnesses = alien;
    for (&e, label) in d
        .t_edges()
        .iter()
        .map(|e| (e, EdgeLabel::T))
        .chain(d.c_edges().iter().map(|e| (e, EdgeLabel::C)))
    {
        match cover.remove(&(e, label)) {
            Some(1) => {}
            Some(m) => witnesses.push(format!("edge {} covered {} times", e, m)),
            None => witnesses.push(format!("edge {} not covered", e)),
        }
    }
    for ((e, _), _) in cover {
        witnesses.push(format!("edge {} not in the disagreement set", e));
    }
    conditions.push(ConditionReport {
        condition: "exact_once_cover".into(),
        pass: witnesses.is_empty(),
        witnesses,
    });

    // Condition 2: each supplier in at most C0 components.
    let mut witnesses = Vec::new();
    let mut supplier_count: BTreeMap<AgentId, u32> = BTreeMap::new();
    for comp in components {
        let present: BTreeSet<AgentId> = comp
            .vertices
            .iter()
            .filter(|v| suppliers.contains(v))
            .copied()
            .collect();
        for s in present {
            *supplier_count.entry(s).or_insert(0) += 1;
        }
    }
    for (s, count) in supplier_count {
        if count > capacity {
            witnesses.push(format!("supplier {} appears in {} components", s, count));
        }
    }
    conditions.push(ConditionReport {
        condition: "supplier_capacity".into(),
        pass: witnesses.is_empty(),
        witnesses,
    });

    // Condition 3: each demand in at most one component.
    let mut witnesses = Vec::new();
    let mut demand_count: BTreeMap<AgentId, u32> = BTreeMap::new();
    for comp in components {
        let present: BTreeSet<AgentId> = comp
            .vertices
            .iter()
            .filter(|v| demands.contains(v))
            .copied()
            .collect();
        for dd in present {
            *demand_count.entry(dd).or_insert(0) += 1;
        }
    }
    for (dd, count) in demand_count {
        if count > 1 {
            witnesses.push(format!("demand {} appears in {} components", dd, count));
        }
    }
    conditions.push(ConditionReport {
        condition: "demand_uniqueness".into(),
        pass: witnesses.is_empty(),
        witnesses,
    });

    // Condition 4: no vertex traversed twice within one component.
    let mut witnesses = Vec::new();
    for (i, comp) in components.iter().enumerate() {
        let interior = if comp.is_cycle() {
            &comp.vertices[..comp.k()]
        } else {
            &comp.vertices[..]
        };
        let mut seen = BTreeSet::new();
        for &v in interior {
            if !seen.insert(v) {
                witnesses.push(format!("component {} visits {} twice", i, v));
            }
        }
    }
    conditions.push(ConditionReport {
        condition: "no_revisit_within_component".into(),
        pass: witnesses.is_empty(),
        witnesses,
    });

    // Implicit condition: labels must alternate along every component.
    let mut witnesses = Vec::new();
    for (i, comp) in components.iter().enumerate() {
        if comp.labels.windows(2).any(|w| w[0] == w[1])
            || (comp.is_cycle() && comp.labels[0] == comp.labels[comp.k() - 1])
        {
            witnesses.push(format!("component {} does not alternate", i));
        }
    }
    conditions.push(ConditionReport {
        condition: "alternation".into(),
        pass: witnesses.is_empty(),
        witnesses,
    });

    DecompositionReport {
        pass: conditions.iter().all(|c| c.pass),
        conditions,
    }
}
