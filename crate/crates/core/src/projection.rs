//! Colored dual subgraphs, their spacetime extensions, and defect extraction.
//!
//! The subgraph of color `c` keeps the faces of the two other colors plus one
//! node for each of the two other boundaries. Every data qubit is one edge in
//! every subgraph: it joins the two non-`c` objects (faces or boundaries) that
//! contain it. Two qubits that sit on either side of the same dual edge give
//! parallel edges; they are "twins" and together they form one edge of the
//! primal lattice, which is what the region lift walks across.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CodeLattice, Color};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Face(usize),
    Boundary(Color),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubEdge {
    /// Local node ids, smaller first.
    pub endpoints: [usize; 2],
    pub qubit: usize,
    /// The other qubit across the same dual edge, if it exists.
    pub twin: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredSubgraph {
    pub label: Color,
    pub nodes: Vec<NodeKind>,
    /// Edge `e` belongs to qubit `qubit_of_edge[e]`; edges are stored in qubit order.
    pub edges: Vec<SubEdge>,
    pub qubit_of_edge: Vec<usize>,
    /// Global face index to local node id.
    pub face_node: Vec<Option<usize>>,
}

impl ColoredSubgraph {
    pub fn is_boundary(&self, node: usize) -> bool {
        matches!(self.nodes[node], NodeKind::Boundary(_))
    }

    pub fn boundary_node(&self, color: Color) -> Option<usize> {
        self.nodes.iter().position(|&k| k == NodeKind::Boundary(color))
    }

    /// Edges usable for routing; edges joining two boundary nodes carry no
    /// information and are skipped.
    pub fn is_routable(&self, e: usize) -> bool {
        let [a, b] = self.edges[e].endpoints;
        !(self.is_boundary(a) && self.is_boundary(b))
    }

    pub fn face_count(&self) -> usize {
        self.nodes.iter().filter(|k| matches!(k, NodeKind::Face(_))).count()
    }
}

/// Builds the subgraphs labelled `R`, `G`, `B` (in that order).
pub fn build_subgraphs(lattice: &CodeLattice) -> [ColoredSubgraph; 3] {
    Color::ALL.map(|c| build_subgraph(lattice, c))
}

fn build_subgraph(lattice: &CodeLattice, label: Color) -> ColoredSubgraph {
    let mut nodes = Vec::new();
    let mut face_node = vec![None; lattice.faces.len()];
    for (f, face) in lattice.faces.iter().enumerate() {
        if face.color != label {
            face_node[f] = Some(nodes.len());
            nodes.push(NodeKind::Face(f));
        }
    }
    let boundary_base = nodes.len();
    let others = label.others();
    for c in others {
        nodes.push(NodeKind::Boundary(c));
    }
    let mut edges = Vec::with_capacity(lattice.n());
    for (q, qubit) in lattice.qubits.iter().enumerate() {
        let mut ends: Vec<usize> = qubit.faces.iter().filter_map(|&f| face_node[f]).collect();
        for &c in &qubit.boundaries {
            if c != label {
                let k = others.iter().position(|&o| o == c).expect("non-label color");
                ends.push(boundary_base + k);
            }
        }
        assert_eq!(ends.len(), 2, "qubit {q} has {} objects in subgraph {label}", ends.len());
        ends.sort_unstable();
        edges.push(SubEdge {
            endpoints: [ends[0], ends[1]],
            qubit: q,
            twin: None,
        });
    }
    let mut by_pair: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for e in &edges {
        by_pair.entry(e.endpoints).or_default().push(e.qubit);
    }
    for e in &mut edges {
        let group = &by_pair[&e.endpoints];
        e.twin = group.iter().copied().find(|&q| q != e.qubit);
    }
    let qubit_of_edge = edges.iter().map(|e| e.qubit).collect();
    ColoredSubgraph {
        label,
        nodes,
        edges,
        qubit_of_edge,
        face_node,
    }
}

/// Integer edge weights used for shortest paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeWeights {
    pub spacelike: u32,
    pub timelike: u32,
}

impl Default for EdgeWeights {
    fn default() -> Self {
        EdgeWeights {
            spacelike: 1,
            timelike: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StEdgeKind {
    /// Base edge `edge` within `layer`.
    Spacelike { edge: usize, layer: usize },
    /// Face node `node` between `layer` and `layer + 1`.
    Timelike { node: usize, layer: usize },
    /// Zero-weight link between boundary replicas.
    BoundaryLink { node: usize, layer: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StEdge {
    pub a: usize,
    pub b: usize,
    pub weight: u32,
    pub kind: StEdgeKind,
}

/// A subgraph repeated over `rounds` layers. Node `(v, t)` has id `t * base.nodes.len() + v`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpacetimeGraph {
    pub base: ColoredSubgraph,
    pub rounds: usize,
    pub edges: Vec<StEdge>,
    /// Routable `(neighbor, edge)` pairs per node, in increasing edge order.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl SpacetimeGraph {
    pub fn node_count(&self) -> usize {
        self.base.nodes.len() * self.rounds
    }

    pub fn node_id(&self, node: usize, layer: usize) -> usize {
        layer * self.base.nodes.len() + node
    }

    /// Splits a node id into `(base node, layer)`.
    pub fn split(&self, id: usize) -> (usize, usize) {
        (id % self.base.nodes.len(), id / self.base.nodes.len())
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        self.base.is_boundary(id % self.base.nodes.len())
    }

    pub fn spacelike_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| matches!(e.kind, StEdgeKind::Spacelike { .. }))
            .count()
    }

    pub fn timelike_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| matches!(e.kind, StEdgeKind::Timelike { .. }))
            .count()
    }
}

/// Extends a subgraph through `rounds` time layers with unit weights.
pub fn extend_spacetime(sub: &ColoredSubgraph, rounds: usize) -> Result<SpacetimeGraph> {
    extend_spacetime_weighted(sub, rounds, EdgeWeights::default())
}

pub fn extend_spacetime_weighted(
    sub: &ColoredSubgraph,
    rounds: usize,
    weights: EdgeWeights,
) -> Result<SpacetimeGraph> {
    if rounds < 1 {
        return Err(Error::InvalidArgument("spacetime graph needs at least one round".into()));
    }
    let nn = sub.nodes.len();
    let mut edges = Vec::new();
    let mut routable = Vec::new();
    for t in 0..rounds {
        for (e, se) in sub.edges.iter().enumerate() {
            routable.push(sub.is_routable(e));
            edges.push(StEdge {
                a: t * nn + se.endpoints[0],
                b: t * nn + se.endpoints[1],
                weight: weights.spacelike,
                kind: StEdgeKind::Spacelike { edge: e, layer: t },
            });
        }
    }
    for t in 0..rounds.saturating_sub(1) {
        for v in 0..nn {
            let kind = if sub.is_boundary(v) {
                StEdgeKind::BoundaryLink { node: v, layer: t }
            } else {
                StEdgeKind::Timelike { node: v, layer: t }
            };
            let weight = if sub.is_boundary(v) { 0 } else { weights.timelike };
            routable.push(true);
            edges.push(StEdge {
                a: t * nn + v,
                b: (t + 1) * nn + v,
                weight,
                kind,
            });
        }
    }
    let mut adjacency = vec![Vec::new(); nn * rounds];
    for (i, e) in edges.iter().enumerate() {
        if routable[i] {
            adjacency[e.a].push((e.b, i));
            adjacency[e.b].push((e.a, i));
        }
    }
    Ok(SpacetimeGraph {
        base: sub.clone(),
        rounds,
        edges,
        adjacency,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Defect {
    /// Local node id in the subgraph (always a face node).
    pub node: usize,
    pub layer: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectSet {
    pub defects: Vec<Defect>,
}

impl DefectSet {
    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }
}

/// Flagged faces of this subgraph under a single perfect syndrome.
pub fn defects_2d(sub: &ColoredSubgraph, syndrome: &[bool]) -> DefectSet {
    let mut defects = Vec::new();
    for (f, &bit) in syndrome.iter().enumerate() {
        if bit {
            if let Some(node) = sub.face_node[f] {
                defects.push(Defect { node, layer: 0 });
            }
        }
    }
    defects.sort();
    DefectSet { defects }
}

/// Detection events: face `f` at layer `t` whenever its outcome differs from
/// layer `t - 1` (layer `-1` is all zeros).
pub fn defects_3d(sub: &ColoredSubgraph, history: &[Vec<bool>]) -> DefectSet {
    let mut defects = Vec::new();
    let mut prev: Vec<bool> = vec![false; sub.face_node.len()];
    for (t, round) in history.iter().enumerate() {
        for (f, &bit) in round.iter().enumerate() {
            if bit != prev[f] {
                if let Some(node) = sub.face_node[f] {
                    defects.push(Defect { node, layer: t });
                }
            }
        }
        prev.clone_from(round);
    }
    defects.sort_by_key(|d| (d.layer, d.node));
    DefectSet { defects }
}

/// Maps spacetime edges to their base edges, dropping timelike edges and
/// cancelling base edges that occur an even number of times.
pub fn project_spacelike(graph: &SpacetimeGraph, edges: &[usize]) -> Vec<usize> {
    let mut parity = vec![false; graph.base.edges.len()];
    for &e in edges {
        if let StEdgeKind::Spacelike { edge, .. } = graph.edges[e].kind {
            parity[edge] ^= true;
        }
    }
    (0..parity.len()).filter(|&e| parity[e]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;

    #[test]
    fn steane_subgraph_sizes() {
        let lat = build_lattice(3).unwrap();
        for sub in build_subgraphs(&lat) {
            let expected = lat.faces.iter().filter(|f| f.color != sub.label).count() + 2;
            assert_eq!(sub.nodes.len(), expected);
            assert_eq!(sub.edges.len(), 7);
        }
    }

    #[test]
    fn dual_edges_come_in_twin_pairs() {
        for d in [3, 5, 7, 9] {
            let lat = build_lattice(d).unwrap();
            for sub in build_subgraphs(&lat) {
                for (e, se) in sub.edges.iter().enumerate() {
                    if sub.is_routable(e) {
                        let t = se.twin.expect("routable edge without twin");
                        assert_eq!(sub.edges[t].endpoints, se.endpoints);
                        assert_eq!(sub.edges[t].twin, Some(se.qubit));
                    } else {
                        assert_eq!(se.twin, None);
                    }
                }
            }
        }
    }

    #[test]
    fn interior_edge_colors() {
        let lat = build_lattice(7).unwrap();
        let subs = build_subgraphs(&lat);
        let color_of = |sub: &ColoredSubgraph, v: usize| match sub.nodes[v] {
            NodeKind::Face(f) => lat.faces[f].color,
            NodeKind::Boundary(c) => c,
        };
        for (q, qubit) in lat.qubits.iter().enumerate() {
            for sub in &subs {
                let [a, b] = sub.edges[q].endpoints;
                let pair = [color_of(sub, a), color_of(sub, b)];
                assert!(!pair.contains(&sub.label));
                assert_ne!(pair[0], pair[1]);
                if qubit.boundaries.is_empty() {
                    assert!(!sub.is_boundary(a) && !sub.is_boundary(b));
                }
            }
        }
    }

    #[test]
    fn spacetime_counts() {
        let lat = build_lattice(3).unwrap();
        let sub = &build_subgraphs(&lat)[0];
        let g1 = extend_spacetime(sub, 1).unwrap();
        assert_eq!(g1.timelike_count(), 0);
        assert_eq!(g1.spacelike_count(), sub.edges.len());
        let g3 = extend_spacetime(sub, 3).unwrap();
        assert_eq!(g3.spacelike_count(), 3 * sub.edges.len());
        assert_eq!(g3.timelike_count(), 2 * sub.face_count());
        assert!(extend_spacetime(sub, 0).is_err());
    }

    #[test]
    fn measurement_flip_gives_timelike_pair() {
        let lat = build_lattice(5).unwrap();
        let sub = &build_subgraphs(&lat)[1];
        let f = sub.nodes.iter().find_map(|k| match k {
            NodeKind::Face(f) => Some(*f),
            _ => None,
        });
        let f = f.unwrap();
        let mut history = vec![vec![false; lat.faces.len()]; 4];
        history[1][f] = true;
        let ds = defects_3d(sub, &history);
        let v = sub.face_node[f].unwrap();
        assert_eq!(ds.defects, vec![Defect { node: v, layer: 1 }, Defect { node: v, layer: 2 }]);
    }

    #[test]
    fn projection_cancels_even_multiplicity() {
        let lat = build_lattice(3).unwrap();
        let sub = &build_subgraphs(&lat)[0];
        let g = extend_spacetime(sub, 6).unwrap();
        let ne = sub.edges.len();
        let at = |e: usize, t: usize| t * ne + e;
        assert!(project_spacelike(&g, &[at(2, 2), at(2, 5)]).is_empty());
        assert_eq!(project_spacelike(&g, &[at(1, 1), at(1, 3), at(1, 4)]), vec![1]);
        let timelike: Vec<usize> = (6 * ne..g.edges.len()).collect();
        assert!(project_spacelike(&g, &timelike).is_empty());
    }
}
