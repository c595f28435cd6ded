//! Minimum-weight perfect matching over detection events.
//!
//! Each defect gets a virtual boundary companion. Defect pairs are joined by
//! their shortest-path distance, each defect is joined to its own companion
//! by its distance to the nearest boundary node, and companions form a
//! zero-weight clique so that unused companions pair off among themselves.

pub mod blossom;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{DefectSet, SpacetimeGraph};

pub const UNREACHABLE: u64 = u64::MAX;

/// Single-source shortest-path tree.
#[derive(Clone, Debug)]
pub struct PathTree {
    pub source: usize,
    pub dist: Vec<u64>,
    pred_edge: Vec<usize>,
    pred_node: Vec<usize>,
}

impl PathTree {
    /// Edge ids from the source to `target`, in walk order from the source.
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if self.dist[target] == UNREACHABLE {
            return None;
        }
        let mut path = Vec::new();
        let mut v = target;
        while v != self.source {
            path.push(self.pred_edge[v]);
            v = self.pred_node[v];
        }
        path.reverse();
        Some(path)
    }

    /// Closest boundary node, smallest id among ties.
    pub fn nearest_boundary(&self, graph: &SpacetimeGraph) -> Option<(usize, u64)> {
        (0..self.dist.len())
            .filter(|&v| graph.is_boundary(v) && self.dist[v] != UNREACHABLE)
            .min_by_key(|&v| (self.dist[v], v))
            .map(|v| (v, self.dist[v]))
    }
}

/// Dijkstra from each source. Neighbors are scanned in increasing edge order
/// and only strict improvements are accepted, so equal-length paths resolve to
/// the smallest edge index.
pub fn shortest_paths(graph: &SpacetimeGraph, sources: &[usize]) -> Vec<PathTree> {
    sources.iter().map(|&s| dijkstra(graph, s)).collect()
}

fn dijkstra(graph: &SpacetimeGraph, source: usize) -> PathTree {
    let nn = graph.node_count();
    let mut dist = vec![UNREACHABLE; nn];
    let mut pred_edge = vec![usize::MAX; nn];
    let mut pred_node = vec![usize::MAX; nn];
    let mut heap = BinaryHeap::new();
    dist[source] = 0;
    heap.push(Reverse((0u64, source)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, e) in &graph.adjacency[v] {
            let nd = d + graph.edges[e].weight as u64;
            if nd < dist[w] {
                dist[w] = nd;
                pred_edge[w] = e;
                pred_node[w] = v;
                heap.push(Reverse((nd, w)));
            }
        }
    }
    PathTree {
        source,
        dist,
        pred_edge,
        pred_node,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingEdge {
    pub a: usize,
    pub b: usize,
    pub weight: u64,
}

/// Options for [`build_matching_problem_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingOptions {
    /// Drop defect pairs farther apart than the sum of their boundary
    /// distances. Such pairs never appear in an optimal matching.
    pub prune_by_boundary: bool,
}

/// Nodes `0..k` are defects and `k..2k` their boundary companions.
#[derive(Clone, Debug)]
pub struct MatchingProblem {
    /// Spacetime node id of each defect.
    pub defects: Vec<usize>,
    pub edges: Vec<MatchingEdge>,
    trees: Vec<PathTree>,
    boundary_target: Vec<usize>,
}

impl MatchingProblem {
    pub fn node_count(&self) -> usize {
        2 * self.defects.len()
    }

    pub fn defect_count(&self) -> usize {
        self.defects.len()
    }

    /// Spacetime edges realizing the weight of matching-graph pair `(a, b)`.
    pub fn witness(&self, a: usize, b: usize) -> Vec<usize> {
        let k = self.defects.len();
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if a >= k {
            return Vec::new();
        }
        if b < k {
            return self.trees[a].path_to(self.defects[b]).unwrap_or_default();
        }
        debug_assert_eq!(b, a + k, "defect paired with a foreign companion");
        self.trees[a].path_to(self.boundary_target[a]).unwrap_or_default()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<u64> {
        self.edges
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.weight)
    }
}

pub fn build_matching_problem(graph: &SpacetimeGraph, defects: &DefectSet) -> Result<MatchingProblem> {
    build_matching_problem_with(graph, defects, MatchingOptions::default())
}

pub fn build_matching_problem_with(
    graph: &SpacetimeGraph,
    defects: &DefectSet,
    options: MatchingOptions,
) -> Result<MatchingProblem> {
    let ids: Vec<usize> = defects
        .defects
        .iter()
        .map(|d| graph.node_id(d.node, d.layer))
        .collect();
    let k = ids.len();
    let trees = shortest_paths(graph, &ids);
    let mut boundary_target = Vec::with_capacity(k);
    let mut boundary_dist = Vec::with_capacity(k);
    for t in &trees {
        let (node, dist) = t
            .nearest_boundary(graph)
            .ok_or_else(|| Error::ContractViolation("defect cannot reach a boundary".into()))?;
        boundary_target.push(node);
        boundary_dist.push(dist);
    }
    let mut edges = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in i + 1..k {
            let w = trees[i].dist[ids[j]];
            if w == UNREACHABLE {
                continue;
            }
            if options.prune_by_boundary && w > boundary_dist[i] + boundary_dist[j] {
                continue;
            }
            edges.push(MatchingEdge { a: i, b: j, weight: w });
        }
    }
    for i in 0..k {
        edges.push(MatchingEdge {
            a: i,
            b: k + i,
            weight: boundary_dist[i],
        });
    }
    for i in 0..k {
        for j in i + 1..k {
            edges.push(MatchingEdge {
                a: k + i,
                b: k + j,
                weight: 0,
            });
        }
    }
    Ok(MatchingProblem {
        defects: ids,
        edges,
        trees,
        boundary_target,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Node pairs `(a, b)` with `a < b`, sorted.
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: u64,
}

/// Exact minimum-weight perfect matching of an arbitrary weighted graph.
pub fn min_weight_perfect_matching_raw(n: usize, edges: &[MatchingEdge]) -> Result<Matching> {
    if n % 2 == 1 {
        return Err(Error::OddNodeCount(n));
    }
    if n == 0 {
        return Ok(Matching::default());
    }
    // Maximum-cardinality matching of (W - w) is a minimum-weight perfect
    // matching whenever a perfect matching exists.
    let wmax = edges.iter().map(|e| e.weight).max().unwrap_or(0);
    let big = wmax as i64 + 1;
    let transformed: Vec<(usize, usize, i64)> =
        edges.iter().map(|e| (e.a, e.b, big - e.weight as i64)).collect();
    let mate = blossom::max_weight_matching(n, &transformed, true);
    let mut pairs = Vec::with_capacity(n / 2);
    for (v, m) in mate.iter().enumerate() {
        match m {
            Some(u) if v < *u => pairs.push((v, *u)),
            Some(_) => {}
            None => return Err(Error::NoPerfectMatching),
        }
    }
    let mut total = 0u64;
    for &(a, b) in &pairs {
        let w = edges
            .iter()
            .filter(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.weight)
            .min()
            .ok_or(Error::NoPerfectMatching)?;
        total += w;
    }
    Ok(Matching {
        pairs,
        total_weight: total,
    })
}

pub fn min_weight_perfect_matching(problem: &MatchingProblem) -> Result<Matching> {
    min_weight_perfect_matching_raw(problem.node_count(), &problem.edges)
}

/// Symmetric difference of the witness paths of all matched pairs, as sorted
/// spacetime edge ids.
pub fn matching_to_edges(matching: &Matching, problem: &MatchingProblem) -> Vec<usize> {
    let mut odd = std::collections::BTreeSet::new();
    for &(a, b) in &matching.pairs {
        for e in problem.witness(a, b) {
            if !odd.remove(&e) {
                odd.insert(e);
            }
        }
    }
    odd.into_iter().collect()
}

/// Exhaustive minimum-weight perfect matching, for cross-checking on small
/// graphs. Returns `None` when no perfect matching exists.
pub fn brute_force_matching_weight(n: usize, edges: &[MatchingEdge]) -> Option<u64> {
    let mut w = vec![vec![None; n]; n];
    for e in edges {
        let cur: Option<u64> = w[e.a][e.b];
        let best = cur.map_or(e.weight, |c| c.min(e.weight));
        w[e.a][e.b] = Some(best);
        w[e.b][e.a] = Some(best);
    }
    fn rec(used: &mut Vec<bool>, w: &[Vec<Option<u64>>]) -> Option<u64> {
        let Some(first) = used.iter().position(|&u| !u) else {
            return Some(0);
        };
        used[first] = true;
        let mut best: Option<u64> = None;
        for j in first + 1..used.len() {
            if used[j] {
                continue;
            }
            if let Some(wij) = w[first][j] {
                used[j] = true;
                if let Some(rest) = rec(used, w) {
                    let total = wij + rest;
                    best = Some(best.map_or(total, |b| b.min(total)));
                }
                used[j] = false;
            }
        }
        used[first] = false;
        best
    }
    if n % 2 == 1 {
        return None;
    }
    rec(&mut vec![false; n], &w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::projection::{build_subgraphs, extend_spacetime, Defect};
    use proptest::prelude::*;

    fn e(a: usize, b: usize, weight: u64) -> MatchingEdge {
        MatchingEdge { a, b, weight }
    }

    #[test]
    fn two_nodes() {
        let m = min_weight_perfect_matching_raw(2, &[e(0, 1, 7)]).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
        assert_eq!(m.total_weight, 7);
    }

    #[test]
    fn four_nodes_by_inspection() {
        let edges = [e(0, 1, 1), e(2, 3, 1), e(0, 2, 3), e(1, 3, 3), e(0, 3, 3), e(1, 2, 3)];
        let m = min_weight_perfect_matching_raw(4, &edges).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (2, 3)]);
        assert_eq!(m.total_weight, 2);
    }

    #[test]
    fn odd_rejected() {
        assert!(matches!(
            min_weight_perfect_matching_raw(3, &[e(0, 1, 1)]),
            Err(Error::OddNodeCount(3))
        ));
    }

    #[test]
    fn empty_and_single_defect() {
        let lat = build_lattice(5).unwrap();
        let sub = &build_subgraphs(&lat)[0];
        let g = extend_spacetime(sub, 1).unwrap();
        let p = build_matching_problem(&g, &DefectSet::default()).unwrap();
        assert_eq!(min_weight_perfect_matching(&p).unwrap(), Matching::default());

        let node = sub.face_node.iter().flatten().copied().next().unwrap();
        let ds = DefectSet {
            defects: vec![Defect { node, layer: 0 }],
        };
        let p = build_matching_problem(&g, &ds).unwrap();
        let m = min_weight_perfect_matching(&p).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
        assert_eq!(m.total_weight, p.weight(0, 1).unwrap());
    }

    #[test]
    fn boundary_distance_small_at_d3() {
        let lat = build_lattice(3).unwrap();
        for sub in build_subgraphs(&lat) {
            let g = extend_spacetime(&sub, 1).unwrap();
            for v in 0..sub.nodes.len() {
                if sub.is_boundary(v) {
                    continue;
                }
                let t = &shortest_paths(&g, &[v])[0];
                assert!(t.nearest_boundary(&g).unwrap().1 <= 2);
            }
        }
    }

    #[test]
    fn timelike_distance() {
        let lat = build_lattice(5).unwrap();
        let sub = &build_subgraphs(&lat)[2];
        let g = extend_spacetime(sub, 4).unwrap();
        let v = sub.face_node.iter().flatten().copied().next().unwrap();
        let t = &shortest_paths(&g, &[g.node_id(v, 0)])[0];
        assert_eq!(t.dist[g.node_id(v, 2)], 2);
    }

    fn random_problem() -> impl Strategy<Value = (usize, Vec<MatchingEdge>)> {
        (1usize..=5).prop_flat_map(|half| {
            let n = 2 * half;
            let m = n * (n - 1) / 2;
            proptest::collection::vec(0u64..20, m).prop_map(move |ws| {
                let mut edges = Vec::new();
                let mut it = ws.into_iter();
                for a in 0..n {
                    for b in a + 1..n {
                        edges.push(MatchingEdge { a, b, weight: it.next().unwrap() });
                    }
                }
                (n, edges)
            })
        })
    }

    proptest! {
        #[test]
        fn blossom_matches_oracle((n, edges) in random_problem()) {
            let m = min_weight_perfect_matching_raw(n, &edges).unwrap();
            prop_assert_eq!(Some(m.total_weight), brute_force_matching_weight(n, &edges));
            let mut seen = vec![false; n];
            for &(a, b) in &m.pairs {
                prop_assert!(!seen[a] && !seen[b]);
                seen[a] = true;
                seen[b] = true;
            }
            prop_assert!(seen.iter().all(|&s| s));
        }

        #[test]
        fn witness_lengths_match_weights(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let lat = build_lattice(7).unwrap();
            let sub = &build_subgraphs(&lat)[(seed % 3) as usize];
            let g = extend_spacetime(sub, 3).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let faces: Vec<usize> = sub.face_node.iter().flatten().copied().collect();
            let mut defects: Vec<Defect> = (0..6)
                .map(|_| Defect { node: faces[rng.random_range(0..faces.len())], layer: rng.random_range(0..3) })
                .collect();
            defects.sort();
            defects.dedup();
            let p = build_matching_problem(&g, &DefectSet { defects }).unwrap();
            for me in &p.edges {
                let len: u64 = p.witness(me.a, me.b).iter().map(|&x| g.edges[x].weight as u64).sum();
                prop_assert_eq!(len, me.weight);
            }
            let pruned = build_matching_problem_with(&g, &DefectSet { defects: p.defects.iter().map(|&id| { let (node, layer) = g.split(id); Defect { node, layer } }).collect() }, MatchingOptions { prune_by_boundary: true }).unwrap();
            prop_assert_eq!(
                min_weight_perfect_matching(&p).unwrap().total_weight,
                min_weight_perfect_matching(&pruned).unwrap().total_weight
            );
        }
    }
}
