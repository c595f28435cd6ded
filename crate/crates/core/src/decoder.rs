//! End-to-end decoding: match in each colored subgraph, take the union of the
//! matched edges, lift it to a two-set partition of the data qubits and flip
//! the smaller set.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CodeLattice, Color};
use crate::matching::{
    build_matching_problem_with, matching_to_edges, min_weight_perfect_matching, Matching, MatchingOptions,
};
use crate::noise::{syndrome_of_bits, ErrorState, Pauli};
use crate::projection::{
    build_subgraphs, defects_2d, defects_3d, extend_spacetime_weighted, project_spacelike, ColoredSubgraph,
    DefectSet, EdgeWeights, SpacetimeGraph,
};

/// One edge of one colored subgraph, named by the qubit it belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRef {
    pub color: Color,
    pub edge: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Qubits to flip, sorted.
    pub correction: Vec<usize>,
    /// Projected matched edges of the `R`, `G`, `B` subgraphs.
    pub matched_edges: [Vec<usize>; 3],
    pub matchings: [Matching; 3],
    pub region_weight: usize,
    pub complement_weight: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderOptions {
    pub weights: EdgeWeights,
    pub matching: MatchingOptions,
}

/// Precomputed decoding graphs for one lattice. Cheap to share across threads.
pub struct Decoder {
    lattice: Arc<CodeLattice>,
    subgraphs: [ColoredSubgraph; 3],
    options: DecoderOptions,
    /// Primal adjacency: `(neighbor, color)` per qubit, one entry per twin pair.
    primal: Vec<Vec<(usize, Color)>>,
    graphs: RwLock<BTreeMap<usize, Arc<[SpacetimeGraph; 3]>>>,
}

impl Decoder {
    pub fn new(lattice: Arc<CodeLattice>) -> Self {
        Self::with_options(lattice, DecoderOptions::default())
    }

    pub fn with_options(lattice: Arc<CodeLattice>, options: DecoderOptions) -> Self {
        let subgraphs = build_subgraphs(&lattice);
        let primal = primal_adjacency(lattice.n(), &subgraphs);
        Decoder {
            lattice,
            subgraphs,
            options,
            primal,
            graphs: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn lattice(&self) -> &CodeLattice {
        &self.lattice
    }

    pub fn subgraphs(&self) -> &[ColoredSubgraph; 3] {
        &self.subgraphs
    }

    /// Spacetime graphs with `rounds` layers, built on first use.
    pub fn graphs(&self, rounds: usize) -> Result<Arc<[SpacetimeGraph; 3]>> {
        if let Some(g) = self.graphs.read().expect("graph cache").get(&rounds) {
            return Ok(g.clone());
        }
        let built = [
            extend_spacetime_weighted(&self.subgraphs[0], rounds, self.options.weights)?,
            extend_spacetime_weighted(&self.subgraphs[1], rounds, self.options.weights)?,
            extend_spacetime_weighted(&self.subgraphs[2], rounds, self.options.weights)?,
        ];
        let arc = Arc::new(built);
        self.graphs
            .write()
            .expect("graph cache")
            .entry(rounds)
            .or_insert_with(|| arc.clone());
        Ok(arc)
    }

    /// Decodes one perfectly measured syndrome.
    pub fn decode_2d(&self, syndrome: &[bool]) -> Result<DecodeResult> {
        let defects: Vec<DefectSet> = self.subgraphs.iter().map(|s| defects_2d(s, syndrome)).collect();
        self.decode_defects(1, &defects)
    }

    /// Decodes a history of reported outcomes whose last round is perfect.
    pub fn decode_3d(&self, history: &[Vec<bool>]) -> Result<DecodeResult> {
        if history.is_empty() {
            return Err(Error::InvalidArgument("empty syndrome history".into()));
        }
        let defects: Vec<DefectSet> = self.subgraphs.iter().map(|s| defects_3d(s, history)).collect();
        self.decode_defects(history.len(), &defects)
    }

    fn decode_defects(&self, rounds: usize, defects: &[DefectSet]) -> Result<DecodeResult> {
        let graphs = self.graphs(rounds)?;
        let mut result = DecodeResult::default();
        let mut union = Vec::new();
        for (i, graph) in graphs.iter().enumerate() {
            let problem = build_matching_problem_with(graph, &defects[i], self.options.matching)?;
            let matching = min_weight_perfect_matching(&problem)?;
            let edges = matching_to_edges(&matching, &problem);
            let projected = project_spacelike(graph, &edges);
            union.extend(projected.iter().map(|&edge| EdgeRef {
                color: graph.base.label,
                edge,
            }));
            result.matched_edges[i] = projected;
            result.matchings[i] = matching;
        }
        let (set_a, set_b) = self.lift(&union)?;
        result.region_weight = set_a.len();
        result.complement_weight = set_b.len();
        result.correction = if set_a.len() <= set_b.len() { set_a } else { set_b };
        Ok(result)
    }

    /// Two-colors the qubits so that neighbors differ exactly across edges of
    /// the union. The apex qubit always lands in the second set.
    pub fn lift(&self, union: &[EdgeRef]) -> Result<(Vec<usize>, Vec<usize>)> {
        lift_with(&self.lattice, &self.subgraphs, &self.primal, union)
    }
}

fn primal_adjacency(n: usize, subgraphs: &[ColoredSubgraph; 3]) -> Vec<Vec<(usize, Color)>> {
    let mut adj = vec![Vec::new(); n];
    for sub in subgraphs {
        for e in &sub.edges {
            if let Some(t) = e.twin {
                if e.qubit < t {
                    adj[e.qubit].push((t, sub.label));
                    adj[t].push((e.qubit, sub.label));
                }
            }
        }
    }
    adj
}

fn lift_with(
    lattice: &CodeLattice,
    subgraphs: &[ColoredSubgraph; 3],
    primal: &[Vec<(usize, Color)>],
    union: &[EdgeRef],
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = lattice.n();
    let mut degree = vec![0usize; lattice.faces.len()];
    // Crossing parity of the primal edge (q, twin) in subgraph c, stored on
    // the smaller qubit of the pair.
    let mut cross = [vec![false; n], vec![false; n], vec![false; n]];
    for r in union {
        let sub = &subgraphs[r.color.index()];
        let se = &sub.edges[r.edge];
        for &v in &se.endpoints {
            if let crate::projection::NodeKind::Face(f) = sub.nodes[v] {
                degree[f] += 1;
            }
        }
        if let Some(t) = se.twin {
            cross[r.color.index()][se.qubit.min(t)] ^= true;
        }
    }
    if let Some(face) = degree.iter().position(|d| d % 2 == 1) {
        return Err(Error::InconsistentUnion { face });
    }
    let mut side: Vec<Option<bool>> = vec![None; n];
    let mut stack = vec![lattice.apex];
    side[lattice.apex] = Some(false);
    while let Some(q) = stack.pop() {
        let s = side[q].expect("visited");
        for &(w, c) in &primal[q] {
            let flip = cross[c.index()][q.min(w)];
            match side[w] {
                None => {
                    side[w] = Some(s ^ flip);
                    stack.push(w);
                }
                Some(sw) if sw != s ^ flip => {
                    return Err(Error::ContractViolation(format!(
                        "edge union does not bound a region near qubit {w}"
                    )));
                }
                Some(_) => {}
            }
        }
    }
    let mut set_a = Vec::new();
    let mut set_b = Vec::new();
    for (q, s) in side.iter().enumerate() {
        match s {
            Some(true) => set_a.push(q),
            Some(false) => set_b.push(q),
            None => return Err(Error::ContractViolation(format!("qubit {q} unreachable in lift"))),
        }
    }
    Ok((set_a, set_b))
}

/// Lift without a prebuilt [`Decoder`].
pub fn lift_to_region(lattice: &CodeLattice, edge_union: &[EdgeRef]) -> Result<(Vec<usize>, Vec<usize>)> {
    let subgraphs = build_subgraphs(lattice);
    let primal = primal_adjacency(lattice.n(), &subgraphs);
    lift_with(lattice, &subgraphs, &primal, edge_union)
}

pub fn decode_2d(lattice: &CodeLattice, syndrome: &[bool]) -> Result<DecodeResult> {
    Decoder::new(Arc::new(lattice.clone())).decode_2d(syndrome)
}

pub fn decode_3d(lattice: &CodeLattice, history: &[Vec<bool>]) -> Result<DecodeResult> {
    Decoder::new(Arc::new(lattice.clone())).decode_3d(history)
}

/// Whether `error ⊕ correction` (of the given Pauli type) is a nontrivial
/// logical operator. A residual with nonzero syndrome violates the decoder
/// contract.
pub fn is_logical_failure(
    lattice: &CodeLattice,
    error: &ErrorState,
    correction: &[usize],
    pauli: Pauli,
) -> Result<bool> {
    let mut residual = error.component(pauli).to_vec();
    for &q in correction {
        residual[q] ^= true;
    }
    if syndrome_of_bits(lattice, &residual).iter().any(|&b| b) {
        return Err(Error::ContractViolation("residual error has a nontrivial syndrome".into()));
    }
    let logical = match pauli {
        Pauli::X => &lattice.logical_z,
        Pauli::Z => &lattice.logical_x,
    };
    Ok(logical.iter().filter(|&&q| residual[q]).count() % 2 == 1)
}

/// Everything needed to replay a decoder failure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureDump {
    pub d: usize,
    pub model: String,
    pub seed: u64,
    pub trial: u64,
    pub error: ErrorState,
    pub history: Vec<Vec<bool>>,
    pub result: Option<DecodeResult>,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::noise::{syndrome_of, CheckType};

    #[test]
    fn empty_syndrome() {
        let lat = build_lattice(5).unwrap();
        let r = decode_2d(&lat, &vec![false; lat.faces.len()]).unwrap();
        assert!(r.correction.is_empty());
        let (a, b) = lift_to_region(&lat, &[]).unwrap();
        assert!(a.is_empty());
        assert_eq!(b.len(), lat.n());
    }

    #[test]
    fn single_errors_corrected() {
        for d in [3, 5, 7, 9] {
            let lat = Arc::new(build_lattice(d).unwrap());
            let dec = Decoder::new(lat.clone());
            for q in 0..lat.n() {
                let e = ErrorState::from_x(lat.n(), &[q]);
                let s = syndrome_of(&lat, &e, CheckType::Z);
                let r = dec.decode_2d(&s).unwrap();
                assert!(!is_logical_failure(&lat, &e, &r.correction, Pauli::X).unwrap(), "d={d} q={q}");
                assert_eq!(r.correction, vec![q], "d={d}");
            }
        }
    }

    #[test]
    fn logical_judgement() {
        let lat = build_lattice(5).unwrap();
        let clean = ErrorState::clean(lat.n());
        assert!(!is_logical_failure(&lat, &clean, &[], Pauli::X).unwrap());
        assert!(is_logical_failure(&lat, &clean, &lat.logical_x, Pauli::X).unwrap());
        for f in &lat.faces {
            assert!(!is_logical_failure(&lat, &clean, &f.support, Pauli::X).unwrap());
        }
        assert!(is_logical_failure(&lat, &clean, &[lat.apex], Pauli::X).is_err());
    }

    #[test]
    fn odd_union_rejected() {
        let lat = build_lattice(5).unwrap();
        let subs = build_subgraphs(&lat);
        let e = (0..lat.n()).find(|&e| subs[0].is_routable(e)).unwrap();
        let r = lift_to_region(&lat, &[EdgeRef { color: Color::R, edge: e }]);
        assert!(r.is_err());
    }

    #[test]
    fn measurement_errors_only() {
        let lat = Arc::new(build_lattice(5).unwrap());
        let dec = Decoder::new(lat.clone());
        let nf = lat.faces.len();
        let mut history = vec![vec![false; nf]; 6];
        history[1][2] = true;
        history[3][0] = true;
        history[3][4] = true;
        let r = dec.decode_3d(&history).unwrap();
        assert!(r.correction.is_empty());
        assert!(r.matched_edges.iter().all(|m| m.is_empty()));
    }

    #[test]
    fn single_data_error_each_round() {
        for d in [3, 5] {
            let lat = Arc::new(build_lattice(d).unwrap());
            let dec = Decoder::new(lat.clone());
            let rounds = d;
            for t in 0..rounds {
                for q in 0..lat.n() {
                    let e = ErrorState::from_x(lat.n(), &[q]);
                    let s = syndrome_of(&lat, &e, CheckType::Z);
                    let mut history = vec![vec![false; lat.faces.len()]; t];
                    history.extend(std::iter::repeat_n(s, rounds + 1 - t));
                    let r = dec.decode_3d(&history).unwrap();
                    assert_eq!(r.correction, vec![q], "d={d} t={t} q={q}");
                }
            }
        }
    }

    #[test]
    fn graph_cache_reused() {
        let dec = Decoder::new(Arc::new(build_lattice(3).unwrap()));
        let a = dec.graphs(4).unwrap();
        let b = dec.graphs(4).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn restores_codespace(d in proptest::sample::select(vec![3usize, 5, 7, 9, 11]), seed: u64) {
            use rand::SeedableRng;
            let lat = Arc::new(build_lattice(d).unwrap());
            let dec = Decoder::new(lat.clone());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let e = crate::noise::sample_code_capacity(&lat, 0.15, &mut rng).unwrap();
            let r = dec.decode_2d(&syndrome_of(&lat, &e, CheckType::Z)).unwrap();
            proptest::prop_assert_eq!(r.region_weight + r.complement_weight, lat.n());
            proptest::prop_assert!(r.correction.len() <= lat.n() / 2);
            // Errors from the contract check would surface here.
            is_logical_failure(&lat, &e, &r.correction, Pauli::X).unwrap();
        }

        #[test]
        fn phenomenological_closure(seed: u64) {
            use rand::SeedableRng;
            let lat = Arc::new(build_lattice(5).unwrap());
            let dec = Decoder::new(lat.clone());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let e = crate::noise::sample_phenomenological(&lat, 0.05, 5, &mut rng).unwrap();
            let h = crate::noise::phenomenological_history(&lat, &e);
            let r = dec.decode_3d(&h).unwrap();
            is_logical_failure(&lat, &e, &r.correction, Pauli::X).unwrap();
        }
    }
}
