//! Cat-state syndrome extraction circuits, circuit-level depolarizing noise
//! and Pauli-frame propagation.
//!
//! Every face owns `|f|/2` ancillas, reused for its Z-check and its X-check.
//! Ancilla `i` of a face touches support qubits `2i` and `2i+1` (cyclic order
//! around the face). A round is a Z-check sub-round followed by an X-check
//! sub-round. Within a sub-round all ancilla-data CNOTs are packed into three
//! layers by a bipartite edge coloring, cat preparation runs just before and
//! unpreparation just after them. Idle data qubits, and idle ancillas between
//! preparation and readout, receive explicit identity gates.
//!
//! X-check block on a weight-8 face (the Z-check block is its Hadamard dual):
//!
//! ```text
//! a1: |+> ─●──●─────── ●(d1) ●(d2) ──●──●── MX   parity
//! a2: |0> ─X──┼──●──── ●(d3) ●(d4) ──X──┼── MZ   flag Z1Z2
//! a3: |0> ────X──┼──── ●(d5) ●(d6) ──●──X── MZ   flag Z1Z3
//! a4: |0> ───────X──── ●(d7) ●(d8) ──X───── MZ   flag Z3Z4
//! ```
//!
//! A single fault that leaves a weight-2 X error on the cat before the data
//! interactions shows up as flags `{a2, a4}` and is undone by
//! [`postprocess_cat_flags`].

use std::collections::BTreeSet;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::CodeLattice;
use crate::noise::{syndrome_of_bits, CheckType, ErrorState, Pauli};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    PrepZ(usize),
    PrepX(usize),
    H(usize),
    Cnot(usize, usize),
    MeasZ(usize),
    MeasX(usize),
    Identity(usize),
}

impl Gate {
    /// Qubits acted on, padded with `usize::MAX` for one-qubit gates.
    pub fn qubits(&self) -> [usize; 2] {
        match *self {
            Gate::Cnot(c, t) => [c, t],
            Gate::PrepZ(q) | Gate::PrepX(q) | Gate::H(q) | Gate::MeasZ(q) | Gate::MeasX(q) | Gate::Identity(q) => {
                [q, usize::MAX]
            }
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cnot(..))
    }

    pub fn is_measurement(&self) -> bool {
        matches!(self, Gate::MeasZ(_) | Gate::MeasX(_))
    }

    pub fn is_preparation(&self) -> bool {
        matches!(self, Gate::PrepZ(_) | Gate::PrepX(_))
    }

    /// Conjugation by Hadamard on every qubit.
    fn dual(self) -> Gate {
        match self {
            Gate::PrepZ(q) => Gate::PrepX(q),
            Gate::PrepX(q) => Gate::PrepZ(q),
            Gate::MeasZ(q) => Gate::MeasX(q),
            Gate::MeasX(q) => Gate::MeasZ(q),
            Gate::Cnot(c, t) => Gate::Cnot(t, c),
            g => g,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasRole {
    /// Reports the check eigenvalue.
    Parity,
    /// Cat verification readout of ancilla `k` (`k >= 1`, zero-based).
    Flag(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub gate: usize,
    pub face: usize,
    pub check: CheckType,
    pub role: MeasRole,
}

/// One check extraction: a face measured in one basis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub face: usize,
    pub check: CheckType,
    pub ancillas: Vec<usize>,
    /// Face support in cyclic order; ancilla `i` touches entries `2i`, `2i+1`.
    pub data: Vec<usize>,
    /// Measurement index of the parity readout.
    pub parity: usize,
    /// Measurement indices of the flag readouts of ancillas `1..`.
    pub flags: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_data: usize,
    pub n_qubits: usize,
    /// Gates in execution order; each timestep is a contiguous range.
    pub gates: Vec<Gate>,
    pub timesteps: Vec<Range<usize>>,
    /// Timestep ranges of the Z-check and X-check sub-rounds.
    pub sub_rounds: [Range<usize>; 2],
    pub measurements: Vec<Measurement>,
    pub blocks: Vec<Block>,
    /// Measurement index per gate, `None` for non-measurements.
    pub meas_slot: Vec<Option<usize>>,
    /// Owning block per gate; data identities belong to none.
    pub gate_block: Vec<Option<usize>>,
    face_count: usize,
}

impl Circuit {
    pub fn depth(&self) -> usize {
        self.timesteps.len()
    }

    pub fn face_count(&self) -> usize {
        self.face_count
    }

    pub fn is_data(&self, q: usize) -> bool {
        q < self.n_data
    }

    /// Distinct two-qubit interaction partners of every qubit.
    pub fn neighbors(&self) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); self.n_qubits];
        for g in &self.gates {
            if let Gate::Cnot(c, t) = *g {
                out[c].insert(t);
                out[t].insert(c);
            }
        }
        out
    }

    /// Checks that no timestep touches a qubit twice and that every ancilla
    /// is prepared before use and measured before reuse.
    pub fn check_well_formed(&self) -> Result<()> {
        let mut live = vec![false; self.n_qubits];
        for (s, range) in self.timesteps.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for g in &self.gates[range.clone()] {
                for q in g.qubits() {
                    if q == usize::MAX {
                        continue;
                    }
                    if !seen.insert(q) {
                        return Err(Error::ContractViolation(format!("qubit {q} used twice in step {s}")));
                    }
                    if q < self.n_data {
                        continue;
                    }
                    if g.is_preparation() {
                        if live[q] {
                            return Err(Error::ContractViolation(format!("ancilla {q} re-prepared in step {s}")));
                        }
                        live[q] = true;
                    } else if !live[q] {
                        return Err(Error::ContractViolation(format!("ancilla {q} used unprepared in step {s}")));
                    } else if g.is_measurement() {
                        live[q] = false;
                    }
                }
            }
        }
        match live.iter().position(|&l| l) {
            Some(q) => Err(Error::ContractViolation(format!("ancilla {q} never measured"))),
            None => Ok(()),
        }
    }
}

/// Gate list of one X-check block before scheduling.
fn x_block_template(data: &[usize], anc: &[usize]) -> Vec<Gate> {
    let mut g = Vec::new();
    let k = anc.len();
    g.push(Gate::PrepX(anc[0]));
    for &a in &anc[1..] {
        g.push(Gate::PrepZ(a));
    }
    match k {
        2 => g.push(Gate::Cnot(anc[0], anc[1])),
        4 => {
            g.push(Gate::Cnot(anc[0], anc[1]));
            g.push(Gate::Cnot(anc[0], anc[2]));
            g.push(Gate::Cnot(anc[1], anc[3]));
        }
        _ => unreachable!("face weights are 4 or 8"),
    }
    for i in 0..k {
        g.push(Gate::Cnot(anc[i], data[2 * i]));
    }
    for i in 0..k {
        g.push(Gate::Cnot(anc[i], data[2 * i + 1]));
    }
    match k {
        2 => g.push(Gate::Cnot(anc[0], anc[1])),
        _ => {
            g.push(Gate::Cnot(anc[0], anc[1]));
            g.push(Gate::Cnot(anc[2], anc[3]));
            g.push(Gate::Cnot(anc[0], anc[2]));
        }
    }
    g.push(Gate::MeasX(anc[0]));
    for &a in &anc[1..] {
        g.push(Gate::MeasZ(a));
    }
    g
}

/// Builds one full extraction round: all Z-checks, then all X-checks.
pub fn build_extraction_round(lattice: &CodeLattice) -> Circuit {
    let n = lattice.n();
    let mut face_anc = Vec::with_capacity(lattice.faces.len());
    let mut next = n;
    for f in &lattice.faces {
        let k = f.support.len() / 2;
        face_anc.push((next..next + k).collect::<Vec<_>>());
        next += k;
    }

    let mut c = Circuit {
        n_data: n,
        n_qubits: next,
        gates: Vec::new(),
        timesteps: Vec::new(),
        sub_rounds: [0..0, 0..0],
        measurements: Vec::new(),
        blocks: Vec::new(),
        meas_slot: Vec::new(),
        gate_block: Vec::new(),
        face_count: lattice.faces.len(),
    };

    for (sr, check) in [CheckType::Z, CheckType::X].into_iter().enumerate() {
        let mut templates = Vec::with_capacity(lattice.faces.len());
        for (fi, f) in lattice.faces.iter().enumerate() {
            let anc = &face_anc[fi];
            let mut tmpl = x_block_template(&f.support, anc);
            if check == CheckType::Z {
                tmpl = tmpl.into_iter().map(Gate::dual).collect();
            }
            templates.push((c.blocks.len(), tmpl));
            c.blocks.push(Block {
                face: fi,
                check,
                ancillas: anc.clone(),
                data: f.support.clone(),
                parity: 0,
                flags: Vec::new(),
            });
        }
        let timed = schedule_subround(&templates, n, c.n_qubits);
        let start = c.timesteps.len();
        emit_subround(&mut c, timed);
        c.sub_rounds[sr] = start..c.timesteps.len();
    }
    c
}

/// Steps reserved for cat preparation before the first data layer.
const PREP_DEPTH: usize = 3;

fn live_qubits(g: &Gate) -> impl Iterator<Item = usize> {
    g.qubits().into_iter().filter(|&q| q != usize::MAX)
}

fn touches_data(g: &Gate, n_data: usize) -> bool {
    live_qubits(g).any(|q| q < n_data)
}

/// Times for every gate of one sub-round. Data interactions are packed into
/// as few layers as a proper edge coloring allows; preparation runs as late
/// and unpreparation as early as the ancilla dependencies permit.
fn schedule_subround(templates: &[(usize, Vec<Gate>)], n_data: usize, n_qubits: usize) -> Vec<(usize, Gate, usize)> {
    let mut edges = Vec::new();
    for (_, tmpl) in templates {
        for g in tmpl.iter().filter(|g| touches_data(g, n_data)) {
            let [a, b] = g.qubits();
            edges.push(if a < n_data { (b, a) } else { (a, b) });
        }
    }
    let layer = bipartite_edge_coloring(&edges, n_qubits);
    let mut out = Vec::new();
    let mut e = 0;
    for (block, tmpl) in templates {
        let mut times = vec![usize::MAX; tmpl.len()];
        for (i, g) in tmpl.iter().enumerate() {
            if touches_data(g, n_data) {
                times[i] = PREP_DEPTH + layer[e];
                e += 1;
            }
        }
        let first = tmpl.iter().position(|g| touches_data(g, n_data)).expect("block touches data");
        let last = tmpl.iter().rposition(|g| touches_data(g, n_data)).expect("block touches data");
        let mut next_use = vec![usize::MAX; n_qubits];
        let mut free = vec![0usize; n_qubits];
        for (i, g) in tmpl.iter().enumerate().filter(|(_, g)| touches_data(g, n_data)) {
            for q in live_qubits(g) {
                next_use[q] = next_use[q].min(times[i]);
                free[q] = free[q].max(times[i] + 1);
            }
        }
        for i in (0..first).rev() {
            let t = live_qubits(&tmpl[i]).map(|q| next_use[q]).min().expect("gate has qubits") - 1;
            times[i] = t;
            for q in live_qubits(&tmpl[i]) {
                next_use[q] = t;
            }
        }
        for i in last + 1..tmpl.len() {
            let t = live_qubits(&tmpl[i]).map(|q| free[q]).max().expect("gate has qubits");
            times[i] = t;
            for q in live_qubits(&tmpl[i]) {
                free[q] = t + 1;
            }
        }
        out.extend(tmpl.iter().zip(times).map(|(&g, t)| (t, g, *block)));
    }
    out
}

/// Proper edge coloring of a bipartite multigraph with max-degree colors,
/// by alternating-path recoloring. Edges are `(left, right)` node pairs.
fn bipartite_edge_coloring(edges: &[(usize, usize)], nodes: usize) -> Vec<usize> {
    let mut deg = vec![0usize; nodes];
    for &(a, b) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    let k = deg.into_iter().max().unwrap_or(0);
    // at[node][color]: edge holding that color at that node
    let mut at = vec![vec![usize::MAX; k]; nodes];
    let mut color = vec![usize::MAX; edges.len()];
    for (ei, &(u, v)) in edges.iter().enumerate() {
        let cu = (0..k).find(|&c| at[u][c] == usize::MAX).expect("degree bound");
        let cv = (0..k).find(|&c| at[v][c] == usize::MAX).expect("degree bound");
        if at[v][cu] != usize::MAX {
            // Swap cu/cv along the alternating path from v; bipartiteness
            // keeps it away from u.
            let mut path = Vec::new();
            let (mut node, mut c) = (v, cu);
            while at[node][c] != usize::MAX {
                let edge = at[node][c];
                path.push(edge);
                let (a, b) = edges[edge];
                node = if a == node { b } else { a };
                c = if c == cu { cv } else { cu };
            }
            for &edge in &path {
                let (a, b) = edges[edge];
                at[a][color[edge]] = usize::MAX;
                at[b][color[edge]] = usize::MAX;
            }
            for &edge in &path {
                let (a, b) = edges[edge];
                color[edge] = if color[edge] == cu { cv } else { cu };
                at[a][color[edge]] = edge;
                at[b][color[edge]] = edge;
            }
        }
        color[ei] = cu;
        at[u][cu] = ei;
        at[v][cu] = ei;
    }
    color
}

fn emit_subround(c: &mut Circuit, mut timed: Vec<(usize, Gate, usize)>) {
    timed.sort_by_key(|&(t, _, b)| (t, b));
    let depth = timed.iter().map(|&(t, _, _)| t + 1).max().unwrap_or(0);
    // Lifetime of each ancilla within this sub-round.
    let mut span: Vec<Option<(usize, usize, usize)>> = vec![None; c.n_qubits];
    for &(t, g, b) in &timed {
        match g {
            Gate::PrepZ(q) | Gate::PrepX(q) if q >= c.n_data => span[q] = Some((t, t, b)),
            Gate::MeasZ(q) | Gate::MeasX(q) if q >= c.n_data => {
                if let Some(s) = span[q].as_mut() {
                    s.1 = t;
                }
            }
            _ => {}
        }
    }
    let mut idx = 0;
    for t in 0..depth {
        let begin = c.gates.len();
        let mut busy = vec![false; c.n_qubits];
        while idx < timed.len() && timed[idx].0 == t {
            let (_, g, b) = timed[idx];
            for q in g.qubits() {
                if q != usize::MAX {
                    busy[q] = true;
                }
            }
            let gi = c.gates.len();
            c.gates.push(g);
            c.gate_block.push(Some(b));
            if g.is_measurement() {
                let q = g.qubits()[0];
                let block = &mut c.blocks[b];
                let k = block.ancillas.iter().position(|&a| a == q).expect("block ancilla");
                let m = c.measurements.len();
                let role = if k == 0 { MeasRole::Parity } else { MeasRole::Flag(k) };
                c.measurements.push(Measurement {
                    gate: gi,
                    face: block.face,
                    check: block.check,
                    role,
                });
                if k == 0 {
                    block.parity = m;
                } else {
                    block.flags.push(m);
                }
                c.meas_slot.push(Some(m));
            } else {
                c.meas_slot.push(None);
            }
            idx += 1;
        }
        for q in 0..c.n_qubits {
            if busy[q] {
                continue;
            }
            let owner = if q < c.n_data {
                Some(None)
            } else {
                span[q].and_then(|(s, e, b)| (s < t && t < e).then_some(Some(b)))
            };
            if let Some(b) = owner {
                c.gates.push(Gate::Identity(q));
                c.gate_block.push(b);
                c.meas_slot.push(None);
            }
        }
        c.timesteps.push(begin..c.gates.len());
    }
    for block in c.blocks.iter_mut() {
        block.flags.sort_by_key(|&m| match c.measurements[m].role {
            MeasRole::Flag(k) => k,
            MeasRole::Parity => 0,
        });
    }
}

/// Fault on one gate instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultEffect {
    /// Wrong eigenstate prepared or wrong outcome reported.
    Flip,
    /// Pauli after the gate, per acted qubit: bit 0 is X, bit 1 is Z.
    Pauli([u8; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fault {
    pub gate: usize,
    pub effect: FaultEffect,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSet {
    /// Sorted by gate index.
    pub faults: Vec<Fault>,
}

impl FaultSet {
    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn from_faults(mut faults: Vec<Fault>) -> Self {
        faults.sort();
        FaultSet { faults }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Independent faults: each gate fails with probability `p`, identities with
/// `p_identity`. One-qubit failures are uniform over X, Y, Z and two-qubit
/// failures uniform over the 15 nontrivial Paulis.
pub fn sample_circuit_noise<R: Rng + ?Sized>(circuit: &Circuit, p: f64, p_identity: f64, rng: &mut R) -> Result<FaultSet> {
    check_probability(p)?;
    check_probability(p_identity)?;
    let mut faults = Vec::new();
    if p == 0.0 && p_identity == 0.0 {
        return Ok(FaultSet { faults });
    }
    for (gi, g) in circuit.gates.iter().enumerate() {
        let q = if matches!(g, Gate::Identity(_)) { p_identity } else { p };
        if q == 0.0 || rng.random::<f64>() >= q {
            continue;
        }
        let effect = match g {
            Gate::PrepZ(_) | Gate::PrepX(_) | Gate::MeasZ(_) | Gate::MeasX(_) => FaultEffect::Flip,
            Gate::Cnot(..) => {
                let k: u8 = rng.random_range(1..16);
                FaultEffect::Pauli([k & 3, k >> 2])
            }
            Gate::H(_) | Gate::Identity(_) => FaultEffect::Pauli([rng.random_range(1..4), 0]),
        };
        faults.push(Fault { gate: gi, effect });
    }
    Ok(FaultSet { faults })
}

/// Every possible single fault of the circuit.
pub fn enumerate_single_faults(circuit: &Circuit) -> Vec<Fault> {
    let mut out = Vec::new();
    for (gi, g) in circuit.gates.iter().enumerate() {
        match g {
            Gate::PrepZ(_) | Gate::PrepX(_) | Gate::MeasZ(_) | Gate::MeasX(_) => out.push(Fault {
                gate: gi,
                effect: FaultEffect::Flip,
            }),
            Gate::Cnot(..) => out.extend((1u8..16).map(|k| Fault {
                gate: gi,
                effect: FaultEffect::Pauli([k & 3, k >> 2]),
            })),
            Gate::H(_) | Gate::Identity(_) => out.extend((1u8..4).map(|k| Fault {
                gate: gi,
                effect: FaultEffect::Pauli([k, 0]),
            })),
        }
    }
    out
}

/// Pauli frame over all qubits of a circuit.
#[derive(Clone, Debug)]
struct Frame {
    x: Vec<bool>,
    z: Vec<bool>,
}

impl Frame {
    fn new(circuit: &Circuit, input: &ErrorState) -> Self {
        let mut x = vec![false; circuit.n_qubits];
        let mut z = vec![false; circuit.n_qubits];
        x[..circuit.n_data].copy_from_slice(&input.x_errors);
        z[..circuit.n_data].copy_from_slice(&input.z_errors);
        Frame { x, z }
    }

    fn data(&self, n: usize) -> ErrorState {
        ErrorState {
            x_errors: self.x[..n].to_vec(),
            z_errors: self.z[..n].to_vec(),
            layers: Vec::new(),
        }
    }

    /// Runs the gates of `steps`, consuming faults from `faults[*cursor..]`.
    fn run(
        &mut self,
        circuit: &Circuit,
        steps: Range<usize>,
        faults: &[Fault],
        cursor: &mut usize,
        outcomes: &mut [bool],
    ) {
        let Some(first) = circuit.timesteps.get(steps.start) else { return };
        let last = circuit.timesteps[steps.end - 1].end;
        for gi in first.start..last {
            let mut flip = false;
            let mut pauli = [0u8; 2];
            while *cursor < faults.len() && faults[*cursor].gate == gi {
                match faults[*cursor].effect {
                    FaultEffect::Flip => flip ^= true,
                    FaultEffect::Pauli(p) => {
                        pauli[0] ^= p[0];
                        pauli[1] ^= p[1];
                    }
                }
                *cursor += 1;
            }
            let g = circuit.gates[gi];
            match g {
                Gate::PrepZ(q) => {
                    self.x[q] = flip;
                    self.z[q] = false;
                }
                Gate::PrepX(q) => {
                    self.x[q] = false;
                    self.z[q] = flip;
                }
                Gate::H(q) => std::mem::swap(&mut self.x[q], &mut self.z[q]),
                Gate::Cnot(c, t) => {
                    self.x[t] ^= self.x[c];
                    self.z[c] ^= self.z[t];
                }
                Gate::MeasZ(q) => outcomes[circuit.meas_slot[gi].expect("slot")] = self.x[q] ^ flip,
                Gate::MeasX(q) => outcomes[circuit.meas_slot[gi].expect("slot")] = self.z[q] ^ flip,
                Gate::Identity(_) => {}
            }
            for (k, q) in g.qubits().into_iter().enumerate() {
                if q != usize::MAX && pauli[k] != 0 {
                    self.x[q] ^= pauli[k] & 1 != 0;
                    self.z[q] ^= pauli[k] & 2 != 0;
                }
            }
        }
    }
}

/// Raw propagation of one round without flag post-processing. Outcomes are
/// indexed like `circuit.measurements`; codespace inputs give all zeros.
pub fn propagate(circuit: &Circuit, faults: &FaultSet, input: &ErrorState) -> (Vec<bool>, ErrorState) {
    let mut frame = Frame::new(circuit, input);
    let mut outcomes = vec![false; circuit.measurements.len()];
    let mut cursor = 0;
    frame.run(circuit, 0..circuit.depth(), &faults.faults, &mut cursor, &mut outcomes);
    (outcomes, frame.data(circuit.n_data))
}

/// Data corrections implied by the flag outcomes of one block. Only weight-8
/// blocks are corrected: flags on ancillas 2 and 4 alone mark a weight-2 cat
/// error, which spread to the data of those two ancillas.
pub fn postprocess_cat_flags(block: &Block, flags: &[bool]) -> Vec<(usize, Pauli)> {
    if block.ancillas.len() != 4 || flags != [true, false, true] {
        return Vec::new();
    }
    let pauli = match block.check {
        CheckType::X => Pauli::X,
        CheckType::Z => Pauli::Z,
    };
    [2, 3, 6, 7].iter().map(|&i| (block.data[i], pauli)).collect()
}

/// Outcomes of one executed round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub outcomes: Vec<bool>,
    pub z_checks: Vec<bool>,
    pub x_checks: Vec<bool>,
    /// Flag outcomes of every block, concatenated in block order.
    pub flags: Vec<bool>,
    pub corrections: Vec<(usize, Pauli)>,
}

/// Runs one round, applying flag corrections at the end of each sub-round.
pub fn execute_round(circuit: &Circuit, faults: &FaultSet, input: &ErrorState) -> (RoundRecord, ErrorState) {
    let mut frame = Frame::new(circuit, input);
    let mut rec = RoundRecord {
        outcomes: vec![false; circuit.measurements.len()],
        z_checks: vec![false; circuit.face_count],
        x_checks: vec![false; circuit.face_count],
        ..Default::default()
    };
    let mut cursor = 0;
    let mut flag_buf = Vec::with_capacity(3);
    for (sr, check) in [CheckType::Z, CheckType::X].into_iter().enumerate() {
        frame.run(circuit, circuit.sub_rounds[sr].clone(), &faults.faults, &mut cursor, &mut rec.outcomes);
        for block in circuit.blocks.iter().filter(|b| b.check == check) {
            flag_buf.clear();
            flag_buf.extend(block.flags.iter().map(|&m| rec.outcomes[m]));
            rec.flags.extend_from_slice(&flag_buf);
            let bit = rec.outcomes[block.parity];
            match check {
                CheckType::Z => rec.z_checks[block.face] = bit,
                CheckType::X => rec.x_checks[block.face] = bit,
            }
            for (q, p) in postprocess_cat_flags(block, &flag_buf) {
                match p {
                    Pauli::X => frame.x[q] ^= true,
                    Pauli::Z => frame.z[q] ^= true,
                }
                rec.corrections.push((q, p));
            }
        }
    }
    (rec, frame.data(circuit.n_data))
}

/// Reported outcomes over all rounds, the last of which is noiseless.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeHistory {
    pub z_checks: Vec<Vec<bool>>,
    pub x_checks: Vec<Vec<bool>>,
    pub flags: Vec<Vec<bool>>,
    pub corrections: Vec<Vec<(usize, Pauli)>>,
}

impl SyndromeHistory {
    pub fn rounds(&self) -> usize {
        self.z_checks.len()
    }

    /// History read by the decoder for the given error component.
    pub fn for_pauli(&self, pauli: Pauli) -> &[Vec<bool>] {
        match pauli {
            Pauli::X => &self.z_checks,
            Pauli::Z => &self.x_checks,
        }
    }

    fn push(&mut self, rec: RoundRecord) {
        self.z_checks.push(rec.z_checks);
        self.x_checks.push(rec.x_checks);
        self.flags.push(rec.flags);
        self.corrections.push(rec.corrections);
    }
}

/// `rounds` noisy rounds with accumulating errors, then one noiseless round.
pub fn run_rounds<R: Rng + ?Sized>(
    circuit: &Circuit,
    p: f64,
    p_identity: f64,
    rounds: usize,
    rng: &mut R,
) -> Result<(SyndromeHistory, ErrorState)> {
    let mut faults = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        faults.push(sample_circuit_noise(circuit, p, p_identity, rng)?);
    }
    Ok(run_with_faults(circuit, &faults))
}

/// Deterministic replay: one round per fault set, then a noiseless round.
pub fn run_with_faults(circuit: &Circuit, faults: &[FaultSet]) -> (SyndromeHistory, ErrorState) {
    let mut state = ErrorState::clean(circuit.n_data);
    let mut history = SyndromeHistory::default();
    for f in faults.iter().chain(std::iter::once(&FaultSet::default())) {
        let (rec, next) = execute_round(circuit, f, &state);
        history.push(rec);
        state = next;
    }
    (history, state)
}

/// Minimum weight of `bits` times any product of face supports.
pub fn reduced_weight(lattice: &CodeLattice, bits: &[bool]) -> Result<usize> {
    const MAX_FACES: usize = 16;
    let nf = lattice.faces.len();
    if nf > MAX_FACES || lattice.n() > 128 {
        return Err(Error::InvalidArgument(format!(
            "stabilizer group with {nf} generators is too large to enumerate (cap {MAX_FACES})"
        )));
    }
    let masks: Vec<u128> = lattice
        .faces
        .iter()
        .map(|f| f.support.iter().fold(0u128, |m, &q| m | 1 << q))
        .collect();
    let mut cur = bits.iter().enumerate().fold(0u128, |m, (q, &b)| if b { m | 1 << q } else { m });
    let mut best = cur.count_ones();
    for i in 1u32..(1 << nf) {
        cur ^= masks[i.trailing_zeros() as usize];
        best = best.min(cur.count_ones());
    }
    Ok(best as usize)
}

/// Effect of one injected fault on a single round from a clean input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultImpact {
    pub fault: Fault,
    pub block: Option<usize>,
    pub x_weight: usize,
    pub z_weight: usize,
    pub flagged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub faults: usize,
    /// Unflagged single faults whose reduced data error has weight at least 2.
    pub violations: Vec<FaultImpact>,
    pub max_unflagged_weight: usize,
    pub max_flagged_weight: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn impact(lattice: &CodeLattice, circuit: &Circuit, faults: &FaultSet) -> Result<(usize, usize, bool)> {
    let (rec, out) = execute_round(circuit, faults, &ErrorState::clean(circuit.n_data));
    let xw = reduced_weight(lattice, &out.x_errors)?;
    let zw = reduced_weight(lattice, &out.z_errors)?;
    Ok((xw, zw, rec.flags.iter().any(|&f| f)))
}

/// Injects every single fault into one round and checks that none leaves an
/// unflagged data error of reduced weight 2 or more.
pub fn single_fault_audit(lattice: &CodeLattice, circuit: &Circuit) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    for fault in enumerate_single_faults(circuit) {
        let (xw, zw, flagged) = impact(lattice, circuit, &FaultSet { faults: vec![fault] })?;
        let w = xw.max(zw);
        report.faults += 1;
        if flagged {
            report.max_flagged_weight = report.max_flagged_weight.max(w);
        } else {
            report.max_unflagged_weight = report.max_unflagged_weight.max(w);
            if w >= 2 {
                report.violations.push(FaultImpact {
                    fault,
                    block: circuit.gate_block[fault.gate],
                    x_weight: xw,
                    z_weight: zw,
                    flagged,
                });
            }
        }
    }
    Ok(report)
}

/// Largest reduced data-error weight left by any pair of faults inside one
/// block.
pub fn two_fault_bound(lattice: &CodeLattice, circuit: &Circuit, block: usize) -> Result<usize> {
    let faults: Vec<Fault> = enumerate_single_faults(circuit)
        .into_iter()
        .filter(|f| circuit.gate_block[f.gate] == Some(block))
        .collect();
    let mut worst = 0;
    for (i, &a) in faults.iter().enumerate() {
        for &b in &faults[i + 1..] {
            if a.gate == b.gate {
                continue;
            }
            let (xw, zw, _) = impact(lattice, circuit, &FaultSet::from_faults(vec![a, b]))?;
            worst = worst.max(xw).max(zw);
        }
    }
    Ok(worst)
}

/// Checks that no qubit interacts with more than `max` distinct partners.
pub fn connectivity_audit(circuit: &Circuit, max: usize) -> Result<usize> {
    let worst = circuit.neighbors().iter().map(BTreeSet::len).max().unwrap_or(0);
    if worst > max {
        return Err(Error::ContractViolation(format!("a qubit has {worst} interaction partners")));
    }
    Ok(worst)
}

/// True when a noiseless round reports exactly the syndrome of `input`.
pub fn noiseless_round_is_sound(lattice: &CodeLattice, circuit: &Circuit, input: &ErrorState) -> bool {
    let (rec, out) = execute_round(circuit, &FaultSet::default(), input);
    rec.z_checks == syndrome_of_bits(lattice, &input.x_errors)
        && rec.x_checks == syndrome_of_bits(lattice, &input.z_errors)
        && rec.flags.iter().all(|&f| !f)
        && out.x_errors == input.x_errors
        && out.z_errors == input.z_errors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn structure_d3() {
        let lat = build_lattice(3).unwrap();
        let c = build_extraction_round(&lat);
        c.check_well_formed().unwrap();
        assert_eq!(c.blocks.len(), 2 * lat.faces.len());
        assert_eq!(c.n_qubits, 7 + 6);
        let parity = c.measurements.iter().filter(|m| m.role == MeasRole::Parity).count();
        assert_eq!(parity, 2 * lat.faces.len());
        assert!(c.sub_rounds[0].end == c.sub_rounds[1].start);
    }

    #[test]
    fn well_formed_and_connected() {
        for d in [3, 5, 7, 9] {
            let lat = build_lattice(d).unwrap();
            let c = build_extraction_round(&lat);
            c.check_well_formed().unwrap();
            assert!(connectivity_audit(&c, 5).unwrap() <= 5);
            let nb = c.neighbors();
            for q in 0..lat.n() {
                assert_eq!(nb[q].len(), lat.qubits[q].faces.len());
            }
        }
    }

    #[test]
    fn noiseless_soundness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [3, 5, 7] {
            let lat = build_lattice(d).unwrap();
            let c = build_extraction_round(&lat);
            for _ in 0..20 {
                let mut e = ErrorState::clean(lat.n());
                for q in 0..lat.n() {
                    e.x_errors[q] = rng.random_bool(0.3);
                    e.z_errors[q] = rng.random_bool(0.3);
                }
                assert!(noiseless_round_is_sound(&lat, &c, &e));
            }
        }
    }

    #[test]
    fn zero_noise() {
        let lat = build_lattice(5).unwrap();
        let c = build_extraction_round(&lat);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_circuit_noise(&c, 0.0, 0.0, &mut rng).unwrap().is_empty());
        assert!(sample_circuit_noise(&c, -0.1, 0.0, &mut rng).is_err());
        assert!(sample_circuit_noise(&c, 0.1, 1.1, &mut rng).is_err());
        let (h, e) = run_rounds(&c, 0.0, 0.0, 5, &mut rng).unwrap();
        assert_eq!(h.rounds(), 6);
        assert!(h.z_checks.iter().chain(&h.x_checks).flatten().all(|&b| !b));
        assert_eq!(e.x_weight() + e.z_weight(), 0);
    }

    #[test]
    fn fault_count_is_binomial() {
        let lat = build_lattice(5).unwrap();
        let c = build_extraction_round(&lat);
        let n = c.gates.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let k = sample_circuit_noise(&c, 0.5, 0.5, &mut rng).unwrap().len() as f64;
            assert!((k - n / 2.0).abs() < 3.0 * (n / 4.0).sqrt());
        }
    }

    #[test]
    fn measurement_flip_gives_timelike_pair() {
        let lat = build_lattice(5).unwrap();
        let c = build_extraction_round(&lat);
        let block = c.blocks.iter().find(|b| b.check == CheckType::Z).unwrap();
        let gate = c.measurements[block.parity].gate;
        let faults = vec![
            FaultSet::default(),
            FaultSet::from_faults(vec![Fault { gate, effect: FaultEffect::Flip }]),
            FaultSet::default(),
        ];
        let (h, e) = run_with_faults(&c, &faults);
        let flipped: Vec<(usize, usize)> = h
            .z_checks
            .iter()
            .enumerate()
            .flat_map(|(t, r)| r.iter().enumerate().filter(|(_, &b)| b).map(move |(f, _)| (t, f)))
            .collect();
        assert_eq!(flipped, vec![(1, block.face)]);
        assert_eq!(e.x_weight() + e.z_weight(), 0);
    }

    #[test]
    fn cat_prep_fault_is_corrected() {
        let lat = build_lattice(5).unwrap();
        let c = build_extraction_round(&lat);
        for (bi, block) in c.blocks.iter().enumerate().filter(|(_, b)| b.ancillas.len() == 4) {
            let a2 = block.ancillas[1];
            let gate = (0..c.gates.len())
                .find(|&g| {
                    c.gate_block[g] == Some(bi) && matches!(c.gates[g], Gate::PrepZ(q) | Gate::PrepX(q) if q == a2)
                })
                .unwrap();
            let fs = FaultSet::from_faults(vec![Fault { gate, effect: FaultEffect::Flip }]);
            let (raw, out_raw) = propagate(&c, &fs, &ErrorState::clean(lat.n()));
            assert_eq!(out_raw.x_weight() + out_raw.z_weight(), 4);
            let flags: Vec<bool> = block.flags.iter().map(|&m| raw[m]).collect();
            assert_eq!(flags, vec![true, false, true]);
            let (_, out) = execute_round(&c, &fs, &ErrorState::clean(lat.n()));
            assert_eq!(out.x_weight() + out.z_weight(), 0);
        }
    }

    #[test]
    fn postprocess_quiet_without_flags() {
        let lat = build_lattice(5).unwrap();
        let c = build_extraction_round(&lat);
        for b in &c.blocks {
            assert!(postprocess_cat_flags(b, &vec![false; b.flags.len()]).is_empty());
        }
    }

    #[test]
    fn single_fault_audit_d3_d5() {
        for d in [3, 5] {
            let lat = build_lattice(d).unwrap();
            let c = build_extraction_round(&lat);
            let r = single_fault_audit(&lat, &c).unwrap();
            assert!(r.passed(), "d={d}: {:?}", &r.violations[..r.violations.len().min(5)]);
            assert!(r.max_unflagged_weight <= 1);
        }
    }

    #[test]
    fn two_fault_bounds() {
        let lat = build_lattice(5).unwrap();
        let c = build_extraction_round(&lat);
        let small = c.blocks.iter().position(|b| b.ancillas.len() == 2).unwrap();
        let big = c.blocks.iter().position(|b| b.ancillas.len() == 4).unwrap();
        assert_eq!(two_fault_bound(&lat, &c, small).unwrap(), 2);
        assert_eq!(two_fault_bound(&lat, &c, big).unwrap(), 4);
    }

    #[test]
    fn reduced_weight_mod_stabilizers() {
        let lat = build_lattice(3).unwrap();
        let mut bits = vec![false; lat.n()];
        for &q in &lat.faces[0].support[..3] {
            bits[q] = true;
        }
        assert_eq!(reduced_weight(&lat, &bits).unwrap(), 1);
        assert!(reduced_weight(&build_lattice(9).unwrap(), &[false; 49]).is_err());
    }
}
