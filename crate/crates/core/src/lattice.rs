//! Triangular 4.8.8 color-code lattices.
//!
//! The lattice is generated from its dual triangulation. Octagon centers sit on
//! the even points of a doubled integer grid and square centers on the odd
//! points; each unit square of octagon centers is cut into four triangles
//! around its square center. Every dual triangle is a data qubit and every dual
//! vertex is a face. A staircase region of triangles with zigzag trims along
//! the two legs produces a code whose three sides carry one boundary color
//! each. Qubits cut off at the rim become boundary qubits (two faces) and the
//! three corners of the triangle become corner qubits (one face).
//!
//! Qubit and face indices are assigned row by row from the base of the
//! triangle (increasing `y`, then increasing `x`), so equal `d` always yields
//! identical indexing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Face and boundary color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    R,
    G,
    B,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::R, Color::G, Color::B];

    pub fn index(self) -> usize {
        match self {
            Color::R => 0,
            Color::G => 1,
            Color::B => 2,
        }
    }

    /// The two colors other than `self`, in `R, G, B` order.
    pub fn others(self) -> [Color; 2] {
        match self {
            Color::R => [Color::G, Color::B],
            Color::G => [Color::R, Color::B],
            Color::B => [Color::R, Color::G],
        }
    }

    /// The color distinct from both arguments.
    pub fn third(a: Color, b: Color) -> Color {
        debug_assert_ne!(a, b);
        Color::ALL[3 - a.index() - b.index()]
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Color::R => "R",
            Color::G => "G",
            Color::B => "B",
        };
        f.write_str(s)
    }
}

/// Structural role of a data qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitKind {
    Interior,
    Boundary,
    Corner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Qubit {
    pub position: [f64; 2],
    /// Incident faces in increasing index order.
    pub faces: Vec<usize>,
    /// Boundary colors standing in for the faces this qubit lacks.
    pub boundaries: Vec<Color>,
}

impl Qubit {
    pub fn kind(&self) -> QubitKind {
        match self.boundaries.len() {
            0 => QubitKind::Interior,
            1 => QubitKind::Boundary,
            _ => QubitKind::Corner,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub color: Color,
    pub position: [f64; 2],
    /// Incident qubits in cyclic order around the face.
    pub support: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub color: Color,
    /// Qubits along this side, ordered from one corner to the other.
    pub qubits: Vec<usize>,
}

/// A distance-`d` triangular 4.8.8 color code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeLattice {
    pub d: usize,
    pub qubits: Vec<Qubit>,
    pub faces: Vec<Face>,
    /// One descriptor per color, indexed by [`Color::index`].
    pub boundaries: Vec<Boundary>,
    pub logical_x: Vec<usize>,
    pub logical_z: Vec<usize>,
    /// Corner qubit opposite the base boundary; anchors the region lift.
    pub apex: usize,
}

type Node = (i32, i32);

fn node_color(n: Node) -> Color {
    if n.0.rem_euclid(2) == 1 {
        Color::R
    } else if (n.0 / 2 + n.1 / 2) % 2 == 0 {
        Color::G
    } else {
        Color::B
    }
}

fn node_position(n: Node) -> [f64; 2] {
    [n.0 as f64 / 2.0, n.1 as f64 / 2.0]
}

/// Dual triangles of the region for `k = (d - 1) / 2`.
fn region(k: i32) -> Vec<[Node; 3]> {
    let mut tris = Vec::new();
    for j in 0..k {
        for i in 0..k {
            if i + j > k - 1 {
                continue;
            }
            // b, r, t, l
            let mut keep = [true; 4];
            if j == 0 {
                let allowed = if i % 2 == 0 { [2, 3] } else { [2, 1] };
                for (dir, flag) in keep.iter_mut().enumerate() {
                    *flag &= allowed.contains(&dir);
                }
            }
            if i == 0 {
                let allowed = if j % 2 == 0 { [2, 1] } else { [0, 1] };
                for (dir, flag) in keep.iter_mut().enumerate() {
                    *flag &= allowed.contains(&dir);
                }
            }
            let c = (2 * i + 1, 2 * j + 1);
            let bl = (2 * i, 2 * j);
            let br = (2 * i + 2, 2 * j);
            let tr = (2 * i + 2, 2 * j + 2);
            let tl = (2 * i, 2 * j + 2);
            let all = [[c, bl, br], [c, br, tr], [c, tr, tl], [c, tl, bl]];
            for (dir, tri) in all.into_iter().enumerate() {
                if keep[dir] {
                    tris.push(tri);
                }
            }
        }
    }
    tris
}

struct RawQubit {
    nodes: Vec<Node>,
    boundaries: Vec<Color>,
    position: [f64; 2],
}

fn sort_key(p: [f64; 2]) -> (i64, i64) {
    ((p[1] * 1000.0).round() as i64, (p[0] * 1000.0).round() as i64)
}

fn push_out(from: [f64; 2], away: [f64; 2], dist: f64) -> [f64; 2] {
    let dx = from[0] - away[0];
    let dy = from[1] - away[1];
    let norm = (dx * dx + dy * dy).sqrt().max(1e-12);
    [from[0] + dist * dx / norm, from[1] + dist * dy / norm]
}

/// Builds the distance-`d` lattice.
pub fn build_lattice(d: usize) -> Result<CodeLattice> {
    if d < 3 || d.is_multiple_of(2) {
        return Err(Error::InvalidDistance(d));
    }
    let k = ((d - 1) / 2) as i32;
    let tris = region(k);

    let mut edge_count: BTreeMap<(Node, Node), usize> = BTreeMap::new();
    let mut edge_opposite: BTreeMap<(Node, Node), Node> = BTreeMap::new();
    for t in &tris {
        for (a, b, o) in [(t[0], t[1], t[2]), (t[1], t[2], t[0]), (t[0], t[2], t[1])] {
            let e = if a < b { (a, b) } else { (b, a) };
            *edge_count.entry(e).or_insert(0) += 1;
            edge_opposite.insert(e, o);
        }
    }
    let rim: Vec<(Node, Node)> = edge_count
        .iter()
        .filter(|&(_, &c)| c == 1)
        .map(|(&e, _)| e)
        .collect();

    let all_nodes: Vec<[f64; 2]> = tris.iter().flatten().map(|&n| node_position(n)).collect();
    let centroid = [
        all_nodes.iter().map(|p| p[0]).sum::<f64>() / all_nodes.len() as f64,
        all_nodes.iter().map(|p| p[1]).sum::<f64>() / all_nodes.len() as f64,
    ];

    let mut raw: Vec<RawQubit> = Vec::new();
    for t in &tris {
        let ps: Vec<[f64; 2]> = t.iter().map(|&n| node_position(n)).collect();
        raw.push(RawQubit {
            nodes: t.to_vec(),
            boundaries: Vec::new(),
            position: [
                (ps[0][0] + ps[1][0] + ps[2][0]) / 3.0,
                (ps[0][1] + ps[1][1] + ps[2][1]) / 3.0,
            ],
        });
    }
    let mut rim_colors: BTreeMap<Node, BTreeSet<Color>> = BTreeMap::new();
    let mut rim_degree: BTreeMap<Node, usize> = BTreeMap::new();
    for &(a, b) in &rim {
        let missing = Color::third(node_color(a), node_color(b));
        for v in [a, b] {
            rim_colors.entry(v).or_default().insert(missing);
            *rim_degree.entry(v).or_insert(0) += 1;
        }
        let pa = node_position(a);
        let pb = node_position(b);
        let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        let opp = node_position(edge_opposite[&(a, b)]);
        raw.push(RawQubit {
            nodes: vec![a, b],
            boundaries: vec![missing],
            position: push_out(mid, opp, 0.25),
        });
    }
    // Corners have exactly two rim edges of different missing colors. Nodes
    // where a staircase step meets a zigzag tip have four rim edges and get no
    // corner qubit.
    for (&v, colors) in &rim_colors {
        if colors.len() == 2 && rim_degree[&v] == 2 {
            raw.push(RawQubit {
                nodes: vec![v],
                boundaries: colors.iter().copied().collect(),
                position: push_out(node_position(v), centroid, 0.35),
            });
        }
    }
    raw.sort_by_key(|q| sort_key(q.position));

    let mut node_set: BTreeSet<Node> = BTreeSet::new();
    for q in &raw {
        node_set.extend(q.nodes.iter().copied());
    }
    let mut nodes: Vec<Node> = node_set.into_iter().collect();
    nodes.sort_by_key(|&n| sort_key(node_position(n)));
    let face_of: BTreeMap<Node, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();

    let mut faces: Vec<Face> = nodes
        .iter()
        .map(|&n| Face {
            color: node_color(n),
            position: node_position(n),
            support: Vec::new(),
        })
        .collect();
    let mut qubits: Vec<Qubit> = Vec::with_capacity(raw.len());
    for (qi, rq) in raw.iter().enumerate() {
        let mut fs: Vec<usize> = rq.nodes.iter().map(|n| face_of[n]).collect();
        fs.sort_unstable();
        for &f in &fs {
            faces[f].support.push(qi);
        }
        qubits.push(Qubit {
            position: rq.position,
            faces: fs,
            boundaries: rq.boundaries.clone(),
        });
    }
    for face in &mut faces {
        let c = face.position;
        face.support.sort_by(|&a, &b| {
            let pa = qubits[a].position;
            let pb = qubits[b].position;
            let ta = (pa[1] - c[1]).atan2(pa[0] - c[0]);
            let tb = (pb[1] - c[1]).atan2(pb[0] - c[0]);
            ta.total_cmp(&tb)
        });
    }

    let corners: Vec<usize> = (0..qubits.len())
        .filter(|&q| qubits[q].kind() == QubitKind::Corner)
        .collect();
    let mut boundaries = Vec::new();
    for color in Color::ALL {
        let ends: Vec<usize> = corners
            .iter()
            .copied()
            .filter(|&q| qubits[q].boundaries.contains(&color))
            .collect();
        let mut members: Vec<usize> = (0..qubits.len())
            .filter(|&q| qubits[q].boundaries.contains(&color))
            .collect();
        if ends.len() == 2 {
            let a = qubits[ends[0]].position;
            let b = qubits[ends[1]].position;
            let dir = [b[0] - a[0], b[1] - a[1]];
            members.sort_by(|&x, &y| {
                let px = qubits[x].position;
                let py = qubits[y].position;
                let sx = (px[0] - a[0]) * dir[0] + (px[1] - a[1]) * dir[1];
                let sy = (py[0] - a[0]) * dir[0] + (py[1] - a[1]) * dir[1];
                sx.total_cmp(&sy)
            });
        }
        boundaries.push(Boundary { color, qubits: members });
    }

    // The base is the side with the lowest mean height.
    let mean_y = |b: &Boundary| {
        b.qubits.iter().map(|&q| qubits[q].position[1]).sum::<f64>() / b.qubits.len().max(1) as f64
    };
    let base = (0..3)
        .min_by(|&a, &b| mean_y(&boundaries[a]).total_cmp(&mean_y(&boundaries[b])))
        .unwrap_or(0);
    let base_color = boundaries[base].color;
    let mut logical: Vec<usize> = boundaries[base].qubits.clone();
    logical.sort_unstable();
    let apex = corners
        .iter()
        .copied()
        .find(|&q| !qubits[q].boundaries.contains(&base_color))
        .unwrap_or(0);

    Ok(CodeLattice {
        d,
        qubits,
        faces,
        boundaries,
        logical_x: logical.clone(),
        logical_z: logical,
        apex,
    })
}

/// Outcome of a single structural check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Result of [`validate`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &str, problems: Vec<String>) {
        let passed = problems.is_empty();
        let detail = if passed {
            "ok".to_string()
        } else {
            let mut shown: Vec<String> = problems.iter().take(5).cloned().collect();
            if problems.len() > 5 {
                shown.push(format!("... {} more", problems.len() - 5));
            }
            shown.join("; ")
        };
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    let set: BTreeSet<usize> = a.iter().copied().collect();
    b.iter().filter(|q| set.contains(q)).count()
}

/// Checks every structural invariant of the code family.
pub fn validate(lattice: &CodeLattice) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = lattice.qubits.len();
    let d = lattice.d;

    let expected_n = (d * d + 2 * d).saturating_sub(1) / 2;
    report.push(
        "qubit_count",
        if n == expected_n {
            vec![]
        } else {
            vec![format!("n = {n}, expected {expected_n}")]
        },
    );
    let expected_faces = n.saturating_sub(1) / 2;
    report.push(
        "face_count",
        if lattice.faces.len() == expected_faces {
            vec![]
        } else {
            vec![format!("{} faces, expected {expected_faces}", lattice.faces.len())]
        },
    );

    let mut problems = Vec::new();
    for (f, face) in lattice.faces.iter().enumerate() {
        if face.support.len() != 4 && face.support.len() != 8 {
            problems.push(format!("face {f} has weight {}", face.support.len()));
        }
    }
    report.push("face_weights", problems);

    let mut problems = Vec::new();
    for (q, qubit) in lattice.qubits.iter().enumerate() {
        let ok_shape = matches!(
            (qubit.faces.len(), qubit.boundaries.len()),
            (3, 0) | (2, 1) | (1, 2)
        );
        if !ok_shape {
            problems.push(format!(
                "qubit {q}: {} faces, {} boundaries",
                qubit.faces.len(),
                qubit.boundaries.len()
            ));
            continue;
        }
        for &f in &qubit.faces {
            if f >= lattice.faces.len() || !lattice.faces[f].support.contains(&q) {
                problems.push(format!("qubit {q} lists face {f} which does not contain it"));
            }
        }
    }
    for (f, face) in lattice.faces.iter().enumerate() {
        for &q in &face.support {
            if q >= n || !lattice.qubits[q].faces.contains(&f) {
                problems.push(format!("face {f} lists qubit {q} which does not list it"));
            }
        }
    }
    report.push("incidence", problems);

    let mut problems = Vec::new();
    for (q, qubit) in lattice.qubits.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for &f in &qubit.faces {
            if let Some(face) = lattice.faces.get(f) {
                if !seen.insert(face.color) {
                    problems.push(format!("qubit {q} touches two {} faces", face.color));
                }
            }
        }
        for &c in &qubit.boundaries {
            if !seen.insert(c) {
                problems.push(format!("qubit {q} has a {c} boundary next to a {c} face"));
            }
        }
    }
    report.push("three_colorability", problems);

    let mut problems = Vec::new();
    for f in 0..lattice.faces.len() {
        for g in f + 1..lattice.faces.len() {
            let k = overlap(&lattice.faces[f].support, &lattice.faces[g].support);
            if k != 0 && k != 2 {
                problems.push(format!("faces {f} and {g} share {k} qubits"));
            }
        }
    }
    report.push("overlap_parity", problems);

    let mut problems = Vec::new();
    let colors: BTreeSet<Color> = lattice.boundaries.iter().map(|b| b.color).collect();
    if lattice.boundaries.len() != 3 || colors.len() != 3 {
        problems.push("expected three boundaries of distinct colors".to_string());
    }
    for b in &lattice.boundaries {
        for &q in &b.qubits {
            let Some(qubit) = lattice.qubits.get(q) else {
                problems.push(format!("boundary {} lists unknown qubit {q}", b.color));
                continue;
            };
            for &f in &qubit.faces {
                if lattice.faces.get(f).map(|x| x.color) == Some(b.color) {
                    problems.push(format!("boundary {} is adjacent to {} face {f}", b.color, b.color));
                }
            }
        }
    }
    report.push("boundary_colors", problems);

    let mut problems = Vec::new();
    for (name, op) in [("logical_x", &lattice.logical_x), ("logical_z", &lattice.logical_z)] {
        let on_one = lattice
            .boundaries
            .iter()
            .any(|b| op.iter().all(|q| b.qubits.contains(q)));
        if !on_one {
            problems.push(format!("{name} does not lie on a single boundary"));
        }
    }
    report.push("logical_on_boundary", problems);

    let mut problems = Vec::new();
    for (name, op) in [("logical_x", &lattice.logical_x), ("logical_z", &lattice.logical_z)] {
        for (f, face) in lattice.faces.iter().enumerate() {
            if overlap(op, &face.support) % 2 == 1 {
                problems.push(format!("{name} has odd overlap with face {f}"));
            }
        }
    }
    report.push("logical_commutation", problems);

    let k = overlap(&lattice.logical_x, &lattice.logical_z);
    report.push(
        "logical_anticommutation",
        if k % 2 == 1 {
            vec![]
        } else {
            vec![format!("logical_x and logical_z overlap on {k} qubits")]
        },
    );
    report
}

/// Default qubit cap for [`brute_force_distance`].
pub const DISTANCE_SEARCH_CAP: usize = 31;

/// Minimum weight of an X-type logical operator, found by exhaustive search
/// in order of increasing weight.
pub fn brute_force_distance(lattice: &CodeLattice, cap: usize) -> Result<usize> {
    let n = lattice.qubits.len();
    if n > cap || n > 127 {
        return Err(Error::TooLarge { n, cap: cap.min(127) });
    }
    let mask = |qs: &[usize]| qs.iter().fold(0u128, |m, &q| m | (1u128 << q));
    let checks: Vec<u128> = lattice.faces.iter().map(|f| mask(&f.support)).collect();
    let lz = mask(&lattice.logical_z);
    let limit = 1u128 << n;
    for w in 1..=n {
        let mut x: u128 = (1u128 << w) - 1;
        while x < limit {
            if (x & lz).count_ones() % 2 == 1 && checks.iter().all(|&c| (x & c).count_ones().is_multiple_of(2)) {
                return Ok(w);
            }
            // Next integer with the same popcount.
            let c = x & x.wrapping_neg();
            let r = x + c;
            x = (((r ^ x) >> 2) / c) | r;
        }
    }
    Err(Error::ContractViolation("no logical operator found".into()))
}

impl CodeLattice {
    pub fn n(&self) -> usize {
        self.qubits.len()
    }

    pub fn boundary(&self, color: Color) -> &Boundary {
        &self.boundaries[color.index()]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lattice_counts() {
        for (d, n, f) in [(3, 7, 3), (5, 17, 8), (7, 31, 15)] {
            let lat = build_lattice(d).unwrap();
            assert_eq!(lat.n(), n);
            assert_eq!(lat.faces.len(), f);
        }
    }

    #[test]
    fn rejects_bad_distance() {
        for d in [0, 1, 2, 4, 8] {
            assert!(build_lattice(d).is_err());
        }
    }

    #[test]
    fn validates_for_range() {
        for d in (3..=21).step_by(2) {
            let lat = build_lattice(d).unwrap();
            let report = validate(&lat);
            assert!(report.all_passed(), "d={d}: {:?}", report.failures());
        }
    }

    #[test]
    fn steane_structure() {
        let lat = build_lattice(3).unwrap();
        assert!(lat.faces.iter().all(|f| f.support.len() == 4));
        let kinds: Vec<QubitKind> = lat.qubits.iter().map(|q| q.kind()).collect();
        assert_eq!(kinds.iter().filter(|&&k| k == QubitKind::Interior).count(), 1);
        assert_eq!(kinds.iter().filter(|&&k| k == QubitKind::Corner).count(), 3);
        assert_eq!(lat.qubits[lat.apex].kind(), QubitKind::Corner);
    }

    #[test]
    fn boundary_chains_have_length_d() {
        for d in [3, 5, 7, 9] {
            let lat = build_lattice(d).unwrap();
            for b in &lat.boundaries {
                assert_eq!(b.qubits.len(), d);
            }
            assert_eq!(lat.logical_x.len(), d);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(build_lattice(9).unwrap(), build_lattice(9).unwrap());
    }

    #[test]
    fn recolored_face_breaks_three_colorability() {
        let mut lat = build_lattice(5).unwrap();
        let q = *lat.faces[0].support.iter().find(|&&q| lat.qubits[q].faces.len() > 1).unwrap();
        let other = *lat.qubits[q].faces.iter().find(|&&f| f != 0).unwrap();
        lat.faces[0].color = lat.faces[other].color;
        let report = validate(&lat);
        assert!(!report.check("three_colorability").unwrap().passed);
    }

    #[test]
    fn truncated_logical_breaks_anticommutation() {
        let mut lat = build_lattice(5).unwrap();
        lat.logical_x.pop();
        let report = validate(&lat);
        assert!(!report.check("logical_anticommutation").unwrap().passed);
    }

    #[test]
    fn distances() {
        assert_eq!(brute_force_distance(&build_lattice(3).unwrap(), DISTANCE_SEARCH_CAP).unwrap(), 3);
        assert_eq!(brute_force_distance(&build_lattice(5).unwrap(), DISTANCE_SEARCH_CAP).unwrap(), 5);
        assert!(brute_force_distance(&build_lattice(9).unwrap(), DISTANCE_SEARCH_CAP).is_err());
    }

    #[test]
    fn json_round_trip() {
        let lat = build_lattice(5).unwrap();
        let back: CodeLattice = serde_json::from_str(&lat.to_json().unwrap()).unwrap();
        assert_eq!(back, lat);
    }
}
