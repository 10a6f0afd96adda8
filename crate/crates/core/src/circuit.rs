//! Gate-level circuit IR, the benchmark family generators, and the
//! line-oriented text format used for dumps and golden files.
//!
//! Qubit 0 is the least significant bit everywhere in this crate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CutError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Rx,
    Ry,
    Rz,
    CP,
    CX,
    CZ,
    Swap,
    MeasureZ,
    PrepState,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::CP | GateKind::CX | GateKind::CZ | GateKind::Swap => 2,
            _ => 1,
        }
    }

    pub fn is_parameterized(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::CP)
    }

    pub fn is_unitary(self) -> bool {
        !matches!(self, GateKind::MeasureZ | GateKind::PrepState)
    }

    pub fn label(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::S => "S",
            GateKind::Sdg => "SDG",
            GateKind::T => "T",
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::CP => "CP",
            GateKind::CX => "CX",
            GateKind::CZ => "CZ",
            GateKind::Swap => "SWAP",
            GateKind::MeasureZ => "MEASURE",
            GateKind::PrepState => "PREP",
        }
    }
}

impl FromStr for GateKind {
    type Err = CutError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "H" => GateKind::H,
            "X" => GateKind::X,
            "Y" => GateKind::Y,
            "Z" => GateKind::Z,
            "S" => GateKind::S,
            "SDG" => GateKind::Sdg,
            "T" => GateKind::T,
            "RX" => GateKind::Rx,
            "RY" => GateKind::Ry,
            "RZ" => GateKind::Rz,
            "CP" => GateKind::CP,
            "CX" => GateKind::CX,
            "CZ" => GateKind::CZ,
            "SWAP" => GateKind::Swap,
            "MEASURE" | "MEASUREZ" => GateKind::MeasureZ,
            "PREP" | "PREPSTATE" => GateKind::PrepState,
            other => return Err(CutError::InvalidGate(format!("unknown gate kind {other:?}"))),
        })
    }
}

/// Single-qubit states a `PrepState` gate can initialize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrepState {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl PrepState {
    pub fn label(self) -> &'static str {
        match self {
            PrepState::Zero => "ZERO",
            PrepState::One => "ONE",
            PrepState::Plus => "PLUS",
            PrepState::Minus => "MINUS",
            PrepState::PlusI => "PLUSI",
            PrepState::MinusI => "MINUSI",
        }
    }
}

impl FromStr for PrepState {
    type Err = CutError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "ZERO" | "0" => PrepState::Zero,
            "ONE" | "1" => PrepState::One,
            "PLUS" | "+" => PrepState::Plus,
            "MINUS" | "-" => PrepState::Minus,
            "PLUSI" | "+I" => PrepState::PlusI,
            "MINUSI" | "-I" => PrepState::MinusI,
            other => return Err(CutError::InvalidGate(format!("unknown prep state {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    qubits: [usize; 2],
    pub angle: Option<f64>,
    pub prep: Option<PrepState>,
}

impl Gate {
    /// Builds a gate, checking arity, distinct qubits, and that `angle` /
    /// `prep` are present exactly when the kind needs them.
    pub fn new(
        kind: GateKind,
        qubits: &[usize],
        angle: Option<f64>,
        prep: Option<PrepState>,
    ) -> Result<Self> {
        if qubits.len() != kind.arity() {
            return Err(CutError::InvalidGate(format!(
                "{} takes {} qubit(s), got {}",
                kind.label(),
                kind.arity(),
                qubits.len()
            )));
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(CutError::InvalidGate(format!(
                "{} on repeated qubit {}",
                kind.label(),
                qubits[0]
            )));
        }
        if kind.is_parameterized() != angle.is_some() {
            return Err(CutError::InvalidGate(format!("{} angle mismatch", kind.label())));
        }
        if (kind == GateKind::PrepState) != prep.is_some() {
            return Err(CutError::InvalidGate(format!("{} prep mismatch", kind.label())));
        }
        let mut q = [0; 2];
        q[..qubits.len()].copy_from_slice(qubits);
        Ok(Gate { kind, qubits: q, angle, prep })
    }

    fn one(kind: GateKind, q: usize) -> Self {
        Gate { kind, qubits: [q, 0], angle: None, prep: None }
    }

    fn two(kind: GateKind, a: usize, b: usize, angle: Option<f64>) -> Self {
        assert_ne!(a, b, "two-qubit gate on a repeated qubit");
        Gate { kind, qubits: [a, b], angle, prep: None }
    }

    pub fn h(q: usize) -> Self {
        Self::one(GateKind::H, q)
    }
    pub fn x(q: usize) -> Self {
        Self::one(GateKind::X, q)
    }
    pub fn y(q: usize) -> Self {
        Self::one(GateKind::Y, q)
    }
    pub fn z(q: usize) -> Self {
        Self::one(GateKind::Z, q)
    }
    pub fn s(q: usize) -> Self {
        Self::one(GateKind::S, q)
    }
    pub fn sdg(q: usize) -> Self {
        Self::one(GateKind::Sdg, q)
    }
    pub fn t(q: usize) -> Self {
        Self::one(GateKind::T, q)
    }
    pub fn rx(q: usize, theta: f64) -> Self {
        Gate { angle: Some(theta), ..Self::one(GateKind::Rx, q) }
    }
    pub fn ry(q: usize, theta: f64) -> Self {
        Gate { angle: Some(theta), ..Self::one(GateKind::Ry, q) }
    }
    pub fn rz(q: usize, theta: f64) -> Self {
        Gate { angle: Some(theta), ..Self::one(GateKind::Rz, q) }
    }
    pub fn cp(a: usize, b: usize, theta: f64) -> Self {
        Self::two(GateKind::CP, a, b, Some(theta))
    }
    pub fn cx(control: usize, target: usize) -> Self {
        Self::two(GateKind::CX, control, target, None)
    }
    pub fn cz(a: usize, b: usize) -> Self {
        Self::two(GateKind::CZ, a, b, None)
    }
    pub fn swap(a: usize, b: usize) -> Self {
        Self::two(GateKind::Swap, a, b, None)
    }
    pub fn measure(q: usize) -> Self {
        Self::one(GateKind::MeasureZ, q)
    }
    pub fn prep(q: usize, state: PrepState) -> Self {
        Gate { prep: Some(state), ..Self::one(GateKind::PrepState, q) }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn is_two_qubit(&self) -> bool {
        self.kind.arity() == 2
    }

    pub fn acts_on(&self, q: usize) -> bool {
        self.qubits().contains(&q)
    }

    /// Same gate with its qubits relabelled through `map`.
    pub fn remapped(&self, map: impl Fn(usize) -> usize) -> Self {
        let mut g = *self;
        for i in 0..self.kind.arity() {
            g.qubits[i] = map(self.qubits[i]);
        }
        g
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.label())?;
        for q in self.qubits() {
            write!(f, " {q}")?;
        }
        if let Some(theta) = self.angle {
            write!(f, " {theta}")?;
        }
        if let Some(p) = self.prep {
            write!(f, " {}", p.label())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub name: String,
}

impl Circuit {
    pub fn new(n_qubits: usize, name: impl Into<String>) -> Self {
        Circuit { n_qubits, gates: Vec::new(), name: name.into() }
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        for &q in gate.qubits() {
            if q >= self.n_qubits {
                return Err(CutError::QubitOutOfRange {
                    gate: self.gates.len(),
                    qubit: q,
                    n_qubits: self.n_qubits,
                });
            }
        }
        self.gates.push(gate);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(CutError::InvalidWidth { width: 0, reason: "circuit needs at least one qubit" });
        }
        for (i, g) in self.gates.iter().enumerate() {
            for &q in g.qubits() {
                if q >= self.n_qubits {
                    return Err(CutError::QubitOutOfRange { gate: i, qubit: q, n_qubits: self.n_qubits });
                }
            }
        }
        Ok(())
    }

    pub fn has_measurements(&self) -> bool {
        self.gates.iter().any(|g| g.kind == GateKind::MeasureZ)
    }

    pub fn two_qubit_gate_indices(&self) -> Vec<usize> {
        self.gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_two_qubit())
            .map(|(i, _)| i)
            .collect()
    }

    /// Appends a terminal `MeasureZ` on every qubit.
    pub fn measure_all(&mut self) {
        for q in 0..self.n_qubits {
            self.gates.push(Gate::measure(q));
        }
    }

    /// Renders the circuit in the line-oriented text format.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        text.parse()
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qubits {}", self.n_qubits)?;
        if !self.name.is_empty() {
            writeln!(f, "# name: {}", self.name)?;
        }
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Circuit {
    type Err = CutError;

    fn from_str(text: &str) -> Result<Self> {
        let mut circuit: Option<Circuit> = None;
        let mut name = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(n) = comment.trim().strip_prefix("name:") {
                    name = n.trim().to_string();
                }
                continue;
            }
            let perr = |message: String| CutError::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some(c) = circuit.as_mut() else {
                match fields.as_slice() {
                    ["qubits", n] => {
                        let n: usize = n.parse().map_err(|_| perr(format!("bad qubit count {n:?}")))?;
                        if n == 0 {
                            return Err(perr("qubit count must be positive".into()));
                        }
                        circuit = Some(Circuit::new(n, ""));
                        continue;
                    }
                    _ => return Err(perr("expected header `qubits N`".into())),
                }
            };
            let kind: GateKind = fields[0].parse().map_err(|e: CutError| perr(e.to_string()))?;
            let arity = kind.arity();
            if fields.len() < 1 + arity {
                return Err(perr(format!("{} needs {arity} qubit(s)", kind.label())));
            }
            let mut qubits = Vec::with_capacity(arity);
            for f in &fields[1..1 + arity] {
                qubits.push(f.parse::<usize>().map_err(|_| perr(format!("bad qubit index {f:?}")))?);
            }
            let rest = &fields[1 + arity..];
            let (angle, prep) = match (kind.is_parameterized(), kind == GateKind::PrepState, rest) {
                (true, _, [a]) => {
                    (Some(a.parse::<f64>().map_err(|_| perr(format!("bad angle {a:?}")))?), None)
                }
                (false, true, [p]) => (None, Some(p.parse().map_err(|e: CutError| perr(e.to_string()))?)),
                (false, false, []) => (None, None),
                _ => return Err(perr(format!("unexpected arguments for {}", kind.label()))),
            };
            let gate = Gate::new(kind, &qubits, angle, prep).map_err(|e| perr(e.to_string()))?;
            c.push(gate).map_err(|e| perr(e.to_string()))?;
        }
        let mut c = circuit.ok_or(CutError::Parse { line: 0, message: "empty circuit text".into() })?;
        c.name = name;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionEdge {
    pub a: usize,
    pub b: usize,
    /// Positions of the two-qubit gates on this pair, ascending.
    pub gate_indices: Vec<usize>,
}

impl InteractionEdge {
    pub fn multiplicity(&self) -> usize {
        self.gate_indices.len()
    }
}

/// Qubit interaction structure of a circuit: one edge per qubit pair that
/// shares at least one two-qubit gate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    pub n_qubits: usize,
    pub edges: Vec<InteractionEdge>,
}

impl InteractionGraph {
    pub fn vertices(&self) -> std::ops::Range<usize> {
        0..self.n_qubits
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&InteractionEdge> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.a == a && e.b == b)
    }

    /// Symmetric matrix of two-qubit gate counts per qubit pair.
    pub fn weight_matrix(&self) -> Vec<Vec<usize>> {
        let mut w = vec![vec![0; self.n_qubits]; self.n_qubits];
        for e in &self.edges {
            w[e.a][e.b] += e.multiplicity();
            w[e.b][e.a] += e.multiplicity();
        }
        w
    }
}

pub fn interaction_graph(c: &Circuit) -> InteractionGraph {
    let mut edges: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    for (i, g) in c.gates.iter().enumerate() {
        if g.is_two_qubit() {
            let q = g.qubits();
            let key = (q[0].min(q[1]), q[0].max(q[1]));
            edges.entry(key).or_default().push(i);
        }
    }
    InteractionGraph {
        n_qubits: c.n_qubits,
        edges: edges
            .into_iter()
            .map(|((a, b), gate_indices)| InteractionEdge { a, b, gate_indices })
            .collect(),
    }
}

/// Removes every terminal `MeasureZ` (one with no later gate on its qubit).
/// Mid-circuit measure-and-prepare pairs are left alone.
pub fn strip_measurements(c: &Circuit) -> Circuit {
    let mut seen_later = vec![false; c.n_qubits];
    let mut keep = vec![true; c.gates.len()];
    for (i, g) in c.gates.iter().enumerate().rev() {
        if g.kind == GateKind::MeasureZ && !seen_later[g.qubits()[0]] {
            keep[i] = false;
            continue;
        }
        for &q in g.qubits() {
            seen_later[q] = true;
        }
    }
    Circuit {
        n_qubits: c.n_qubits,
        gates: c.gates.iter().zip(keep).filter(|(_, k)| *k).map(|(g, _)| *g).collect(),
        name: c.name.clone(),
    }
}

pub fn ghz_circuit(n: usize) -> Result<Circuit> {
    if n < 2 {
        return Err(CutError::InvalidWidth { width: n, reason: "GHZ needs at least 2 qubits" });
    }
    let mut c = Circuit::new(n, format!("ghz_{n}"));
    c.gates.push(Gate::h(0));
    for i in 0..n - 1 {
        c.gates.push(Gate::cx(i, i + 1));
    }
    Ok(c)
}

/// Textbook QFT: Hadamard and controlled-phase ladder per qubit, then the
/// SWAP network that reverses qubit order. SWAPs stay explicit gates.
pub fn qft_circuit(n: usize) -> Result<Circuit> {
    if n < 1 {
        return Err(CutError::InvalidWidth { width: n, reason: "QFT needs at least 1 qubit" });
    }
    let mut c = Circuit::new(n, format!("qft_{n}"));
    for k in 0..n {
        c.gates.push(Gate::h(k));
        for j in k + 1..n {
            c.gates.push(Gate::cp(j, k, PI / 2f64.powi((j - k) as i32)));
        }
    }
    for i in 0..n / 2 {
        c.gates.push(Gate::swap(i, n - 1 - i));
    }
    Ok(c)
}

/// Qubit pairs entangled in layer `layer` of a brickwork pattern.
pub fn brick_pairs(n: usize, layer: usize) -> impl Iterator<Item = (usize, usize)> {
    let start = layer % 2;
    (start..n.saturating_sub(1)).step_by(2).map(|a| (a, a + 1))
}

fn check_layered(n: usize, depth: usize) -> Result<()> {
    if n < 2 {
        return Err(CutError::InvalidWidth { width: n, reason: "layered families need at least 2 qubits" });
    }
    if depth < 1 {
        return Err(CutError::InvalidArgument("depth must be at least 1".into()));
    }
    Ok(())
}

/// Brickwork circuit: every layer applies Rz·Ry·Rz with seeded angles to each
/// qubit, then CZ on the even (even layers) or odd (odd layers) pairs.
///
/// Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, drawing the three
/// angles of qubit 0, then qubit 1, and so on, layer by layer.
pub fn brickwork_circuit(n: usize, depth: usize, seed: u64) -> Result<Circuit> {
    check_layered(n, depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new(n, format!("brickwork_{n}_d{depth}_s{seed}"));
    for layer in 0..depth {
        for q in 0..n {
            let (a, b, d): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            c.gates.push(Gate::rz(q, 2.0 * PI * a));
            c.gates.push(Gate::ry(q, 2.0 * PI * b));
            c.gates.push(Gate::rz(q, 2.0 * PI * d));
        }
        for (a, b) in brick_pairs(n, layer) {
            c.gates.push(Gate::cz(a, b));
        }
    }
    Ok(c)
}

/// Random nearest-neighbour circuit: per layer one gate per qubit drawn from
/// {H, S, T, Rx, Ry, Rz} (angles uniform in [0, 2π)), then CX or CZ on the
/// brickwork pairs of that layer. CX controls sit on the lower index.
pub fn random_circuit(n: usize, depth: usize, seed: u64) -> Result<Circuit> {
    check_layered(n, depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new(n, format!("random_{n}_d{depth}_s{seed}"));
    for layer in 0..depth {
        for q in 0..n {
            let choice = rng.random_range(0..6u32);
            let gate = match choice {
                0 => Gate::h(q),
                1 => Gate::s(q),
                2 => Gate::t(q),
                k => {
                    let theta = 2.0 * PI * rng.random::<f64>();
                    match k {
                        3 => Gate::rx(q, theta),
                        4 => Gate::ry(q, theta),
                        _ => Gate::rz(q, theta),
                    }
                }
            };
            c.gates.push(gate);
        }
        for (a, b) in brick_pairs(n, layer) {
            let gate = if rng.random::<bool>() { Gate::cx(a, b) } else { Gate::cz(a, b) };
            c.gates.push(gate);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_of_layer(c: &Circuit, n: usize, layer: usize) -> Vec<(usize, usize)> {
        // 3n rotations then the layer's CZs
        let mut out = vec![];
        let mut idx = 0;
        for l in 0..=layer {
            idx += 3 * n;
            let count = brick_pairs(n, l).count();
            if l == layer {
                for g in &c.gates[idx..idx + count] {
                    out.push((g.qubits()[0], g.qubits()[1]));
                }
            }
            idx += count;
        }
        out
    }

    #[test]
    fn ghz_structure() {
        let c = ghz_circuit(3).unwrap();
        assert_eq!(c.gates, vec![Gate::h(0), Gate::cx(0, 1), Gate::cx(1, 2)]);
        let c = ghz_circuit(2).unwrap();
        assert_eq!(c.gates, vec![Gate::h(0), Gate::cx(0, 1)]);
        assert!(matches!(ghz_circuit(1), Err(CutError::InvalidWidth { .. })));
    }

    #[test]
    fn qft_structure() {
        assert_eq!(qft_circuit(1).unwrap().gates, vec![Gate::h(0)]);
        assert_eq!(
            qft_circuit(2).unwrap().gates,
            vec![Gate::h(0), Gate::cp(1, 0, PI / 2.0), Gate::h(1), Gate::swap(0, 1)]
        );
        assert!(qft_circuit(0).is_err());
    }

    #[test]
    fn brickwork_pairings() {
        let c = brickwork_circuit(4, 1, 99).unwrap();
        assert_eq!(pairs_of_layer(&c, 4, 0), vec![(0, 1), (2, 3)]);
        let c = brickwork_circuit(5, 2, 3).unwrap();
        assert_eq!(pairs_of_layer(&c, 5, 1), vec![(1, 2), (3, 4)]);
        assert_eq!(brickwork_circuit(5, 2, 3).unwrap(), c);
        assert_ne!(brickwork_circuit(5, 2, 4).unwrap().gates, c.gates);
    }

    #[test]
    fn random_is_nearest_neighbour_and_deterministic() {
        let c = random_circuit(7, 7, 42).unwrap();
        assert_eq!(c, random_circuit(7, 7, 42).unwrap());
        for g in c.gates.iter().filter(|g| g.is_two_qubit()) {
            let q = g.qubits();
            assert_eq!(q[0].abs_diff(q[1]), 1);
            assert!(matches!(g.kind, GateKind::CX | GateKind::CZ));
        }
        assert!(random_circuit(1, 3, 0).is_err());
        assert!(random_circuit(3, 0, 0).is_err());
    }

    #[test]
    fn strip_terminal_measurements_only() {
        let mut c = ghz_circuit(3).unwrap();
        let bare = c.clone();
        c.measure_all();
        assert_eq!(strip_measurements(&c), bare);
        assert_eq!(strip_measurements(&bare), bare);

        let mut mid = Circuit::new(2, "mid");
        mid.push(Gate::h(0)).unwrap();
        mid.push(Gate::measure(0)).unwrap();
        mid.push(Gate::prep(0, PrepState::Plus)).unwrap();
        mid.push(Gate::cx(0, 1)).unwrap();
        let mut measured = mid.clone();
        measured.measure_all();
        assert_eq!(strip_measurements(&measured), mid);
    }

    #[test]
    fn interaction_graph_edges() {
        let g = interaction_graph(&ghz_circuit(4).unwrap());
        let pairs: Vec<_> = g.edges.iter().map(|e| (e.a, e.b, e.gate_indices.clone())).collect();
        assert_eq!(pairs, vec![(0, 1, vec![1]), (1, 2, vec![2]), (2, 3, vec![3])]);

        let mut c = Circuit::new(3, "");
        c.push(Gate::h(0)).unwrap().push(Gate::t(2)).unwrap();
        assert!(interaction_graph(&c).edges.is_empty());

        // H0, CP(1,0), CP(2,0), H1, CP(2,1), H2, SWAP(0,2)
        let g = interaction_graph(&qft_circuit(3).unwrap());
        assert_eq!(g.edge(0, 1).unwrap().gate_indices, vec![1]);
        assert_eq!(g.edge(0, 2).unwrap().gate_indices, vec![2, 6]);
        assert_eq!(g.edge(1, 2).unwrap().gate_indices, vec![4]);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let mut c = random_circuit(4, 3, 5).unwrap();
        c.push(Gate::prep(2, PrepState::MinusI)).unwrap();
        c.measure_all();
        let text = c.to_text();
        assert!(text.starts_with("qubits 4\n"));
        assert_eq!(Circuit::from_text(&text).unwrap(), c);

        let err = Circuit::from_text("qubits 2\nH 0\nCX 0 5\n").unwrap_err();
        assert!(matches!(err, CutError::Parse { line: 3, .. }), "{err}");
        assert!(Circuit::from_text("H 0\n").is_err());
        assert!(Circuit::from_text("qubits 2\nRZ 0\n").is_err());
        assert!(Circuit::from_text("qubits 2\nCX 1 1\n").is_err());
    }

    #[test]
    fn gate_constructor_checks() {
        assert!(Gate::new(GateKind::Rx, &[0], None, None).is_err());
        assert!(Gate::new(GateKind::H, &[0], Some(1.0), None).is_err());
        assert!(Gate::new(GateKind::CX, &[0], None, None).is_err());
        assert!(Gate::new(GateKind::PrepState, &[0], None, Some(PrepState::One)).is_ok());
    }
}
