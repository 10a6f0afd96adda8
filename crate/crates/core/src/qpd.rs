//! Quasi-probability decompositions for gate and wire cuts, subexperiment
//! generation and classical reconstruction.
//!
//! A basis term is a pair of single-qubit fragments, one per cut endpoint,
//! written on placeholder qubit 0. Fragments may contain `MeasureZ`; every
//! fragment measurement is *signed*: its outcome contributes a factor
//! `(-1)^b` to the estimator, and the measured qubit carries on in the
//! collapsed state.
//!
//! Gate-cut bases:
//!
//! * `CZ = ½[S⊗S] + ½[S†⊗S†] + ½[M⊗I] − ½[M⊗Z] + ½[I⊗M] − ½[Z⊗M]`, one-norm 3.
//! * `CX` conjugates the target side of the CZ basis with H.
//! * `CP(θ)` factors as `Rz(θ/2)⊗Rz(θ/2) · exp(iθ/4 Z⊗Z)` up to phase and
//!   decomposes the `ZZ` rotation the same way, one-norm `1 + 2|sin(θ/2)|`.
//! * `SWAP` is cut as its three-CX expansion (216 terms, one-norm 27).
//!
//! The wire cut uses `ρ = ½ Σ_P Tr(Pρ) P` with each Pauli split into
//! eigenstate preparations: 8 terms, one-norm 4.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind, PrepState};
use crate::error::{CutError, Result};
use crate::observables::{basis_rotation, measurement_settings, Observable, Pauli, PauliString};
use crate::simulator::{exact_distribution, measurement_bits, Distribution, ParitySource};

/// Per-cut sampling-overhead base for a gate cut (one-norm 3, squared).
pub const GATE_CUT_BASE: f64 = 9.0;
/// Per-cut sampling-overhead base for a wire cut (one-norm 4, squared).
pub const WIRE_CUT_BASE: f64 = 16.0;
/// Exact mode refuses to enumerate more term combinations than this.
pub const MAX_EXACT_COMBINATIONS: usize = 1 << 20;
/// Attached to subexperiment sets containing wire cuts: the O(4^n) wire-cut
/// scaling can mean the one-norm (4 per cut) or the sampling cost (16 per
/// cut). Budgets use the latter.
pub const WIRE_SCALING_NOTE: &str =
    "wire cuts scale as O(4^n): one-norm 4^n, sampling overhead 16^n (the value used for budgets)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CutLocation {
    /// Cut the two-qubit gate at this index.
    GateCut(usize),
    /// Sever `qubit`'s wire right after gate `after_gate`.
    WireCut { qubit: usize, after_gate: usize },
}

impl CutLocation {
    pub fn is_gate_cut(&self) -> bool {
        matches!(self, CutLocation::GateCut(_))
    }

    pub fn overhead_base(&self) -> f64 {
        match self {
            CutLocation::GateCut(_) => GATE_CUT_BASE,
            CutLocation::WireCut { .. } => WIRE_CUT_BASE,
        }
    }
}

impl fmt::Display for CutLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutLocation::GateCut(i) => write!(f, "gate:{i}"),
            CutLocation::WireCut { qubit, after_gate } => write!(f, "wire:q{qubit}@{after_gate}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpdTerm {
    pub coefficient: f64,
    /// Fragment on the first endpoint (gate qubit 0, or the severed wire).
    pub left_ops: Vec<Gate>,
    /// Fragment on the second endpoint (gate qubit 1, or the fresh wire).
    pub right_ops: Vec<Gate>,
}

impl QpdTerm {
    fn new(coefficient: f64, left_ops: Vec<Gate>, right_ops: Vec<Gate>) -> Self {
        QpdTerm { coefficient, left_ops, right_ops }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpdBasis {
    pub terms: Vec<QpdTerm>,
    pub one_norm: f64,
}

impl QpdBasis {
    pub fn new(terms: Vec<QpdTerm>) -> Self {
        let one_norm = terms.iter().map(|t| t.coefficient.abs()).sum();
        QpdBasis { terms, one_norm }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sampling distribution `|c_j| / one_norm`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient.abs() / self.one_norm).collect()
    }
}

fn cz_basis() -> QpdBasis {
    let (s, sdg, z, m) = (Gate::s(0), Gate::sdg(0), Gate::z(0), Gate::measure(0));
    QpdBasis::new(vec![
        QpdTerm::new(0.5, vec![s], vec![s]),
        QpdTerm::new(0.5, vec![sdg], vec![sdg]),
        QpdTerm::new(0.5, vec![m], vec![]),
        QpdTerm::new(-0.5, vec![m], vec![z]),
        QpdTerm::new(0.5, vec![], vec![m]),
        QpdTerm::new(-0.5, vec![z], vec![m]),
    ])
}

fn cx_basis() -> QpdBasis {
    let h = Gate::h(0);
    let terms = cz_basis()
        .terms
        .into_iter()
        .map(|t| {
            let mut right = vec![h];
            right.extend(t.right_ops);
            right.push(h);
            QpdTerm::new(t.coefficient, t.left_ops, right)
        })
        .collect();
    QpdBasis::new(terms)
}

fn cp_basis(theta: f64) -> QpdBasis {
    let phi = -theta / 4.0;
    let (s, c) = phi.sin_cos();
    let rz = Gate::rz(0, theta / 2.0);
    let (sg, sdg, z, m) = (Gate::s(0), Gate::sdg(0), Gate::z(0), Gate::measure(0));
    QpdBasis::new(vec![
        QpdTerm::new(c * c, vec![rz], vec![rz]),
        QpdTerm::new(s * s, vec![z, rz], vec![z, rz]),
        QpdTerm::new(c * s, vec![m, rz], vec![sg, rz]),
        QpdTerm::new(-c * s, vec![m, rz], vec![sdg, rz]),
        QpdTerm::new(c * s, vec![sg, rz], vec![m, rz]),
        QpdTerm::new(-c * s, vec![sdg, rz], vec![m, rz]),
    ])
}

/// SWAP(a, b) = CX(a, b)·CX(b, a)·CX(a, b), each CX cut separately.
fn swap_basis() -> QpdBasis {
    let cx = cx_basis();
    let mut terms = Vec::with_capacity(216);
    for t1 in &cx.terms {
        for t2 in &cx.terms {
            for t3 in &cx.terms {
                let left = [&t1.left_ops[..], &t2.right_ops, &t3.left_ops].concat();
                let right = [&t1.right_ops[..], &t2.left_ops, &t3.right_ops].concat();
                terms.push(QpdTerm::new(t1.coefficient * t2.coefficient * t3.coefficient, left, right));
            }
        }
    }
    QpdBasis::new(terms)
}

/// Gate-cut basis for a non-parameterized two-qubit gate kind.
pub fn gate_cut_basis(kind: GateKind) -> Result<QpdBasis> {
    match kind {
        GateKind::CZ => Ok(cz_basis()),
        GateKind::CX => Ok(cx_basis()),
        GateKind::Swap => Ok(swap_basis()),
        other => Err(CutError::NoDecomposition(other.label().to_string())),
    }
}

/// Gate-cut basis for a concrete gate, including `CP(θ)`.
pub fn gate_basis(gate: &Gate) -> Result<QpdBasis> {
    match gate.kind {
        GateKind::CP => Ok(cp_basis(gate.angle.expect("validated angle"))),
        kind => gate_cut_basis(kind),
    }
}

pub fn wire_cut_basis() -> QpdBasis {
    let (h, sdg, m) = (Gate::h(0), Gate::sdg(0), Gate::measure(0));
    let prep = |s| vec![Gate::prep(0, s)];
    QpdBasis::new(vec![
        QpdTerm::new(0.5, vec![], prep(PrepState::Zero)),
        QpdTerm::new(0.5, vec![], prep(PrepState::One)),
        QpdTerm::new(0.5, vec![h, m], prep(PrepState::Plus)),
        QpdTerm::new(-0.5, vec![h, m], prep(PrepState::Minus)),
        QpdTerm::new(0.5, vec![sdg, h, m], prep(PrepState::PlusI)),
        QpdTerm::new(-0.5, vec![sdg, h, m], prep(PrepState::MinusI)),
        QpdTerm::new(0.5, vec![m], prep(PrepState::Zero)),
        QpdTerm::new(-0.5, vec![m], prep(PrepState::One)),
    ])
}

/// Budget overhead `Γ`: 9 per gate cut, 16 per wire cut, multiplied.
pub fn estimate_overhead(locations: &[CutLocation]) -> f64 {
    locations.iter().map(CutLocation::overhead_base).product()
}

/// Basis used at each location of `locations` in `c`.
pub fn bases_for(c: &Circuit, locations: &[CutLocation]) -> Result<Vec<QpdBasis>> {
    locations
        .iter()
        .map(|loc| match *loc {
            CutLocation::GateCut(i) => {
                let g = c.gates.get(i).ok_or_else(|| CutError::InvalidCut(format!("{loc}: no such gate")))?;
                if !g.is_two_qubit() {
                    return Err(CutError::InvalidCut(format!("{loc}: {} is not a two-qubit gate", g.kind.label())));
                }
                gate_basis(g)
            }
            CutLocation::WireCut { .. } => Ok(wire_cut_basis()),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// plans and layout

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPlan {
    pub locations: Vec<CutLocation>,
    /// Wire sets per subcircuit. Wires `0..n` are the original qubits; each
    /// wire cut opens a fresh wire numbered from `n` in cut order.
    pub partitions: Vec<Vec<usize>>,
    pub overhead_estimate: f64,
    /// Number of term combinations, the product of the basis sizes
    /// (saturating).
    pub n_subexperiments: u64,
}

impl CutPlan {
    /// Derives partitions, overhead and subexperiment count for `locations`.
    pub fn new(c: &Circuit, locations: Vec<CutLocation>) -> Result<CutPlan> {
        let layout = Layout::new(c, &locations)?;
        let bases = bases_for(c, &locations)?;
        let n_subexperiments = bases.iter().fold(1u64, |acc, b| acc.saturating_mul(b.len() as u64));
        Ok(CutPlan {
            overhead_estimate: estimate_overhead(&locations),
            partitions: layout.components,
            locations,
            n_subexperiments,
        })
    }

    pub fn n_cuts(&self) -> usize {
        self.locations.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.partitions.iter().map(Vec::len).collect()
    }

    pub fn max_width(&self) -> usize {
        self.widths().into_iter().max().unwrap_or(0)
    }

    pub fn min_width(&self) -> usize {
        self.widths().into_iter().min().unwrap_or(0)
    }
}

/// Wire bookkeeping for a cut circuit.
#[derive(Clone, Debug)]
struct Layout {
    /// Wires carrying each gate's qubits at the time it runs.
    gate_wires: Vec<[usize; 2]>,
    /// Location index of each cut gate.
    gate_cut: HashMap<usize, usize>,
    /// Wire cuts after each gate: (location index, old wire, new wire).
    switches: BTreeMap<usize, Vec<(usize, usize, usize)>>,
    /// Final wire of every qubit.
    output_wire: Vec<usize>,
    components: Vec<Vec<usize>>,
    /// Component index of every wire.
    component_of: Vec<usize>,
}

impl Layout {
    fn new(c: &Circuit, locations: &[CutLocation]) -> Result<Layout> {
        c.validate()?;
        let n = c.n_qubits;
        let mut seen = HashSet::new();
        let mut gate_cut = HashMap::new();
        let mut wire_cuts = Vec::new();
        for (k, loc) in locations.iter().enumerate() {
            if !seen.insert(*loc) {
                return Err(CutError::InvalidCut(format!("{loc} listed twice")));
            }
            match *loc {
                CutLocation::GateCut(i) => {
                    let g = c.gates.get(i).ok_or_else(|| CutError::InvalidCut(format!("{loc}: no such gate")))?;
                    if !g.is_two_qubit() {
                        return Err(CutError::InvalidCut(format!("{loc}: {} is not a two-qubit gate", g.kind.label())));
                    }
                    gate_cut.insert(i, k);
                }
                CutLocation::WireCut { qubit, after_gate } => {
                    let g = c.gates.get(after_gate).ok_or_else(|| CutError::InvalidCut(format!("{loc}: no such gate")))?;
                    if qubit >= n || !g.acts_on(qubit) {
                        return Err(CutError::InvalidCut(format!("{loc}: gate does not act on the qubit")));
                    }
                    if !c.gates[after_gate + 1..].iter().any(|g| g.acts_on(qubit)) {
                        return Err(CutError::InvalidCut(format!("{loc}: nothing follows on the qubit")));
                    }
                    wire_cuts.push((after_gate, qubit, k));
                }
            }
        }
        wire_cuts.sort_unstable();
        let mut switches: BTreeMap<usize, Vec<(usize, usize, usize)>> = BTreeMap::new();
        let mut current: Vec<usize> = (0..n).collect();
        let mut next_wire = n;
        let mut gate_wires = Vec::with_capacity(c.len());
        let mut cuts = wire_cuts.iter().peekable();
        for (i, g) in c.gates.iter().enumerate() {
            let qs = g.qubits();
            gate_wires.push([current[qs[0]], qs.get(1).map_or(usize::MAX, |&q| current[q])]);
            while let Some(&&(after, q, k)) = cuts.peek() {
                if after != i {
                    break;
                }
                switches.entry(i).or_default().push((k, current[q], next_wire));
                current[q] = next_wire;
                next_wire += 1;
                cuts.next();
            }
        }
        let n_wires = next_wire;
        let mut parent: Vec<usize> = (0..n_wires).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (i, g) in c.gates.iter().enumerate() {
            if g.is_two_qubit() && !gate_cut.contains_key(&i) {
                let (a, b) = (find(&mut parent, gate_wires[i][0]), find(&mut parent, gate_wires[i][1]));
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for w in 0..n_wires {
            let r = find(&mut parent, w);
            by_root.entry(r).or_default().push(w);
        }
        let mut components: Vec<Vec<usize>> = by_root.into_values().collect();
        components.sort();
        let mut component_of = vec![0; n_wires];
        for (p, comp) in components.iter().enumerate() {
            for &w in comp {
                component_of[w] = p;
            }
        }
        Ok(Layout { gate_wires, gate_cut, switches, output_wire: current, components, component_of })
    }
}

// ---------------------------------------------------------------------------
// subexperiments

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReconstructionMode {
    /// Every term combination with its exact coefficient product.
    Exact,
    /// `n_samples` draws from the `|c|/κ` distribution (see
    /// [`generate_subexperiments`] for the weighting rule).
    Sampled { n_samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Combination {
    pub term_indices: Vec<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subexperiment {
    #[serde(serialize_with = "circuit_as_text")]
    pub circuit: Circuit,
    pub weight: f64,
    pub term_indices: Vec<usize>,
    pub target_partition: usize,
    /// Measurement setting within the partition.
    pub setting: usize,
    pub combination: usize,
    /// Classical bits of the signed fragment measurements.
    pub sign_mask: u64,
}

fn circuit_as_text<S: serde::Serializer>(c: &Circuit, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&c.to_text())
}

#[derive(Clone, Debug)]
pub struct SubexperimentSet {
    pub subexperiments: Vec<Subexperiment>,
    pub combinations: Vec<Combination>,
    pub partitions: Vec<Vec<usize>>,
    /// Product of the basis one-norms.
    pub kappa: f64,
    /// Set when the plan contains wire cuts.
    pub wire_scaling_note: Option<&'static str>,
    observables: Vec<Observable>,
    /// `[partition][flat term] -> setting`.
    term_setting: Vec<Vec<usize>>,
    /// `[partition][flat term] -> bit mask of the term's output qubits`.
    term_mask: Vec<Vec<u64>>,
    /// `[combination][partition][setting] -> subexperiment`.
    index: Vec<Vec<Vec<usize>>>,
    /// Distinct circuits: first subexperiment carrying each.
    unique: Vec<usize>,
    unique_of: Vec<usize>,
}

impl SubexperimentSet {
    pub fn n_unique(&self) -> usize {
        self.unique.len()
    }

    /// Distinct subexperiment circuits in first-appearance order; identical
    /// circuits are executed once and their result shared.
    pub fn unique_circuits(&self) -> impl Iterator<Item = &Circuit> + '_ {
        self.unique.iter().map(|&i| &self.subexperiments[i].circuit)
    }

    /// Noiseless outcome distributions of the distinct circuits.
    pub fn exact_outcomes(&self) -> Result<Vec<Distribution>> {
        self.unique_circuits().map(exact_distribution).collect()
    }

    /// Reconstructs every observable from per-unique-circuit outcomes.
    pub fn reconstruct<S: ParitySource>(&self, outcomes: &[S]) -> Result<Vec<f64>> {
        if outcomes.len() != self.unique.len() {
            return Err(CutError::Dimension(format!(
                "{} outcomes for {} distinct subexperiments",
                outcomes.len(),
                self.unique.len()
            )));
        }
        let weights: Vec<f64> = self.combinations.iter().map(|c| c.weight).collect();
        let mut flat = 0;
        let mut out = Vec::with_capacity(self.observables.len());
        for obs in &self.observables {
            let mut total = 0.0;
            for term in &obs.terms {
                let values: Vec<f64> = (0..self.combinations.len())
                    .map(|ci| {
                        (0..self.partitions.len())
                            .map(|p| {
                                let sub = self.index[ci][p][self.term_setting[p][flat]];
                                let mask = self.term_mask[p][flat] | self.subexperiments[sub].sign_mask;
                                outcomes[self.unique_of[sub]].parity(mask)
                            })
                            .product()
                    })
                    .collect();
                total += term.coefficient * reconstruct_expectation(&values, &weights)?;
                flat += 1;
            }
            out.push(total);
        }
        Ok(out)
    }
}

/// `Σ_j w_j r_j` with Neumaier compensated summation.
pub fn reconstruct_expectation(results: &[f64], weights: &[f64]) -> Result<f64> {
    if results.len() != weights.len() {
        return Err(CutError::Dimension(format!("{} results for {} weights", results.len(), weights.len())));
    }
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (r, w) in results.iter().zip(weights) {
        let x = r * w;
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    Ok(sum + comp)
}

/// Subexperiments measuring every output qubit in Z.
pub fn generate_subexperiments(c: &Circuit, plan: &CutPlan, q_max: usize, mode: ReconstructionMode) -> Result<SubexperimentSet> {
    let z = Observable::new(vec![PauliString::new(vec![Pauli::Z; c.n_qubits], 1.0)], "Z")?;
    generate_subexperiments_for(c, plan, &[z], q_max, mode)
}

/// Subexperiments for estimating `observables` through `plan`.
///
/// Each partition gets the qubit-wise commuting measurement settings its
/// share of the observable terms needs. Exact mode enumerates the Cartesian
/// product of basis terms. Sampled mode gives every combination whose joint
/// probability is at least `1/n_samples` its exact weight, then draws
/// `n_samples` times from the remaining mass `r` (conditioned on missing the
/// exact set) with weight `sign·κ·r/n_samples` per draw, merging repeats.
/// With no heavy combination this is plain sampling with weight
/// `sign·κ/n_samples`.
pub fn generate_subexperiments_for(
    c: &Circuit,
    plan: &CutPlan,
    observables: &[Observable],
    q_max: usize,
    mode: ReconstructionMode,
) -> Result<SubexperimentSet> {
    if c.has_measurements() {
        return Err(CutError::InvalidArgument("cut circuits must be measurement-free".into()));
    }
    if let Some(o) = observables.iter().find(|o| o.n_qubits() != c.n_qubits) {
        return Err(CutError::Dimension(format!("observable {} on a {}-qubit circuit", o.name, c.n_qubits)));
    }
    let layout = Layout::new(c, &plan.locations)?;
    let mut plan_parts: Vec<Vec<usize>> = plan.partitions.iter().map(|p| {
        let mut p = p.clone();
        p.sort_unstable();
        p
    }).collect();
    plan_parts.sort();
    if plan_parts != layout.components {
        return Err(CutError::InvalidPlan(format!(
            "partitions {:?} do not match the components {:?} left by the cuts",
            plan.partitions, layout.components
        )));
    }
    if let Some(p) = layout.components.iter().find(|p| p.len() > q_max) {
        return Err(CutError::WidthViolation { width: p.len(), q_max });
    }
    let bases = bases_for(c, &plan.locations)?;
    let kappa: f64 = bases.iter().map(|b| b.one_norm).product();
    let combinations = match mode {
        ReconstructionMode::Exact => exact_combinations(&bases)?,
        ReconstructionMode::Sampled { n_samples, seed } => sampled_combinations(&bases, kappa, n_samples, seed)?,
    };

    let terms: Vec<&PauliString> = observables.iter().flat_map(|o| &o.terms).collect();
    let n_parts = layout.components.len();
    let mut settings = Vec::with_capacity(n_parts);
    let mut term_setting = Vec::with_capacity(n_parts);
    let mut term_mask = Vec::with_capacity(n_parts);
    for (p, wires) in layout.components.iter().enumerate() {
        let local = |w: usize| wires.binary_search(&w).expect("wire in partition");
        let restricted: Vec<PauliString> = terms
            .iter()
            .map(|t| {
                let paulis = (0..c.n_qubits)
                    .map(|q| if layout.component_of[layout.output_wire[q]] == p { t.paulis[q] } else { Pauli::I })
                    .collect();
                PauliString::new(paulis, 1.0)
            })
            .collect();
        let refs: Vec<&PauliString> = restricted.iter().collect();
        let (s, assign) = if refs.is_empty() { (vec![vec![Pauli::Z; c.n_qubits]], vec![]) } else { measurement_settings(&refs) };
        term_mask.push(
            restricted
                .iter()
                .map(|t| {
                    t.paulis
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p != Pauli::I)
                        .fold(0u64, |m, (q, _)| m | 1 << local(layout.output_wire[q]))
                })
                .collect::<Vec<_>>(),
        );
        settings.push(s);
        term_setting.push(assign);
    }

    let mut subexperiments = Vec::new();
    let mut index = Vec::with_capacity(combinations.len());
    let mut unique = Vec::new();
    let mut unique_of = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (ci, comb) in combinations.iter().enumerate() {
        let mut per_part = Vec::with_capacity(n_parts);
        for p in 0..n_parts {
            let mut per_setting = Vec::with_capacity(settings[p].len());
            for (si, setting) in settings[p].iter().enumerate() {
                let (circuit, sign_mask) =
                    partition_circuit(c, &layout, &bases, &comb.term_indices, p, setting);
                let text = circuit.to_text();
                let next = unique.len();
                let u = *seen.entry(text).or_insert(next);
                if u == next {
                    unique.push(subexperiments.len());
                }
                unique_of.push(u);
                per_setting.push(subexperiments.len());
                subexperiments.push(Subexperiment {
                    circuit,
                    weight: comb.weight,
                    term_indices: comb.term_indices.clone(),
                    target_partition: p,
                    setting: si,
                    combination: ci,
                    sign_mask,
                });
            }
            per_part.push(per_setting);
        }
        index.push(per_part);
    }
    Ok(SubexperimentSet {
        subexperiments,
        combinations,
        partitions: layout.components,
        kappa,
        wire_scaling_note: plan.locations.iter().any(|l| !l.is_gate_cut()).then_some(WIRE_SCALING_NOTE),
        observables: observables.to_vec(),
        term_setting,
        term_mask,
        index,
        unique,
        unique_of,
    })
}

/// Builds partition `p`'s circuit for one term choice and measurement
/// setting, returning it with the mask of its signed fragment bits.
fn partition_circuit(
    c: &Circuit,
    layout: &Layout,
    bases: &[QpdBasis],
    choice: &[usize],
    p: usize,
    setting: &[Pauli],
) -> (Circuit, u64) {
    let wires = &layout.components[p];
    let local = |w: usize| wires.binary_search(&w).ok();
    let mut out = Circuit::new(wires.len(), format!("{}#p{p}", c.name));
    let mut fragment_measures = Vec::new();
    let mut push_fragment = |out: &mut Circuit, ops: &[Gate], wire: usize| {
        if let Some(lw) = local(wire) {
            for g in ops {
                if g.kind == GateKind::MeasureZ {
                    fragment_measures.push(out.gates.len());
                }
                out.gates.push(g.remapped(|_| lw));
            }
        }
    };
    for (i, g) in c.gates.iter().enumerate() {
        let [w0, w1] = layout.gate_wires[i];
        if let Some(&k) = layout.gate_cut.get(&i) {
            let term = &bases[k].terms[choice[k]];
            push_fragment(&mut out, &term.left_ops, w0);
            push_fragment(&mut out, &term.right_ops, w1);
        } else if let Some(l0) = local(w0) {
            out.gates.push(if g.is_two_qubit() {
                let l1 = local(w1).expect("uncut gate stays inside one partition");
                g.remapped(|q| if q == g.qubits()[0] { l0 } else { l1 })
            } else {
                g.remapped(|_| l0)
            });
        }
        if let Some(sw) = layout.switches.get(&i) {
            for &(k, old, new) in sw {
                let term = &bases[k].terms[choice[k]];
                push_fragment(&mut out, &term.left_ops, old);
                push_fragment(&mut out, &term.right_ops, new);
            }
        }
    }
    for (q, &w) in layout.output_wire.iter().enumerate() {
        if let Some(lw) = local(w) {
            let mut basis = vec![Pauli::I; q + 1];
            basis[q] = setting[q];
            out.gates.extend(basis_rotation(&basis).into_iter().map(|g| g.remapped(|_| lw)));
            out.gates.push(Gate::measure(lw));
        }
    }
    let bits = measurement_bits(&out);
    let sign_mask = fragment_measures.iter().fold(0u64, |m, &gi| m | 1 << bits[gi].expect("measure bit"));
    (out, sign_mask)
}

fn exact_combinations(bases: &[QpdBasis]) -> Result<Vec<Combination>> {
    let total = bases.iter().try_fold(1usize, |acc, b| acc.checked_mul(b.len()));
    if total.is_none_or(|t| t > MAX_EXACT_COMBINATIONS) {
        return Err(CutError::InvalidArgument(format!(
            "exact mode would enumerate more than {MAX_EXACT_COMBINATIONS} combinations"
        )));
    }
    let mut out = vec![Combination { term_indices: Vec::new(), weight: 1.0 }];
    for b in bases {
        out = out
            .into_iter()
            .flat_map(|c| {
                b.terms.iter().enumerate().map(move |(j, t)| {
                    let mut term_indices = c.term_indices.clone();
                    term_indices.push(j);
                    Combination { term_indices, weight: c.weight * t.coefficient }
                })
            })
            .collect();
    }
    Ok(out)
}

fn sampled_combinations(bases: &[QpdBasis], kappa: f64, n_samples: usize, seed: u64) -> Result<Vec<Combination>> {
    if n_samples == 0 {
        return Err(CutError::InvalidArgument("n_samples must be positive".into()));
    }
    let probs: Vec<Vec<f64>> = bases.iter().map(QpdBasis::probabilities).collect();
    let threshold = 1.0 / n_samples as f64;
    let weight_of = |idx: &[usize]| -> f64 {
        idx.iter().zip(bases).map(|(&j, b)| b.terms[j].coefficient).product()
    };

    let mut exact: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut stack = vec![(Vec::new(), 1.0f64)];
    while let Some((prefix, p)) = stack.pop() {
        if prefix.len() == bases.len() {
            exact.push((prefix, p));
            continue;
        }
        // reversed push keeps the pop order ascending
        for (j, &pj) in probs[prefix.len()].iter().enumerate().rev() {
            let q = p * pj;
            if q >= threshold {
                let mut next = prefix.clone();
                next.push(j);
                stack.push((next, q));
            }
        }
    }
    let exact_mass: f64 = exact.iter().map(|(_, p)| p).sum();
    let mut out: Vec<Combination> =
        exact.iter().map(|(idx, _)| Combination { term_indices: idx.clone(), weight: weight_of(idx) }).collect();

    let remainder = 1.0 - exact_mass;
    if remainder > 1e-9 {
        let exact_set: HashSet<&Vec<usize>> = exact.iter().map(|(idx, _)| idx).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampled: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let per_draw = kappa * remainder / n_samples as f64;
        for _ in 0..n_samples {
            let idx = loop {
                let idx: Vec<usize> = probs.iter().map(|pr| draw(&mut rng, pr)).collect();
                if !exact_set.contains(&idx) {
                    break idx;
                }
            };
            let sign = weight_of(&idx).signum();
            *sampled.entry(idx).or_insert(0.0) += sign * per_draw;
        }
        out.extend(sampled.into_iter().map(|(term_indices, weight)| Combination { term_indices, weight }));
    }
    Ok(out)
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{ghz_circuit, qft_circuit};
    use crate::observables::{ghz_stabilizers, ideal_expectation, z_magnetization};
    use crate::simulator::simulate_exact;
    use num_complex::Complex64;

    type M = Vec<Vec<Complex64>>;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn matmul(a: &M, b: &M) -> M {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
    }

    fn dagger(a: &M) -> M {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| a[j][i].conj()).collect()).collect()
    }

    fn kron(a: &M, b: &M) -> M {
        // b acts on the low qubit (index bit 0), a on the high one
        let (na, nb) = (a.len(), b.len());
        let mut out = vec![vec![c(0.0, 0.0); na * nb]; na * nb];
        for i in 0..na {
            for j in 0..na {
                for k in 0..nb {
                    for l in 0..nb {
                        out[i * nb + k][j * nb + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        out
    }

    fn unitary_1q(g: &Gate) -> M {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let th = g.angle.unwrap_or(0.0);
        match g.kind {
            GateKind::H => vec![vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]],
            GateKind::Z => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]],
            GateKind::S => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 1.0)]],
            GateKind::Sdg => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, -1.0)]],
            GateKind::Rz => vec![
                vec![Complex64::from_polar(1.0, -th / 2.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), Complex64::from_polar(1.0, th / 2.0)],
            ],
            k => panic!("unexpected fragment gate {k:?}"),
        }
    }

    /// Signed single-qubit map of a fragment, as a closure on 2×2 matrices.
    /// Preparations discard the input and emit the named state.
    fn fragment_map(ops: &[Gate], rho: &M) -> M {
        let mut r = rho.clone();
        for g in ops {
            r = match g.kind {
                GateKind::MeasureZ => vec![vec![r[0][0], c(0.0, 0.0)], vec![c(0.0, 0.0), -r[1][1]]],
                GateKind::PrepState => {
                    let tr = r[0][0] + r[1][1];
                    let h = std::f64::consts::FRAC_1_SQRT_2;
                    let v = match g.prep.unwrap() {
                        PrepState::Zero => [c(1.0, 0.0), c(0.0, 0.0)],
                        PrepState::One => [c(0.0, 0.0), c(1.0, 0.0)],
                        PrepState::Plus => [c(h, 0.0), c(h, 0.0)],
                        PrepState::Minus => [c(h, 0.0), c(-h, 0.0)],
                        PrepState::PlusI => [c(h, 0.0), c(0.0, h)],
                        PrepState::MinusI => [c(h, 0.0), c(0.0, -h)],
                    };
                    (0..2).map(|i| (0..2).map(|j| tr * v[i] * v[j].conj()).collect()).collect()
                }
                _ => {
                    let u = unitary_1q(g);
                    matmul(&matmul(&u, &r), &dagger(&u))
                }
            };
        }
        r
    }

    fn unit(n: usize, i: usize, j: usize) -> M {
        let mut m = vec![vec![c(0.0, 0.0); n]; n];
        m[i][j] = c(1.0, 0.0);
        m
    }

    /// Superoperator (column-stacked images of |i⟩⟨j|) of a two-qubit term;
    /// left acts on qubit 0 (low bit), right on qubit 1.
    fn term_superop(t: &QpdTerm) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(256);
        for i in 0..4 {
            for j in 0..4 {
                let mut img = vec![vec![c(0.0, 0.0); 4]; 4];
                // |i⟩⟨j| = |i1⟩⟨j1| ⊗ |i0⟩⟨j0|
                let hi = fragment_map(&t.right_ops, &unit(2, i >> 1, j >> 1));
                let lo = fragment_map(&t.left_ops, &unit(2, i & 1, j & 1));
                let k = kron(&hi, &lo);
                for a in 0..4 {
                    for b in 0..4 {
                        img[a][b] = k[a][b];
                    }
                }
                out.extend(img.into_iter().flatten());
            }
        }
        out
    }

    fn unitary_superop(u: &M) -> Vec<Complex64> {
        let n = u.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                out.extend(matmul(&matmul(u, &unit(n, i, j)), &dagger(u)).into_iter().flatten());
            }
        }
        out
    }

    fn basis_superop(b: &QpdBasis) -> Vec<Complex64> {
        let mut acc = vec![c(0.0, 0.0); 256];
        for t in &b.terms {
            for (a, x) in acc.iter_mut().zip(term_superop(t)) {
                *a += x * t.coefficient;
            }
        }
        acc
    }

    fn two_qubit_unitary(g: &Gate) -> M {
        // qubit 0 = gate.qubits()[0] = low bit
        let mut u = vec![vec![c(0.0, 0.0); 4]; 4];
        for i in 0..4usize {
            let (b0, b1) = (i & 1, i >> 1);
            let (j, ph) = match g.kind {
                GateKind::CZ => (i, if b0 & b1 == 1 { -1.0 } else { 1.0 }),
                GateKind::CX => (if b0 == 1 { i ^ 2 } else { i }, 1.0),
                GateKind::Swap => ((b0 << 1) | b1, 1.0),
                GateKind::CP => (i, 1.0),
                _ => unreachable!(),
            };
            u[j][i] = if g.kind == GateKind::CP && i == 3 { Complex64::from_polar(1.0, g.angle.unwrap()) } else { c(ph, 0.0) };
        }
        u
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gate_bases_reproduce_their_channels() {
        for g in [Gate::cz(0, 1), Gate::cx(0, 1), Gate::swap(0, 1), Gate::cp(0, 1, 0.7), Gate::cp(0, 1, -2.3), Gate::cp(0, 1, std::f64::consts::PI)] {
            let b = gate_basis(&g).unwrap();
            let d = max_diff(&basis_superop(&b), &unitary_superop(&two_qubit_unitary(&g)));
            assert!(d < 1e-12, "{g}: {d}");
        }
    }

    #[test]
    fn one_norms() {
        assert!((gate_cut_basis(GateKind::CZ).unwrap().one_norm - 3.0).abs() < 1e-15);
        assert!((gate_cut_basis(GateKind::CX).unwrap().one_norm - 3.0).abs() < 1e-15);
        assert!((gate_cut_basis(GateKind::Swap).unwrap().one_norm - 27.0).abs() < 1e-12);
        assert_eq!(wire_cut_basis().one_norm, 4.0);
        assert_eq!(wire_cut_basis().len(), 8);
        let theta: f64 = 0.9;
        let cp = gate_basis(&Gate::cp(0, 1, theta)).unwrap();
        assert!((cp.one_norm - (1.0 + 2.0 * (theta / 2.0).sin().abs())).abs() < 1e-12);
        assert!(matches!(gate_cut_basis(GateKind::H), Err(CutError::NoDecomposition(_))));
        assert!(matches!(gate_cut_basis(GateKind::CP), Err(CutError::NoDecomposition(_))));
    }

    #[test]
    fn cz_terms_are_linearly_independent() {
        // unique coefficients within the term family, so the one-norm 3 is minimal there
        let b = cz_basis();
        let mut rows: Vec<Vec<Complex64>> = b.terms.iter().map(term_superop).collect();
        let mut rank = 0;
        for col in 0..256 {
            if let Some(piv) = (rank..rows.len()).find(|&r| rows[r][col].norm() > 1e-9) {
                rows.swap(rank, piv);
                let p = rows[rank][col];
                for r in 0..rows.len() {
                    if r != rank {
                        let f = rows[r][col] / p;
                        let pivot_row = rows[rank].clone();
                        for (x, y) in rows[r].iter_mut().zip(&pivot_row) {
                            *x -= f * y;
                        }
                    }
                }
                rank += 1;
            }
        }
        assert_eq!(rank, 6);
    }

    #[test]
    fn wire_basis_is_identity_channel() {
        let b = wire_cut_basis();
        let mut acc = vec![c(0.0, 0.0); 16];
        for t in &b.terms {
            for i in 0..2 {
                for j in 0..2 {
                    let img = fragment_map(&t.right_ops, &fragment_map(&t.left_ops, &unit(2, i, j)));
                    for a in 0..2 {
                        for bb in 0..2 {
                            acc[(i * 2 + j) * 4 + a * 2 + bb] += img[a][bb] * t.coefficient;
                        }
                    }
                }
            }
        }
        let mut id = vec![c(0.0, 0.0); 16];
        for i in 0..2 {
            for j in 0..2 {
                id[(i * 2 + j) * 4 + i * 2 + j] = c(1.0, 0.0);
            }
        }
        assert!(max_diff(&acc, &id) < 1e-12);
    }

    #[test]
    fn overhead_examples() {
        assert_eq!(estimate_overhead(&[CutLocation::GateCut(1), CutLocation::GateCut(2)]), 81.0);
        assert_eq!(estimate_overhead(&[]), 1.0);
        assert_eq!(estimate_overhead(&[CutLocation::GateCut(0), CutLocation::WireCut { qubit: 0, after_gate: 1 }]), 144.0);
    }

    fn exact_values(c: &Circuit, plan: &CutPlan, obs: &[Observable]) -> Vec<f64> {
        let set = generate_subexperiments_for(c, plan, obs, 8, ReconstructionMode::Exact).unwrap();
        set.reconstruct(&set.exact_outcomes().unwrap()).unwrap()
    }

    #[test]
    fn ghz_single_cut_is_exact() {
        let c = ghz_circuit(4).unwrap();
        let plan = CutPlan::new(&c, vec![CutLocation::GateCut(2)]).unwrap();
        assert_eq!(plan.partitions, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(plan.n_subexperiments, 6);
        assert_eq!(plan.overhead_estimate, 9.0);
        let mut obs = vec![z_magnetization(4)];
        obs.extend(ghz_stabilizers(4).unwrap());
        let vals = exact_values(&c, &plan, &obs);
        let state = simulate_exact(&c).unwrap();
        for (o, v) in obs.iter().zip(vals) {
            assert!((v - ideal_expectation(&state, o).unwrap()).abs() < 1e-8, "{}: {v}", o.name);
        }
    }

    #[test]
    fn identity_normalization_and_counts() {
        let c = ghz_circuit(6).unwrap();
        let one = CutPlan::new(&c, vec![CutLocation::GateCut(3)]).unwrap();
        let id: Observable = "IIIIII".parse().unwrap();
        let set = generate_subexperiments_for(&c, &one, &[id.clone()], 4, ReconstructionMode::Exact).unwrap();
        assert_eq!(set.combinations.len(), 6);
        let v = set.reconstruct(&set.exact_outcomes().unwrap()).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-10);
        let two = CutPlan::new(&c, vec![CutLocation::GateCut(2), CutLocation::GateCut(4)]).unwrap();
        let set = generate_subexperiments(&c, &two, 4, ReconstructionMode::Exact).unwrap();
        assert_eq!(set.combinations.len(), 36);
        assert_eq!(two.partitions.len(), 3);
    }

    #[test]
    fn qft_two_cuts_without_separation_is_exact() {
        let c = qft_circuit(6).unwrap();
        let cut: Vec<CutLocation> = c.two_qubit_gate_indices().into_iter().take(2).map(CutLocation::GateCut).collect();
        let plan = CutPlan::new(&c, cut).unwrap();
        assert_eq!(plan.partitions.len(), 1);
        let obs: Vec<Observable> = (0..6)
            .map(|q| Observable::new(vec![PauliString::single(6, q, Pauli::Z, 1.0)], format!("Z{q}")).unwrap())
            .collect();
        let state = simulate_exact(&c).unwrap();
        for (o, v) in obs.iter().zip(exact_values(&c, &plan, &obs)) {
            assert!((v - ideal_expectation(&state, o).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn wire_cut_reconstructs_entangled_state() {
        let c = ghz_circuit(3).unwrap();
        // sever qubit 1 between its two CX gates
        let plan = CutPlan::new(&c, vec![CutLocation::WireCut { qubit: 1, after_gate: 1 }]).unwrap();
        assert_eq!(plan.partitions, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(plan.overhead_estimate, 16.0);
        let set = generate_subexperiments(&c, &plan, 2, ReconstructionMode::Exact).unwrap();
        assert_eq!(set.wire_scaling_note, Some(WIRE_SCALING_NOTE));
        let mut obs = vec![z_magnetization(3)];
        obs.extend(ghz_stabilizers(3).unwrap());
        let state = simulate_exact(&c).unwrap();
        for (o, v) in obs.iter().zip(exact_values(&c, &plan, &obs)) {
            assert!((v - ideal_expectation(&state, o).unwrap()).abs() < 1e-8, "{}", o.name);
        }
    }

    #[test]
    fn plan_validation() {
        let c = ghz_circuit(4).unwrap();
        assert!(matches!(CutPlan::new(&c, vec![CutLocation::GateCut(0)]), Err(CutError::InvalidCut(_))));
        assert!(matches!(CutPlan::new(&c, vec![CutLocation::GateCut(9)]), Err(CutError::InvalidCut(_))));
        assert!(matches!(
            CutPlan::new(&c, vec![CutLocation::WireCut { qubit: 3, after_gate: 3 }]),
            Err(CutError::InvalidCut(_))
        ));
        let mut plan = CutPlan::new(&c, vec![CutLocation::GateCut(2)]).unwrap();
        assert!(matches!(
            generate_subexperiments(&c, &plan, 1, ReconstructionMode::Exact),
            Err(CutError::WidthViolation { width: 2, q_max: 1 })
        ));
        plan.partitions = vec![vec![0, 1, 2, 3]];
        assert!(matches!(
            generate_subexperiments(&c, &plan, 4, ReconstructionMode::Exact),
            Err(CutError::InvalidPlan(_))
        ));
    }

    #[test]
    fn sampled_mode_is_deterministic_and_hybrid() {
        let c = ghz_circuit(6).unwrap();
        let plan = CutPlan::new(&c, vec![CutLocation::GateCut(2), CutLocation::GateCut(4)]).unwrap();
        // 36 combinations of probability 1/36 ≥ 1/100: all weighted exactly
        let s = generate_subexperiments(&c, &plan, 4, ReconstructionMode::Sampled { n_samples: 100, seed: 1 }).unwrap();
        let e = generate_subexperiments(&c, &plan, 4, ReconstructionMode::Exact).unwrap();
        assert_eq!(s.combinations, e.combinations);
        // with 10 samples nothing is heavy: pure sampling, weights ±κ·k/n
        let a = generate_subexperiments(&c, &plan, 4, ReconstructionMode::Sampled { n_samples: 10, seed: 7 }).unwrap();
        let b = generate_subexperiments(&c, &plan, 4, ReconstructionMode::Sampled { n_samples: 10, seed: 7 }).unwrap();
        assert_eq!(a.combinations, b.combinations);
        let total: f64 = a.combinations.iter().map(|c| c.weight.abs()).sum();
        assert!((total - 9.0).abs() < 1e-12);
        for comb in &a.combinations {
            let k = comb.weight.abs() / 0.9;
            assert!((k - k.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn reconstruct_expectation_examples() {
        assert_eq!(reconstruct_expectation(&[1.0, 1.0], &[0.5, 0.5]).unwrap(), 1.0);
        assert!(matches!(reconstruct_expectation(&[1.0], &[0.5, 0.5]), Err(CutError::Dimension(_))));
        let v = reconstruct_expectation(&[1.0, 1e-16, -1.0], &[1e16, 1.0, 1e16]).unwrap();
        assert_eq!(v, 1e-16);
    }

    #[test]
    fn subexperiment_dump_is_json() {
        let c = ghz_circuit(4).unwrap();
        let plan = CutPlan::new(&c, vec![CutLocation::GateCut(2)]).unwrap();
        let set = generate_subexperiments(&c, &plan, 4, ReconstructionMode::Exact).unwrap();
        let v = serde_json::to_value(&set.subexperiments[0]).unwrap();
        assert!(v["circuit"].as_str().unwrap().starts_with("qubits 2"));
        assert_eq!(v["target_partition"], 0);
        assert_eq!(serde_json::to_string(&CutLocation::GateCut(4)).unwrap(), r#"{"GateCut":4}"#);
    }
}
