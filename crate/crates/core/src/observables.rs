//! Pauli-string observables, the two benchmark observable families, exact
//! expectation values and measurement-basis rotations.
//!
//! Pauli labels are written with character `i` acting on qubit `i`, so
//! `XI` is X on qubit 0. (Counts bitstrings go the other way: qubit 0 is the
//! rightmost character.)

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::circuit::Gate;
use crate::error::{CutError, Result};
use crate::simulator::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_code(code: u8) -> Pauli {
        match code & 3 {
            0 => Pauli::I,
            1 => Pauli::X,
            2 => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn from_char(c: char) -> Option<Pauli> {
        Some(match c.to_ascii_uppercase() {
            'I' => Pauli::I,
            'X' => Pauli::X,
            'Y' => Pauli::Y,
            'Z' => Pauli::Z,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PauliString {
    pub paulis: Vec<Pauli>,
    pub coefficient: f64,
}

impl PauliString {
    pub fn new(paulis: Vec<Pauli>, coefficient: f64) -> Self {
        PauliString { paulis, coefficient }
    }

    /// Parses a bare label such as `XIZ` (character `i` is qubit `i`).
    pub fn from_label(label: &str, coefficient: f64) -> Result<Self> {
        let paulis = label
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| CutError::InvalidArgument(format!("bad Pauli {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if paulis.is_empty() {
            return Err(CutError::InvalidArgument("empty Pauli label".into()));
        }
        Ok(PauliString { paulis, coefficient })
    }

    /// `P` on qubit `q`, identity elsewhere.
    pub fn single(n: usize, q: usize, p: Pauli, coefficient: f64) -> Self {
        let mut paulis = vec![Pauli::I; n];
        paulis[q] = p;
        PauliString { paulis, coefficient }
    }

    pub fn len(&self) -> usize {
        self.paulis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paulis.is_empty()
    }

    pub fn label(&self) -> String {
        self.paulis.iter().map(|p| p.as_char()).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.paulis.iter().all(|p| matches!(p, Pauli::I | Pauli::Z))
    }

    /// Bit mask of qubits carrying a non-identity Pauli.
    pub fn support_mask(&self) -> u64 {
        self.paulis
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != Pauli::I)
            .fold(0, |m, (q, _)| m | (1 << q))
    }

    fn masks(&self) -> (usize, usize, u32) {
        let (mut flip, mut phase, mut n_y) = (0usize, 0usize, 0u32);
        for (q, p) in self.paulis.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => flip |= 1 << q,
                Pauli::Y => {
                    flip |= 1 << q;
                    phase |= 1 << q;
                    n_y += 1;
                }
                Pauli::Z => phase |= 1 << q,
            }
        }
        (flip, phase, n_y)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*{}", self.coefficient, self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub terms: Vec<PauliString>,
    pub name: String,
}

impl Observable {
    pub fn new(terms: Vec<PauliString>, name: impl Into<String>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(CutError::InvalidArgument("observable needs at least one term".into()));
        };
        let n = first.len();
        if terms.iter().any(|t| t.len() != n) {
            return Err(CutError::Dimension("observable terms differ in length".into()));
        }
        Ok(Observable { terms, name: name.into() })
    }

    pub fn n_qubits(&self) -> usize {
        self.terms[0].len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(PauliString::is_diagonal)
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for Observable {
    type Err = CutError;

    /// Parses `0.5*ZI + 0.5*IZ`; a bare label has coefficient 1.
    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in s.split('+') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (coef, label) = match part.split_once('*') {
                Some((c, l)) => (
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| CutError::InvalidArgument(format!("bad coefficient {c:?}")))?,
                    l.trim(),
                ),
                None => (1.0, part),
            };
            terms.push(PauliString::from_label(label, coef)?);
        }
        Observable::new(terms, s.trim())
    }
}

/// Average magnetization `(1/n) Σ Z_i` as a single observable.
pub fn z_magnetization(n: usize) -> Observable {
    let w = 1.0 / n as f64;
    let terms = (0..n).map(|q| PauliString::single(n, q, Pauli::Z, w)).collect();
    Observable { terms, name: "z_magnetization".into() }
}

/// The GHZ stabilizer generators: `X…X` and `Z_i Z_{i+1}` for each
/// neighbouring pair. Each is a separate observable with ideal value +1.
pub fn ghz_stabilizers(n: usize) -> Result<Vec<Observable>> {
    if n < 2 {
        return Err(CutError::InvalidWidth { width: n, reason: "GHZ stabilizers need at least 2 qubits" });
    }
    let mut out = vec![Observable {
        terms: vec![PauliString::new(vec![Pauli::X; n], 1.0)],
        name: "X".repeat(n),
    }];
    for i in 0..n - 1 {
        let mut p = vec![Pauli::I; n];
        p[i] = Pauli::Z;
        p[i + 1] = Pauli::Z;
        let t = PauliString::new(p, 1.0);
        out.push(Observable { name: t.label(), terms: vec![t] });
    }
    Ok(out)
}

/// `⟨ψ|P|ψ⟩` for a single Pauli string, coefficient excluded.
pub fn pauli_expectation(state: &StateVector, term: &PauliString) -> Result<Complex64> {
    if term.len() != state.n_qubits() {
        return Err(CutError::Dimension(format!(
            "{}-qubit term on a {}-qubit state",
            term.len(),
            state.n_qubits()
        )));
    }
    let (flip, phase_mask, n_y) = term.masks();
    let amps = state.amplitudes();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, a) in amps.iter().enumerate() {
        // P|i⟩ = i^{nY} (-1)^{|i & phase|} |i ^ flip⟩
        let sign = if (i & phase_mask).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        acc += amps[i ^ flip].conj() * a * sign;
    }
    let i_pow = match n_y % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    Ok(acc * i_pow)
}

pub fn ideal_expectation(state: &StateVector, obs: &Observable) -> Result<f64> {
    let mut total = Complex64::new(0.0, 0.0);
    for t in &obs.terms {
        total += pauli_expectation(state, t)? * t.coefficient;
    }
    let scale = obs.coefficient_norm().max(1.0);
    assert!(
        total.im.abs() < 1e-10 * scale,
        "Hermitian observable produced imaginary expectation {}",
        total.im
    );
    Ok(total.re)
}

/// Basis change that maps the term's X/Y factors onto Z: H for X, Sdg then H
/// for Y, nothing for I and Z.
pub fn measurement_rotation(term: &PauliString) -> Vec<Gate> {
    basis_rotation(&term.paulis)
}

pub fn basis_rotation(basis: &[Pauli]) -> Vec<Gate> {
    let mut gates = Vec::new();
    for (q, p) in basis.iter().enumerate() {
        match p {
            Pauli::X => gates.push(Gate::h(q)),
            Pauli::Y => {
                gates.push(Gate::sdg(q));
                gates.push(Gate::h(q));
            }
            Pauli::I | Pauli::Z => {}
        }
    }
    gates
}

/// The Z-mapped version of a term (X/Y replaced by Z), i.e. what to evaluate
/// on counts taken after [`measurement_rotation`].
pub fn z_mapped(term: &PauliString) -> PauliString {
    PauliString {
        paulis: term.paulis.iter().map(|p| if *p == Pauli::I { Pauli::I } else { Pauli::Z }).collect(),
        coefficient: term.coefficient,
    }
}

/// Qubit-wise commuting measurement settings for a set of terms.
///
/// Terms are assigned first-fit in order; a term joins a setting if on every
/// qubit either side is I or both agree. Unconstrained qubits are measured
/// in Z. Returns the settings and, per term, the index of its setting.
pub fn measurement_settings(terms: &[&PauliString]) -> (Vec<Vec<Pauli>>, Vec<usize>) {
    let mut settings: Vec<Vec<Pauli>> = Vec::new();
    let mut assignment = Vec::with_capacity(terms.len());
    for t in terms {
        let fits = |s: &Vec<Pauli>| {
            s.iter().zip(&t.paulis).all(|(a, b)| *a == Pauli::I || *b == Pauli::I || a == b)
        };
        let idx = match settings.iter().position(fits) {
            Some(i) => {
                for (a, b) in settings[i].iter_mut().zip(&t.paulis) {
                    if *a == Pauli::I {
                        *a = *b;
                    }
                }
                i
            }
            None => {
                settings.push(t.paulis.clone());
                settings.len() - 1
            }
        };
        assignment.push(idx);
    }
    for s in &mut settings {
        for p in s.iter_mut() {
            if *p == Pauli::I {
                *p = Pauli::Z;
            }
        }
    }
    (settings, assignment)
}
