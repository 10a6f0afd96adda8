//! Statevector simulation with stochastic Pauli noise.
//!
//! Amplitude index bit `q` is qubit `q`. Shot results are packed into `u64`
//! keys: bit `q < n` holds the terminal measurement of qubit `q`, and bits
//! `n, n+1, …` hold mid-circuit measurements in execution order.
//!
//! Noisy runs sample every shot's error pattern up front, group identical
//! patterns, and then simulate each distinct pattern once. Measurement-free
//! bodies share the error-free prefix between patterns through a
//! depth-first walk; circuits with mid-circuit measurements branch per
//! pattern instead.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind, PrepState};
use crate::error::{CutError, Result};
use crate::observables::Observable;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);
/// Branches below this probability are dropped by the exact evaluator.
const BRANCH_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n_qubits: usize) -> Self {
        assert!(n_qubits < 31, "statevector of {n_qubits} qubits is too large");
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        StateVector { n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() || !amps.len().is_power_of_two() {
            return Err(CutError::Dimension(format!("{} amplitudes is not a power of two", amps.len())));
        }
        let n_qubits = amps.len().trailing_zeros() as usize;
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Applies a unitary gate. Measurement and preparation are rejected.
    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        for &q in gate.qubits() {
            if q >= self.n_qubits {
                return Err(CutError::QubitOutOfRange { gate: 0, qubit: q, n_qubits: self.n_qubits });
            }
        }
        match Kernel::compile(gate) {
            Some(k) => {
                k.apply(&mut self.amps);
                Ok(())
            }
            None => Err(CutError::RequiresSampling),
        }
    }

    fn prob_one(&self, q: usize) -> f64 {
        let bit = 1 << q;
        self.amps.iter().enumerate().filter(|(i, _)| i & bit != 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Projects qubit `q` onto `outcome` and renormalizes by `prob`.
    fn collapse(&mut self, q: usize, outcome: bool, prob: f64) {
        let bit = 1 << q;
        let scale = 1.0 / prob.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i & bit) != 0) == outcome {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
    }

    fn apply_pauli(&mut self, q: usize, code: u8) {
        match code & 3 {
            1 => Kernel::X { q }.apply(&mut self.amps),
            2 => Kernel::Y { q }.apply(&mut self.amps),
            3 => Kernel::Diag { q, d0: ONE, d1: -ONE }.apply(&mut self.amps),
            _ => {}
        }
    }
}

/// Parametric stochastic Pauli noise: a uniformly random non-identity Pauli
/// on every touched qubit with probability `p1` after each single-qubit gate
/// (and preparation) or `p2` after each two-qubit gate, plus independent
/// readout bit flips with probability `p_readout`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub p1: f64,
    pub p2: f64,
    pub p_readout: f64,
}

impl NoiseProfile {
    pub const BENCHMARK_DEFAULT: NoiseProfile = NoiseProfile { p1: 0.0003, p2: 0.008, p_readout: 0.02 };

    pub fn new(p1: f64, p2: f64, p_readout: f64) -> Result<Self> {
        let n = NoiseProfile { p1, p2, p_readout };
        n.validate()?;
        Ok(n)
    }

    pub fn noiseless() -> Self {
        NoiseProfile { p1: 0.0, p2: 0.0, p_readout: 0.0 }
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0 && self.p_readout == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p1", self.p1), ("p2", self.p2), ("p_readout", self.p_readout)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CutError::InvalidArgument(format!("noise {name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self::BENCHMARK_DEFAULT
    }
}

/// Shot histogram over packed keys (see the module docs for the layout).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counts {
    n_bits: usize,
    map: BTreeMap<u64, u64>,
    total: u64,
    unmeasured: Vec<usize>,
}

impl Counts {
    pub fn new(n_bits: usize) -> Self {
        assert!(n_bits <= 64, "at most 64 classical bits");
        Counts { n_bits, map: BTreeMap::new(), total: 0, unmeasured: Vec::new() }
    }

    /// Builds counts from bitstrings written with bit 0 rightmost.
    pub fn from_bitstrings<'a>(entries: impl IntoIterator<Item = (&'a str, u64)>) -> Result<Self> {
        let mut out: Option<Counts> = None;
        for (s, c) in entries {
            let key = u64::from_str_radix(s, 2)
                .map_err(|_| CutError::InvalidArgument(format!("bad bitstring {s:?}")))?;
            let counts = out.get_or_insert_with(|| Counts::new(s.len()));
            if s.len() != counts.n_bits {
                return Err(CutError::Dimension(format!("bitstring {s:?} has the wrong length")));
            }
            counts.add(key, c);
        }
        out.ok_or_else(|| CutError::InvalidArgument("no counts given".into()))
    }

    pub fn add(&mut self, key: u64, count: u64) {
        if count > 0 {
            *self.map.entry(key).or_insert(0) += count;
            self.total += count;
        }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn total_shots(&self) -> u64 {
        self.total
    }

    /// Qubits that carried no terminal measurement; their bits read 0.
    pub fn unmeasured_qubits(&self) -> &[usize] {
        &self.unmeasured
    }

    pub fn get(&self, bitstring: &str) -> u64 {
        u64::from_str_radix(bitstring, 2).ok().and_then(|k| self.map.get(&k).copied()).unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.map.iter().map(|(k, v)| (*k, *v))
    }

    pub fn bitstring(&self, key: u64) -> String {
        (0..self.n_bits).rev().map(|b| if key >> b & 1 == 1 { '1' } else { '0' }).collect()
    }

    pub fn to_bitstring_map(&self) -> BTreeMap<String, u64> {
        self.map.iter().map(|(k, v)| (self.bitstring(*k), *v)).collect()
    }

    /// Mean of `(-1)^{popcount(key & mask)}` over all shots.
    pub fn parity_expectation(&self, mask: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let signed: i64 = self
            .map
            .iter()
            .map(|(k, c)| if (k & mask).count_ones().is_multiple_of(2) { *c as i64 } else { -(*c as i64) })
            .sum();
        signed as f64 / self.total as f64
    }
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(&self.to_bitstring_map()).map_err(|_| fmt::Error)?)
    }
}

impl Serialize for Counts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_bitstring_map().serialize(s)
    }
}

/// Exact outcome distribution over packed keys, as produced by
/// [`exact_distribution`].
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub n_bits: usize,
    pub probs: BTreeMap<u64, f64>,
}

impl Distribution {
    pub fn parity_expectation(&self, mask: u64) -> f64 {
        self.probs
            .iter()
            .map(|(k, p)| if (k & mask).count_ones().is_multiple_of(2) { *p } else { -*p })
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }
}

/// Source of `±1` parity means over packed keys: sampled [`Counts`] or an
/// exact [`Distribution`].
pub trait ParitySource {
    fn parity(&self, mask: u64) -> f64;
}

impl ParitySource for Counts {
    fn parity(&self, mask: u64) -> f64 {
        self.parity_expectation(mask)
    }
}

impl ParitySource for Distribution {
    fn parity(&self, mask: u64) -> f64 {
        self.parity_expectation(mask)
    }
}

// ---------------------------------------------------------------------------
// kernels

#[derive(Clone, Copy, Debug)]
enum Kernel {
    /// Real-valued dense matrix (H, Ry).
    Real { q: usize, m: [f64; 4] },
    /// `cos·I − i·sin·X`.
    Rx { q: usize, c: f64, s: f64 },
    /// `diag(d0, d1)`; `d0 = 1` touches only the upper half.
    Diag { q: usize, d0: Complex64, d1: Complex64 },
    X { q: usize },
    Y { q: usize },
    Cx { c: usize, t: usize },
    /// Phase on the |11⟩ component; CZ is phase −1.
    Cp { a: usize, b: usize, phase: Complex64 },
    Swap { a: usize, b: usize },
}

impl Kernel {
    fn compile(g: &Gate) -> Option<Kernel> {
        let q = g.qubits()[0];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let angle = g.angle.unwrap_or(0.0);
        Some(match g.kind {
            GateKind::H => Kernel::Real { q, m: [h, h, h, -h] },
            GateKind::X => Kernel::X { q },
            GateKind::Y => Kernel::Y { q },
            GateKind::Z => Kernel::Diag { q, d0: ONE, d1: -ONE },
            GateKind::S => Kernel::Diag { q, d0: ONE, d1: I },
            GateKind::Sdg => Kernel::Diag { q, d0: ONE, d1: -I },
            GateKind::T => Kernel::Diag { q, d0: ONE, d1: Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4) },
            GateKind::Rz => Kernel::Diag {
                q,
                d0: Complex64::from_polar(1.0, -angle / 2.0),
                d1: Complex64::from_polar(1.0, angle / 2.0),
            },
            GateKind::Rx => {
                let (s, c) = (angle / 2.0).sin_cos();
                Kernel::Rx { q, c, s }
            }
            GateKind::Ry => {
                let (s, c) = (angle / 2.0).sin_cos();
                Kernel::Real { q, m: [c, -s, s, c] }
            }
            GateKind::CP => Kernel::Cp { a: q, b: g.qubits()[1], phase: Complex64::from_polar(1.0, angle) },
            GateKind::CZ => Kernel::Cp { a: q, b: g.qubits()[1], phase: -ONE },
            GateKind::CX => Kernel::Cx { c: q, t: g.qubits()[1] },
            GateKind::Swap => Kernel::Swap { a: q, b: g.qubits()[1] },
            GateKind::MeasureZ | GateKind::PrepState => return None,
        })
    }

    /// Like [`Kernel::compile`] but free to drop global phases, which no
    /// sampled or probabilistic quantity can observe.
    fn compile_up_to_phase(g: &Gate) -> Option<Kernel> {
        match g.kind {
            GateKind::Rz => {
                let angle = g.angle.expect("validated angle");
                Some(Kernel::Diag { q: g.qubits()[0], d0: ONE, d1: Complex64::from_polar(1.0, angle) })
            }
            _ => Kernel::compile(g),
        }
    }

    fn apply(&self, amps: &mut [Complex64]) {
        match *self {
            Kernel::Real { q, m } => for_pairs(amps, q, |x, y| {
                let (a, b) = (*x, *y);
                x.re = m[0] * a.re + m[1] * b.re;
                x.im = m[0] * a.im + m[1] * b.im;
                y.re = m[2] * a.re + m[3] * b.re;
                y.im = m[2] * a.im + m[3] * b.im;
            }),
            Kernel::Rx { q, c, s } => for_pairs(amps, q, |x, y| {
                let (a, b) = (*x, *y);
                x.re = c * a.re + s * b.im;
                x.im = c * a.im - s * b.re;
                y.re = c * b.re + s * a.im;
                y.im = c * b.im - s * a.re;
            }),
            Kernel::Diag { q, d0, d1 } => {
                if d0 == ONE {
                    for_upper(amps, q, |y| *y = cmul(d1, *y));
                } else {
                    for_pairs(amps, q, |x, y| {
                        *x = cmul(d0, *x);
                        *y = cmul(d1, *y);
                    });
                }
            }
            Kernel::X { q } => for_pairs(amps, q, std::mem::swap),
            Kernel::Y { q } => for_pairs(amps, q, |x, y| {
                let (a, b) = (*x, *y);
                *x = Complex64::new(b.im, -b.re);
                *y = Complex64::new(-a.im, a.re);
            }),
            Kernel::Cx { c, t } => {
                let (cb, tb) = (1usize << c, 1usize << t);
                for_runs(amps.len(), c, t, |start, len| {
                    let (lo, hi) = amps.split_at_mut(start | cb | tb);
                    lo[start | cb..(start | cb) + len].swap_with_slice(&mut hi[..len]);
                });
            }
            Kernel::Cp { a, b, phase } => {
                let mask = (1usize << a) | (1usize << b);
                if phase == -ONE {
                    for_runs(amps.len(), a, b, |start, len| {
                        amps[start | mask..(start | mask) + len].iter_mut().for_each(|x| *x = -*x)
                    });
                } else {
                    for_runs(amps.len(), a, b, |start, len| {
                        amps[start | mask..(start | mask) + len].iter_mut().for_each(|x| *x = cmul(phase, *x))
                    });
                }
            }
            Kernel::Swap { a, b } => {
                let (lo_bit, hi_bit) = if a < b { (1usize << a, 1usize << b) } else { (1usize << b, 1usize << a) };
                for_runs(amps.len(), a, b, |start, len| {
                    let (lo, hi) = amps.split_at_mut(start | hi_bit);
                    lo[start | lo_bit..(start | lo_bit) + len].swap_with_slice(&mut hi[..len]);
                });
            }
        }
    }
}

#[inline(always)]
fn cmul(a: Complex64, b: Complex64) -> Complex64 {
    Complex64::new(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re)
}

/// Calls `f(lo, hi)` for every amplitude pair differing only in bit `q`.
#[inline(always)]
fn for_pairs(amps: &mut [Complex64], q: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
    let stride = 1 << q;
    if stride == 1 {
        for pair in amps.chunks_exact_mut(2) {
            let (x, y) = pair.split_at_mut(1);
            f(&mut x[0], &mut y[0]);
        }
        return;
    }
    for chunk in amps.chunks_exact_mut(2 * stride) {
        let (lo, hi) = chunk.split_at_mut(stride);
        for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
            f(x, y);
        }
    }
}

/// Calls `f` on every amplitude whose bit `q` is set.
#[inline(always)]
fn for_upper(amps: &mut [Complex64], q: usize, f: impl FnMut(&mut Complex64) + Copy) {
    let stride = 1 << q;
    for chunk in amps.chunks_exact_mut(2 * stride) {
        chunk[stride..].iter_mut().for_each(f);
    }
}

/// Calls `f(start, len)` for every maximal contiguous run of indices with
/// bits `a` and `b` clear.
#[inline(always)]
fn for_runs(len: usize, a: usize, b: usize, mut f: impl FnMut(usize, usize)) {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let run = 1usize << lo;
    for outer in (0..len).step_by(2 << hi) {
        for start in (outer..outer + (1 << hi)).step_by(2 << lo) {
            f(start, run);
        }
    }
}

fn prep_kernels(state: PrepState, q: usize) -> Vec<Kernel> {
    let gates: &[Gate] = match state {
        PrepState::Zero => &[],
        PrepState::One => &[Gate::x(q)],
        PrepState::Plus => &[Gate::h(q)],
        PrepState::Minus => &[Gate::x(q), Gate::h(q)],
        PrepState::PlusI => &[Gate::h(q), Gate::s(q)],
        PrepState::MinusI => &[Gate::h(q), Gate::sdg(q)],
    };
    gates.iter().filter_map(Kernel::compile).collect()
}

// ---------------------------------------------------------------------------
// compiled programs

#[derive(Clone, Debug)]
enum Op {
    Unitary { kernel: Kernel, site: u32 },
    /// Mid-circuit measurement writing classical bit `bit`.
    Measure { q: usize, bit: usize },
    /// Reset to |0⟩ followed by the preparation kernels.
    Prep { q: usize, kernels: Vec<Kernel>, site: u32 },
}

#[derive(Clone, Copy, Debug)]
struct Site {
    op: usize,
    qubits: [usize; 2],
    two: bool,
}

#[derive(Clone, Debug)]
struct Program {
    n_qubits: usize,
    ops: Vec<Op>,
    sites: Vec<Site>,
    /// Qubits with a terminal measurement.
    terminal_mask: u64,
    n_mid: usize,
    has_mid_ops: bool,
}

impl Program {
    fn compile(c: &Circuit) -> Result<Program> {
        c.validate()?;
        if c.n_qubits > 30 {
            return Err(CutError::InvalidWidth { width: c.n_qubits, reason: "simulator supports at most 30 qubits" });
        }
        let bits = measurement_bits(c);
        let mut prog = Program {
            n_qubits: c.n_qubits,
            ops: Vec::new(),
            sites: Vec::new(),
            terminal_mask: 0,
            n_mid: 0,
            has_mid_ops: false,
        };
        for (i, g) in c.gates.iter().enumerate() {
            let qs = g.qubits();
            let site = prog.sites.len() as u32;
            match g.kind {
                GateKind::MeasureZ => {
                    let bit = bits[i].expect("measurement bit");
                    if bit < c.n_qubits {
                        prog.terminal_mask |= 1 << qs[0];
                    } else {
                        prog.ops.push(Op::Measure { q: qs[0], bit });
                        prog.n_mid += 1;
                        prog.has_mid_ops = true;
                    }
                }
                GateKind::PrepState => {
                    prog.sites.push(Site { op: prog.ops.len(), qubits: [qs[0], 0], two: false });
                    let kernels = prep_kernels(g.prep.expect("validated prep"), qs[0]);
                    prog.ops.push(Op::Prep { q: qs[0], kernels, site });
                    prog.has_mid_ops = true;
                }
                _ => {
                    let two = qs.len() == 2;
                    prog.sites.push(Site { op: prog.ops.len(), qubits: [qs[0], if two { qs[1] } else { 0 }], two });
                    prog.ops.push(Op::Unitary { kernel: Kernel::compile_up_to_phase(g).expect("unitary gate"), site });
                }
            }
        }
        if prog.n_bits() > 64 {
            return Err(CutError::InvalidArgument("more than 64 classical bits".into()));
        }
        Ok(prog)
    }

    fn n_bits(&self) -> usize {
        self.n_qubits + self.n_mid
    }

    fn recorded_mask(&self) -> u64 {
        let mid = if self.n_mid == 0 { 0 } else { (u64::MAX >> (64 - self.n_mid)) << self.n_qubits };
        self.terminal_mask | mid
    }
}

/// One error event: a Pauli (2 bits per touched qubit) after noise site `site`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    site: u32,
    code: u8,
}

fn apply_event(state: &mut StateVector, site: &Site, code: u8) {
    state.apply_pauli(site.qubits[0], code & 3);
    if site.two {
        state.apply_pauli(site.qubits[1], code >> 2);
    }
}

/// Applies the events at `site` starting from `events[ev]`; returns the
/// index of the first unapplied event.
fn apply_events_at(prog: &Program, state: &mut StateVector, site: u32, events: &[Event], mut ev: usize) -> usize {
    while ev < events.len() && events[ev].site == site {
        apply_event(state, &prog.sites[site as usize], events[ev].code);
        ev += 1;
    }
    ev
}

/// Number of failures before the next success in a Bernoulli sequence with
/// `ln_q = ln(1 - p)`.
fn geometric_gap(rng: &mut ChaCha8Rng, ln_q: f64) -> usize {
    let u: f64 = 1.0 - rng.random::<f64>();
    let g = (u.ln() / ln_q).floor();
    if g < usize::MAX as f64 { g as usize } else { usize::MAX }
}

fn sample_patterns(prog: &Program, noise: &NoiseProfile, shots: u64, rng: &mut ChaCha8Rng) -> Vec<(Vec<Event>, u64)> {
    let site_ids = |two: bool| -> Vec<u32> {
        (0..prog.sites.len() as u32).filter(|s| prog.sites[*s as usize].two == two).collect()
    };
    let classes = [(site_ids(false), noise.p1), (site_ids(true), noise.p2)];
    let mut patterns: BTreeMap<Vec<Event>, u64> = BTreeMap::new();
    let mut hits: Vec<u32> = Vec::new();
    for _ in 0..shots {
        hits.clear();
        for (sites, p) in &classes {
            if *p <= 0.0 || sites.is_empty() {
                continue;
            }
            if *p >= 1.0 {
                hits.extend_from_slice(sites);
                continue;
            }
            let ln_q = (1.0 - p).ln();
            let mut pos = geometric_gap(rng, ln_q);
            while pos < sites.len() {
                hits.push(sites[pos]);
                pos = pos.saturating_add(1).saturating_add(geometric_gap(rng, ln_q));
            }
        }
        hits.sort_unstable();
        let events: Vec<Event> = hits
            .iter()
            .map(|&site| {
                let mut code = rng.random_range(1..4u8);
                if prog.sites[site as usize].two {
                    code |= rng.random_range(1..4u8) << 2;
                }
                Event { site, code }
            })
            .collect();
        *patterns.entry(events).or_insert(0) += 1;
    }
    patterns.into_iter().collect()
}

/// Draws `shots` basis-state indices from `state`'s distribution. The state
/// is normalized, so rounding only ever sends a draw to the last index.
fn sample_indices(state: &StateVector, shots: u64, rng: &mut ChaCha8Rng, out: &mut Vec<u64>) {
    let mut us: Vec<f64> = (0..shots).map(|_| rng.random::<f64>()).collect();
    us.sort_by(f64::total_cmp);
    let last = state.amps.len() - 1;
    let mut acc = 0.0;
    let mut next = 0;
    for (i, a) in state.amps.iter().enumerate() {
        acc += a.norm_sqr();
        while next < us.len() && (us[next] < acc || i == last) {
            out.push(i as u64);
            next += 1;
        }
        if next == us.len() {
            break;
        }
    }
}

struct Sampler<'a> {
    prog: &'a Program,
    rng: &'a mut ChaCha8Rng,
    /// One packed key per shot, in generation order.
    keys: Vec<u64>,
    scratch: Vec<u64>,
    /// Spare amplitude buffers, reused to avoid page-faulting fresh clones.
    pool: Vec<Vec<Complex64>>,
}

impl Sampler<'_> {
    fn advance(&self, state: &mut StateVector, from: usize, to: usize) {
        for op in &self.prog.ops[from..to] {
            match op {
                Op::Unitary { kernel, .. } => kernel.apply(&mut state.amps),
                _ => unreachable!("prefix walk only handles measurement-free bodies"),
            }
        }
    }

    fn emit(&mut self, state: &StateVector, shots: u64, mid_bits: u64) {
        self.scratch.clear();
        sample_indices(state, shots, self.rng, &mut self.scratch);
        let mask = self.prog.terminal_mask;
        self.keys.extend(self.scratch.iter().map(|i| (i & mask) | mid_bits));
    }

    /// Depth-first walk over the sorted pattern list. Every pattern in
    /// `pats` shares its first `depth` events, which are already applied to
    /// `state`, and `state` has executed ops `[0, pos)`.
    fn prefix_walk(&mut self, mut state: StateVector, mut pos: usize, pats: &[(Vec<Event>, u64)], depth: usize) {
        let split = pats.partition_point(|(e, _)| e.len() == depth);
        let here: u64 = pats[..split].iter().map(|(_, c)| c).sum();
        let rest = &pats[split..];
        let mut start = 0;
        while start < rest.len() {
            let ev = rest[start].0[depth];
            let end = start + rest[start..].partition_point(|(e, _)| e[depth] == ev);
            let site = self.prog.sites[ev.site as usize];
            self.advance(&mut state, pos, site.op + 1);
            pos = site.op + 1;
            let mut child = if end == rest.len() && here == 0 {
                std::mem::replace(&mut state, StateVector { n_qubits: 0, amps: Vec::new() })
            } else {
                self.copy_of(&state)
            };
            apply_event(&mut child, &site, ev.code);
            self.prefix_walk(child, pos, &rest[start..end], depth + 1);
            start = end;
        }
        if here > 0 {
            self.advance(&mut state, pos, self.prog.ops.len());
            self.emit(&state, here, 0);
        }
        if !state.amps.is_empty() {
            self.pool.push(state.amps);
        }
    }

    fn copy_of(&mut self, state: &StateVector) -> StateVector {
        let amps = match self.pool.pop() {
            Some(mut buf) => {
                buf.copy_from_slice(&state.amps);
                buf
            }
            None => state.amps.clone(),
        };
        StateVector { n_qubits: state.n_qubits, amps }
    }

    /// Per-pattern walk that splits the pattern's shots at every mid-circuit
    /// measurement and reset.
    fn branch_walk(
        &mut self,
        mut state: StateVector,
        mut pos: usize,
        events: &[Event],
        mut ev: usize,
        mut shots: u64,
        mut bits: u64,
    ) {
        while pos < self.prog.ops.len() {
            let op = &self.prog.ops[pos];
            pos += 1;
            match op {
                Op::Unitary { kernel, site } => {
                    kernel.apply(&mut state.amps);
                    ev = apply_events_at(self.prog, &mut state, *site, events, ev);
                }
                Op::Measure { q, .. } | Op::Prep { q, .. } => {
                    let p1 = state.prob_one(*q).clamp(0.0, 1.0);
                    let ones = (0..shots).filter(|_| self.rng.random::<f64>() < p1).count() as u64;
                    let zeros = shots - ones;
                    if ones > 0 && zeros > 0 {
                        let mut other = state.clone();
                        let mut other_bits = bits;
                        let other_ev = resolve(self.prog, &mut other, op, true, p1, &mut other_bits, events, ev);
                        self.branch_walk(other, pos, events, other_ev, ones, other_bits);
                        ev = resolve(self.prog, &mut state, op, false, 1.0 - p1, &mut bits, events, ev);
                        shots = zeros;
                    } else {
                        let outcome = ones > 0;
                        let p = if outcome { p1 } else { 1.0 - p1 };
                        ev = resolve(self.prog, &mut state, op, outcome, p, &mut bits, events, ev);
                    }
                }
            }
        }
        self.emit(&state, shots, bits);
    }
}

/// Collapses a measurement or reset onto `outcome`, records the bit, runs
/// the preparation kernels and noise events of a reset.
#[allow(clippy::too_many_arguments)]
fn resolve(
    prog: &Program,
    state: &mut StateVector,
    op: &Op,
    outcome: bool,
    prob: f64,
    bits: &mut u64,
    events: &[Event],
    ev: usize,
) -> usize {
    match op {
        Op::Measure { q, bit } => {
            state.collapse(*q, outcome, prob);
            if outcome {
                *bits |= 1 << bit;
            }
            ev
        }
        Op::Prep { q, kernels, site } => {
            state.collapse(*q, outcome, prob);
            if outcome {
                Kernel::X { q: *q }.apply(&mut state.amps);
            }
            for k in kernels {
                k.apply(&mut state.amps);
            }
            apply_events_at(prog, state, *site, events, ev)
        }
        Op::Unitary { .. } => unreachable!("only measurements and resets collapse"),
    }
}

fn exact_walk(prog: &Program, mut state: StateVector, mut pos: usize, weight: f64, mut bits: u64, out: &mut BTreeMap<u64, f64>) {
    while pos < prog.ops.len() {
        let op = &prog.ops[pos];
        pos += 1;
        match op {
            Op::Unitary { kernel, .. } => kernel.apply(&mut state.amps),
            Op::Measure { q, .. } | Op::Prep { q, .. } => {
                let p1 = state.prob_one(*q).clamp(0.0, 1.0);
                let p0 = 1.0 - p1;
                if p1 > BRANCH_CUTOFF && p0 > BRANCH_CUTOFF {
                    let mut other = state.clone();
                    let mut other_bits = bits;
                    resolve(prog, &mut other, op, true, p1, &mut other_bits, &[], 0);
                    exact_walk(prog, other, pos, weight * p1, other_bits, out);
                    resolve(prog, &mut state, op, false, p0, &mut bits, &[], 0);
                    return exact_walk(prog, state, pos, weight * p0, bits, out);
                }
                let outcome = p1 > BRANCH_CUTOFF;
                resolve(prog, &mut state, op, outcome, if outcome { p1 } else { p0 }, &mut bits, &[], 0);
            }
        }
    }
    let mask = prog.terminal_mask;
    for (i, a) in state.amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p > 0.0 {
            *out.entry((i as u64 & mask) | bits).or_insert(0.0) += weight * p;
        }
    }
}

// ---------------------------------------------------------------------------
// public entry points

/// Classical bit written by each gate: `Some(q)` for the terminal
/// measurement of qubit `q`, `Some(n + k)` for the `k`-th mid-circuit
/// measurement, `None` for everything else. A measurement is terminal when
/// no later gate touches its qubit.
pub fn measurement_bits(c: &Circuit) -> Vec<Option<usize>> {
    let mut last_touch = vec![None; c.n_qubits];
    for (i, g) in c.gates.iter().enumerate() {
        for &q in g.qubits() {
            last_touch[q] = Some(i);
        }
    }
    let mut n_mid = 0;
    c.gates
        .iter()
        .enumerate()
        .map(|(i, g)| {
            (g.kind == GateKind::MeasureZ).then(|| {
                let q = g.qubits()[0];
                if last_touch[q] == Some(i) {
                    q
                } else {
                    n_mid += 1;
                    c.n_qubits + n_mid - 1
                }
            })
        })
        .collect()
}

/// Exact statevector of a measurement-free circuit started from |0…0⟩.
///
/// `PrepState` is accepted only on a qubit no earlier gate has touched,
/// where it is a plain state preparation.
pub fn simulate_exact(c: &Circuit) -> Result<StateVector> {
    c.validate()?;
    let mut state = StateVector::zero(c.n_qubits);
    let mut touched = vec![false; c.n_qubits];
    for g in &c.gates {
        match g.kind {
            GateKind::MeasureZ => return Err(CutError::RequiresSampling),
            GateKind::PrepState => {
                let q = g.qubits()[0];
                if touched[q] {
                    return Err(CutError::RequiresSampling);
                }
                for k in prep_kernels(g.prep.expect("validated prep"), q) {
                    k.apply(&mut state.amps);
                }
            }
            _ => Kernel::compile(g).expect("unitary gate").apply(&mut state.amps),
        }
        for &q in g.qubits() {
            touched[q] = true;
        }
    }
    Ok(state)
}

/// Noiseless outcome distribution of a circuit that may contain mid-circuit
/// measurements and resets, using the same key layout as [`run_shots`].
pub fn exact_distribution(c: &Circuit) -> Result<Distribution> {
    let prog = Program::compile(c)?;
    let mut probs = BTreeMap::new();
    exact_walk(&prog, StateVector::zero(c.n_qubits), 0, 1.0, 0, &mut probs);
    Ok(Distribution { n_bits: prog.n_bits(), probs })
}

/// Samples `shots` noisy executions of `c`.
///
/// Deterministic for fixed inputs. Qubits without a terminal measurement
/// read as 0 and are listed in [`Counts::unmeasured_qubits`].
pub fn run_shots(c: &Circuit, noise: &NoiseProfile, shots: u64, seed: u64) -> Result<Counts> {
    if shots == 0 {
        return Err(CutError::InvalidArgument("shots must be positive".into()));
    }
    noise.validate()?;
    let prog = Program::compile(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns = sample_patterns(&prog, noise, shots, &mut rng);
    let mut sampler = Sampler { prog: &prog, rng: &mut rng, keys: Vec::with_capacity(shots as usize), scratch: Vec::new(), pool: Vec::new() };
    if prog.has_mid_ops {
        for (events, m) in &patterns {
            sampler.branch_walk(StateVector::zero(c.n_qubits), 0, events, 0, *m, 0);
        }
    } else {
        sampler.prefix_walk(StateVector::zero(c.n_qubits), 0, &patterns, 0);
    }
    let mut keys = sampler.keys;
    if noise.p_readout > 0.0 {
        let recorded = prog.recorded_mask();
        for key in &mut keys {
            let mut m = recorded;
            while m != 0 {
                let b = m & m.wrapping_neg();
                if rng.random::<f64>() < noise.p_readout {
                    *key ^= b;
                }
                m ^= b;
            }
        }
    }
    let mut counts = Counts::new(prog.n_bits());
    for k in keys {
        counts.add(k, 1);
    }
    counts.unmeasured = (0..c.n_qubits).filter(|q| prog.terminal_mask >> q & 1 == 0).collect();
    Ok(counts)
}

/// Counts-based estimate of a Z-diagonal observable.
pub fn expectation_from_counts(counts: &Counts, obs: &Observable) -> Result<f64> {
    let mut total = 0.0;
    for t in &obs.terms {
        if !t.is_diagonal() {
            return Err(CutError::BasisMismatch(t.label()));
        }
        if t.len() > counts.n_bits() {
            return Err(CutError::Dimension(format!("{}-qubit term on {}-bit counts", t.len(), counts.n_bits())));
        }
        total += t.coefficient * counts.parity_expectation(t.support_mask());
    }
    Ok(total)
}
