//! Cut-selection strategies.
//!
//! `fitv3` enumerates gate-cut sets within a cut budget and keeps the
//! best-scoring one that separates the circuit and fits the width and
//! overhead limits. `auto` runs a fixed list of seeded graph-partitioning
//! presets and cuts every gate crossing the resulting parts.
//!
//! Both strategies see the circuit only through its interaction graph.
//! fitv3 treats a graph edge as the unit of cutting: choosing an edge cuts
//! every two-qubit gate on it, and `|K|` counts those gate cuts.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{interaction_graph, Circuit};
use crate::error::{CutError, Result};
use crate::qpd::{CutLocation, CutPlan};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutBudget {
    /// Largest fitv3 cut set; auto ignores it.
    pub max_cuts: usize,
    pub q_max: usize,
    pub overhead_cap: f64,
}

impl CutBudget {
    pub fn new(max_cuts: usize, q_max: usize, overhead_cap: f64) -> Result<Self> {
        let b = CutBudget { max_cuts, q_max, overhead_cap };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_max < 2 {
            return Err(CutError::InvalidArgument(format!("q_max must be at least 2, got {}", self.q_max)));
        }
        if self.overhead_cap.is_nan() || self.overhead_cap < 1.0 {
            return Err(CutError::InvalidArgument(format!("overhead cap must be at least 1, got {}", self.overhead_cap)));
        }
        Ok(())
    }
}

impl Default for CutBudget {
    fn default() -> Self {
        CutBudget { max_cuts: 2, q_max: 4, overhead_cap: 1e8 }
    }
}

/// Weights of the fitv3 score
/// `S = w_width·(q_max − maxW) − w_cuts·|K| − w_bal·(maxW − minW) − w_sub·log2(n_sub)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub width: f64,
    pub cuts: f64,
    pub balance: f64,
    pub subexperiments: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights { width: 1.0, cuts: 1.0, balance: 0.5, subexperiments: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    WidthViolation,
    OverheadExceeded,
    Disconnected,
}

impl RejectionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::WidthViolation => "width_violation",
            RejectionReason::OverheadExceeded => "overhead_exceeded",
            RejectionReason::Disconnected => "disconnected",
        }
    }

    /// How far through the feasibility checks a candidate got.
    fn stage(self) -> u8 {
        match self {
            RejectionReason::WidthViolation => 0,
            RejectionReason::OverheadExceeded => 1,
            RejectionReason::Disconnected => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub locations: Vec<CutLocation>,
    pub score: f64,
    pub partitions: Vec<Vec<usize>>,
    pub overhead: f64,
    pub n_subexperiments: u64,
    pub feasible: bool,
    pub rejection_reason: Option<RejectionReason>,
}

impl ScoredCandidate {
    fn from_plan(plan: &CutPlan, budget: &CutBudget, weights: &ScoreWeights) -> Self {
        let reason = feasibility_check(plan, budget);
        let mut cand = ScoredCandidate {
            locations: plan.locations.clone(),
            score: f64::NEG_INFINITY,
            partitions: plan.partitions.clone(),
            overhead: plan.overhead_estimate,
            n_subexperiments: plan.n_subexperiments,
            feasible: reason.is_none(),
            rejection_reason: reason,
        };
        if cand.feasible {
            cand.score = score(&cand, budget.q_max, weights);
        }
        cand
    }

    pub fn n_cuts(&self) -> usize {
        self.locations.len()
    }

    pub fn max_width(&self) -> usize {
        self.partitions.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_width(&self) -> usize {
        self.partitions.iter().map(Vec::len).min().unwrap_or(0)
    }

    fn to_plan(&self) -> CutPlan {
        CutPlan {
            locations: self.locations.clone(),
            partitions: self.partitions.clone(),
            overhead_estimate: self.overhead,
            n_subexperiments: self.n_subexperiments,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n_cuts: usize,
    pub overhead: f64,
    pub n_subexperiments: u64,
    pub candidates_evaluated: usize,
    /// Filled in by the harness once shots are spent.
    pub total_shots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyOutcome {
    pub plan: Option<CutPlan>,
    pub skipped: bool,
    pub skip_reason: Option<String>,
    pub diagnostics: Diagnostics,
    /// Best candidates first, at most ten.
    pub top_candidates: Vec<ScoredCandidate>,
}

impl StrategyOutcome {
    fn chosen(plan: Option<CutPlan>, candidates_evaluated: usize, top_candidates: Vec<ScoredCandidate>) -> Self {
        let diagnostics = match &plan {
            Some(p) => Diagnostics {
                n_cuts: p.n_cuts(),
                overhead: p.overhead_estimate,
                n_subexperiments: p.n_subexperiments,
                candidates_evaluated,
                total_shots: 0,
            },
            None => Diagnostics { n_cuts: 0, overhead: 1.0, n_subexperiments: 1, candidates_evaluated, total_shots: 0 },
        };
        StrategyOutcome { plan, skipped: false, skip_reason: None, diagnostics, top_candidates }
    }

    fn skip(reason: String, candidates_evaluated: usize, top_candidates: Vec<ScoredCandidate>) -> Self {
        StrategyOutcome {
            plan: None,
            skipped: true,
            skip_reason: Some(reason),
            diagnostics: Diagnostics { candidates_evaluated, ..Default::default() },
            top_candidates,
        }
    }
}

/// Width, then overhead, then separation; the first failure is reported.
pub fn feasibility_check(plan: &CutPlan, budget: &CutBudget) -> Option<RejectionReason> {
    if plan.partitions.iter().any(|p| p.len() > budget.q_max) {
        Some(RejectionReason::WidthViolation)
    } else if plan.overhead_estimate > budget.overhead_cap {
        Some(RejectionReason::OverheadExceeded)
    } else if plan.partitions.len() < 2 {
        Some(RejectionReason::Disconnected)
    } else {
        None
    }
}

pub fn score(candidate: &ScoredCandidate, q_max: usize, w: &ScoreWeights) -> f64 {
    let max_w = candidate.max_width() as f64;
    let min_w = candidate.min_width() as f64;
    w.width * (q_max as f64 - max_w)
        - w.cuts * candidate.n_cuts() as f64
        - w.balance * (max_w - min_w)
        - w.subexperiments * (candidate.n_subexperiments as f64).log2()
}

fn gate_tuple(locations: &[CutLocation]) -> Vec<usize> {
    locations
        .iter()
        .map(|l| match *l {
            CutLocation::GateCut(i) => i,
            CutLocation::WireCut { after_gate, .. } => after_gate,
        })
        .collect()
}

/// Total order on fitv3 candidates: higher score, fewer cuts, lower
/// overhead, then the lexicographically smaller gate tuple.
pub fn fitv3_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.feasible
        .cmp(&a.feasible)
        .then_with(|| b.score.total_cmp(&a.score))
        .then_with(|| a.n_cuts().cmp(&b.n_cuts()))
        .then_with(|| a.overhead.total_cmp(&b.overhead))
        .then_with(|| gate_tuple(&a.locations).cmp(&gate_tuple(&b.locations)))
}

fn require_measurement_free(c: &Circuit) -> Result<()> {
    if c.has_measurements() {
        return Err(CutError::InvalidArgument("cut selection expects a measurement-free circuit".into()));
    }
    c.validate()
}

fn components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Budget-aware selection over all separating edge sets of at most
/// `budget.max_cuts` gate cuts. Returns an empty plan when nothing fits.
pub fn fitv3_select(c: &Circuit, budget: &CutBudget, weights: &ScoreWeights) -> Result<StrategyOutcome> {
    require_measurement_free(c)?;
    budget.validate()?;
    let graph = interaction_graph(c);
    let edges = &graph.edges;
    let mut evaluated = 0usize;
    let mut candidates: Vec<ScoredCandidate> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();

    // depth-first over edge subsets in index order, pruned by gate count
    fn walk(
        start: usize,
        used: usize,
        chosen: &mut Vec<usize>,
        ctx: &mut dyn FnMut(&[usize]),
        edges: &[crate::circuit::InteractionEdge],
        max_cuts: usize,
    ) {
        for e in start..edges.len() {
            let m = edges[e].multiplicity();
            if used + m > max_cuts {
                continue;
            }
            chosen.push(e);
            ctx(chosen);
            walk(e + 1, used + m, chosen, ctx, edges, max_cuts);
            chosen.pop();
        }
    }

    let mut visit = |set: &[usize]| {
        evaluated += 1;
        let mut cut = vec![false; edges.len()];
        for &e in set {
            cut[e] = true;
        }
        let comps = components(
            c.n_qubits,
            edges.iter().zip(&cut).filter(|(_, &k)| !k).map(|(e, _)| (e.a, e.b)),
        );
        if comps.len() < 2 {
            return;
        }
        let mut gates: Vec<usize> = set.iter().flat_map(|&e| edges[e].gate_indices.iter().copied()).collect();
        gates.sort_unstable();
        let plan = CutPlan::new(c, gates.into_iter().map(CutLocation::GateCut).collect())
            .expect("two-qubit gate cuts are always valid");
        candidates.push(ScoredCandidate::from_plan(&plan, budget, weights));
    };
    walk(0, 0, &mut chosen, &mut visit, edges, budget.max_cuts);

    candidates.sort_by(fitv3_order);
    let plan = candidates.first().filter(|c| c.feasible).map(ScoredCandidate::to_plan);
    candidates.truncate(10);
    Ok(StrategyOutcome::chosen(plan, evaluated, candidates))
}

/// One auto-finder search configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetConfig {
    /// Number of parts to split the qubits into.
    pub partitions: usize,
    /// Allowed deviation of a part size from the balanced size.
    pub tolerance: usize,
    pub seed: u64,
}

/// Six presets: 2 or 3 parts, tolerance 0, 1 or 2, seeds 101..=106.
pub fn default_presets() -> Vec<PresetConfig> {
    let mut out = Vec::with_capacity(6);
    for partitions in [2, 3] {
        for tolerance in 0..3 {
            out.push(PresetConfig { partitions, tolerance, seed: 101 + out.len() as u64 });
        }
    }
    out
}

/// Preset-search automatic finder. Every gate crossing the found parts is
/// cut, so the cut count is bounded only by the overhead cap.
pub fn auto_select(c: &Circuit, budget: &CutBudget, presets: &[PresetConfig]) -> Result<StrategyOutcome> {
    require_measurement_free(c)?;
    budget.validate()?;
    if presets.is_empty() {
        return Ok(StrategyOutcome::skip("no preset configurations".into(), 0, vec![]));
    }
    let weights = interaction_graph(c).weight_matrix();
    let mut candidates: Vec<(usize, ScoredCandidate)> = Vec::new();
    for (pi, preset) in presets.iter().enumerate() {
        let Some(parts) = kl_partition(&weights, preset) else {
            continue;
        };
        let locations: Vec<CutLocation> = c
            .gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_two_qubit() && parts[g.qubits()[0]] != parts[g.qubits()[1]])
            .map(|(i, _)| CutLocation::GateCut(i))
            .collect();
        let plan = CutPlan::new(c, locations)?;
        let mut cand = ScoredCandidate::from_plan(&plan, budget, &ScoreWeights::default());
        cand.score = f64::NAN;
        candidates.push((pi, cand));
    }
    let evaluated = candidates.len();
    let key = |(pi, c): &(usize, ScoredCandidate)| (c.n_cuts(), c.overhead, c.max_width(), *pi);
    candidates.sort_by(|a, b| {
        b.1.feasible.cmp(&a.1.feasible).then_with(|| {
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.cmp(&kb.2))
                .then(ka.3.cmp(&kb.3))
        })
    });
    let mut top: Vec<ScoredCandidate> = Vec::new();
    for (_, c) in &candidates {
        if top.len() < 10 && !top.iter().any(|t| t.locations == c.locations) {
            top.push(c.clone());
        }
    }
    match candidates.first() {
        Some((_, best)) if best.feasible => Ok(StrategyOutcome::chosen(Some(best.to_plan()), evaluated, top)),
        _ => {
            let reason = candidates
                .iter()
                .filter_map(|(_, c)| c.rejection_reason)
                .max_by_key(|r| r.stage())
                .map_or("no preset produced a valid partition", RejectionReason::as_str);
            Ok(StrategyOutcome::skip(reason.to_string(), evaluated, top))
        }
    }
}

/// Seeded balanced split refined by Kernighan–Lin / Fiduccia–Mattheyses
/// passes over single moves and pair swaps. Returns the part of each qubit,
/// or `None` if the preset cannot produce `k` non-empty parts.
fn kl_partition(w: &[Vec<usize>], preset: &PresetConfig) -> Option<Vec<usize>> {
    let n = w.len();
    let k = preset.partitions;
    if k < 2 || k > n {
        return None;
    }
    let lo = (n / k).saturating_sub(preset.tolerance).max(1);
    let hi = n.div_ceil(k) + preset.tolerance;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(preset.seed));
    let mut part = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        part[v] = i % k;
    }
    let mut size = vec![0usize; k];
    for &p in &part {
        size[p] += 1;
    }
    // weight from v into part t
    let link = |part: &[usize], v: usize, t: usize| -> i64 {
        (0..n).filter(|&u| u != v && part[u] == t).map(|u| w[v][u] as i64).sum()
    };

    loop {
        let start = part.clone();
        let mut locked = vec![false; n];
        let mut gain_sum = 0i64;
        let (mut best_gain, mut best_state) = (0i64, (part.clone(), size.clone()));
        loop {
            // (gain, tie key) of the best legal action
            let mut best: Option<(i64, (usize, usize, usize), Action)> = None;
            let mut consider = |g: i64, key: (usize, usize, usize), a: Action| {
                if best.as_ref().is_none_or(|(bg, bk, _)| g > *bg || (g == *bg && key < *bk)) {
                    best = Some((g, key, a));
                }
            };
            for v in (0..n).filter(|&v| !locked[v]) {
                let from = part[v];
                let own = link(&part, v, from);
                for t in (0..k).filter(|&t| t != from) {
                    if size[from] > lo && size[t] < hi {
                        consider(link(&part, v, t) - own, (0, v, t), Action::Move(v, t));
                    }
                }
                for u in (v + 1..n).filter(|&u| !locked[u] && part[u] != from) {
                    let to = part[u];
                    let g = link(&part, v, to) - own + link(&part, u, from) - link(&part, u, to) - 2 * w[v][u] as i64;
                    consider(g, (1, v, u), Action::Swap(v, u));
                }
            }
            let Some((g, _, action)) = best else { break };
            match action {
                Action::Move(v, t) => {
                    size[part[v]] -= 1;
                    size[t] += 1;
                    part[v] = t;
                    locked[v] = true;
                }
                Action::Swap(v, u) => {
                    part.swap(v, u);
                    locked[v] = true;
                    locked[u] = true;
                }
            }
            gain_sum += g;
            if gain_sum > best_gain {
                best_gain = gain_sum;
                best_state = (part.clone(), size.clone());
            }
        }
        if best_gain > 0 {
            (part, size) = best_state;
        } else {
            part = start;
            break;
        }
    }
    Some(part)
}

#[derive(Clone, Copy, Debug)]
enum Action {
    Move(usize, usize),
    Swap(usize, usize),
}
