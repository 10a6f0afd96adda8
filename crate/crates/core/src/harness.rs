//! Benchmark sweeps: families × widths × seeds × strategies, the error
//! metrics, and result persistence.
//!
//! Every random stream in a run is seeded from a SHA-256 digest of the
//! master seed and the run's cell key, so a sweep gives the same records no
//! matter how cells are scheduled across workers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::{brickwork_circuit, ghz_circuit, qft_circuit, random_circuit, Circuit};
use crate::cutfind::{auto_select, default_presets, fitv3_select, CutBudget, PresetConfig, ScoreWeights, ScoredCandidate};
use crate::error::{CutError, Result};
use crate::observables::{basis_rotation, ghz_stabilizers, ideal_expectation, measurement_settings, z_magnetization, Observable};
use crate::qpd::{generate_subexperiments_for, CutPlan, ReconstructionMode, SubexperimentSet};
use crate::simulator::{run_shots, simulate_exact, NoiseProfile};

/// A method counts as a high-error run when its MAE exceeds this multiple
/// of the matched no-cut MAE.
pub const HIGH_ERROR_FACTOR: f64 = 2.0;
pub const NO_MATCHED_PAIRS: &str = "no matched pairs";

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = CutError;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(CutError::Config(format!(
                        concat!("unknown ", stringify!($name), " {:?}; expected one of {}"),
                        other,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(Family { Ghz => "ghz", Qft => "qft", Brickwork => "brickwork", Random => "random" });
named_enum!(Strategy { NoCut => "no_cut", Auto => "auto", Fitv3 => "fitv3" });
named_enum!(ObservableFamily { ZMagnetization => "z_magnetization", GhzStabilizers => "ghz_stabilizers" });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub families: Vec<Family>,
    pub widths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub shots_per_subexperiment: u64,
    pub reconstruction_samples: usize,
    /// Shots per measurement setting for the no-cut baseline; defaults to
    /// `shots_per_subexperiment × reconstruction_samples`.
    pub baseline_shots: Option<u64>,
    pub budget: CutBudget,
    pub noise: NoiseProfile,
    pub observable_family: ObservableFamily,
    pub weights: ScoreWeights,
    pub presets: Vec<PresetConfig>,
    pub brickwork_depth: usize,
    /// Layer count of random circuits; `None` uses the width.
    pub random_depth: Option<usize>,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            families: vec![Family::Ghz, Family::Qft, Family::Random],
            widths: (4..=16).collect(),
            seeds: (1..=10).collect(),
            strategies: Strategy::ALL.to_vec(),
            shots_per_subexperiment: 200,
            reconstruction_samples: 100,
            baseline_shots: None,
            budget: CutBudget::default(),
            noise: NoiseProfile::BENCHMARK_DEFAULT,
            observable_family: ObservableFamily::ZMagnetization,
            weights: ScoreWeights::default(),
            presets: default_presets(),
            brickwork_depth: 4,
            random_depth: None,
            master_seed: 2024,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CutError::Config(m));
        if self.families.is_empty() || self.widths.is_empty() || self.seeds.is_empty() || self.strategies.is_empty() {
            return bad("families, widths, seeds and strategies must be non-empty".into());
        }
        if let Some(w) = self.widths.iter().find(|w| !(2..=24).contains(*w)) {
            return bad(format!("width {w} outside [2, 24]"));
        }
        if self.shots_per_subexperiment == 0 || self.reconstruction_samples == 0 || self.baseline_shots == Some(0) {
            return bad("shot and sample counts must be positive".into());
        }
        if self.brickwork_depth == 0 || self.random_depth == Some(0) {
            return bad("circuit depths must be positive".into());
        }
        self.budget.validate().map_err(|e| CutError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| CutError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn baseline_shots(&self) -> u64 {
        self.baseline_shots
            .unwrap_or(self.shots_per_subexperiment * self.reconstruction_samples as u64)
    }

    pub fn circuit(&self, family: Family, n: usize, seed: u64) -> Result<Circuit> {
        let s = derive_seed(self.master_seed, &[family.as_str(), &n.to_string(), &seed.to_string(), "circuit"]);
        match family {
            Family::Ghz => ghz_circuit(n),
            Family::Qft => qft_circuit(n),
            Family::Brickwork => brickwork_circuit(n, self.brickwork_depth, s),
            Family::Random => random_circuit(n, self.random_depth.unwrap_or(n), s),
        }
    }

    pub fn observables(&self, n: usize) -> Result<Vec<Observable>> {
        match self.observable_family {
            ObservableFamily::ZMagnetization => Ok(vec![z_magnetization(n)]),
            ObservableFamily::GhzStabilizers => ghz_stabilizers(n),
        }
    }
}

/// First eight bytes (little-endian) of `SHA-256(master ‖ part₀ ‖ 0 ‖ part₁ ‖ 0 …)`.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub family: Family,
    pub n_qubits: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub skipped: bool,
    pub skip_reason: Option<String>,
    pub mae: Option<f64>,
    pub n_cuts: usize,
    pub overhead_estimate: f64,
    pub n_subexperiments: u64,
    pub total_shots: u64,
    pub per_observable_errors: Vec<f64>,
    pub observables: Vec<String>,
    pub estimates: Vec<f64>,
    pub ideal_values: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<ScoredCandidate>,
}

impl RunRecord {
    fn new(family: Family, n: usize, seed: u64, strategy: Strategy) -> Self {
        RunRecord {
            family,
            n_qubits: n,
            seed,
            strategy,
            skipped: false,
            skip_reason: None,
            mae: None,
            n_cuts: 0,
            overhead_estimate: 1.0,
            n_subexperiments: 1,
            total_shots: 0,
            per_observable_errors: vec![],
            observables: vec![],
            estimates: vec![],
            ideal_values: vec![],
            candidates: vec![],
        }
    }

    fn skip(mut self, reason: impl Into<String>) -> Self {
        self.skipped = true;
        self.skip_reason = Some(reason.into());
        self.mae = None;
        self.per_observable_errors.clear();
        self.estimates.clear();
        self
    }

    fn key(&self) -> (Family, usize, u64) {
        (self.family, self.n_qubits, self.seed)
    }

    fn sort_key(&self) -> (Family, usize, u64, Strategy) {
        (self.family, self.n_qubits, self.seed, self.strategy)
    }
}

/// `(1/k) Σ |est − ideal|`.
pub fn mae(estimates: &[f64], ideals: &[f64]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != ideals.len() {
        return Err(CutError::Dimension(format!("{} estimates vs {} ideal values", estimates.len(), ideals.len())));
    }
    Ok(estimates.iter().zip(ideals).map(|(e, i)| (e - i).abs()).sum::<f64>() / estimates.len() as f64)
}

fn matched_pairs<'a>(method: &'a [RunRecord], baseline: &'a [RunRecord]) -> Vec<(f64, f64)> {
    let base: BTreeMap<_, _> = baseline.iter().filter_map(|r| r.mae.map(|m| (r.key(), m))).collect();
    method
        .iter()
        .filter_map(|r| Some((r.mae?, *base.get(&r.key())?)))
        .collect()
}

/// Mean of `MAE_method − MAE_baseline` over matched, non-skipped pairs.
pub fn delta_mae(method_runs: &[RunRecord], baseline_runs: &[RunRecord]) -> Result<f64> {
    let pairs = matched_pairs(method_runs, baseline_runs);
    if pairs.is_empty() {
        return Err(CutError::EmptyComparison);
    }
    Ok(pairs.iter().map(|(m, b)| m - b).sum::<f64>() / pairs.len() as f64)
}

/// Fraction of matched pairs at width `n` where the method is strictly better.
pub fn win_rate(method_runs: &[RunRecord], baseline_runs: &[RunRecord], n: usize) -> Result<f64> {
    let at_n: Vec<RunRecord> = method_runs.iter().filter(|r| r.n_qubits == n).cloned().collect();
    let pairs = matched_pairs(&at_n, baseline_runs);
    if pairs.is_empty() {
        return Err(CutError::EmptyComparison);
    }
    Ok(pairs.iter().filter(|(m, b)| m < b).count() as f64 / pairs.len() as f64)
}

/// Estimates of `observables` from direct noisy execution: one shot batch
/// per qubit-wise commuting measurement setting.
pub fn no_cut_estimates(c: &Circuit, observables: &[Observable], noise: &NoiseProfile, shots: u64, seed_of: impl Fn(usize) -> u64) -> Result<(Vec<f64>, u64)> {
    let terms: Vec<_> = observables.iter().flat_map(|o| &o.terms).collect();
    let (settings, assign) = measurement_settings(&terms);
    let mut counts = Vec::with_capacity(settings.len());
    for (i, s) in settings.iter().enumerate() {
        let mut m = c.clone();
        m.gates.extend(basis_rotation(s));
        m.measure_all();
        counts.push(run_shots(&m, noise, shots, seed_of(i))?);
    }
    let mut flat = 0;
    let estimates = observables
        .iter()
        .map(|o| {
            o.terms
                .iter()
                .map(|t| {
                    let v = t.coefficient * counts[assign[flat]].parity_expectation(t.support_mask());
                    flat += 1;
                    v
                })
                .sum()
        })
        .collect();
    Ok((estimates, shots * settings.len() as u64))
}

/// Cut-and-reconstruct estimates for a plan. Returns the estimates, the
/// number of executed circuits and the total shots.
pub fn cut_estimates(
    c: &Circuit,
    plan: &CutPlan,
    observables: &[Observable],
    cfg: &SweepConfig,
    seed_of: impl Fn(&str, usize) -> u64,
) -> Result<(Vec<f64>, usize, u64)> {
    let mode = ReconstructionMode::Sampled { n_samples: cfg.reconstruction_samples, seed: seed_of("qpd", 0) };
    let set = generate_subexperiments_for(c, plan, observables, cfg.budget.q_max, mode)?;
    let outcomes = set
        .unique_circuits()
        .enumerate()
        .map(|(i, circ)| run_shots(circ, &cfg.noise, cfg.shots_per_subexperiment, seed_of("shots", i)))
        .collect::<Result<Vec<_>>>()?;
    let estimates = set.reconstruct(&outcomes)?;
    Ok((estimates, set.n_unique(), set.n_unique() as u64 * cfg.shots_per_subexperiment))
}

/// One (family, width, seed, strategy) run with the ideal values supplied.
/// Failures become skipped records.
pub fn run_one_with_ideals(family: Family, n: usize, seed: u64, strategy: Strategy, cfg: &SweepConfig, ideals: &[f64]) -> RunRecord {
    let rec = RunRecord::new(family, n, seed, strategy);
    match run_inner(rec.clone(), cfg, ideals) {
        Ok(r) => r,
        Err(e) => rec.skip(format!("error: {e}")),
    }
}

fn run_inner(mut rec: RunRecord, cfg: &SweepConfig, ideals: &[f64]) -> Result<RunRecord> {
    let (family, n, seed, strategy) = (rec.family, rec.n_qubits, rec.seed, rec.strategy);
    let c = cfg.circuit(family, n, seed)?;
    let observables = cfg.observables(n)?;
    rec.observables = observables.iter().map(|o| o.name.clone()).collect();
    rec.ideal_values = ideals.to_vec();
    let (ns, ss) = (n.to_string(), seed.to_string());
    let seed_for = |tag: Strategy, what: &str, i: usize| {
        derive_seed(cfg.master_seed, &[family.as_str(), &ns, &ss, tag.as_str(), what, &i.to_string()])
    };

    let outcome = match strategy {
        Strategy::NoCut => None,
        Strategy::Fitv3 => Some(fitv3_select(&c, &cfg.budget, &cfg.weights)?),
        Strategy::Auto => Some(auto_select(&c, &cfg.budget, &cfg.presets)?),
    };
    if let Some(o) = &outcome {
        rec.candidates = o.top_candidates.clone();
        if o.skipped {
            return Ok(rec.skip(o.skip_reason.clone().unwrap_or_default()));
        }
    }
    let plan = outcome.and_then(|o| o.plan);
    let estimates = match &plan {
        // an empty plan runs exactly the baseline, with the baseline's seeds
        None => {
            let (est, shots) =
                no_cut_estimates(&c, &observables, &cfg.noise, cfg.baseline_shots(), |i| seed_for(Strategy::NoCut, "shots", i))?;
            rec.total_shots = shots;
            est
        }
        Some(plan) => {
            let (est, _, shots) = cut_estimates(&c, plan, &observables, cfg, |what, i| seed_for(strategy, what, i))?;
            rec.n_cuts = plan.n_cuts();
            rec.overhead_estimate = plan.overhead_estimate;
            rec.n_subexperiments = plan.n_subexperiments;
            rec.total_shots = shots;
            est
        }
    };
    rec.per_observable_errors = estimates.iter().zip(ideals).map(|(e, i)| (e - i).abs()).collect();
    rec.mae = Some(mae(&estimates, ideals)?);
    rec.estimates = estimates;
    Ok(rec)
}

/// The subexperiments a cut strategy would execute for this cell, or `None`
/// when it keeps the nominal circuit or skips.
pub fn subexperiment_set(family: Family, n: usize, seed: u64, strategy: Strategy, cfg: &SweepConfig) -> Result<Option<SubexperimentSet>> {
    let c = cfg.circuit(family, n, seed)?;
    let outcome = match strategy {
        Strategy::NoCut => return Ok(None),
        Strategy::Fitv3 => fitv3_select(&c, &cfg.budget, &cfg.weights)?,
        Strategy::Auto => auto_select(&c, &cfg.budget, &cfg.presets)?,
    };
    let Some(plan) = outcome.plan else { return Ok(None) };
    let qpd_seed = derive_seed(cfg.master_seed, &[family.as_str(), &n.to_string(), &seed.to_string(), strategy.as_str(), "qpd", "0"]);
    let mode = ReconstructionMode::Sampled { n_samples: cfg.reconstruction_samples, seed: qpd_seed };
    generate_subexperiments_for(&c, &plan, &cfg.observables(n)?, cfg.budget.q_max, mode).map(Some)
}

/// Noiseless expectation of each configured observable.
pub fn ideal_values(family: Family, n: usize, seed: u64, cfg: &SweepConfig) -> Result<Vec<f64>> {
    let c = cfg.circuit(family, n, seed)?;
    let state = simulate_exact(&c)?;
    cfg.observables(n)?.iter().map(|o| ideal_expectation(&state, o)).collect()
}

pub fn run_one(family: Family, n: usize, seed: u64, strategy: Strategy, cfg: &SweepConfig) -> RunRecord {
    match ideal_values(family, n, seed, cfg) {
        Ok(ideals) => run_one_with_ideals(family, n, seed, strategy, cfg, &ideals),
        Err(e) => RunRecord::new(family, n, seed, strategy).skip(format!("error: {e}")),
    }
}

/// All strategies for one (family, width, seed) cell. A fitv3 run that keeps
/// the nominal circuit reuses the baseline record, which is what it would
/// compute anyway.
fn run_cell(family: Family, n: usize, seed: u64, cfg: &SweepConfig) -> Vec<RunRecord> {
    let ideals = match ideal_values(family, n, seed, cfg) {
        Ok(v) => v,
        Err(e) => {
            return cfg
                .strategies
                .iter()
                .map(|&s| RunRecord::new(family, n, seed, s).skip(format!("error: {e}")))
                .collect()
        }
    };
    let mut baseline: Option<RunRecord> = None;
    let mut baseline_for = |cfg: &SweepConfig| {
        baseline
            .get_or_insert_with(|| run_one_with_ideals(family, n, seed, Strategy::NoCut, cfg, &ideals))
            .clone()
    };
    cfg.strategies
        .iter()
        .map(|&s| match s {
            Strategy::NoCut => baseline_for(cfg),
            Strategy::Fitv3 => match cfg.circuit(family, n, seed).and_then(|c| fitv3_select(&c, &cfg.budget, &cfg.weights)) {
                Ok(o) if o.plan.is_none() => {
                    let mut r = baseline_for(cfg);
                    r.strategy = Strategy::Fitv3;
                    r.candidates = o.top_candidates;
                    r
                }
                _ => run_one_with_ideals(family, n, seed, s, cfg, &ideals),
            },
            Strategy::Auto => run_one_with_ideals(family, n, seed, s, cfg, &ideals),
        })
        .collect()
}

/// Runs the full sweep on `workers` threads. Records come back sorted by
/// (family, width, seed, strategy) whatever the schedule.
pub fn run_sweep(cfg: &SweepConfig, workers: usize) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &f in &cfg.families {
        for &n in &cfg.widths {
            for &s in &cfg.seeds {
                cells.push((f, n, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CutError::InvalidArgument(e.to_string()))?;
    let mut records: Vec<RunRecord> =
        pool.install(|| cells.par_iter().flat_map_iter(|&(f, n, s)| run_cell(f, n, s, cfg)).collect());
    records.sort_by_key(RunRecord::sort_key);
    Ok(records)
}

// ---------------------------------------------------------------------------
// summaries

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Metric {
    Value(f64),
    Missing(String),
}

impl Metric {
    fn from(r: Result<f64>) -> Metric {
        match r {
            Ok(v) => Metric::Value(v),
            Err(_) => Metric::Missing(NO_MATCHED_PAIRS.into()),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Missing(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyStats {
    pub runs: usize,
    pub skipped: usize,
    pub mean_mae: Option<f64>,
    pub median_mae: Option<f64>,
    pub skip_rate: f64,
    /// Completed runs whose MAE exceeds `HIGH_ERROR_FACTOR` × the matched
    /// no-cut MAE, as a fraction of all runs.
    pub high_error_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum WidthTable {
    Table(BTreeMap<usize, Metric>),
    Missing(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    /// family → strategy → stats
    pub family_mae: BTreeMap<String, BTreeMap<String, FamilyStats>>,
    /// family → method → mean ΔMAE against no_cut
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_delta_mae: Option<BTreeMap<String, BTreeMap<String, Metric>>>,
    /// family → method → width → ΔMAE
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_mae_by_width: Option<BTreeMap<String, BTreeMap<String, WidthTable>>>,
    /// family → method → width → win rate
    #[serde(skip_serializing_if = "Option::is_none")]
    pub win_rate_by_width: Option<BTreeMap<String, BTreeMap<String, WidthTable>>>,
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Summary tables from records alone (no simulation).
pub fn summarize(records: &[RunRecord]) -> Summary {
    let mut groups: BTreeMap<Family, BTreeMap<Strategy, Vec<RunRecord>>> = BTreeMap::new();
    for r in records {
        groups.entry(r.family).or_default().entry(r.strategy).or_default().push(r.clone());
    }
    let has_methods = records.iter().any(|r| r.strategy != Strategy::NoCut);
    let has_baseline = records.iter().any(|r| r.strategy == Strategy::NoCut);
    let mut family_mae = BTreeMap::new();
    let (mut fam_delta, mut delta_w, mut win_w) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for (family, by_strategy) in &groups {
        let baseline = by_strategy.get(&Strategy::NoCut).cloned().unwrap_or_default();
        let base_mae: BTreeMap<_, _> = baseline.iter().filter_map(|r| Some((r.key(), r.mae?))).collect();
        let mut stats = BTreeMap::new();
        let (mut fd, mut dw, mut ww) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
        for (strategy, runs) in by_strategy {
            let mut maes: Vec<f64> = runs.iter().filter_map(|r| r.mae).collect();
            let skipped = runs.iter().filter(|r| r.skipped).count();
            let mean = (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64);
            let high_error_rate = has_baseline.then(|| {
                runs.iter()
                    .filter(|r| matches!((r.mae, base_mae.get(&r.key())), (Some(m), Some(b)) if m > HIGH_ERROR_FACTOR * b))
                    .count() as f64
                    / runs.len() as f64
            });
            stats.insert(
                strategy.to_string(),
                FamilyStats {
                    runs: runs.len(),
                    skipped,
                    mean_mae: mean,
                    median_mae: median(&mut maes),
                    skip_rate: skipped as f64 / runs.len() as f64,
                    high_error_rate,
                },
            );
            if *strategy == Strategy::NoCut {
                continue;
            }
            fd.insert(strategy.to_string(), Metric::from(delta_mae(runs, &baseline)));
            let mut widths: Vec<usize> = runs.iter().map(|r| r.n_qubits).collect();
            widths.sort_unstable();
            widths.dedup();
            let mut dtab = BTreeMap::new();
            let mut wtab = BTreeMap::new();
            for n in widths {
                let at_n: Vec<RunRecord> = runs.iter().filter(|r| r.n_qubits == n).cloned().collect();
                dtab.insert(n, Metric::from(delta_mae(&at_n, &baseline)));
                wtab.insert(n, Metric::from(win_rate(runs, &baseline, n)));
            }
            let table = |t: BTreeMap<usize, Metric>| {
                if t.values().all(|m| m.value().is_none()) {
                    WidthTable::Missing(NO_MATCHED_PAIRS.into())
                } else {
                    WidthTable::Table(t)
                }
            };
            dw.insert(strategy.to_string(), table(dtab));
            ww.insert(strategy.to_string(), table(wtab));
        }
        family_mae.insert(family.to_string(), stats);
        if !fd.is_empty() {
            fam_delta.insert(family.to_string(), fd);
            delta_w.insert(family.to_string(), dw);
            win_w.insert(family.to_string(), ww);
        }
    }
    Summary {
        family_mae,
        family_delta_mae: has_methods.then_some(fam_delta),
        delta_mae_by_width: has_methods.then_some(delta_w),
        win_rate_by_width: has_methods.then_some(win_w),
    }
}

// ---------------------------------------------------------------------------
// persistence

pub const CSV_HEADER: [&str; 11] = [
    "family",
    "n_qubits",
    "seed",
    "strategy",
    "skipped",
    "skip_reason",
    "mae",
    "n_cuts",
    "overhead_estimate",
    "n_subexperiments",
    "total_shots",
];

pub fn write_csv<W: std::io::Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CutError::Csv(e.to_string(), 0);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.family.to_string(),
            r.n_qubits.to_string(),
            r.seed.to_string(),
            r.strategy.to_string(),
            r.skipped.to_string(),
            r.skip_reason.clone().unwrap_or_default(),
            r.mae.map(|m| m.to_string()).unwrap_or_default(),
            r.n_cuts.to_string(),
            r.overhead_estimate.to_string(),
            r.n_subexperiments.to_string(),
            r.total_shots.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a results CSV. Errors name the 1-based file line.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers().map_err(|e| CutError::Csv(e.to_string(), 1))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(CutError::Csv("unexpected header".into(), 1));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| CutError::Csv(e.to_string(), e.position().map_or(0, |p| p.line())))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| CutError::Csv(format!("bad {what}"), line);
        let num = |i: usize, what: &str| row[i].parse::<u64>().map_err(|_| bad(what));
        let mut r = RunRecord::new(
            row[0].parse().map_err(|_| bad("family"))?,
            num(1, "n_qubits")? as usize,
            num(2, "seed")?,
            row[3].parse().map_err(|_| bad("strategy"))?,
        );
        r.skipped = row[4].parse().map_err(|_| bad("skipped"))?;
        r.skip_reason = (!row[5].is_empty()).then(|| row[5].to_string());
        r.mae = if row[6].is_empty() { None } else { Some(row[6].parse().map_err(|_| bad("mae"))?) };
        if r.mae.is_some() == r.skipped {
            return Err(bad("mae/skipped combination"));
        }
        r.n_cuts = num(7, "n_cuts")? as usize;
        r.overhead_estimate = row[8].parse().map_err(|_| bad("overhead_estimate"))?;
        r.n_subexperiments = num(9, "n_subexperiments")?;
        r.total_shots = num(10, "total_shots")?;
        out.push(r);
    }
    Ok(out)
}

/// Writes `results.csv`, `summary.json` and one `runs/<cell>.json` per record.
pub fn write_outputs(dir: &Path, records: &[RunRecord]) -> Result<Summary> {
    fs::create_dir_all(dir.join("runs"))?;
    write_csv(fs::File::create(dir.join("results.csv"))?, records)?;
    for r in records {
        let name = format!("{}_{}_{}_{}.json", r.family, r.n_qubits, r.seed, r.strategy);
        fs::write(dir.join("runs").join(name), serde_json::to_string_pretty(r)?)?;
    }
    let summary = summarize(records);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(family: Family, n: usize, seed: u64, strategy: Strategy, m: Option<f64>) -> RunRecord {
        let mut r = RunRecord::new(family, n, seed, strategy);
        r.mae = m;
        r.skipped = m.is_none();
        r
    }

    #[test]
    fn mae_examples() {
        assert!((mae(&[0.5, -0.2], &[0.4, -0.1]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(mae(&[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.0);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn delta_and_win_rate() {
        let m = vec![rec(Family::Ghz, 4, 1, Strategy::Fitv3, Some(0.12))];
        let b = vec![rec(Family::Ghz, 4, 1, Strategy::NoCut, Some(0.10))];
        assert!((delta_mae(&m, &b).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(delta_mae(&b, &b).unwrap(), 0.0);
        let method: Vec<_> = (0..10).map(|s| rec(Family::Ghz, 4, s, Strategy::Fitv3, if s < 3 { None } else { Some(0.2) })).collect();
        let base: Vec<_> = (0..10).map(|s| rec(Family::Ghz, 4, s, Strategy::NoCut, Some(0.05 * s as f64))).collect();
        // pairs 3..10; seed 4 is an exact tie and does not count as a win
        let expect = (3..10).map(|s| 0.2 - 0.05 * s as f64).sum::<f64>() / 7.0;
        assert!((delta_mae(&method, &base).unwrap() - expect).abs() < 1e-12);
        assert!((win_rate(&method, &base, 4).unwrap() - 5.0 / 7.0).abs() < 1e-15);
        assert_eq!(win_rate(&b, &b, 4).unwrap(), 0.0);
        assert!(matches!(win_rate(&method, &base, 6), Err(CutError::EmptyComparison)));
        let skipped = vec![rec(Family::Ghz, 4, 1, Strategy::Fitv3, None)];
        assert!(matches!(delta_mae(&skipped, &b), Err(CutError::EmptyComparison)));
    }

    #[test]
    fn seeds_are_keyed() {
        let a = derive_seed(1, &["ghz", "4", "1", "no_cut"]);
        assert_eq!(a, derive_seed(1, &["ghz", "4", "1", "no_cut"]));
        assert_ne!(a, derive_seed(2, &["ghz", "4", "1", "no_cut"]));
        assert_ne!(derive_seed(1, &["ab", "c"]), derive_seed(1, &["a", "bc"]));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut r = rec(Family::Qft, 6, 3, Strategy::Auto, None);
        r.skip_reason = Some("overhead_exceeded".into());
        let records = vec![rec(Family::Ghz, 4, 1, Strategy::NoCut, Some(0.1 + 0.2)), r];
        let mut buf = Vec::new();
        write_csv(&mut buf, &records).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, records);
        let text = String::from_utf8(buf).unwrap().replace("qft", "bogus");
        match read_csv(text.as_bytes()) {
            Err(CutError::Csv(_, line)) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_markers() {
        let base = vec![rec(Family::Ghz, 4, 1, Strategy::NoCut, Some(0.1))];
        assert!(summarize(&base).win_rate_by_width.is_none());
        let mut all = base.clone();
        all.push(rec(Family::Ghz, 4, 1, Strategy::Fitv3, None));
        let s = summarize(&all);
        let w = &s.win_rate_by_width.unwrap()["ghz"]["fitv3"];
        assert_eq!(*w, WidthTable::Missing(NO_MATCHED_PAIRS.into()));
    }

    #[test]
    fn no_cut_ignores_ideal_values() {
        let cfg = SweepConfig { baseline_shots: Some(2000), ..Default::default() };
        let real = run_one(Family::Ghz, 4, 1, Strategy::NoCut, &cfg);
        let fake = run_one_with_ideals(Family::Ghz, 4, 1, Strategy::NoCut, &cfg, &[42.0]);
        assert_eq!(real.estimates, fake.estimates);
        assert!((fake.mae.unwrap() - (42.0 - fake.estimates[0]).abs()).abs() < 1e-12);
    }

    #[test]
    fn ghz8_fitv3_record() {
        let cfg = SweepConfig::default();
        let r = run_one(Family::Ghz, 8, 1, Strategy::Fitv3, &cfg);
        assert!(!r.skipped, "{:?}", r.skip_reason);
        assert_eq!(r.n_cuts, 1);
        assert_eq!(r.overhead_estimate, 9.0);
        let set = subexperiment_set(Family::Ghz, 8, 1, Strategy::Fitv3, &cfg).unwrap().unwrap();
        assert_eq!(r.total_shots, set.n_unique() as u64 * cfg.shots_per_subexperiment);
        let mean = r.per_observable_errors.iter().sum::<f64>() / r.per_observable_errors.len() as f64;
        assert!((r.mae.unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn noiseless_no_cut_ghz_is_accurate() {
        let cfg = SweepConfig { baseline_shots: Some(1_000_000), noise: NoiseProfile::noiseless(), ..Default::default() };
        let r = run_one(Family::Ghz, 4, 1, Strategy::NoCut, &cfg);
        assert!(r.mae.unwrap() < 0.005);
    }
}
