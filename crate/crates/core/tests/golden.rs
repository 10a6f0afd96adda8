//! Regression locks on deterministic outputs. Set `UPDATE_GOLDEN=1` to
//! rewrite the files after an intentional change.

use std::path::PathBuf;

use cutbench_core::circuit::random_circuit;
use cutbench_core::cutfind::{auto_select, default_presets};
use cutbench_core::harness::{run_sweep, write_csv};
use cutbench_core::{CutBudget, Family, Strategy, SweepConfig};

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs");
}

#[test]
fn random_circuit_text() {
    check("random_4_3_7.txt", &random_circuit(4, 3, 7).unwrap().to_text());
}

#[test]
fn dense_random_circuit_skips_on_overhead() {
    let c = random_circuit(8, 8, 3).unwrap();
    let out = auto_select(&c, &CutBudget::new(2, 4, 81.0).unwrap(), &default_presets()).unwrap();
    assert!(out.skipped);
    assert_eq!(out.skip_reason.as_deref(), Some("overhead_exceeded"));
    let lines: Vec<String> = out
        .top_candidates
        .iter()
        .map(|c| {
            let locs: Vec<String> = c.locations.iter().map(ToString::to_string).collect();
            format!("{} cuts={} overhead={} widths={:?}", locs.join(" "), c.n_cuts(), c.overhead, c.partitions)
        })
        .collect();
    check("random_8_8_3_auto.txt", &(lines.join("\n") + "\n"));
}

#[test]
fn small_sweep_csv() {
    let cfg = SweepConfig {
        families: vec![Family::Ghz, Family::Random],
        widths: vec![4, 6],
        seeds: vec![1, 2],
        strategies: Strategy::ALL.to_vec(),
        shots_per_subexperiment: 64,
        reconstruction_samples: 16,
        ..Default::default()
    };
    let mut out = Vec::new();
    write_csv(&mut out, &run_sweep(&cfg, 2).unwrap()).unwrap();
    check("small_sweep.csv", &String::from_utf8(out).unwrap());
}
