use cutbench_core::circuit::{interaction_graph, strip_measurements};
use cutbench_core::cutfind::{auto_select, default_presets, feasibility_check, fitv3_select};
use cutbench_core::harness::{delta_mae, mae, read_csv, win_rate, CSV_HEADER};
use cutbench_core::observables::{ideal_expectation, z_magnetization};
use cutbench_core::qpd::{generate_subexperiments_for, CutPlan};
use cutbench_core::simulator::simulate_exact;
use cutbench_core::{
    Circuit, CutBudget, CutLocation, Gate, Observable, PauliString, PrepState, ReconstructionMode, ScoreWeights,
    StateVector,
};
use proptest::prelude::*;

fn gate_strategy(n: usize) -> impl Strategy<Value = Gate> {
    let q = 0..n;
    let pair = (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n));
    let angle = -3.2f64..3.2;
    prop_oneof![
        q.clone().prop_map(Gate::h),
        q.clone().prop_map(Gate::x),
        q.clone().prop_map(Gate::y),
        q.clone().prop_map(Gate::s),
        q.clone().prop_map(Gate::t),
        (q.clone(), angle.clone()).prop_map(|(q, t)| Gate::rx(q, t)),
        (q.clone(), angle.clone()).prop_map(|(q, t)| Gate::ry(q, t)),
        (q, angle.clone()).prop_map(|(q, t)| Gate::rz(q, t)),
        pair.clone().prop_map(|(a, b)| Gate::cx(a, b)),
        pair.clone().prop_map(|(a, b)| Gate::cz(a, b)),
        (pair.clone(), angle).prop_map(|((a, b), t)| Gate::cp(a, b, t)),
        pair.prop_map(|(a, b)| Gate::swap(a, b)),
    ]
}

fn circuit_strategy(max_qubits: usize, max_gates: usize) -> impl Strategy<Value = Circuit> {
    (2..=max_qubits).prop_flat_map(move |n| {
        prop::collection::vec(gate_strategy(n), 1..=max_gates).prop_map(move |gates| {
            let mut c = Circuit::new(n, "prop");
            c.gates = gates;
            c
        })
    })
}

fn all_z(n: usize) -> Vec<Observable> {
    let mut obs = vec![z_magnetization(n)];
    let zz: String = "Z".repeat(n);
    obs.push(Observable::new(vec![PauliString::from_label(&zz, 1.0).unwrap()], "ZZ").unwrap());
    let mixed: String = (0..n).map(|i| ['X', 'Y', 'Z'][i % 3]).collect();
    obs.push(Observable::new(vec![PauliString::from_label(&mixed, 1.0).unwrap()], "mixed").unwrap());
    obs
}

fn csv_row(family: &str, n: usize, seed: u64, strategy: &str, mae: Option<f64>) -> String {
    match mae {
        Some(m) => format!("{family},{n},{seed},{strategy},false,,{m},1,9,6,1200\n"),
        None => format!("{family},{n},{seed},{strategy},true,width_violation,,0,0,0,0\n"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_round_trip(c in circuit_strategy(6, 30)) {
        let back = Circuit::from_text(&c.to_text()).unwrap();
        prop_assert_eq!(back.n_qubits, c.n_qubits);
        prop_assert_eq!(back.gates.len(), c.gates.len());
        for (a, b) in back.gates.iter().zip(&c.gates) {
            prop_assert_eq!(a.kind, b.kind);
            prop_assert_eq!(a.qubits(), b.qubits());
            match (a.angle, b.angle) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn interaction_multiplicities_count_two_qubit_gates(c in circuit_strategy(6, 30)) {
        let g = interaction_graph(&c);
        let total: usize = g.edges.iter().map(|e| e.multiplicity()).sum();
        prop_assert_eq!(total, c.two_qubit_gate_indices().len());
        for e in &g.edges {
            prop_assert!(e.a < e.b);
        }
    }

    #[test]
    fn strip_is_idempotent(c in circuit_strategy(5, 20), measured in prop::collection::vec(any::<bool>(), 5)) {
        let mut m = c.clone();
        for (q, &on) in measured.iter().enumerate().take(c.n_qubits) {
            if on {
                m.push(Gate::measure(q)).unwrap();
            }
        }
        let once = strip_measurements(&m);
        prop_assert!(!once.has_measurements());
        prop_assert_eq!(strip_measurements(&once), once.clone());
        prop_assert_eq!(once.gates, c.gates);
    }

    #[test]
    fn gates_preserve_norm(c in circuit_strategy(6, 40)) {
        let mut s = StateVector::zero(c.n_qubits);
        for g in &c.gates {
            s.apply_gate(g).unwrap();
        }
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_gate_cuts_are_exact(c in circuit_strategy(5, 14), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..=2)) {
        let two = c.two_qubit_gate_indices();
        prop_assume!(!two.is_empty());
        let mut locs: Vec<CutLocation> = picks.iter().map(|p| CutLocation::GateCut(two[p.index(two.len())])).collect();
        locs.sort();
        locs.dedup();
        let plan = CutPlan::new(&c, locs).unwrap();
        let obs = all_z(c.n_qubits);
        let ideal: Vec<f64> = {
            let s = simulate_exact(&c).unwrap();
            obs.iter().map(|o| ideal_expectation(&s, o).unwrap()).collect()
        };
        let set = generate_subexperiments_for(&c, &plan, &obs, c.n_qubits, ReconstructionMode::Exact).unwrap();
        let got = set.reconstruct(&set.exact_outcomes().unwrap()).unwrap();
        for (g, i) in got.iter().zip(&ideal) {
            prop_assert!((g - i).abs() < 1e-8, "{} vs {}", g, i);
        }
    }

    #[test]
    fn random_wire_cut_is_exact(c in circuit_strategy(4, 10), q in 0usize..4, at in any::<prop::sample::Index>()) {
        let q = q % c.n_qubits;
        let mut c = c;
        c.gates.insert(0, Gate::rx(q, 0.2));
        c.push(Gate::ry(q, 0.3)).unwrap();
        let on_q: Vec<usize> = (0..c.gates.len()).filter(|&i| c.gates[i].acts_on(q)).collect();
        let after = on_q[at.index(on_q.len() - 1)];
        let plan = CutPlan::new(&c, vec![CutLocation::WireCut { qubit: q, after_gate: after }]).unwrap();
        let obs = all_z(c.n_qubits);
        let s = simulate_exact(&c).unwrap();
        let set = generate_subexperiments_for(&c, &plan, &obs, c.n_qubits + 1, ReconstructionMode::Exact).unwrap();
        let got = set.reconstruct(&set.exact_outcomes().unwrap()).unwrap();
        for (g, o) in got.iter().zip(&obs) {
            let i = ideal_expectation(&s, o).unwrap();
            prop_assert!((g - i).abs() < 1e-8, "{} vs {}", g, i);
        }
    }

    #[test]
    fn auto_outcome_is_total(c in circuit_strategy(8, 16), q_max in 2usize..6, cap_exp in 1i32..9) {
        let budget = CutBudget::new(2, q_max, 9f64.powi(cap_exp)).unwrap();
        let out = auto_select(&c, &budget, &default_presets()).unwrap();
        if out.skipped {
            prop_assert!(out.plan.is_none());
            let reason = out.skip_reason.unwrap();
            prop_assert!(
                ["width_violation", "overhead_exceeded", "disconnected", "no preset configurations", "no preset produced a valid partition"].contains(&reason.as_str()),
                "{}", reason
            );
        } else {
            let plan = out.plan.unwrap();
            prop_assert_eq!(feasibility_check(&plan, &budget), None);
        }
    }

    #[test]
    fn win_rate_is_a_fraction(maes in prop::collection::vec((prop::option::of(0.0f64..1.0), 0.0f64..1.0), 1..12)) {
        let mut text = CSV_HEADER.join(",") + "\n";
        for (seed, (m, b)) in maes.iter().enumerate() {
            text += &csv_row("ghz", 6, seed as u64, "no_cut", Some(*b));
            text += &csv_row("ghz", 6, seed as u64, "fitv3", *m);
        }
        let records = read_csv(text.as_bytes()).unwrap();
        let (base, method): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.strategy.as_str() == "no_cut");
        let kept: Vec<(f64, f64)> = maes.iter().filter_map(|(m, b)| m.map(|m| (m, *b))).collect();
        match win_rate(&method, &base, 6) {
            Ok(w) => {
                prop_assert!((0.0..=1.0).contains(&w));
                let wins = kept.iter().filter(|(m, b)| m < b).count();
                prop_assert!((w - wins as f64 / kept.len() as f64).abs() < 1e-12);
                // skipped runs leave the denominator
                let d = delta_mae(&method, &base).unwrap();
                let want = kept.iter().map(|(m, b)| m - b).sum::<f64>() / kept.len() as f64;
                prop_assert!((d - want).abs() < 1e-9);
            }
            Err(_) => prop_assert!(kept.is_empty()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fitv3_respects_budget(c in circuit_strategy(7, 10), max_cuts in 0usize..4, q_max in 2usize..6, cap_exp in 0i32..5) {
        let budget = CutBudget::new(max_cuts, q_max, 9f64.powi(cap_exp)).unwrap();
        let out = fitv3_select(&c, &budget, &ScoreWeights::default()).unwrap();
        prop_assert!(!out.skipped);
        if let Some(plan) = out.plan {
            prop_assert!(plan.n_cuts() <= max_cuts);
            prop_assert!(plan.max_width() <= q_max);
            prop_assert!(plan.overhead_estimate <= budget.overhead_cap);
            prop_assert!(plan.partitions.len() >= 2);
            prop_assert!(plan.locations.iter().all(CutLocation::is_gate_cut));
        }
    }
}

#[test]
fn mae_matches_per_observable_mean() {
    let est = [0.1, -0.3, 0.95];
    let ideal = [0.0, 0.0, 1.0];
    let m = mae(&est, &ideal).unwrap();
    assert!((m - (0.1 + 0.3 + 0.05) / 3.0).abs() < 1e-15);
}

#[test]
fn prep_round_trips_through_text() {
    let mut c = Circuit::new(2, "preps");
    for s in [PrepState::Zero, PrepState::One, PrepState::Plus, PrepState::Minus, PrepState::PlusI, PrepState::MinusI] {
        c.push(Gate::prep(1, s)).unwrap();
    }
    assert_eq!(Circuit::from_text(&c.to_text()).unwrap().gates, c.gates);
}
