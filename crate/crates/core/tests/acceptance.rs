//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Every criterion runs at its stated parameters. The binary exits 0 once all
//! criteria have been evaluated, whatever their verdict; set
//! `MCRT_ACCEPTANCE_STRICT=1` to exit 2 when any criterion fails. A panic or
//! execution error still fails the run. `MCRT_ACCEPTANCE_ONLY=3,5` restricts
//! the run to the listed criteria.

use std::f64::consts::SQRT_2;
use std::process::ExitCode;
use std::time::Instant;

use mcrt_core::experiment::{run_experiment, ExperimentConfig, ExperimentKind, Model, Report};
use mcrt_core::map::face_census;
use mcrt_core::seed::derive_seed;
use mcrt_core::{build_adjacency, build_adjacency_bruteforce, generate_walk, planar_order, MatedCrtGraph, WalkParams};

const GAMMAS: [(&str, f64); 4] = [
    ("1", 1.0),
    ("sqrt(4/3)", 1.154_700_538_379_251_5),
    ("sqrt(2)", SQRT_2),
    ("sqrt(8/3)", 1.632_993_161_855_452),
];
const MASTER_SEED: u64 = 20_240_601;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn from_report(report: &Report) -> Verdict {
    let mut parts: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("[{}] {}: {}", if c.passed { "ok" } else { "x" }, c.name, c.detail))
        .collect();
    let aborted: Vec<String> = report
        .samples
        .iter()
        .filter(|s| !s.valid)
        .map(|s| format!("sample {} aborted: {}", s.index, s.reason.as_deref().unwrap_or("?")))
        .collect();
    if let Some(first) = aborted.first() {
        parts.push(format!("{} aborted samples, first: {first}", aborted.len()));
    }
    verdict(report.passed && report.complete, parts.join("; "))
}

fn config(kind: ExperimentKind, gamma: f64, window_n: u64, samples: usize, salt: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.gamma = gamma;
    cfg.window_n = window_n;
    cfg.samples = samples;
    cfg.seed = derive_seed(MASTER_SEED, salt);
    cfg
}

fn sorted_labeled(m: &MatedCrtGraph) -> Vec<(i64, i64, u8)> {
    let mut v: Vec<_> = m.labeled_edges().into_iter().map(|(a, b, l)| (a, b, l as u8)).collect();
    v.sort_unstable();
    v
}

fn map_oracle() -> Verdict {
    let mut mismatches = Vec::new();
    let mut total = 0;
    for (gi, &(name, gamma)) in GAMMAS.iter().enumerate() {
        for i in 0..50u64 {
            let seed = derive_seed(MASTER_SEED, 100 + 64 * gi as u64 + i);
            let walk = generate_walk(&WalkParams::new(gamma, 2000, 1, seed).unwrap()).unwrap();
            let fast = build_adjacency(&walk).unwrap();
            let brute = build_adjacency_bruteforce(&walk).unwrap();
            total += 1;
            if sorted_labeled(&fast) != sorted_labeled(&brute) {
                mismatches.push(format!("gamma {name} seed {seed}"));
            }
        }
    }
    verdict(mismatches.is_empty(), format!("{} of {total} walks differ {:?}", mismatches.len(), mismatches))
}

fn resistance_triple() -> Verdict {
    let cfg = config(ExperimentKind::ResistanceTriple, SQRT_2, 0, 1, 2);
    from_report(&run_experiment(&cfg).unwrap().report)
}

fn green_loglaw() -> Verdict {
    let cfg = config(ExperimentKind::GreenLoglaw, SQRT_2, 1_000_000, 20, 3);
    from_report(&run_experiment(&cfg).unwrap().report)
}

fn spectral_dimension() -> Verdict {
    let cfg = config(ExperimentKind::Specdim, SQRT_2, 1_000_000, 10, 4);
    let maps = from_report(&run_experiment(&cfg).unwrap().report);
    let mut lattice = config(ExperimentKind::Specdim, SQRT_2, 1_000_000, 1, 4);
    lattice.model = Model::SquareLattice;
    lattice.lattice_side = 1601;
    lattice.specdim.band = [1.9, 2.1];
    let control = from_report(&run_experiment(&lattice).unwrap().report);
    verdict(
        maps.passed && control.passed,
        format!("maps: {}; lattice control: {}", maps.detail, control.detail),
    )
}

fn reciprocity() -> Verdict {
    let mut cfg = config(ExperimentKind::Displacement, GAMMAS[3].1, 8_000_000, 10, 5);
    cfg.displacement.t_min = 4;
    cfg.displacement.t_max = 65_536;
    cfg.displacement.walkers = 10_000;
    cfg.displacement.volume_r_max = 64;
    from_report(&run_experiment(&cfg).unwrap().report)
}

fn exit_time() -> Verdict {
    let mut small = config(ExperimentKind::ExitTime, SQRT_2, 1000, 0, 6);
    small.exit_time.small_instances = 100;
    let mut parts = Vec::new();
    let mut passed = true;
    let v = from_report(&run_experiment(&small).unwrap().report);
    passed &= v.passed;
    parts.push(format!("small graphs: {}", v.detail));
    for (gi, &(name, gamma)) in GAMMAS.iter().enumerate() {
        let mut cfg = config(ExperimentKind::ExitTime, gamma, 4_000_000, 10, 60 + gi as u64);
        cfg.exit_time.small_instances = 0;
        cfg.exit_time.radii = vec![16, 64];
        let v = from_report(&run_experiment(&cfg).unwrap().report);
        passed &= v.passed;
        parts.push(format!("gamma {name}: {}", v.detail));
    }
    verdict(passed, parts.join(" | "))
}

fn appendix_a() -> Verdict {
    let cfg = config(ExperimentKind::AppendixA, SQRT_2, 0, 1, 7);
    from_report(&run_experiment(&cfg).unwrap().report)
}

fn triangulation() -> Verdict {
    let mut bad_faces = 0;
    let mut maps = 0;
    let mut degrees = Vec::new();
    let mut passed = true;
    for (gi, &(name, gamma)) in GAMMAS.iter().enumerate() {
        for i in 0..20u64 {
            let seed = derive_seed(MASTER_SEED, 800 + 32 * gi as u64 + i);
            let m = build_adjacency(&generate_walk(&WalkParams::new(gamma, 500, 1, seed).unwrap()).unwrap()).unwrap();
            let census = face_census(&m, &planar_order(&m).unwrap());
            bad_faces += census.inner_non_triangles;
            maps += 1;
        }
        let seed = derive_seed(MASTER_SEED, 900 + gi as u64);
        let m = build_adjacency(&generate_walk(&WalkParams::new(gamma, 100_000, 1, seed).unwrap()).unwrap()).unwrap();
        let d = m.bulk_mean_degree(m.vertex_count() / 10).unwrap();
        passed &= (5.85..=6.15).contains(&d);
        degrees.push(format!("gamma {name}: {d:.4}"));
    }
    passed &= bad_faces == 0;
    verdict(
        passed,
        format!("{bad_faces} non-triangular inner faces over {maps} maps; bulk mean degree {}", degrees.join(", ")),
    )
}

fn transfer() -> Verdict {
    let cfg = config(ExperimentKind::TransferSweep, SQRT_2, 0, 1, 9);
    from_report(&run_experiment(&cfg).unwrap().report)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("map construction matches brute force", map_oracle),
        ("resistance triple equivalence", resistance_triple),
        ("Green function log law", green_loglaw),
        ("spectral dimension 2", spectral_dimension),
        ("displacement-volume reciprocity", reciprocity),
        ("exit-time inequality", exit_time),
        ("lazy walk, coupling and monotonicity suite", appendix_a),
        ("triangulation structure", triangulation),
        ("energy transfer inequality", transfer),
    ];
    let only: Option<Vec<usize>> = std::env::var("MCRT_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("MCRT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        println!(
            "{} criterion {n}: {name} ({:.1} s) {}",
            if v.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.passed {
            failed.push(n);
        }
    }
    println!("acceptance: {} failed {:?}", failed.len(), failed);
    if strict && !failed.is_empty() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
