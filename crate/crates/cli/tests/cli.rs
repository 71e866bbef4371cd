use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mcrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcrt"))
        .args(args)
        .env("MCRT_THREADS", "2")
        .output()
        .expect("spawn mcrt")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_build_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let walk = dir.path().join("w.bin");
    let graph = dir.path().join("g.bin");
    let edges = dir.path().join("g.txt");
    let out = mcrt(&["gen", "--window", "500", "--seed", "7", "--out", p(&walk)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = mcrt(&["build", "--walk", p(&walk), "--out", p(&graph), "--edges", p(&edges), "--verify", "--census"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS brute-force agreement"));
    assert!(stdout.contains("inner non-triangles 0"));

    let out = mcrt(&["resist", "--graph", p(&graph), "--source", "0", "--sinks", "1"]);
    let via_bin: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    let out = mcrt(&["resist", "--edge-list", p(&edges), "--source", "0", "--sinks", "1"]);
    let via_text: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(via_bin > 0.0 && via_bin <= 1.0);
    assert_eq!(via_bin, via_text);
}

#[test]
fn corrupted_magic_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let walk = dir.path().join("w.bin");
    assert!(mcrt(&["gen", "--window", "100", "--out", p(&walk)]).status.success());
    let mut bytes = fs::read(&walk).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&walk, bytes).unwrap();
    let out = mcrt(&["build", "--walk", p(&walk)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error"));
}

#[test]
fn experiment_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = mcrt(&["volume", "--window", "20000", "--samples", "2", "--seed", "3", "--r-max", "8", "--out", p(d)]);
        assert!(matches!(out.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["report.json", "volume.csv", "config.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let out = mcrt(&["report", p(&a.join("config.toml")), "--out", p(&dir.path().join("c"))]);
    assert!(matches!(out.status.code(), Some(0 | 2)));
    assert_eq!(fs::read(a.join("volume.csv")).unwrap(), fs::read(dir.path().join("c/volume.csv")).unwrap());
}

#[test]
fn exit_codes_follow_checks() {
    let out = mcrt(&["specdim", "--synthetic", "--n-max", "256", "--fit-lo", "4", "--fit-hi", "256", "--window", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    // lattice volume slope is 2, well outside the default mated-CRT band
    let out = mcrt(&["volume", "--lattice", "101", "--r-max", "32"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL volume slope in band"));
    let out = mcrt(&["volume", "--gamma", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn transfer_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let g1 = dir.path().join("g1.txt");
    let g2 = dir.path().join("g2.txt");
    let spec = dir.path().join("spec.txt");
    fs::write(&g1, "0 1 1\n").unwrap();
    fs::write(&g2, "0 1 1\n1 2 1\n").unwrap();
    fs::write(&spec, "0 -> 0\n1 -> 2\nedge 0 1 : 0 1 2\n").unwrap();
    let out = mcrt(&["transfer", "--g1", p(&g1), "--g2", p(&g2), "--spec", p(&spec)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS energy transfer inequality"));
}

#[test]
fn bad_thread_cap_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_mcrt"))
        .args(["appendixa", "--instances", "2"])
        .env("MCRT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
