use std::path::Path;
use std::process::Command;

use ndae_attack::harness::ScenarioConfig;

fn ndae(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ndae"))
        .args(args)
        .output()
        .expect("spawn ndae")
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bundled_configs_load() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn malformed_config_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "name = \"x\"\ncase = \"wscc9\"\n");
    let out = ndae(&["simulate", "--config", &cfg]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn attack_without_section_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        "name = \"x\"\ncase = \"wscc9\"\nseed = 1\nhorizon = 1.0\n",
    );
    assert_eq!(ndae(&["attack", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn zone_prints_the_ieee39_zone() {
    let out = ndae(&[
        "zone",
        "--config",
        configs().join("ieee39_icaa.toml").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let zone: Vec<u64> = v["zone"]["zone"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_u64().unwrap())
        .collect();
    assert!(zone.contains(&10) && zone.contains(&11));
}

#[test]
fn simulate_writes_manifest_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "name = \"short\"\ncase = \"wscc9\"\nseed = 3\nhorizon = 1.0\n",
    );
    let out_dir = dir.path().join("out");
    let out = ndae(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("short.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"], 4);
    assert!(out_dir.join("short.states.csv").exists());

    let report = ndae(&[
        "report",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(report.status.code(), Some(0));
    let again: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(again["scenario"], "short");
}

#[test]
fn fully_reverted_attack_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "z.toml",
        "name = \"z\"\ncase = \"wscc9\"\nseed = 1\nhorizon = 1.0\n\n[attack]\nstrategy = \"icaa\"\nstart_time = 0.5\n\
         target_buses = [5]\nzeta = 0.0\nn_max = 5\n",
    );
    let out = ndae(&[
        "attack",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
