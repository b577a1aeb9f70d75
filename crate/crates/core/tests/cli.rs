mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use parcelsim::report::RunManifest;

use common::*;

fn parcelsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parcelsim"))
        .args(args)
        .env_remove("PARCELSIM_CONFIG")
        .output()
        .expect("binary runs")
}

fn simulate(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    parcelsim(&args)
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn missing_config_exits_1_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = simulate(&tmp.path().join("nope.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
    assert!(!out.exists());
}

#[test]
fn invalid_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let text = fs::read_to_string(fixture("small.toml"))
        .unwrap()
        .replace("seed = 42", "seed = 42\nunknown_key = 1");
    fs::write(&cfg, text).unwrap();
    let o = simulate(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
}

#[test]
fn unknown_scenario_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = simulate(&fixture("small.toml"), &tmp.path().join("out"), &["--scenario", "Z"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_can_come_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_parcelsim"))
        .args(["simulate", "--scenario", "base", "--out", out.to_str().unwrap()])
        .env("PARCELSIM_CONFIG", fixture("small.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out).scenario_ids, ["base"]);
}

#[test]
fn deviation_gate_failure_exits_2_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = simulate(&fixture("rigged_zones.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert!(m.deviation_gate_failed);
    assert!(m.scenarios[0].deviation_gate_failed);
    let dev = fs::read_to_string(out.join("only_deviation.csv")).unwrap();
    assert!(dev.lines().skip(1).all(|l| l.ends_with(",false")), "{dev}");
}

#[test]
fn writes_every_table_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(simulate(&fixture("small.toml"), &a, &[]).status.code(), Some(0));
    assert_eq!(simulate(&fixture("small.toml"), &b, &["--threads", "3"]).status.code(), Some(0));
    let files = listing(&a);
    assert_eq!(
        files,
        [
            "base.csv",
            "base.md",
            "base_deviation.csv",
            "base_replications.csv",
            "base_selections.csv",
            "calibration.csv",
            "manifest.json",
            "no_fedex.csv",
            "no_fedex.md",
            "no_fedex_deviation.csv",
            "no_fedex_replications.csv",
            "no_fedex_selections.csv",
        ]
    );
    for f in &files {
        if f != "manifest.json" {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }
    let calibration = fs::read_to_string(a.join("calibration.csv")).unwrap();
    assert!(calibration.starts_with("carrier,target_usd,achieved_usd,base_fee_usd,quoted_orders"));
    assert!(calibration.contains("pickup,20"));
}

#[test]
fn seed_override_changes_results_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&fixture("small.toml"), &a, &["--scenario", "base"]);
    simulate(&fixture("small.toml"), &b, &["--scenario", "base", "--seed", "9"]);
    assert_eq!(manifest(&b).master_seed, 9);
    assert_ne!(manifest(&a).manifest_id, manifest(&b).manifest_id);
    assert_ne!(
        fs::read(a.join("base_replications.csv")).unwrap(),
        fs::read(b.join("base_replications.csv")).unwrap()
    );
}

#[test]
fn rerun_removes_stale_outputs_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    simulate(&fixture("small.toml"), &out, &[]);
    fs::write(out.join("notes.txt"), "keep me").unwrap();
    simulate(&fixture("small.toml"), &out, &["--scenario", "base", "--format", "csv"]);
    let files = listing(&out);
    assert!(files.iter().all(|f| !f.starts_with("no_fedex")), "{files:?}");
    assert!(!files.contains(&"base.md".to_string()));
    assert!(files.contains(&"notes.txt".to_string()));
    assert_eq!(manifest(&out).files().len(), files.len() - 2);
}

#[test]
fn markdown_table_has_dropped_and_total_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    simulate(&fixture("small.toml"), &out, &["--scenario", "no_fedex", "--format", "md"]);
    let md = fs::read_to_string(out.join("no_fedex.md")).unwrap();
    assert!(md.starts_with("## Scenario no_fedex: Worldwide carrier excluded"));
    assert!(md.contains("| Carriers | Average price per order | S1 | R2 | % of deviation |"));
    assert!(md.contains("| Dropped |"));
    assert!(md.contains("| Total | - | 300.0 | 250.0 |"));
    assert!(!out.join("no_fedex.csv").exists());
}

#[test]
fn coverage_of_identical_files_is_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = fixture("reference_orders.csv");
    let o = parcelsim(&[
        "coverage",
        "--results",
        reference.to_str().unwrap(),
        "--reference",
        reference.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for class in ["far_rural", "domestic"] {
        let csv = fs::read_to_string(tmp.path().join(format!("coverage_{class}.csv"))).unwrap();
        for line in csv.lines().skip(1) {
            for cell in line.split(',').skip(1) {
                assert!(cell == "100.00" || cell == "absent", "{class}: {line}");
            }
        }
    }
}

#[test]
fn network_missing_from_reference_is_absent() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = tmp.path().join("ref.csv");
    let text = fs::read_to_string(fixture("reference_orders.csv")).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("S4,")).collect();
    fs::write(&reference, kept.join("\n")).unwrap();
    let o = parcelsim(&[
        "coverage",
        "--results",
        fixture("reference_orders.csv").to_str().unwrap(),
        "--reference",
        reference.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("coverage_far_rural.csv")).unwrap();
    let avg = csv.lines().find(|l| l.starts_with("average,")).unwrap();
    assert_eq!(avg, "average,100.00,100.00,100.00,absent");
}

#[test]
fn empty_reference_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = tmp.path().join("ref.csv");
    fs::write(&reference, "network,zone_class,carrier,weight_band,count\n").unwrap();
    let o = parcelsim(&[
        "coverage",
        "--results",
        fixture("reference_orders.csv").to_str().unwrap(),
        "--reference",
        reference.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn baseline_run_against_reference_orders() {
    // values frozen from a verified run at the bundled seed
    let tmp = tempfile::tempdir().unwrap();
    let sim_out = tmp.path().join("sim");
    let o = simulate(&bundled_config_path(), &sim_out, &["--scenario", "A", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let cov_out = tmp.path().join("cov");
    let o = parcelsim(&[
        "coverage",
        "--results",
        sim_out.join("A_selections.csv").to_str().unwrap(),
        "--reference",
        fixture("reference_orders.csv").to_str().unwrap(),
        "--out",
        cov_out.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let far = fs::read_to_string(cov_out.join("coverage_far_rural.csv")).unwrap();
    assert!(far.contains("fedex,83.10,85.00,61.90,absent"), "{far}");
    assert!(far.contains("average,84.57,66.09,81.18,78.48"), "{far}");
    let domestic = fs::read_to_string(cov_out.join("coverage_domestic.csv")).unwrap();
    assert!(domestic.contains("average,86.11,86.36,89.82,93.69"), "{domestic}");
}
