//! Integration tests for the command layer: CSV shape and determinism,
//! golden per-slot traces, error reporting, and the binary's exit behavior.

use std::process::Command;

use sbra_cli::{apply_overrides, run_single, sweep_csv, trace_csv, Overrides};
use sbra_core::parse_scenario_str;

mod common;
use common::{golden_configs, load_scenario, scenario_path};

#[test]
fn sweep_csv_is_byte_identical_across_reruns() {
    let mut config = load_scenario("table2.scn");
    apply_overrides(
        &mut config,
        &Overrides {
            seed: None,
            slots: Some(2000),
        },
    );
    let first = sweep_csv(&config, None).unwrap();
    let second = sweep_csv(&config, None).unwrap();
    assert_eq!(first, second);
}

#[test]
fn sweep_csv_shape() {
    let mut config = load_scenario("table2.scn");
    config.slots = 1000;
    config.warmup = 100;
    config.rates = vec![0.3];
    config.seeds = vec![1, 2];
    let csv = sweep_csv(&config, None).unwrap();

    // Provenance block, then header, then 2 policies x (2 seeds + 2 summary).
    let comments: Vec<&str> = csv.lines().filter(|l| l.starts_with('#')).collect();
    assert!(comments.iter().any(|l| l.contains("run.slots = 1000")));
    assert!(comments.iter().any(|l| l.contains("policy.delta2")));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "policy,rate,seed,slots,mean_delay_slots,mean_delay_sec,throughput,energy_per_slot,collision_rate,stable,summary");
    assert_eq!(rows.len(), 1 + 2 * 4);
    assert!(rows[3].ends_with(",mean"));
    assert!(rows[4].ends_with(",stddev"));
}

#[test]
fn empty_rate_list_yields_header_only_csv() {
    let mut config = load_scenario("table2.scn");
    config.rates = vec![];
    let csv = sweep_csv(&config, None).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, vec![
        "policy,rate,seed,slots,mean_delay_slots,mean_delay_sec,throughput,energy_per_slot,collision_rate,stable,summary",
    ]);
}

#[test]
fn compare_rejects_unknown_policy_names() {
    let config = load_scenario("fig2_compare.scn");
    let err = sweep_csv(&config, Some(&["cubic-sbra".to_string()])).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("cubic-sbra"));
    assert!(message.contains("linear-sbra"), "should list available: {message}");
}

#[test]
fn run_rejects_multi_point_scenarios() {
    let config = load_scenario("table2.scn");
    let err = run_single(&config).unwrap_err();
    assert!(err.to_string().contains("sweep"));
}

#[test]
fn golden_traces_match_recorded_bytes() {
    for (name, config) in golden_configs() {
        let trace = trace_csv(&config).unwrap();
        common::check_golden(name, &trace);
    }
}

#[test]
fn trace_rows_carry_pair_state() {
    let config = common::constant_relay();
    let trace = trace_csv(&config).unwrap();
    let rows: Vec<&str> = trace.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "slot,link,session,q,c,p,attempted,collided,served");
    // 64 slots x 2 pairs.
    assert_eq!(rows.len(), 1 + 64 * 2);
    // Constant channel rate 2 everywhere.
    assert!(rows[1..].iter().all(|r| r.split(',').nth(4) == Some("2")));
}

#[test]
fn zero_rate_sweep_reports_absent_delays() {
    let mut config = parse_scenario_str(common::CONSTANT_RELAY).unwrap();
    config.rates = vec![0.0];
    config.slots = 500;
    config.warmup = 0;
    let csv = sweep_csv(&config, None).unwrap();
    let row = csv
        .lines()
        .find(|l| l.starts_with("static-fixed"))
        .expect("one data row");
    // Delay columns (5th and 6th) are empty, throughput and energy are 0.
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[4], "");
    assert_eq!(cells[5], "");
    assert_eq!(cells[6], "0");
    assert_eq!(cells[7], "0");
}

#[test]
fn maxweight_matches_independent_enumeration() {
    sbra_cli::harness::maxweight_check(50, 0xBEEF).unwrap();
}

#[test]
fn binary_runs_and_reports() {
    let output = Command::new(env!("CARGO_BIN_EXE_sbra"))
        .args([
            "run",
            scenario_path("single_link.scn").to_str().unwrap(),
            "--slots",
            "2000",
        ])
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("session 0"), "stdout: {stdout}");
    assert!(stdout.contains("network:"), "stdout: {stdout}");
}

#[test]
fn binary_oracle_check_passes_and_prints_suites() {
    let output = Command::new(env!("CARGO_BIN_EXE_sbra"))
        .args([
            "oracle-check",
            "--count",
            "50",
            "--dp-instances",
            "5",
            "--maxweight-cases",
            "5",
        ])
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(output.status.success(), "stdout: {stdout}");
    assert_eq!(stdout.matches("PASS").count(), 3, "stdout: {stdout}");
}

#[test]
fn binary_oracle_check_zero_count_warns() {
    let output = Command::new(env!("CARGO_BIN_EXE_sbra"))
        .args([
            "oracle-check",
            "--count",
            "0",
            "--dp-instances",
            "2",
            "--maxweight-cases",
            "2",
        ])
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(output.status.success());
    assert!(stdout.contains("vacuous"), "stdout: {stdout}");
}

#[test]
fn binary_rejects_malformed_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.scn");
    std::fs::write(&path, "schema_version = 1\n[topology]\nnodes = 2\n").unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_sbra"))
        .args(["run", path.to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert!(!output.status.success());
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("error"), "stderr: {stderr}");
}

#[test]
fn shipped_scenarios_all_parse() {
    for name in [
        "single_link.scn",
        "table2.scn",
        "multihop10.scn",
        "fig2_compare.scn",
    ] {
        let config = load_scenario(name);
        assert!(config.slots > 0);
        assert!(!config.policies.is_empty());
    }
    // The default multihop scenario matches its documented shape.
    let multihop = load_scenario("multihop10.scn");
    assert_eq!(multihop.topology.node_count(), 10);
    assert_eq!(multihop.topology.link_count(), 12);
    assert_eq!(multihop.sessions.len(), 4);
}

#[test]
fn inline_scenario_round_trips_through_overrides() {
    let mut config = parse_scenario_str(common::CONSTANT_RELAY).unwrap();
    apply_overrides(
        &mut config,
        &Overrides {
            seed: Some(99),
            slots: Some(100),
        },
    );
    assert_eq!(config.seeds, vec![99]);
    assert_eq!(config.slots, 100);
    assert_eq!(config.warmup, 10);
}
