//! Helpers shared by the CLI integration and acceptance suites.

use std::path::PathBuf;

use sbra_core::scenario::{parse_scenario, parse_scenario_str, ScenarioConfig};

/// Path of a shipped scenario file, relative to the workspace root.
pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn load_scenario(name: &str) -> ScenarioConfig {
    parse_scenario(&scenario_path(name)).expect("shipped scenario parses")
}

/// Deterministic three-node relay on a constant channel; the third golden
/// trace configuration (the other two are shipped scenario files).
pub const CONSTANT_RELAY: &str = r#"
schema_version = 1

[topology]
nodes = 3
links = ["0->1", "1->2"]
neighbors = ["0-1", "1-2"]

[[session]]
source = 0
destination = 2
path = [0, 1]

[[policy]]
kind = "static-fixed"
probability = 0.6
update_interval = 1

[run]
slots = 64
warmup = 0
seed = 5
rate = 0.4
channel = "constant"
channel_rate = 2
channel_update_interval = 1
"#;

pub fn constant_relay() -> ScenarioConfig {
    parse_scenario_str(CONSTANT_RELAY).expect("inline scenario parses")
}

/// The three golden-trace configurations: (name, config shortened to 64
/// slots with no warmup).
pub fn golden_configs() -> Vec<(&'static str, ScenarioConfig)> {
    let mut single_link = load_scenario("single_link.scn");
    single_link.slots = 64;
    single_link.warmup = 0;
    let mut multihop = load_scenario("multihop10.scn");
    multihop.slots = 64;
    multihop.warmup = 0;
    vec![
        ("single_link", single_link),
        ("multihop10", multihop),
        ("constant_relay", constant_relay()),
    ]
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.csv"))
}

/// Compare a freshly generated trace against the recorded golden bytes;
/// setting UPDATE_GOLDEN=1 rewrites the recordings instead.
pub fn check_golden(name: &str, generated: &str) {
    let path = golden_path(name);
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::write(&path, generated).expect("write golden file");
        return;
    }
    let recorded = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing golden file {} (set UPDATE_GOLDEN=1)", path.display()));
    assert!(
        recorded == generated,
        "trace for `{name}` deviates from the recorded golden bytes"
    );
}
