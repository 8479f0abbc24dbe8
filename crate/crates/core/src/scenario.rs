//! Scenario files: a TOML dialect with sections for topology, sessions,
//! policies and run control, versioned by a `schema_version` key.
//!
//! Parsing resolves every default (window 10, control interval 3, channel
//! update interval 10, EMA lambda 0.1, 5 ms slots, 10% warmup) so that the
//! rest of the crate only ever sees fully concrete configuration.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::controllers::{PolicyKind, ResolvedPolicy};
use crate::engine::SimConfig;
use crate::stochastic::{ChannelKind, UNIT_MEAN_RAYLEIGH_SCALE};
use crate::topology::{
    build_topology, validate_sessions, LinkId, NeighborSpec, NodeId, PairIndex, Session,
    SessionId, Topology, TopologyError, TopologySpec,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_CONTROL_INTERVAL: u64 = 3;
pub const DEFAULT_CHANNEL_UPDATE_INTERVAL: u64 = 10;
pub const DEFAULT_EMA_LAMBDA: f64 = 0.1;
pub const DEFAULT_SLOT_MS: f64 = 5.0;
pub const DEFAULT_STABILITY_FLOOR: f64 = 50.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn invalid(key: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// Raw file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    topology: RawTopology,
    #[serde(rename = "session")]
    sessions: Vec<RawSession>,
    #[serde(rename = "policy")]
    policies: Vec<RawPolicy>,
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    nodes: usize,
    /// Directed links, e.g. "0->1"; ids follow list order.
    links: Vec<String>,
    /// Symmetric neighbor pairs, e.g. "0-1".
    neighbors: Option<Vec<String>>,
    /// Unit-disk alternative to `neighbors`.
    positions: Option<Vec<[f64; 2]>>,
    radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    source: usize,
    destination: usize,
    /// Link ids along the path.
    path: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    name: Option<String>,
    kind: PolicyKind,
    delta: Option<RawDelta>,
    delta_scale: Option<f64>,
    energy: Option<f64>,
    window: Option<usize>,
    update_interval: Option<u64>,
    ema_lambda: Option<f64>,
    probability: Option<f64>,
    static_weights: Option<Vec<RawWeight>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDelta {
    Fixed(f64),
    Keyword(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeight {
    link: usize,
    session: usize,
    value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    slots: u64,
    warmup: Option<u64>,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    rate: Option<f64>,
    rates: Option<Vec<f64>>,
    slot_ms: Option<f64>,
    channel: Option<String>,
    channel_scale: Option<f64>,
    channel_rate: Option<u64>,
    channel_update_interval: Option<u64>,
    stability_floor: Option<f64>,
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

/// How the energy coefficient is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSpec {
    Fixed(f64),
    /// delta = 1 / (window * arrival rate), the reference heuristic.
    InverseRateWindow,
}

/// One named policy ready to be resolved against a concrete arrival rate.
#[derive(Debug, Clone)]
pub struct NamedPolicy {
    pub name: String,
    pub kind: PolicyKind,
    pub delta: DeltaSpec,
    pub delta_scale: f64,
    pub energy: f64,
    pub window: usize,
    pub update_interval: u64,
    pub ema_lambda: f64,
    /// Per-pair values for static-fixed (probabilities) and
    /// propfair-static (weights).
    pub static_values: Option<Vec<f64>>,
}

impl NamedPolicy {
    pub fn resolve(&self, rate: f64) -> Result<ResolvedPolicy, ScenarioError> {
        let delta = match self.delta {
            DeltaSpec::Fixed(d) => d * self.delta_scale,
            DeltaSpec::InverseRateWindow => {
                if rate <= 0.0 {
                    return Err(invalid(
                        "policy.delta",
                        format!(
                            "`auto` needs a positive arrival rate (policy `{}` ran at rate {rate})",
                            self.name
                        ),
                    ));
                }
                self.delta_scale / (self.window as f64 * rate)
            }
        };
        Ok(ResolvedPolicy {
            kind: self.kind,
            delta,
            energy: self.energy,
            window: self.window,
            update_interval: self.update_interval,
            ema_lambda: self.ema_lambda,
            static_values: self.static_values.clone(),
        })
    }
}

/// A fully validated scenario: topology, sessions, one or more policies and
/// the run-control axes (rates and seeds).
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub topology: Arc<Topology>,
    pub sessions: Arc<Vec<Session>>,
    pub pairs: Arc<PairIndex>,
    pub policies: Vec<NamedPolicy>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub slots: u64,
    pub warmup: u64,
    pub slot_secs: f64,
    pub channel: ChannelKind,
    pub channel_update_interval: u64,
    pub stability_floor: f64,
}

impl ScenarioConfig {
    pub fn policy_by_name(&self, name: &str) -> Option<(usize, &NamedPolicy)> {
        self.policies
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
    }

    /// Concrete engine config for one (policy, rate, seed) point.
    pub fn sim_config(
        &self,
        policy_index: usize,
        rate: f64,
        seed: u64,
    ) -> Result<SimConfig, ScenarioError> {
        let policy = self
            .policies
            .get(policy_index)
            .ok_or_else(|| invalid("policy", format!("no policy at index {policy_index}")))?
            .resolve(rate)?;
        Ok(SimConfig {
            topology: Arc::clone(&self.topology),
            sessions: Arc::clone(&self.sessions),
            pairs: Arc::clone(&self.pairs),
            policy,
            arrival_rate: rate,
            slots: self.slots,
            warmup: self.warmup,
            seed,
            channel: self.channel,
            channel_update_interval: self.channel_update_interval,
            slot_secs: self.slot_secs,
            stability_floor: self.stability_floor,
        })
    }

    /// Every resolved config value as `key = value` lines, for the
    /// provenance header of emitted CSV files.
    pub fn echo_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        lines.push(format!("schema_version = {}", self.schema_version));
        lines.push(format!("topology.nodes = {}", self.topology.node_count()));
        let links: Vec<String> = self
            .topology
            .links()
            .iter()
            .map(|l| format!("{}->{}", l.tx, l.rx))
            .collect();
        lines.push(format!("topology.links = [{}]", links.join(", ")));
        let mut neighbor_pairs = Vec::new();
        for a in 0..self.topology.node_count() {
            for b in self.topology.neighbors(NodeId(a)) {
                if b.0 > a {
                    neighbor_pairs.push(format!("{a}-{b}"));
                }
            }
        }
        lines.push(format!(
            "topology.neighbors = [{}]",
            neighbor_pairs.join(", ")
        ));
        for session in self.sessions.iter() {
            let path: Vec<String> = session.path.iter().map(|l| l.to_string()).collect();
            lines.push(format!(
                "session.{} = {{ source = {}, destination = {}, path = [{}] }}",
                session.id,
                session.source,
                session.destination,
                path.join(", ")
            ));
        }
        for policy in &self.policies {
            let delta = match policy.delta {
                DeltaSpec::Fixed(d) => format!("{d}"),
                DeltaSpec::InverseRateWindow => "auto".to_string(),
            };
            lines.push(format!(
                "policy.{} = {{ kind = {}, delta = {}, delta_scale = {}, energy = {}, \
                 window = {}, update_interval = {}, ema_lambda = {}{} }}",
                policy.name,
                policy.kind.as_str(),
                delta,
                policy.delta_scale,
                policy.energy,
                policy.window,
                policy.update_interval,
                policy.ema_lambda,
                match &policy.static_values {
                    Some(values) => {
                        let rendered: Vec<String> =
                            values.iter().map(|v| v.to_string()).collect();
                        format!(", static_values = [{}]", rendered.join(", "))
                    }
                    None => String::new(),
                }
            ));
        }
        lines.push(format!("run.slots = {}", self.slots));
        lines.push(format!("run.warmup = {}", self.warmup));
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        lines.push(format!("run.seeds = [{}]", seeds.join(", ")));
        let rates: Vec<String> = self.rates.iter().map(|r| r.to_string()).collect();
        lines.push(format!("run.rates = [{}]", rates.join(", ")));
        lines.push(format!("run.slot_secs = {}", self.slot_secs));
        match self.channel {
            ChannelKind::RoundedRayleigh { scale } => {
                lines.push("run.channel = rayleigh".to_string());
                lines.push(format!("run.channel_scale = {scale}"));
            }
            ChannelKind::Constant { rate } => {
                lines.push("run.channel = constant".to_string());
                lines.push(format!("run.channel_rate = {rate}"));
            }
        }
        lines.push(format!(
            "run.channel_update_interval = {}",
            self.channel_update_interval
        ));
        lines.push(format!("run.stability_floor = {}", self.stability_floor));
        lines
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;

    if raw.schema_version != SCHEMA_VERSION {
        return Err(invalid(
            "schema_version",
            format!("expected {SCHEMA_VERSION}, got {}", raw.schema_version),
        ));
    }

    let topology = Arc::new(parse_topology(&raw.topology)?);
    let sessions = Arc::new(parse_sessions(&raw.sessions, &topology)?);
    validate_sessions(&topology, &sessions)?;
    let pairs = Arc::new(PairIndex::new(&topology, &sessions));

    let mut policies = Vec::new();
    for (i, raw_policy) in raw.policies.iter().enumerate() {
        policies.push(parse_policy(raw_policy, i, &pairs)?);
    }
    if policies.is_empty() {
        return Err(ScenarioError::MissingKey {
            key: "policy".into(),
        });
    }
    for (i, policy) in policies.iter().enumerate() {
        if policies[..i].iter().any(|p| p.name == policy.name) {
            return Err(invalid(
                "policy.name",
                format!("duplicate policy name `{}`", policy.name),
            ));
        }
    }

    let run = parse_run(&raw.run)?;

    Ok(ScenarioConfig {
        schema_version: raw.schema_version,
        topology,
        sessions,
        pairs,
        policies,
        rates: run.rates,
        seeds: run.seeds,
        slots: run.slots,
        warmup: run.warmup,
        slot_secs: run.slot_secs,
        channel: run.channel,
        channel_update_interval: run.channel_update_interval,
        stability_floor: run.stability_floor,
    })
}

fn parse_topology(raw: &RawTopology) -> Result<Topology, ScenarioError> {
    let links = raw
        .links
        .iter()
        .map(|s| parse_arrow(s, "topology.links"))
        .collect::<Result<Vec<_>, _>>()?;
    let neighbors = match (&raw.neighbors, &raw.positions, raw.radius) {
        (Some(pairs), None, None) => NeighborSpec::Pairs(
            pairs
                .iter()
                .map(|s| parse_dash(s, "topology.neighbors"))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        (None, Some(positions), Some(radius)) => {
            if radius <= 0.0 {
                return Err(invalid("topology.radius", "must be positive"));
            }
            NeighborSpec::UnitDisk {
                positions: positions.iter().map(|p| (p[0], p[1])).collect(),
                radius,
            }
        }
        (None, None, _) | (None, _, None) => {
            return Err(ScenarioError::MissingKey {
                key: "topology.neighbors (or positions + radius)".into(),
            })
        }
        _ => {
            return Err(invalid(
                "topology.neighbors",
                "give either explicit neighbors or positions + radius, not both",
            ))
        }
    };
    Ok(build_topology(&TopologySpec {
        node_count: raw.nodes,
        links,
        neighbors,
    })?)
}

fn parse_sessions(
    raw: &[RawSession],
    topology: &Topology,
) -> Result<Vec<Session>, ScenarioError> {
    if raw.is_empty() {
        return Err(ScenarioError::MissingKey {
            key: "session".into(),
        });
    }
    raw.iter()
        .enumerate()
        .map(|(i, s)| {
            for &l in &s.path {
                if l >= topology.link_count() {
                    return Err(invalid(
                        "session.path",
                        format!("session {i} references unknown link {l}"),
                    ));
                }
            }
            Ok(Session {
                id: SessionId(i),
                source: NodeId(s.source),
                destination: NodeId(s.destination),
                path: s.path.iter().map(|&l| LinkId(l)).collect(),
            })
        })
        .collect()
}

fn parse_policy(
    raw: &RawPolicy,
    index: usize,
    pairs: &PairIndex,
) -> Result<NamedPolicy, ScenarioError> {
    let kind = raw.kind;
    let name = raw
        .name
        .clone()
        .unwrap_or_else(|| kind.as_str().to_string());

    let delta = match &raw.delta {
        None => match kind {
            PolicyKind::SingleLinkOptimal | PolicyKind::SingleHopOptimal => {
                return Err(ScenarioError::MissingKey {
                    key: format!("policy.{name}.delta"),
                })
            }
            _ => DeltaSpec::Fixed(1.0),
        },
        Some(RawDelta::Fixed(d)) => {
            if *d <= 0.0 || !d.is_finite() {
                return Err(invalid(
                    "policy.delta",
                    format!("must be positive and finite, got {d}"),
                ));
            }
            DeltaSpec::Fixed(*d)
        }
        Some(RawDelta::Keyword(word)) if word == "auto" => DeltaSpec::InverseRateWindow,
        Some(RawDelta::Keyword(word)) => {
            return Err(invalid(
                "policy.delta",
                format!("expected a number or \"auto\", got \"{word}\""),
            ))
        }
    };

    let delta_scale = raw.delta_scale.unwrap_or(1.0);
    if delta_scale <= 0.0 || !delta_scale.is_finite() {
        return Err(invalid("policy.delta_scale", "must be positive and finite"));
    }
    let energy = raw.energy.unwrap_or(1.0);
    if energy <= 0.0 || !energy.is_finite() {
        return Err(invalid("policy.energy", "must be positive and finite"));
    }
    let window = raw.window.unwrap_or(DEFAULT_WINDOW);
    if window == 0 {
        return Err(invalid("policy.window", "must be at least 1"));
    }
    let update_interval = raw.update_interval.unwrap_or(DEFAULT_CONTROL_INTERVAL);
    if update_interval == 0 {
        return Err(invalid("policy.update_interval", "must be at least 1"));
    }
    let ema_lambda = raw.ema_lambda.unwrap_or(DEFAULT_EMA_LAMBDA);
    if !(ema_lambda > 0.0 && ema_lambda <= 1.0) {
        return Err(invalid("policy.ema_lambda", "must lie in (0, 1]"));
    }

    let static_values = match kind {
        PolicyKind::StaticFixed => {
            Some(resolve_static_values(raw, pairs, index, true)?)
        }
        PolicyKind::PropfairStatic => {
            Some(resolve_static_values(raw, pairs, index, false)?)
        }
        _ => {
            if raw.probability.is_some() || raw.static_weights.is_some() {
                return Err(invalid(
                    "policy.static_weights",
                    format!("not applicable to kind `{}`", kind.as_str()),
                ));
            }
            None
        }
    };

    Ok(NamedPolicy {
        name,
        kind,
        delta,
        delta_scale,
        energy,
        window,
        update_interval,
        ema_lambda,
        static_values,
    })
}

fn resolve_static_values(
    raw: &RawPolicy,
    pairs: &PairIndex,
    policy_index: usize,
    probabilities: bool,
) -> Result<Vec<f64>, ScenarioError> {
    let default = if probabilities {
        raw.probability
    } else {
        Some(raw.probability.unwrap_or(1.0))
    };
    let mut values: Vec<Option<f64>> = vec![default; pairs.len()];
    if let Some(entries) = &raw.static_weights {
        for entry in entries {
            let pair = pairs
                .id_of(LinkId(entry.link), SessionId(entry.session))
                .ok_or_else(|| {
                    invalid(
                        "policy.static_weights",
                        format!(
                            "policy {policy_index}: session {} does not traverse link {}",
                            entry.session, entry.link
                        ),
                    )
                })?;
            values[pair] = Some(entry.value);
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(pair, value)| {
            let value = value.ok_or_else(|| ScenarioError::MissingKey {
                key: format!(
                    "policy.probability (pair link {} / session {} has no value)",
                    pairs.pair(pair).0,
                    pairs.pair(pair).1
                ),
            })?;
            let valid = if probabilities {
                (0.0..=1.0).contains(&value)
            } else {
                value >= 0.0 && value.is_finite()
            };
            if !valid {
                return Err(invalid(
                    "policy.static_weights",
                    format!("value {value} out of range"),
                ));
            }
            Ok(value)
        })
        .collect()
}

struct ResolvedRun {
    slots: u64,
    warmup: u64,
    seeds: Vec<u64>,
    rates: Vec<f64>,
    slot_secs: f64,
    channel: ChannelKind,
    channel_update_interval: u64,
    stability_floor: f64,
}

fn parse_run(raw: &RawRun) -> Result<ResolvedRun, ScenarioError> {
    let slots = raw.slots;
    let warmup = raw.warmup.unwrap_or(slots / 10);
    if slots > 0 && warmup >= slots {
        return Err(invalid(
            "run.warmup",
            format!("warmup {warmup} must be smaller than slots {slots}"),
        ));
    }

    let seeds = match (&raw.seeds, raw.seed) {
        (Some(seeds), None) if !seeds.is_empty() => seeds.clone(),
        (Some(_), None) => return Err(invalid("run.seeds", "must not be empty")),
        (None, Some(seed)) => vec![seed],
        (None, None) => vec![0],
        (Some(_), Some(_)) => {
            return Err(invalid("run.seed", "give either `seed` or `seeds`, not both"))
        }
    };

    let rates = match (&raw.rates, raw.rate) {
        (Some(rates), None) => rates.clone(),
        (None, Some(rate)) => vec![rate],
        (None, None) => {
            return Err(ScenarioError::MissingKey {
                key: "run.rate (or run.rates)".into(),
            })
        }
        (Some(_), Some(_)) => {
            return Err(invalid("run.rate", "give either `rate` or `rates`, not both"))
        }
    };
    for &rate in &rates {
        if rate < 0.0 || !rate.is_finite() {
            return Err(invalid("run.rates", format!("rate {rate} is invalid")));
        }
    }

    let slot_ms = raw.slot_ms.unwrap_or(DEFAULT_SLOT_MS);
    if slot_ms <= 0.0 || !slot_ms.is_finite() {
        return Err(invalid("run.slot_ms", "must be positive"));
    }

    let channel = match raw.channel.as_deref().unwrap_or("rayleigh") {
        "rayleigh" => {
            if raw.channel_rate.is_some() {
                return Err(invalid(
                    "run.channel_rate",
                    "only applies to the constant channel",
                ));
            }
            let scale = raw.channel_scale.unwrap_or(UNIT_MEAN_RAYLEIGH_SCALE);
            if scale < 0.0 || !scale.is_finite() {
                return Err(invalid("run.channel_scale", "must be nonnegative"));
            }
            ChannelKind::RoundedRayleigh { scale }
        }
        "constant" => {
            if raw.channel_scale.is_some() {
                return Err(invalid(
                    "run.channel_scale",
                    "only applies to the rayleigh channel",
                ));
            }
            ChannelKind::Constant {
                rate: raw.channel_rate.unwrap_or(1),
            }
        }
        other => {
            return Err(invalid(
                "run.channel",
                format!("expected \"rayleigh\" or \"constant\", got \"{other}\""),
            ))
        }
    };

    let channel_update_interval = raw
        .channel_update_interval
        .unwrap_or(DEFAULT_CHANNEL_UPDATE_INTERVAL);
    if channel_update_interval == 0 {
        return Err(invalid("run.channel_update_interval", "must be at least 1"));
    }

    let stability_floor = raw.stability_floor.unwrap_or(DEFAULT_STABILITY_FLOOR);
    if stability_floor < 0.0 || !stability_floor.is_finite() {
        return Err(invalid("run.stability_floor", "must be nonnegative"));
    }

    Ok(ResolvedRun {
        slots,
        warmup,
        seeds,
        rates,
        slot_secs: slot_ms / 1000.0,
        channel,
        channel_update_interval,
        stability_floor,
    })
}

fn parse_arrow(text: &str, key: &str) -> Result<(usize, usize), ScenarioError> {
    let (a, b) = text
        .split_once("->")
        .ok_or_else(|| invalid(key, format!("expected \"tx->rx\", got \"{text}\"")))?;
    Ok((parse_node(a, key)?, parse_node(b, key)?))
}

fn parse_dash(text: &str, key: &str) -> Result<(usize, usize), ScenarioError> {
    let (a, b) = text
        .split_once('-')
        .ok_or_else(|| invalid(key, format!("expected \"a-b\", got \"{text}\"")))?;
    Ok((parse_node(a, key)?, parse_node(b, key)?))
}

fn parse_node(text: &str, key: &str) -> Result<usize, ScenarioError> {
    text.trim()
        .parse()
        .map_err(|_| invalid(key, format!("\"{}\" is not a node id", text.trim())))
}
