//! Cross-check of the Little's-law delay estimate against per-packet sojourn
//! times from an instrumented packet-tagging replay of the same run.

use std::collections::VecDeque;
use std::sync::Arc;

use sbra_core::controllers::{PolicyKind, ResolvedPolicy};
use sbra_core::engine::{run, SimConfig};
use sbra_core::stochastic::{poisson_arrivals, ChannelKind, RngStream, StreamKind};
use sbra_core::topology::{
    build_topology, validate_sessions, LinkId, NeighborSpec, NodeId, PairIndex, Session,
    SessionId, TopologySpec,
};

const SEED: u64 = 314;
const SLOTS: u64 = 50_000;
const WARMUP: u64 = 5_000;
const RATE: f64 = 0.5;

fn md1_config() -> SimConfig {
    let topology = Arc::new(
        build_topology(&TopologySpec {
            node_count: 2,
            links: vec![(0, 1)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1)]),
        })
        .unwrap(),
    );
    let sessions = Arc::new(vec![Session {
        id: SessionId(0),
        source: NodeId(0),
        destination: NodeId(1),
        path: vec![LinkId(0)],
    }]);
    validate_sessions(&topology, &sessions).unwrap();
    let pairs = Arc::new(PairIndex::new(&topology, &sessions));
    SimConfig {
        topology,
        sessions,
        pairs,
        policy: ResolvedPolicy {
            kind: PolicyKind::StaticFixed,
            delta: 1.0,
            energy: 1.0,
            window: 10,
            update_interval: 1,
            ema_lambda: 0.1,
            static_values: Some(vec![1.0]),
        },
        arrival_rate: RATE,
        slots: SLOTS,
        warmup: WARMUP,
        seed: SEED,
        channel: ChannelKind::Constant { rate: 1 },
        channel_update_interval: 1,
        slot_secs: 0.005,
        stability_floor: 50.0,
    }
}

/// Independent replay: same arrival substream, FIFO service of one packet
/// per slot whenever the slot-start queue is non-empty (p = 1, unit rate,
/// no collisions possible on an isolated link). Records each packet's
/// sojourn from arrival slot to service slot.
fn tagged_sojourn_mean() -> f64 {
    let mut arrivals = RngStream::new(SEED, StreamKind::Arrival, 0);
    let mut queue: VecDeque<u64> = VecDeque::new();
    let mut sojourns_sum = 0u64;
    let mut served = 0u64;
    for t in 0..SLOTS {
        let backlog_at_start = queue.len();
        let count = poisson_arrivals(&mut arrivals, RATE);
        for _ in 0..count {
            queue.push_back(t);
        }
        if backlog_at_start > 0 {
            let arrived_at = queue.pop_front().unwrap();
            if t >= WARMUP {
                sojourns_sum += t - arrived_at;
                served += 1;
            }
        }
    }
    sojourns_sum as f64 / served as f64
}

#[test]
fn littles_law_delay_matches_packet_sojourns() {
    let report = run(&md1_config()).unwrap();
    let measured = report.sessions[0]
        .delay_slots
        .expect("traffic flows at rate 0.5");
    let tagged = tagged_sojourn_mean();
    let relative = (measured - tagged).abs() / tagged;
    assert!(
        relative < 0.05,
        "Little's-law delay {measured} vs tagged sojourn {tagged} (relative {relative})"
    );
}
