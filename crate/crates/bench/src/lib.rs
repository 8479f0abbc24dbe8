//! Benchmark fixtures: the default multihop network and a single link,
//! built directly so the benches need no scenario files.

use std::sync::Arc;

use sbra_core::controllers::{PolicyKind, ResolvedPolicy};
use sbra_core::engine::SimConfig;
use sbra_core::stochastic::{ChannelKind, UNIT_MEAN_RAYLEIGH_SCALE};
use sbra_core::topology::{
    build_topology, validate_sessions, LinkId, NeighborSpec, NodeId, PairIndex, Session,
    SessionId, Topology, TopologySpec,
};

/// The 10-node / 12-link / 4-session default network.
pub fn multihop_topology() -> (Topology, Vec<Session>) {
    let topology = build_topology(&TopologySpec {
        node_count: 10,
        links: vec![
            (0, 1),
            (1, 4),
            (6, 7),
            (7, 4),
            (4, 1),
            (1, 2),
            (2, 5),
            (5, 8),
            (8, 9),
            (3, 4),
            (4, 7),
            (7, 8),
        ],
        neighbors: NeighborSpec::Pairs(vec![
            (0, 1),
            (1, 2),
            (0, 3),
            (1, 4),
            (2, 5),
            (3, 4),
            (4, 5),
            (3, 6),
            (4, 7),
            (5, 8),
            (6, 7),
            (7, 8),
            (8, 9),
        ]),
    })
    .unwrap();
    let paths: [&[usize]; 4] = [&[0, 1], &[2, 3, 4, 5], &[6, 7, 8], &[9, 10, 11]];
    let sessions: Vec<Session> = paths
        .iter()
        .enumerate()
        .map(|(id, path)| {
            let path: Vec<LinkId> = path.iter().map(|&l| LinkId(l)).collect();
            Session {
                id: SessionId(id),
                source: topology.link(path[0]).tx,
                destination: topology.link(*path.last().unwrap()).rx,
                path,
            }
        })
        .collect();
    validate_sessions(&topology, &sessions).unwrap();
    (topology, sessions)
}

pub fn multihop_config(kind: PolicyKind, rate: f64, slots: u64) -> SimConfig {
    let (topology, sessions) = multihop_topology();
    let pairs = PairIndex::new(&topology, &sessions);
    SimConfig {
        topology: Arc::new(topology),
        sessions: Arc::new(sessions),
        pairs: Arc::new(pairs),
        policy: ResolvedPolicy {
            kind,
            delta: 1.0,
            energy: 1.0,
            window: 10,
            update_interval: 3,
            ema_lambda: 0.1,
            static_values: None,
        },
        arrival_rate: rate,
        slots,
        warmup: slots / 10,
        seed: 1,
        channel: ChannelKind::RoundedRayleigh {
            scale: UNIT_MEAN_RAYLEIGH_SCALE,
        },
        channel_update_interval: 10,
        slot_secs: 0.005,
        stability_floor: 50.0,
    }
}

pub fn single_link_config(slots: u64) -> SimConfig {
    let topology = build_topology(&TopologySpec {
        node_count: 2,
        links: vec![(0, 1)],
        neighbors: NeighborSpec::Pairs(vec![(0, 1)]),
    })
    .unwrap();
    let sessions = vec![Session {
        id: SessionId(0),
        source: NodeId(0),
        destination: NodeId(1),
        path: vec![LinkId(0)],
    }];
    let pairs = PairIndex::new(&topology, &sessions);
    SimConfig {
        topology: Arc::new(topology),
        sessions: Arc::new(sessions),
        pairs: Arc::new(pairs),
        policy: ResolvedPolicy {
            kind: PolicyKind::SingleLinkOptimal,
            delta: 0.2,
            energy: 1.0,
            window: 10,
            update_interval: 1,
            ema_lambda: 0.1,
            static_values: None,
        },
        arrival_rate: 0.5,
        slots,
        warmup: slots / 10,
        seed: 1,
        channel: ChannelKind::RoundedRayleigh {
            scale: UNIT_MEAN_RAYLEIGH_SCALE,
        },
        channel_update_interval: 1,
        slot_secs: 0.005,
        stability_floor: 50.0,
    }
}
