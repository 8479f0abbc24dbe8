//! Randomized check harnesses: tiny DP instances for the dominance check,
//! random small topologies for the max-weight cross-check and for the
//! conservation/safety sweeps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sbra_core::controllers::{PolicyKind, ResolvedPolicy};
use sbra_core::engine::{resolve_collisions, SimConfig};
use sbra_core::oracle::{dp_optimal_cost, exact_policy_cost, maxweight_schedule, TinyInstance};
use sbra_core::stochastic::{ChannelKind, UNIT_MEAN_RAYLEIGH_SCALE};
use sbra_core::topology::{
    build_topology, validate_sessions, LinkId, NeighborSpec, NodeId, PairIndex, Session,
    SessionId, Topology, TopologySpec,
};

const DOMINANCE_TOLERANCE: f64 = 1e-9;

/// Random finite distribution over 0..=max_value whose probabilities sum to
/// exactly 1.
fn random_dist(rng: &mut ChaCha8Rng, max_value: u64) -> Vec<(u64, f64)> {
    let support = rng.random_range(1..=max_value + 1);
    let mut raw: Vec<f64> = (0..support).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    for p in &mut raw {
        *p /= total;
    }
    // Force the exact sum-to-one invariant onto the last entry.
    let head: f64 = raw[..raw.len() - 1].iter().sum();
    let last = raw.len() - 1;
    raw[last] = 1.0 - head;
    raw.into_iter()
        .enumerate()
        .map(|(v, p)| (v as u64, p))
        .collect()
}

/// Random desk-scale DP instance within the given horizon/buffer bounds.
pub fn random_tiny_instance(
    rng: &mut ChaCha8Rng,
    max_horizon: usize,
    max_buffer: u64,
) -> TinyInstance {
    let buffer_cap = rng.random_range(1..=max_buffer);
    TinyInstance {
        horizon: rng.random_range(1..=max_horizon),
        buffer_cap,
        grid_step: 0.02,
        channel_dist: random_dist(rng, 3),
        arrival_dist: random_dist(rng, 2),
        alpha: rng.random_range(0.1..2.0),
        beta: rng.random_range(0.0..1.0),
        delta: rng.random_range(0.05..3.0),
        energy: 1.0,
        initial_backlog: rng.random_range(0..=buffer_cap),
    }
}

/// Check that no grid policy beats the DP optimum: the myopic closed-form
/// policy, a random static policy, and unconditional transmission must all
/// cost at least the DP value on every random instance.
pub fn dp_dominance_check(instances: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0D0);
    for case in 0..instances {
        let instance = random_tiny_instance(&mut rng, 5, 5);
        let solution = dp_optimal_cost(&instance).map_err(|e| e.to_string())?;

        let myopic_table = crate::myopic_policy_table(&instance);
        let static_p = crate::snap_to_grid(rng.random_range(0.0..=1.0), instance.grid_step);
        type PolicyFn = Box<dyn Fn(usize, u64) -> f64>;
        let policies: [(&str, PolicyFn); 3] = [
            (
                "myopic closed form",
                Box::new(move |t, q| myopic_table[t][q as usize]),
            ),
            (
                "static p",
                Box::new(move |_, q| if q > 0 { static_p } else { 0.0 }),
            ),
            ("always transmit", Box::new(|_, _| 1.0)),
        ];
        for (name, policy) in &policies {
            let cost = exact_policy_cost(&instance, policy).map_err(|e| e.to_string())?;
            if cost < solution.value - DOMINANCE_TOLERANCE {
                return Err(format!(
                    "instance {case} ({instance:?}): policy `{name}` cost {cost} \
                     beats DP optimum {}",
                    solution.value
                ));
            }
        }
    }
    Ok(())
}

/// Independent conflict-free-subset enumerator used to cross-check
/// `maxweight_schedule`: straightforward recursion over links instead of the
/// oracle's bitmask scan.
fn best_value_recursive(
    candidates: &[(LinkId, f64)],
    chosen: &mut Vec<LinkId>,
    topology: &Topology,
    index: usize,
) -> f64 {
    if index == candidates.len() {
        return 0.0;
    }
    // Branch 1: skip this link.
    let skip = best_value_recursive(candidates, chosen, topology, index + 1);
    // Branch 2: take it if the set stays conflict-free.
    let (link, weight) = candidates[index];
    chosen.push(link);
    let attempts: Vec<(NodeId, LinkId)> = chosen
        .iter()
        .map(|&l| (topology.link(l).tx, l))
        .collect();
    let nodes: Vec<NodeId> = attempts.iter().map(|&(n, _)| n).collect();
    let distinct = nodes
        .iter()
        .enumerate()
        .all(|(i, n)| !nodes[i + 1..].contains(n));
    let take = if distinct
        && resolve_collisions(&attempts, topology)
            .map(|collided| collided.iter().all(|&c| !c))
            .unwrap_or(false)
    {
        weight + best_value_recursive(candidates, chosen, topology, index + 1)
    } else {
        f64::NEG_INFINITY
    };
    chosen.pop();
    skip.max(take)
}

/// Random connected topology with 3..=6 nodes, a handful of directed links
/// and 1..=3 sessions routed over random link walks.
pub struct RandomInstance {
    pub topology: Topology,
    pub sessions: Vec<Session>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> RandomInstance {
    loop {
        if let Some(instance) = try_random_instance(rng) {
            return instance;
        }
    }
}

fn try_random_instance(rng: &mut ChaCha8Rng) -> Option<RandomInstance> {
    let nodes = rng.random_range(3..=6usize);
    // A spanning path keeps the graph connected; extra edges appear at
    // random.
    let mut neighbor_pairs: Vec<(usize, usize)> = (0..nodes - 1).map(|i| (i, i + 1)).collect();
    for a in 0..nodes {
        for b in (a + 2)..nodes {
            if rng.random_bool(0.25) {
                neighbor_pairs.push((a, b));
            }
        }
    }

    // Directed links over a random subset of neighbor pairs.
    let mut links: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in &neighbor_pairs {
        if rng.random_bool(0.6) {
            links.push((a, b));
        }
        if rng.random_bool(0.4) {
            links.push((b, a));
        }
        if links.len() >= 10 {
            break;
        }
    }
    if links.is_empty() {
        links.push(neighbor_pairs[0]);
    }

    let topology = build_topology(&TopologySpec {
        node_count: nodes,
        links: links.clone(),
        neighbors: NeighborSpec::Pairs(neighbor_pairs),
    })
    .ok()?;

    // Sessions follow random chained link walks without repeating links.
    let session_count = rng.random_range(1..=3usize);
    let mut sessions = Vec::new();
    for id in 0..session_count {
        let mut path = vec![LinkId(rng.random_range(0..links.len()))];
        while rng.random_bool(0.6) && path.len() < 4 {
            let tail = topology.link(*path.last().unwrap()).rx;
            let options: Vec<LinkId> = topology
                .links()
                .iter()
                .filter(|l| l.tx == tail && !path.contains(&l.id))
                .map(|l| l.id)
                .collect();
            match options.as_slice() {
                [] => break,
                options => path.push(options[rng.random_range(0..options.len())]),
            }
        }
        let source = topology.link(path[0]).tx;
        let destination = topology.link(*path.last().unwrap()).rx;
        sessions.push(Session {
            id: SessionId(id),
            source,
            destination,
            path,
        });
    }
    validate_sessions(&topology, &sessions).ok()?;
    Some(RandomInstance { topology, sessions })
}

/// Random policy of any kind, with parameters in sensible ranges.
pub fn random_policy(rng: &mut ChaCha8Rng, pairs: &PairIndex) -> ResolvedPolicy {
    let kinds = [
        PolicyKind::StaticFixed,
        PolicyKind::PropfairStatic,
        PolicyKind::QueueBased,
        PolicyKind::LinearSbra,
        PolicyKind::SquareSbra,
        PolicyKind::ExponentialSbra,
        PolicyKind::SingleLinkOptimal,
        PolicyKind::SingleHopOptimal,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    let static_values = match kind {
        PolicyKind::StaticFixed => {
            Some((0..pairs.len()).map(|_| rng.random_range(0.0..=1.0)).collect())
        }
        PolicyKind::PropfairStatic => {
            Some((0..pairs.len()).map(|_| rng.random_range(0.0..3.0)).collect())
        }
        _ => None,
    };
    ResolvedPolicy {
        kind,
        delta: rng.random_range(0.1..5.0),
        energy: rng.random_range(0.5..2.0),
        window: [1, 5, 10][rng.random_range(0..3)],
        update_interval: [1, 3][rng.random_range(0..2)],
        ema_lambda: [0.1, 0.5, 1.0][rng.random_range(0..3)],
        static_values,
    }
}

/// Random full simulation config over a random instance.
pub fn random_sim_config(rng: &mut ChaCha8Rng, slots: u64) -> SimConfig {
    let RandomInstance { topology, sessions } = random_instance(rng);
    let pairs = PairIndex::new(&topology, &sessions);
    let policy = random_policy(rng, &pairs);
    let channel = if rng.random_bool(0.7) {
        ChannelKind::RoundedRayleigh {
            scale: UNIT_MEAN_RAYLEIGH_SCALE,
        }
    } else {
        ChannelKind::Constant {
            rate: rng.random_range(0..=3),
        }
    };
    SimConfig {
        topology: topology.into(),
        sessions: std::sync::Arc::new(sessions),
        pairs: pairs.into(),
        policy,
        arrival_rate: rng.random_range(0.0..=1.2),
        slots,
        warmup: 0,
        seed: rng.random(),
        channel,
        channel_update_interval: [1, 5, 10][rng.random_range(0..3)],
        slot_secs: 0.005,
        stability_floor: 50.0,
    }
}

/// Exhaustive max-weight cross-check on random topologies: the schedule must
/// be conflict-free under the engine's collision semantics and match the
/// value found by an independent recursive enumerator.
pub fn maxweight_check(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3A3A);
    for case in 0..cases {
        let RandomInstance { topology, sessions } = random_instance(&mut rng);
        let pairs = PairIndex::new(&topology, &sessions);
        let weights: Vec<(LinkId, SessionId, f64)> = pairs
            .pairs()
            .iter()
            .map(|&(l, s)| {
                let w = if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.0..10.0)
                };
                (l, s, w)
            })
            .collect();
        let schedule = maxweight_schedule(&weights, &topology).map_err(|e| e.to_string())?;

        // Conflict-free under the engine's own collision resolution.
        let attempts: Vec<(NodeId, LinkId)> = schedule
            .iter()
            .map(|a| (topology.link(a.link).tx, a.link))
            .collect();
        let collided = resolve_collisions(&attempts, &topology).map_err(|e| e.to_string())?;
        if collided.iter().any(|&c| c) {
            return Err(format!("case {case}: schedule {schedule:?} is not conflict-free"));
        }

        // Value matches the independent enumeration.
        let mut best_per_link: Vec<(LinkId, f64)> = Vec::new();
        for l in 0..topology.link_count() {
            let best = weights
                .iter()
                .filter(|&&(link, _, w)| link == LinkId(l) && w > 0.0)
                .map(|&(_, _, w)| w)
                .fold(0.0f64, f64::max);
            if best > 0.0 {
                best_per_link.push((LinkId(l), best));
            }
        }
        let expected =
            best_value_recursive(&best_per_link, &mut Vec::new(), &topology, 0).max(0.0);
        let actual: f64 = schedule.iter().map(|a| a.weight).sum();
        if (expected - actual).abs() > 1e-9 {
            return Err(format!(
                "case {case}: schedule value {actual} differs from enumerated optimum {expected}"
            ));
        }
    }
    Ok(())
}
