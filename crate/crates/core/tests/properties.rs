//! Property suites for the structural invariants: interference-set shape,
//! telescoping differential backlogs, ratio-rule ranges and invariances, and
//! the collision-estimator fixed points.

use proptest::prelude::*;

use sbra_core::controllers::{
    estimate_collision, sbra_probabilities, single_hop_probability, single_link_probability,
    AttemptOutcome, SbraTransform,
};
use sbra_core::topology::{
    build_topology, differential_backlog, validate_sessions, LinkId, NeighborSpec, NodeId,
    PairIndex, QueueMatrix, Session, SessionId, TopologySpec,
};

/// Star with `arms` single-link sessions fanning out of node 0; every pair
/// interferes with every other (shared transmitter).
fn star(arms: usize) -> PairIndex {
    let topo = build_topology(&TopologySpec {
        node_count: arms + 1,
        links: (0..arms).map(|i| (0, i + 1)).collect(),
        neighbors: NeighborSpec::Pairs((0..arms).map(|i| (0, i + 1)).collect()),
    })
    .unwrap();
    let sessions: Vec<Session> = (0..arms)
        .map(|i| Session {
            id: SessionId(i),
            source: NodeId(0),
            destination: NodeId(i + 1),
            path: vec![LinkId(i)],
        })
        .collect();
    validate_sessions(&topo, &sessions).unwrap();
    PairIndex::new(&topo, &sessions)
}

/// A line 0 - 1 - ... - n with forward links and one session over them all.
fn line(links: usize) -> (sbra_core::Topology, Vec<Session>) {
    let topo = build_topology(&TopologySpec {
        node_count: links + 1,
        links: (0..links).map(|i| (i, i + 1)).collect(),
        neighbors: NeighborSpec::Pairs((0..links).map(|i| (i, i + 1)).collect()),
    })
    .unwrap();
    let sessions = vec![Session {
        id: SessionId(0),
        source: NodeId(0),
        destination: NodeId(links),
        path: (0..links).map(LinkId).collect(),
    }];
    validate_sessions(&topo, &sessions).unwrap();
    (topo, sessions)
}

fn transforms() -> [SbraTransform; 3] {
    [
        SbraTransform::Linear,
        SbraTransform::Square,
        SbraTransform::Exponential,
    ]
}

proptest! {
    #[test]
    fn interference_sets_contain_self_and_only_known_links(links in 1usize..8) {
        let (topo, _) = line(links);
        for l in 0..topo.link_count() {
            let set = topo.interference_set(LinkId(l)).unwrap();
            prop_assert!(set.contains(&LinkId(l)));
            prop_assert!(set.iter().all(|k| k.0 < topo.link_count()));
            // Deterministic: a second derivation of the same topology agrees.
            let again = build_topology(&TopologySpec {
                node_count: links + 1,
                links: (0..links).map(|i| (i, i + 1)).collect(),
                neighbors: NeighborSpec::Pairs((0..links).map(|i| (i, i + 1)).collect()),
            })
            .unwrap();
            prop_assert_eq!(again.interference_set(LinkId(l)).unwrap(), set);
        }
    }

    #[test]
    fn differential_backlogs_telescope_to_the_source_backlog(
        backlogs in proptest::collection::vec(0u64..50, 1..8),
    ) {
        let (topo, sessions) = line(backlogs.len());
        let pairs = PairIndex::new(&topo, &sessions);
        let mut queues = QueueMatrix::new(pairs.len());
        for (pair, &q) in backlogs.iter().enumerate() {
            queues.enqueue(pair, q);
        }
        let total: i64 = (0..pairs.len())
            .map(|p| differential_backlog(&queues, &pairs, p))
            .sum();
        prop_assert_eq!(total, backlogs[0] as i64);
    }

    #[test]
    fn ratio_probabilities_stay_in_unit_range(
        weights in proptest::collection::vec(0.0f64..100.0, 2..7),
        mask in proptest::collection::vec(any::<bool>(), 2..7),
    ) {
        let n = weights.len().min(mask.len());
        let weights = &weights[..n];
        let mask = &mask[..n];
        let pairs = star(n);
        let mut out = vec![0.0; n];
        for transform in transforms() {
            sbra_probabilities(weights, mask, &pairs, transform, &mut out);
            for (pair, &p) in out.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&p));
                if !mask[pair] {
                    prop_assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn linear_and_square_rules_are_scale_invariant(
        weights in proptest::collection::vec(0.0f64..10.0, 2..6),
        scale in 1e-3f64..1e3,
    ) {
        let n = weights.len();
        let pairs = star(n);
        let mask = vec![true; n];
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        for transform in [SbraTransform::Linear, SbraTransform::Square] {
            let mut base = vec![0.0; n];
            let mut after = vec![0.0; n];
            sbra_probabilities(&weights, &mask, &pairs, transform, &mut base);
            sbra_probabilities(&scaled, &mask, &pairs, transform, &mut after);
            for (a, b) in base.iter().zip(&after) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn exponential_rule_is_shift_invariant(
        weights in proptest::collection::vec(0.0f64..50.0, 2..6),
        shift in -100.0f64..100.0,
    ) {
        let n = weights.len();
        let pairs = star(n);
        let mask = vec![true; n];
        let shifted: Vec<f64> = weights.iter().map(|w| (w + shift).max(0.0)).collect();
        // Only a true common shift cancels; skip cases where the clamp to
        // nonnegative weights broke the common offset.
        prop_assume!(weights.iter().all(|w| w + shift >= 0.0));
        let mut base = vec![0.0; n];
        let mut after = vec![0.0; n];
        sbra_probabilities(&weights, &mask, &pairs, SbraTransform::Exponential, &mut base);
        sbra_probabilities(&shifted, &mask, &pairs, SbraTransform::Exponential, &mut after);
        for (a, b) in base.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn raising_one_weight_is_monotone(
        weights in proptest::collection::vec(0.01f64..10.0, 3..6),
        bump in 0.1f64..10.0,
        target in 0usize..6,
    ) {
        let n = weights.len();
        let target = target % n;
        let pairs = star(n);
        let mask = vec![true; n];
        let mut bumped = weights.clone();
        bumped[target] += bump;
        for transform in transforms() {
            let mut base = vec![0.0; n];
            let mut after = vec![0.0; n];
            sbra_probabilities(&weights, &mask, &pairs, transform, &mut base);
            sbra_probabilities(&bumped, &mask, &pairs, transform, &mut after);
            prop_assert!(after[target] >= base[target] - 1e-12);
            for other in 0..n {
                if other != target {
                    prop_assert!(after[other] <= base[other] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn collision_free_formula_matches_single_link(
        served in 0.0f64..20.0,
        channel in 1u64..6,
        energy_delta in 0.05f64..10.0,
    ) {
        let hop = single_hop_probability(served, channel, 0.0, 1.0, energy_delta);
        let link = single_link_probability(served, channel, 1.0, energy_delta);
        prop_assert_eq!(hop.to_bits(), link.to_bits());
    }

    #[test]
    fn collision_estimate_stays_in_unit_interval(
        outcomes in proptest::collection::vec(0u8..3, 1..200),
        lambda in 0.01f64..1.0,
    ) {
        let mut sigma = 0.0;
        for code in outcomes {
            let outcome = match code {
                0 => AttemptOutcome::Success,
                1 => AttemptOutcome::Collided,
                _ => AttemptOutcome::NoAttempt,
            };
            sigma = estimate_collision(sigma, outcome, lambda);
            prop_assert!((0.0..1.0).contains(&sigma));
        }
    }
}
