//! Independent brute-force baselines: grid-search verification of the
//! closed-form probabilities, finite-horizon dynamic programming over the
//! linear-cost objective with expected queue dynamics, and exhaustive
//! max-weight scheduling on small topologies.
//!
//! Nothing here shares code with the controllers it certifies.

use thiserror::Error;

use crate::engine::resolve_collisions;
use crate::topology::{LinkId, NodeId, SessionId, Topology};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("state-space bound exceeded: {0} states (max {1})")]
    StateSpace(usize, usize),
    #[error("max-weight search supports at most {0} links, got {1}")]
    TooManyLinks(usize, usize),
}

const MAX_STATES: usize = 1_000_000;
const MAX_MAXWEIGHT_LINKS: usize = 14;

/// Probability grid {0, 1/n, 2/n, ..., 1} with n = round(1/step).
pub fn probability_grid(step: f64) -> Vec<f64> {
    assert!(step > 0.0 && step <= 1.0);
    let n = (1.0 / step).round().max(1.0) as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Brute-force argmax of the myopic single-hop objective
/// log(p*c*(1-sigma) + X) - delta*e*p over the probability grid. The energy
/// window term is constant in p and dropped. With X = 0 the p = 0 point
/// evaluates to -inf, which the scan handles naturally.
pub fn grid_argmax_myopic(
    channel_rate: u64,
    served_window: f64,
    sigma: f64,
    energy: f64,
    delta: f64,
    step: f64,
) -> f64 {
    assert!(channel_rate >= 1, "grid search expects a live channel");
    assert!((0.0..1.0).contains(&sigma));
    assert!(served_window >= 0.0);
    assert!(step <= 1e-3, "grid step must be at most 1e-3");
    let gain = channel_rate as f64 * (1.0 - sigma);
    let mut best_p = 0.0;
    let mut best_value = f64::NEG_INFINITY;
    for p in probability_grid(step) {
        let value = (p * gain + served_window).ln() - delta * energy * p;
        if value > best_value {
            best_value = value;
            best_p = p;
        }
    }
    best_p
}

/// A desk-scale single-link control problem: finite horizon, capped buffer,
/// finite channel and arrival distributions, and the linear cost
/// -alpha * served + beta * backlog + delta * energy per slot.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub horizon: usize,
    pub buffer_cap: u64,
    pub grid_step: f64,
    /// (rate, probability) support of the channel distribution.
    pub channel_dist: Vec<(u64, f64)>,
    /// (count, probability) support of the per-slot arrival distribution.
    pub arrival_dist: Vec<(u64, f64)>,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub energy: f64,
    pub initial_backlog: u64,
}

impl TinyInstance {
    pub fn validate(&self) -> Result<(), OracleError> {
        let fail = |msg: String| Err(OracleError::InvalidInstance(msg));
        if self.horizon > 8 {
            return fail(format!("horizon {} exceeds 8", self.horizon));
        }
        if self.buffer_cap > 8 {
            return fail(format!("buffer cap {} exceeds 8", self.buffer_cap));
        }
        if self.initial_backlog > self.buffer_cap {
            return fail("initial backlog exceeds the buffer cap".into());
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return fail(format!("grid step {} out of (0, 1]", self.grid_step));
        }
        for (name, dist) in [("channel", &self.channel_dist), ("arrival", &self.arrival_dist)] {
            if dist.is_empty() {
                return fail(format!("{name} distribution is empty"));
            }
            let total: f64 = dist.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 {
                return fail(format!("{name} distribution sums to {total}, not 1"));
            }
            if dist.iter().any(|&(_, p)| p < 0.0) {
                return fail(format!("{name} distribution has a negative probability"));
            }
        }
        let states = (self.horizon + 1) * (self.buffer_cap as usize + 1);
        if states > MAX_STATES {
            return Err(OracleError::StateSpace(states, MAX_STATES));
        }
        Ok(())
    }

    fn cap(&self, q: u64) -> u64 {
        q.min(self.buffer_cap)
    }

    /// Expected packets served by an attempt from backlog `q`.
    fn expected_service(&self, q: u64) -> f64 {
        self.channel_dist
            .iter()
            .map(|&(c, pc)| pc * q.min(c) as f64)
            .sum()
    }

    /// Stage cost of playing probability `p` from backlog `q`.
    fn stage_cost(&self, q: u64, p: f64) -> f64 {
        self.beta * q as f64 + self.delta * self.energy * p
            - self.alpha * p * self.expected_service(q)
    }
}

/// A decision rule on the DP grid: slot and backlog to transmission
/// probability.
pub type GridPolicy<'a> = dyn Fn(usize, u64) -> f64 + 'a;

/// Value and per-(slot, backlog) decision table of the exact DP optimum.
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub value: f64,
    /// `policy[t][q]` is the optimal grid probability.
    pub policy: Vec<Vec<f64>>,
}

/// Exact minimal expected cost by backward induction over (slot, capped
/// backlog) states, with actions from the probability grid and expectations
/// over the channel and arrival distributions.
pub fn dp_optimal_cost(instance: &TinyInstance) -> Result<DpSolution, OracleError> {
    instance.validate()?;
    let grid = probability_grid(instance.grid_step);
    let states = instance.buffer_cap as usize + 1;
    let mut value_next = vec![0.0f64; states];
    let mut policy = vec![vec![0.0; states]; instance.horizon];

    for t in (0..instance.horizon).rev() {
        let mut value_here = vec![0.0f64; states];
        for q in 0..states as u64 {
            let mut best = f64::INFINITY;
            let mut best_p = 0.0;
            for &p in &grid {
                let mut future = 0.0;
                for &(c, pc) in &instance.channel_dist {
                    let served = q.min(c);
                    for &(a, pa) in &instance.arrival_dist {
                        let weight = pc * pa;
                        let with_attempt = instance.cap(q - served + a);
                        let without = instance.cap(q + a);
                        future += weight
                            * (p * value_next[with_attempt as usize]
                                + (1.0 - p) * value_next[without as usize]);
                    }
                }
                let total = instance.stage_cost(q, p) + future;
                if total < best {
                    best = total;
                    best_p = p;
                }
            }
            value_here[q as usize] = best;
            policy[t][q as usize] = best_p;
        }
        value_next = value_here;
    }

    Ok(DpSolution {
        value: value_next[instance.initial_backlog as usize],
        policy,
    })
}

/// Exact expected cost of an arbitrary policy by forward propagation of the
/// full state distribution; no sampling is involved.
pub fn exact_policy_cost(
    instance: &TinyInstance,
    policy: &GridPolicy<'_>,
) -> Result<f64, OracleError> {
    instance.validate()?;
    let states = instance.buffer_cap as usize + 1;
    let mut dist = vec![0.0f64; states];
    dist[instance.initial_backlog as usize] = 1.0;
    let mut total = 0.0;

    for t in 0..instance.horizon {
        let mut next = vec![0.0f64; states];
        for q in 0..states as u64 {
            let mass = dist[q as usize];
            if mass == 0.0 {
                continue;
            }
            let p = policy(t, q);
            debug_assert!((0.0..=1.0).contains(&p));
            total += mass * instance.stage_cost(q, p);
            for &(c, pc) in &instance.channel_dist {
                let served = q.min(c);
                for &(a, pa) in &instance.arrival_dist {
                    let weight = mass * pc * pa;
                    next[instance.cap(q - served + a) as usize] += weight * p;
                    next[instance.cap(q + a) as usize] += weight * (1.0 - p);
                }
            }
        }
        dist = next;
    }
    Ok(total)
}

/// One selected activation of the exhaustive max-weight search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub link: LinkId,
    pub session: SessionId,
    pub weight: f64,
}

/// Exhaustively find the conflict-free activation set maximizing the summed
/// weights. Conflict-freeness follows the engine's collision semantics: the
/// returned set would transmit with zero collisions. Zero-weight pairs are
/// never activated, so all-zero weights yield the empty set.
pub fn maxweight_schedule(
    weights: &[(LinkId, SessionId, f64)],
    topology: &Topology,
) -> Result<Vec<Activation>, OracleError> {
    if topology.link_count() > MAX_MAXWEIGHT_LINKS {
        return Err(OracleError::TooManyLinks(
            MAX_MAXWEIGHT_LINKS,
            topology.link_count(),
        ));
    }
    // Best strictly-positive session weight per link.
    let mut best: Vec<Option<(SessionId, f64)>> = vec![None; topology.link_count()];
    for &(link, session, weight) in weights {
        assert!(weight >= 0.0, "max-weight expects nonnegative weights");
        if weight > 0.0 {
            match best[link.0] {
                Some((_, w)) if w >= weight => {}
                _ => best[link.0] = Some((session, weight)),
            }
        }
    }
    let candidates: Vec<(LinkId, SessionId, f64)> = best
        .iter()
        .enumerate()
        .filter_map(|(l, entry)| entry.map(|(s, w)| (LinkId(l), s, w)))
        .collect();

    let mut best_value = 0.0;
    let mut best_set: Vec<Activation> = Vec::new();
    for mask in 0u32..(1 << candidates.len()) {
        let chosen: Vec<&(LinkId, SessionId, f64)> = candidates
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| c)
            .collect();
        // One attempt per node.
        let nodes: Vec<NodeId> = chosen
            .iter()
            .map(|&&(l, _, _)| topology.link(l).tx)
            .collect();
        if nodes
            .iter()
            .enumerate()
            .any(|(i, n)| nodes[i + 1..].contains(n))
        {
            continue;
        }
        let attempts: Vec<(NodeId, LinkId)> = chosen
            .iter()
            .map(|&&(l, _, _)| (topology.link(l).tx, l))
            .collect();
        let collided = resolve_collisions(&attempts, topology)
            .expect("distinct transmitters checked above");
        if collided.iter().any(|&c| c) {
            continue;
        }
        let value: f64 = chosen.iter().map(|&&(_, _, w)| w).sum();
        if value > best_value {
            best_value = value;
            best_set = chosen
                .iter()
                .map(|&&(link, session, weight)| Activation {
                    link,
                    session,
                    weight,
                })
                .collect();
        }
    }
    best_set.sort_by_key(|a| a.link);
    Ok(best_set)
}

/// Outcome of a failed oracle check, naming the offending inputs.
#[derive(Debug, Clone)]
pub struct AgreementFailure {
    pub channel_rate: u64,
    pub served_window: f64,
    pub sigma: f64,
    pub energy_delta: f64,
    pub grid_probability: f64,
    pub closed_form_probability: f64,
}

impl std::fmt::Display for AgreementFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "tuple (c={}, X={:.6}, sigma={:.6}, e*delta={:.6}): grid {} vs closed form {}",
            self.channel_rate,
            self.served_window,
            self.sigma,
            self.energy_delta,
            self.grid_probability,
            self.closed_form_probability
        )
    }
}

/// Check the closed form against the grid argmax over `count` random tuples
/// (c in 1..=5, X in [0,10], sigma in [0,0.9], e*delta in [0.1,10]); each
/// disagreement beyond 2*step is returned. The closed form under test is a
/// parameter so a corrupted implementation can be exercised deliberately.
pub fn closed_form_agreement(
    count: usize,
    step: f64,
    seed: u64,
    closed_form: &dyn Fn(f64, u64, f64, f64, f64) -> f64,
) -> Result<(), Box<AgreementFailure>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let channel_rate = rng.random_range(1..=5u64);
        let served_window = rng.random_range(0.0..=10.0f64);
        let sigma = rng.random_range(0.0..=0.9f64);
        let energy_delta = rng.random_range(0.1..=10.0f64);
        let grid_p =
            grid_argmax_myopic(channel_rate, served_window, sigma, 1.0, energy_delta, step);
        let closed_p = closed_form(served_window, channel_rate, sigma, 1.0, energy_delta);
        if (grid_p - closed_p).abs() > 2.0 * step {
            return Err(Box::new(AgreementFailure {
                channel_rate,
                served_window,
                sigma,
                energy_delta,
                grid_probability: grid_p,
                closed_form_probability: closed_p,
            }));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::single_hop_probability;
    use crate::topology::{build_topology, NeighborSpec, TopologySpec};
    use approx::assert_relative_eq;

    #[test]
    fn grid_matches_closed_form_interior_point() {
        // sigma = 0, e*delta = 2, X = 0, c = 1: optimum 0.5.
        let p = grid_argmax_myopic(1, 0.0, 0.0, 1.0, 2.0, 1e-3);
        assert!((p - 0.5).abs() <= 1e-3, "got {p}");
    }

    #[test]
    fn grid_hits_upper_clamp_for_cheap_energy() {
        let p = grid_argmax_myopic(1, 0.0, 0.0, 1.0, 0.01, 1e-3);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn grid_hits_lower_clamp_for_large_window() {
        // X large enough that the unconstrained optimum is negative.
        let p = grid_argmax_myopic(1, 50.0, 0.0, 1.0, 2.0, 1e-3);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn agreement_holds_on_reference_tuples() {
        closed_form_agreement(200, 1e-3, 42, &single_hop_probability)
            .map_err(|f| f.to_string())
            .unwrap();
    }

    #[test]
    fn corrupted_closed_form_is_caught() {
        let corrupted = |x: f64, c: u64, s: f64, e: f64, d: f64| {
            // Off-by-factor-two target.
            single_hop_probability(x, c, s, e, d * 2.0)
        };
        assert!(closed_form_agreement(200, 1e-3, 42, &corrupted).is_err());
    }

    fn single_stage_instance(delta: f64) -> TinyInstance {
        TinyInstance {
            horizon: 1,
            buffer_cap: 2,
            grid_step: 0.01,
            channel_dist: vec![(1, 1.0)],
            arrival_dist: vec![(0, 1.0)],
            alpha: 1.0,
            beta: 0.0,
            delta,
            energy: 1.0,
            initial_backlog: 1,
        }
    }

    #[test]
    fn zero_horizon_costs_nothing() {
        let mut inst = single_stage_instance(0.5);
        inst.horizon = 0;
        let sol = dp_optimal_cost(&inst).unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(sol.policy.is_empty());
    }

    #[test]
    fn single_stage_transmit_when_energy_is_cheap() {
        // Stage cost is -p + 0.5 p = -0.5 p, minimized at p = 1: cost -0.5.
        let sol = dp_optimal_cost(&single_stage_instance(0.5)).unwrap();
        assert_relative_eq!(sol.value, -0.5, max_relative = 1e-12);
        assert_eq!(sol.policy[0][1], 1.0);
    }

    #[test]
    fn single_stage_idle_when_energy_is_dear() {
        // Stage cost is -p + 2 p = p, minimized at p = 0: cost 0.
        let sol = dp_optimal_cost(&single_stage_instance(2.0)).unwrap();
        assert_relative_eq!(sol.value, 0.0, max_relative = 1e-12);
        assert_eq!(sol.policy[0][1], 0.0);
    }

    #[test]
    fn policy_cost_of_dp_policy_equals_dp_value() {
        let inst = TinyInstance {
            horizon: 4,
            buffer_cap: 4,
            grid_step: 0.05,
            channel_dist: vec![(0, 0.2), (1, 0.5), (2, 0.3)],
            arrival_dist: vec![(0, 0.6), (1, 0.3), (2, 0.1)],
            alpha: 1.0,
            beta: 0.4,
            delta: 0.7,
            energy: 1.0,
            initial_backlog: 2,
        };
        let sol = dp_optimal_cost(&inst).unwrap();
        let cost = exact_policy_cost(&inst, &|t, q| sol.policy[t][q as usize]).unwrap();
        assert_relative_eq!(cost, sol.value, max_relative = 1e-12);
    }

    #[test]
    fn always_idle_is_suboptimal_with_positive_arrivals() {
        let inst = TinyInstance {
            horizon: 4,
            buffer_cap: 4,
            grid_step: 0.05,
            channel_dist: vec![(1, 1.0)],
            arrival_dist: vec![(0, 0.5), (1, 0.5)],
            alpha: 1.0,
            beta: 0.2,
            delta: 0.3,
            energy: 1.0,
            initial_backlog: 1,
        };
        let sol = dp_optimal_cost(&inst).unwrap();
        let idle = exact_policy_cost(&inst, &|_, _| 0.0).unwrap();
        assert!(idle > sol.value + 1e-9, "idle {idle} vs opt {}", sol.value);
    }

    fn two_link_clique() -> Topology {
        // Nodes 0,1 neighbors of 2; both links converge on 2 so their
        // transmissions always interfere.
        build_topology(&TopologySpec {
            node_count: 3,
            links: vec![(0, 2), (1, 2)],
            neighbors: NeighborSpec::Pairs(vec![(0, 2), (1, 2), (0, 1)]),
        })
        .unwrap()
    }

    #[test]
    fn maxweight_prefers_the_heavier_conflicting_link() {
        let topo = two_link_clique();
        let weights = vec![
            (LinkId(0), SessionId(0), 3.0),
            (LinkId(1), SessionId(1), 2.0),
        ];
        let schedule = maxweight_schedule(&weights, &topo).unwrap();
        assert_eq!(schedule.len(), 1);
        assert_eq!(schedule[0].link, LinkId(0));
        assert_relative_eq!(schedule[0].weight, 3.0);
    }

    #[test]
    fn maxweight_activates_independent_links_together() {
        let topo = build_topology(&TopologySpec {
            node_count: 4,
            links: vec![(1, 0), (2, 3)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1), (1, 2), (2, 3)]),
        })
        .unwrap();
        let weights = vec![
            (LinkId(0), SessionId(0), 1.5),
            (LinkId(1), SessionId(1), 2.5),
        ];
        let schedule = maxweight_schedule(&weights, &topo).unwrap();
        assert_eq!(schedule.len(), 2);
    }

    #[test]
    fn maxweight_with_zero_weights_is_empty() {
        let topo = two_link_clique();
        let weights = vec![
            (LinkId(0), SessionId(0), 0.0),
            (LinkId(1), SessionId(1), 0.0),
        ];
        assert!(maxweight_schedule(&weights, &topo).unwrap().is_empty());
    }
}
