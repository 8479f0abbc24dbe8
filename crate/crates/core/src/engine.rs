//! The slotted simulation loop: arrivals, channel refresh, probability
//! refresh, transmission sampling, collision resolution, queue updates and
//! metric accounting.
//!
//! One `Simulation` is a single-writer loop; independent runs (sweep points,
//! seeds) can execute concurrently because every random process derives from
//! the run's own seed.

use std::sync::Arc;

use thiserror::Error;

use crate::controllers::{
    estimate_collision, refresh_probabilities, AttemptOutcome, PolicyKind, RefreshInputs,
    ResolvedPolicy,
};
use crate::metrics::{MetricsAccumulator, MetricsReport, SlotRecord};
use crate::stochastic::{poisson_arrivals, ChannelKind, ChannelProcess, RngStream, StreamKind};
use crate::topology::{LinkId, NodeId, PairIndex, QueueMatrix, Session, SessionId, Topology};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("node {0} produced two transmission attempts in one slot")]
    DuplicateAttempt(usize),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Fully resolved inputs for one simulation run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Arc<Topology>,
    pub sessions: Arc<Vec<Session>>,
    pub pairs: Arc<PairIndex>,
    pub policy: ResolvedPolicy,
    /// Poisson arrival rate at every session source, packets per slot.
    pub arrival_rate: f64,
    pub slots: u64,
    pub warmup: u64,
    pub seed: u64,
    pub channel: ChannelKind,
    pub channel_update_interval: u64,
    /// Slot duration in seconds, used only for delay reporting.
    pub slot_secs: f64,
    /// Absolute backlog floor for the stability heuristic.
    pub stability_floor: f64,
}

impl SimConfig {
    fn validate(&self) -> Result<(), EngineError> {
        let fail = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.slots > 0 && self.warmup >= self.slots {
            return fail(format!(
                "warmup ({}) must be smaller than slots ({})",
                self.warmup, self.slots
            ));
        }
        if self.arrival_rate < 0.0 || !self.arrival_rate.is_finite() {
            return fail(format!("arrival rate {} is invalid", self.arrival_rate));
        }
        if self.policy.energy <= 0.0 {
            return fail("energy per transmission must be positive".into());
        }
        match self.policy.kind {
            PolicyKind::SingleLinkOptimal | PolicyKind::SingleHopOptimal => {
                if self.policy.delta <= 0.0 || !self.policy.delta.is_finite() {
                    return fail(format!(
                        "delta must be positive and finite for {} (e*delta = 0 leaves the \
                         target unbounded), got {}",
                        self.policy.kind.as_str(),
                        self.policy.delta
                    ));
                }
            }
            PolicyKind::StaticFixed | PolicyKind::PropfairStatic => {
                let values = self.policy.static_values.as_ref().ok_or_else(|| {
                    EngineError::InvalidConfig(format!(
                        "{} policies need per-pair static values",
                        self.policy.kind.as_str()
                    ))
                })?;
                if values.len() != self.pairs.len() {
                    return fail(format!(
                        "expected {} static values, got {}",
                        self.pairs.len(),
                        values.len()
                    ));
                }
            }
            _ => {}
        }
        if self.policy.window == 0 {
            return fail("evaluation window must be at least 1 slot".into());
        }
        if self.policy.update_interval == 0 {
            return fail("control update interval must be at least 1 slot".into());
        }
        if !(0.0..=1.0).contains(&self.policy.ema_lambda) || self.policy.ema_lambda == 0.0 {
            return fail(format!(
                "ema_lambda must lie in (0, 1], got {}",
                self.policy.ema_lambda
            ));
        }
        Ok(())
    }
}

/// One transmission attempt and its outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attempt {
    pub node: NodeId,
    pub link: LinkId,
    pub session: SessionId,
    pub collided: bool,
    /// Packets moved on success, capped at min(slot-start backlog, rate).
    pub served: u64,
}

/// Everything that happened during one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub slot: u64,
    pub attempts: Vec<Attempt>,
    /// Per-session external arrivals.
    pub arrivals: Vec<u64>,
    /// Per-session packets that reached their destination.
    pub delivered: Vec<u64>,
    pub energy_spent: f64,
}

/// Fixed-length sliding sum over the last N slots.
#[derive(Debug, Clone)]
struct SlidingWindow {
    ring: Vec<u64>,
    pos: usize,
    sum: u64,
}

impl SlidingWindow {
    fn new(len: usize) -> Self {
        Self {
            ring: vec![0; len],
            pos: 0,
            sum: 0,
        }
    }

    fn push(&mut self, value: u64) {
        self.sum = self.sum + value - self.ring[self.pos];
        self.ring[self.pos] = value;
        self.pos = (self.pos + 1) % self.ring.len();
    }

    fn sum(&self) -> u64 {
        self.sum
    }
}

/// Decide which attempts fail. An attempt on link `l` collides iff some
/// other attempting node is heard by `l`'s receiver or *is* `l`'s receiver
/// (half-duplex). Input must contain at most one attempt per node.
pub fn resolve_collisions(
    attempts: &[(NodeId, LinkId)],
    topology: &Topology,
) -> Result<Vec<bool>, EngineError> {
    for (i, &(node, _)) in attempts.iter().enumerate() {
        if attempts[i + 1..].iter().any(|&(other, _)| other == node) {
            return Err(EngineError::DuplicateAttempt(node.0));
        }
    }
    Ok(attempts
        .iter()
        .map(|&(node, link)| {
            let rx = topology.link(link).rx;
            attempts.iter().any(|&(other, _)| {
                other != node && (other == rx || topology.are_neighbors(other, rx))
            })
        })
        .collect())
}

/// Live state of one run.
pub struct Simulation {
    cfg: SimConfig,
    queues: QueueMatrix,
    snapshot: QueueMatrix,
    slot: u64,
    channel: ChannelProcess,
    rates: Vec<u64>,
    arrival_streams: Vec<RngStream>,
    mac_streams: Vec<RngStream>,
    probabilities: Vec<f64>,
    effective: Vec<f64>,
    served_windows: Vec<SlidingWindow>,
    energy_windows: Vec<SlidingWindow>,
    sigmas: Vec<f64>,
    served_sums: Vec<u64>,
    served_by_link: Vec<u64>,
    total_arrivals: u64,
    total_delivered: u64,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let link_count = cfg.topology.link_count();
        let pair_count = cfg.pairs.len();
        let channel = ChannelProcess::new(
            cfg.channel,
            cfg.channel_update_interval,
            link_count,
            cfg.seed,
        );
        let arrival_streams = (0..cfg.sessions.len())
            .map(|s| RngStream::new(cfg.seed, StreamKind::Arrival, s as u64))
            .collect();
        let mac_streams = (0..cfg.topology.node_count())
            .map(|n| RngStream::new(cfg.seed, StreamKind::MacDecision, n as u64))
            .collect();
        let window = cfg.policy.window;
        Ok(Self {
            queues: QueueMatrix::new(pair_count),
            snapshot: QueueMatrix::new(pair_count),
            slot: 0,
            channel,
            rates: vec![0; link_count],
            arrival_streams,
            mac_streams,
            probabilities: vec![0.0; pair_count],
            effective: vec![0.0; pair_count],
            served_windows: vec![SlidingWindow::new(window); link_count],
            energy_windows: vec![SlidingWindow::new(window); link_count],
            sigmas: vec![0.0; link_count],
            served_sums: vec![0; link_count],
            served_by_link: vec![0; link_count],
            total_arrivals: 0,
            total_delivered: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn pairs(&self) -> &PairIndex {
        &self.cfg.pairs
    }

    pub fn backlogs(&self) -> &[u64] {
        self.queues.backlogs()
    }

    /// Backlogs as they stood at the start of the last executed slot.
    pub fn snapshot_backlogs(&self) -> &[u64] {
        self.snapshot.backlogs()
    }

    pub fn channel_rates(&self) -> &[u64] {
        &self.rates
    }

    /// Per-pair probabilities actually used by the last sampling step:
    /// held values masked by queue emptiness and normalized per node when a
    /// node's total exceeded one.
    pub fn effective_probabilities(&self) -> &[f64] {
        &self.effective
    }

    /// Sliding served-packet sums per link (the X windows).
    pub fn served_window_sums(&self) -> Vec<u64> {
        self.served_windows.iter().map(|w| w.sum()).collect()
    }

    /// Sliding energy spent per link over the window (the Y windows).
    pub fn energy_window_sums(&self) -> Vec<f64> {
        self.energy_windows
            .iter()
            .map(|w| w.sum() as f64 * self.cfg.policy.energy)
            .collect()
    }

    pub fn collision_estimates(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn total_arrivals(&self) -> u64 {
        self.total_arrivals
    }

    pub fn total_delivered(&self) -> u64 {
        self.total_delivered
    }

    pub fn total_backlog(&self) -> u64 {
        self.queues.total()
    }

    /// Preload a queue, e.g. to start a test from a known backlog.
    pub fn seed_backlog(&mut self, pair: usize, packets: u64) {
        self.queues.enqueue(pair, packets);
        self.total_arrivals += packets;
    }

    /// Advance one slot. Order within the slot: external arrivals, channel
    /// refresh, probability refresh, node sampling, collision resolution,
    /// service, memory update. Sampling and service use the slot-start
    /// backlogs, so packets arriving in slot t (externally or forwarded)
    /// become eligible in slot t+1.
    pub fn step(&mut self) -> SlotOutcome {
        let t = self.slot;
        let cfg = &self.cfg;
        let pairs = &cfg.pairs;
        let sessions = cfg.sessions.as_slice();
        self.snapshot.clone_from(&self.queues);

        // (1) External arrivals at each session's source link.
        let mut arrivals = vec![0u64; sessions.len()];
        for session in sessions {
            let count = poisson_arrivals(
                &mut self.arrival_streams[session.id.0],
                cfg.arrival_rate,
            );
            if count > 0 {
                self.queues.enqueue(pairs.first_pair(session.id), count);
            }
            arrivals[session.id.0] = count;
            self.total_arrivals += count;
        }

        // (2) Channel refresh.
        self.rates.copy_from_slice(self.channel.at(t));

        // (3) Probability refresh every K slots, from the slot-start state.
        if t.is_multiple_of(cfg.policy.update_interval) {
            for (sum, window) in self.served_sums.iter_mut().zip(&self.served_windows) {
                *sum = window.sum();
            }
            let inputs = RefreshInputs {
                queues: &self.snapshot,
                pairs,
                channel_rates: &self.rates,
                served_windows: &self.served_sums,
                collision_estimates: &self.sigmas,
            };
            refresh_probabilities(&cfg.policy, &inputs, &mut self.probabilities);
        }

        // (4) Each node samples at most one (link, session) pair. Pairs with
        // an empty slot-start queue are masked out; if the eligible
        // probabilities sum above 1 they are scaled back onto the simplex.
        self.effective.iter_mut().for_each(|p| *p = 0.0);
        let mut attempts: Vec<(NodeId, usize)> = Vec::new();
        for node in 0..cfg.topology.node_count() {
            let node = NodeId(node);
            let node_pairs = pairs.by_node(node);
            if node_pairs.is_empty() {
                continue;
            }
            let mut total = 0.0;
            for &p in node_pairs {
                if self.snapshot.backlog(p) > 0 {
                    total += self.probabilities[p];
                }
            }
            if total <= 0.0 {
                continue;
            }
            let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
            for &p in node_pairs {
                if self.snapshot.backlog(p) > 0 {
                    self.effective[p] = self.probabilities[p] * scale;
                }
            }
            let draw = self.mac_streams[node.0].uniform();
            let mut cumulative = 0.0;
            for &p in node_pairs {
                if self.effective[p] <= 0.0 {
                    continue;
                }
                cumulative += self.effective[p];
                if draw < cumulative {
                    attempts.push((node, p));
                    break;
                }
            }
        }

        // (5) Collision resolution.
        let attempt_links: Vec<(NodeId, LinkId)> = attempts
            .iter()
            .map(|&(node, p)| (node, pairs.pair(p).0))
            .collect();
        let collided = resolve_collisions(&attempt_links, &cfg.topology)
            .expect("sampling emits one attempt per node");

        // (6) Service: successful attempts move min(slot-start backlog,
        // channel rate) packets to the next hop or the destination.
        let mut delivered = vec![0u64; sessions.len()];
        self.served_by_link.iter_mut().for_each(|s| *s = 0);
        let mut out_attempts = Vec::with_capacity(attempts.len());
        for (&(node, pair), &was_collided) in attempts.iter().zip(&collided) {
            let (link, session) = pairs.pair(pair);
            let mut served = 0;
            if !was_collided {
                served = self.snapshot.backlog(pair).min(self.rates[link.0]);
                if served > 0 {
                    self.queues.dequeue(pair, served);
                    match pairs.next_pair(pair) {
                        Some(next) => self.queues.enqueue(next, served),
                        None => {
                            delivered[session.0] += served;
                            self.total_delivered += served;
                        }
                    }
                }
            }
            self.served_by_link[link.0] = served;
            out_attempts.push(Attempt {
                node,
                link,
                session,
                collided: was_collided,
                served,
            });
        }

        // (7) Controller memory: X/Y windows advance every slot; the
        // collision estimate only moves on slots with an attempt.
        let mut attempted = vec![false; cfg.topology.link_count()];
        let mut collided_by_link = vec![false; cfg.topology.link_count()];
        for attempt in &out_attempts {
            attempted[attempt.link.0] = true;
            collided_by_link[attempt.link.0] = attempt.collided;
        }
        for l in 0..cfg.topology.link_count() {
            self.served_windows[l].push(self.served_by_link[l]);
            self.energy_windows[l].push(attempted[l] as u64);
            if attempted[l] {
                let outcome = if collided_by_link[l] {
                    AttemptOutcome::Collided
                } else {
                    AttemptOutcome::Success
                };
                self.sigmas[l] =
                    estimate_collision(self.sigmas[l], outcome, cfg.policy.ema_lambda);
            }
        }

        let energy_spent = cfg.policy.energy * out_attempts.len() as f64;
        self.slot += 1;

        SlotOutcome {
            slot: t,
            attempts: out_attempts,
            arrivals,
            delivered,
            energy_spent,
        }
    }
}

/// Run a full scenario and aggregate its metrics. Bit-identical across
/// reruns of the same config.
pub fn run(cfg: &SimConfig) -> Result<MetricsReport, EngineError> {
    run_observed(cfg, |_, _| {})
}

/// Like [`run`], invoking `observer` after every slot with the live
/// simulation (slot-start snapshot still in place) and the slot's outcome.
pub fn run_observed<F>(cfg: &SimConfig, mut observer: F) -> Result<MetricsReport, EngineError>
where
    F: FnMut(&Simulation, &SlotOutcome),
{
    let mut sim = Simulation::new(cfg.clone())?;
    let mut acc = MetricsAccumulator::new(
        cfg.slots,
        cfg.warmup,
        cfg.policy.window,
        cfg.pairs.len(),
        cfg.sessions.len(),
        cfg.topology.link_count(),
    );
    let mut attempt_buf: Vec<(LinkId, bool)> = Vec::new();
    for _ in 0..cfg.slots {
        let outcome = sim.step();
        attempt_buf.clear();
        attempt_buf.extend(outcome.attempts.iter().map(|a| (a.link, a.collided)));
        acc.push(
            outcome.slot,
            sim.snapshot_backlogs(),
            &outcome.arrivals,
            &outcome.delivered,
            &attempt_buf,
            outcome.energy_spent,
        )?;
        observer(&sim, &outcome);
    }
    Ok(acc.finalize(
        &cfg.pairs,
        &cfg.sessions,
        cfg.slot_secs,
        cfg.stability_floor,
    ))
}

/// Run while collecting the full per-slot record stream, mainly so tests can
/// cross-check the incremental metrics against [`crate::metrics::compute_metrics`].
pub fn run_recording(cfg: &SimConfig) -> Result<(MetricsReport, Vec<SlotRecord>), EngineError> {
    let mut records = Vec::with_capacity(cfg.slots as usize);
    let report = run_observed(cfg, |sim, outcome| {
        records.push(SlotRecord {
            slot: outcome.slot,
            backlogs: sim.snapshot_backlogs().to_vec(),
            arrivals: outcome.arrivals.clone(),
            delivered: outcome.delivered.clone(),
            attempts: outcome
                .attempts
                .iter()
                .map(|a| (a.link, a.collided))
                .collect(),
            energy: outcome.energy_spent,
        });
    })?;
    Ok((report, records))
}
