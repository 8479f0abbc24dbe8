//! Transmission-probability control rules: the closed-form single-link and
//! single-hop optima, the static proportional-fair assignment, and the
//! state-based ratio rules with linear, square and exponential transforms.
//!
//! All functions here are pure; the engine feeds them immutable snapshots of
//! the queue, channel and controller-memory state each control epoch.

use crate::topology::{differential_backlog, LinkId, PairIndex, QueueMatrix};

/// Clamp onto the unit interval: min(max(x, 0), 1). Written literally (not
/// `f64::clamp`) so a NaN that slips through in release maps to 0 instead of
/// propagating.
#[allow(clippy::manual_clamp)]
pub fn project_unit(x: f64) -> f64 {
    debug_assert!(!x.is_nan(), "projection input must not be NaN");
    x.max(0.0).min(1.0)
}

/// Closed-form optimal persistence probability for an isolated link:
/// proj(1/(e*delta) - X/c), where X is the served-packet window and c the
/// current channel rate. A dead channel (c = 0) forces probability 0; the
/// caller returns 0 itself when the queue is empty.
pub fn single_link_probability(served_window: f64, channel_rate: u64, energy: f64, delta: f64) -> f64 {
    debug_assert!(energy > 0.0 && delta > 0.0);
    if channel_rate == 0 {
        return 0.0;
    }
    project_unit(1.0 / (energy * delta) - served_window / channel_rate as f64)
}

/// Collision-aware variant for single-hop contention:
/// proj(1/(e*delta) - X/(c*(1-sigma))). Reduces exactly to
/// [`single_link_probability`] at sigma = 0. A collision estimate at or
/// above 1 means transmissions never get through, so the probability is 0.
pub fn single_hop_probability(
    served_window: f64,
    channel_rate: u64,
    collision_estimate: f64,
    energy: f64,
    delta: f64,
) -> f64 {
    debug_assert!(energy > 0.0 && delta > 0.0);
    debug_assert!((0.0..=1.0).contains(&collision_estimate));
    if channel_rate == 0 || collision_estimate >= 1.0 {
        return 0.0;
    }
    let effective = channel_rate as f64 * (1.0 - collision_estimate);
    project_unit(1.0 / (energy * delta) - served_window / effective)
}

/// Result of one slot on a link, as seen by the collision estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptOutcome {
    Success,
    Collided,
    NoAttempt,
}

/// Exponential moving average over the link's own attempts; idle slots leave
/// the estimate unchanged. Long collision streaks would round the average up
/// to exactly 1.0 in floating point; the estimate is kept strictly below 1
/// so it never claims certain collision.
pub fn estimate_collision(previous: f64, outcome: AttemptOutcome, lambda: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&previous));
    debug_assert!(lambda > 0.0 && lambda <= 1.0);
    match outcome {
        AttemptOutcome::NoAttempt => previous,
        AttemptOutcome::Success => (1.0 - lambda) * previous,
        AttemptOutcome::Collided => ((1.0 - lambda) * previous + lambda).min(1.0f64.next_down()),
    }
}

/// Whether a link weight sees the channel state or only the queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// max(differential backlog, 0) * channel rate.
    State,
    /// max(differential backlog, 0); the queue-only baseline.
    QueueOnly,
}

/// Backpressure-style weight of one (link, session) pair. Negative
/// differential backlogs clamp to zero so every weight is nonnegative.
pub fn link_weight(
    queues: &QueueMatrix,
    pairs: &PairIndex,
    channel_rates: &[u64],
    pair: usize,
    mode: WeightMode,
) -> f64 {
    let dq = differential_backlog(queues, pairs, pair).max(0) as f64;
    match mode {
        WeightMode::State => {
            let (link, _) = pairs.pair(pair);
            dq * channel_rates[link.0] as f64
        }
        WeightMode::QueueOnly => dq,
    }
}

/// Weight transform applied by the ratio rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbraTransform {
    Linear,
    Square,
    Exponential,
}

/// Ratio rule: p = f(w) / sum of f over the pair's full interference set,
/// with f the identity, square or exponential transform. Pairs with empty
/// queues come out at exactly 0 (only non-empty queues transmit) but their
/// weights still stand in every denominator, as the ratio rules state.
///
/// Idle pairs carry zero dynamic weight, so for the linear and square
/// transforms they contribute nothing; under the exponential transform each
/// contributes exp(0) = 1, which tempers the rule whenever a neighborhood is
/// mostly idle. The exponential transform subtracts the maximum weight of
/// each denominator set before exponentiating; the common factor cancels, so
/// the result is exact and cannot overflow. A zero denominator yields 0.
pub fn sbra_probabilities(
    weights: &[f64],
    nonempty: &[bool],
    pairs: &PairIndex,
    transform: SbraTransform,
    out: &mut [f64],
) {
    assert_eq!(weights.len(), pairs.len());
    assert_eq!(nonempty.len(), pairs.len());
    assert_eq!(out.len(), pairs.len());
    debug_assert!(weights.iter().all(|w| *w >= 0.0 && w.is_finite()));

    for pair in 0..pairs.len() {
        if !nonempty[pair] {
            out[pair] = 0.0;
            continue;
        }
        let den_set = pairs.interfering_pairs(pair);
        out[pair] = match transform {
            SbraTransform::Linear => {
                let den: f64 = den_set.iter().map(|&k| weights[k]).sum();
                ratio(weights[pair], den)
            }
            SbraTransform::Square => {
                let den: f64 = den_set.iter().map(|&k| weights[k] * weights[k]).sum();
                ratio(weights[pair] * weights[pair], den)
            }
            SbraTransform::Exponential => {
                let max = den_set
                    .iter()
                    .map(|&k| weights[k])
                    .fold(f64::NEG_INFINITY, f64::max);
                let den: f64 = den_set.iter().map(|&k| (weights[k] - max).exp()).sum();
                ratio((weights[pair] - max).exp(), den)
            }
        };
        debug_assert!((0.0..=1.0).contains(&out[pair]));
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Which control rule drives the per-pair probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Fixed per-pair probabilities from the scenario file.
    StaticFixed,
    /// Proportional-fair ratio rule over static configured weights.
    PropfairStatic,
    /// Linear ratio rule over queue-only weights.
    QueueBased,
    LinearSbra,
    SquareSbra,
    ExponentialSbra,
    /// Closed-form single-link optimum (served window and channel state).
    SingleLinkOptimal,
    /// Closed-form single-hop optimum (adds the collision estimate).
    SingleHopOptimal,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::StaticFixed => "static-fixed",
            PolicyKind::PropfairStatic => "propfair-static",
            PolicyKind::QueueBased => "queue-based",
            PolicyKind::LinearSbra => "linear-sbra",
            PolicyKind::SquareSbra => "square-sbra",
            PolicyKind::ExponentialSbra => "exponential-sbra",
            PolicyKind::SingleLinkOptimal => "single-link-optimal",
            PolicyKind::SingleHopOptimal => "single-hop-optimal",
        }
    }
}

/// Fully resolved control parameters for one simulation run.
#[derive(Debug, Clone)]
pub struct ResolvedPolicy {
    pub kind: PolicyKind,
    /// Energy-pressure coefficient; must be positive for the closed forms.
    pub delta: f64,
    /// Energy spent per transmission attempt.
    pub energy: f64,
    /// Sliding evaluation window length N, in slots.
    pub window: usize,
    /// Probabilities are recomputed every this many slots.
    pub update_interval: u64,
    /// EMA coefficient for the collision estimator.
    pub ema_lambda: f64,
    /// Per-pair static values: probabilities for `StaticFixed`, weights for
    /// `PropfairStatic`; unused otherwise.
    pub static_values: Option<Vec<f64>>,
}

/// Inputs for one probability refresh, all read-only snapshots taken at the
/// start of the slot.
pub struct RefreshInputs<'a> {
    pub queues: &'a QueueMatrix,
    pub pairs: &'a PairIndex,
    pub channel_rates: &'a [u64],
    /// Sliding sum of packets served per link over the last N slots.
    pub served_windows: &'a [u64],
    /// Per-link collision-probability estimates.
    pub collision_estimates: &'a [f64],
}

/// Recompute every pair's transmission probability in place. Pairs with an
/// empty queue always come out at exactly 0.
pub fn refresh_probabilities(policy: &ResolvedPolicy, inputs: &RefreshInputs<'_>, out: &mut [f64]) {
    let pairs = inputs.pairs;
    assert_eq!(out.len(), pairs.len());
    let nonempty: Vec<bool> = (0..pairs.len())
        .map(|p| inputs.queues.backlog(p) > 0)
        .collect();

    match policy.kind {
        PolicyKind::StaticFixed => {
            let values = policy
                .static_values
                .as_ref()
                .expect("static-fixed policies carry per-pair probabilities");
            for p in 0..pairs.len() {
                out[p] = if nonempty[p] { values[p] } else { 0.0 };
            }
        }
        PolicyKind::PropfairStatic => {
            let values = policy
                .static_values
                .as_ref()
                .expect("propfair-static policies carry per-pair weights");
            sbra_probabilities(values, &nonempty, pairs, SbraTransform::Linear, out);
        }
        PolicyKind::QueueBased => {
            let weights = collect_weights(inputs, WeightMode::QueueOnly);
            sbra_probabilities(&weights, &nonempty, pairs, SbraTransform::Linear, out);
        }
        PolicyKind::LinearSbra => {
            let weights = collect_weights(inputs, WeightMode::State);
            sbra_probabilities(&weights, &nonempty, pairs, SbraTransform::Linear, out);
        }
        PolicyKind::SquareSbra => {
            let weights = collect_weights(inputs, WeightMode::State);
            sbra_probabilities(&weights, &nonempty, pairs, SbraTransform::Square, out);
        }
        PolicyKind::ExponentialSbra => {
            let weights = collect_weights(inputs, WeightMode::State);
            sbra_probabilities(&weights, &nonempty, pairs, SbraTransform::Exponential, out);
        }
        PolicyKind::SingleLinkOptimal => {
            for p in 0..pairs.len() {
                let (link, _) = pairs.pair(p);
                out[p] = if nonempty[p] {
                    single_link_probability(
                        inputs.served_windows[link.0] as f64,
                        inputs.channel_rates[link.0],
                        policy.energy,
                        policy.delta,
                    )
                } else {
                    0.0
                };
            }
        }
        PolicyKind::SingleHopOptimal => {
            for p in 0..pairs.len() {
                let (link, _) = pairs.pair(p);
                out[p] = if nonempty[p] {
                    single_hop_probability(
                        inputs.served_windows[link.0] as f64,
                        inputs.channel_rates[link.0],
                        inputs.collision_estimates[link.0],
                        policy.energy,
                        policy.delta,
                    )
                } else {
                    0.0
                };
            }
        }
    }
}

fn collect_weights(inputs: &RefreshInputs<'_>, mode: WeightMode) -> Vec<f64> {
    (0..inputs.pairs.len())
        .map(|p| link_weight(inputs.queues, inputs.pairs, inputs.channel_rates, p, mode))
        .collect()
}

/// Convenience for tests and the oracle: the interference set of a pair's
/// link, by link id.
pub fn interference_links(pairs: &PairIndex, pair: usize) -> Vec<LinkId> {
    pairs
        .interfering_pairs(pair)
        .iter()
        .map(|&k| pairs.pair(k).0)
        .collect()
}
