//! Run metrics: windowed rates, Little's-law delay, energy accounting, and
//! the per-queue stability verdict.
//!
//! The engine feeds a [`MetricsAccumulator`] incrementally; [`compute_metrics`]
//! builds the same report from an explicit per-slot trace, so both paths are
//! interchangeable and testable against each other.

use thiserror::Error;

use crate::topology::{LinkId, PairIndex, Session, SessionId};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace is empty after discarding {warmup} warmup slots")]
    EmptyTrace { warmup: u64 },
    #[error("trace slot {got} does not match expected slot {expected}")]
    NonContiguousTrace { expected: u64, got: u64 },
}

/// Stability of one queue's backlog trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// The run was too short for the trend heuristic.
    Inconclusive,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Inconclusive => "inconclusive",
        })
    }
}

/// Trend heuristic over a backlog series: unstable iff the mean of the last
/// quarter exceeds both twice the mean of the second quarter and an absolute
/// floor. Unbounded growth cannot be observed directly, so this stands in
/// for it; the floor keeps small noisy queues from being flagged.
pub fn stability_verdict(series: &[u64], floor: f64) -> Stability {
    if series.len() < 8 {
        return Stability::Inconclusive;
    }
    let len = series.len();
    let mean = |range: std::ops::Range<usize>| -> f64 {
        let count = range.len() as f64;
        series[range].iter().map(|&q| q as f64).sum::<f64>() / count
    };
    let second_quarter = mean(len / 4..len / 2);
    let last_quarter = mean(3 * len / 4..len);
    verdict_from_quarters(second_quarter, last_quarter, floor)
}

fn verdict_from_quarters(second_quarter: f64, last_quarter: f64, floor: f64) -> Stability {
    if last_quarter > 2.0 * second_quarter && last_quarter > floor {
        Stability::Unstable
    } else {
        Stability::Stable
    }
}

/// Per-session metrics over the measured (post-warmup) window.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMetrics {
    pub session: SessionId,
    pub arrivals: u64,
    pub delivered: u64,
    /// Delivered packets per slot.
    pub throughput: f64,
    /// Time-average of the summed backlog along the session's path.
    pub mean_path_backlog: f64,
    /// Little's-law delay: mean path backlog / throughput. Absent when
    /// nothing was delivered.
    pub delay_slots: Option<f64>,
    pub delay_secs: Option<f64>,
    /// Time-average of the sliding-window delivered-packet sum (window N).
    pub windowed_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    pub link: LinkId,
    pub attempts: u64,
    pub collisions: u64,
    /// Fraction of measured slots with a transmission attempt.
    pub utilization: f64,
    /// Collided attempts / attempts (0 when the link never attempted).
    pub collision_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueStability {
    pub link: LinkId,
    pub session: SessionId,
    pub verdict: Stability,
}

/// Aggregated results of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub slots: u64,
    pub warmup: u64,
    pub measured_slots: u64,
    pub sessions: Vec<SessionMetrics>,
    pub links: Vec<LinkMetrics>,
    pub queues: Vec<QueueStability>,
    /// Energy spent over the measured window.
    pub total_energy: f64,
    pub energy_per_slot: f64,
    /// Sum of per-session throughputs.
    pub total_throughput: f64,
    /// Aggregate Little's-law delay over all sessions.
    pub network_delay_slots: Option<f64>,
    pub network_delay_secs: Option<f64>,
    /// Collided attempts / attempts across all links.
    pub collision_rate: f64,
    /// Sum over sessions of ln(windowed rate); absent when any session's
    /// windowed rate is zero.
    pub log_utility: Option<f64>,
    /// True when no queue's verdict is unstable.
    pub all_stable: bool,
}

/// One slot of trace data, sufficient to rebuild every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    /// Per-pair backlogs at the start of the slot.
    pub backlogs: Vec<u64>,
    /// Per-session external arrivals during the slot.
    pub arrivals: Vec<u64>,
    /// Per-session packets delivered to their destination during the slot.
    pub delivered: Vec<u64>,
    /// Attempting links with their collision flags.
    pub attempts: Vec<(LinkId, bool)>,
    /// Energy spent during the slot.
    pub energy: f64,
}

/// Incremental metrics state. `slots` must be the planned run length; the
/// stability quarters are derived from it.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    slots: u64,
    warmup: u64,
    window: usize,
    pair_count: usize,
    session_count: usize,
    link_count: usize,
    next_slot: u64,
    measured: u64,
    // Stability quarters over the full run, per pair.
    q2_sum: Vec<u64>,
    q2_count: u64,
    q4_sum: Vec<u64>,
    q4_count: u64,
    // Post-warmup accumulation.
    backlog_sum: Vec<u128>,
    arrivals: Vec<u64>,
    delivered: Vec<u64>,
    attempts: Vec<u64>,
    collisions: Vec<u64>,
    attempt_slots: Vec<u64>,
    energy: f64,
    window_rings: Vec<Vec<u64>>,
    window_sums: Vec<u64>,
    windowed_rate_sum: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn new(
        slots: u64,
        warmup: u64,
        window: usize,
        pair_count: usize,
        session_count: usize,
        link_count: usize,
    ) -> Self {
        Self {
            slots,
            warmup,
            window: window.max(1),
            pair_count,
            session_count,
            link_count,
            next_slot: 0,
            measured: 0,
            q2_sum: vec![0; pair_count],
            q2_count: 0,
            q4_sum: vec![0; pair_count],
            q4_count: 0,
            backlog_sum: vec![0; pair_count],
            arrivals: vec![0; session_count],
            delivered: vec![0; session_count],
            attempts: vec![0; link_count],
            collisions: vec![0; link_count],
            attempt_slots: vec![0; link_count],
            energy: 0.0,
            window_rings: vec![vec![0; window.max(1)]; session_count],
            window_sums: vec![0; session_count],
            windowed_rate_sum: vec![0.0; session_count],
        }
    }

    pub fn push(
        &mut self,
        slot: u64,
        backlogs: &[u64],
        arrivals: &[u64],
        delivered: &[u64],
        attempts: &[(LinkId, bool)],
        energy: f64,
    ) -> Result<(), MetricsError> {
        if slot != self.next_slot {
            return Err(MetricsError::NonContiguousTrace {
                expected: self.next_slot,
                got: slot,
            });
        }
        self.next_slot += 1;
        debug_assert_eq!(backlogs.len(), self.pair_count);
        debug_assert_eq!(arrivals.len(), self.session_count);
        debug_assert_eq!(delivered.len(), self.session_count);

        // Stability quarters use the full run, warmup included; the ranges
        // match `stability_verdict` on the complete series.
        let len = self.slots;
        if (len / 4..len / 2).contains(&slot) {
            for (sum, &q) in self.q2_sum.iter_mut().zip(backlogs) {
                *sum += q;
            }
            self.q2_count += 1;
        }
        if (3 * len / 4..len).contains(&slot) {
            for (sum, &q) in self.q4_sum.iter_mut().zip(backlogs) {
                *sum += q;
            }
            self.q4_count += 1;
        }

        // Sliding delivery windows span the whole run so that the window is
        // already primed when measurement starts.
        let pos = (slot as usize) % self.window;
        for ((ring, sum), &count) in self
            .window_rings
            .iter_mut()
            .zip(&mut self.window_sums)
            .zip(delivered)
        {
            *sum = *sum + count - ring[pos];
            ring[pos] = count;
        }

        if slot < self.warmup {
            return Ok(());
        }
        self.measured += 1;
        for (sum, &q) in self.backlog_sum.iter_mut().zip(backlogs) {
            *sum += q as u128;
        }
        for s in 0..self.session_count {
            self.arrivals[s] += arrivals[s];
            self.delivered[s] += delivered[s];
            self.windowed_rate_sum[s] += self.window_sums[s] as f64;
        }
        for &(link, collided) in attempts {
            self.attempts[link.0] += 1;
            self.attempt_slots[link.0] += 1;
            if collided {
                self.collisions[link.0] += 1;
            }
        }
        self.energy += energy;
        Ok(())
    }

    pub fn finalize(
        &self,
        pairs: &PairIndex,
        sessions: &[Session],
        slot_secs: f64,
        stability_floor: f64,
    ) -> MetricsReport {
        let measured = self.measured;
        let denom = measured.max(1) as f64;

        let session_metrics: Vec<SessionMetrics> = sessions
            .iter()
            .map(|session| {
                let s = session.id.0;
                let throughput = self.delivered[s] as f64 / denom;
                let mean_path_backlog = pairs
                    .session_pairs(session.id)
                    .iter()
                    .map(|&p| self.backlog_sum[p] as f64)
                    .sum::<f64>()
                    / denom;
                let delay_slots = (self.delivered[s] > 0).then(|| mean_path_backlog / throughput);
                SessionMetrics {
                    session: session.id,
                    arrivals: self.arrivals[s],
                    delivered: self.delivered[s],
                    throughput,
                    mean_path_backlog,
                    delay_slots,
                    delay_secs: delay_slots.map(|d| d * slot_secs),
                    windowed_rate: self.windowed_rate_sum[s] / denom,
                }
            })
            .collect();

        let links: Vec<LinkMetrics> = (0..self.link_count)
            .map(|l| {
                let attempts = self.attempts[l];
                let collisions = self.collisions[l];
                LinkMetrics {
                    link: LinkId(l),
                    attempts,
                    collisions,
                    utilization: self.attempt_slots[l] as f64 / denom,
                    collision_rate: if attempts > 0 {
                        collisions as f64 / attempts as f64
                    } else {
                        0.0
                    },
                }
            })
            .collect();

        let queues: Vec<QueueStability> = (0..self.pair_count)
            .map(|p| {
                let (link, session) = pairs.pair(p);
                let verdict = if self.slots < 8 {
                    Stability::Inconclusive
                } else {
                    verdict_from_quarters(
                        self.q2_sum[p] as f64 / self.q2_count.max(1) as f64,
                        self.q4_sum[p] as f64 / self.q4_count.max(1) as f64,
                        stability_floor,
                    )
                };
                QueueStability {
                    link,
                    session,
                    verdict,
                }
            })
            .collect();

        let total_throughput: f64 = session_metrics.iter().map(|s| s.throughput).sum();
        let total_backlog: f64 = session_metrics.iter().map(|s| s.mean_path_backlog).sum();
        let network_delay_slots =
            (total_throughput > 0.0).then(|| total_backlog / total_throughput);

        let total_attempts: u64 = self.attempts.iter().sum();
        let total_collisions: u64 = self.collisions.iter().sum();

        let log_utility = session_metrics
            .iter()
            .map(|s| (s.windowed_rate > 0.0).then(|| s.windowed_rate.ln()))
            .sum::<Option<f64>>();

        let all_stable = !queues.iter().any(|q| q.verdict == Stability::Unstable);

        MetricsReport {
            slots: self.slots,
            warmup: self.warmup,
            measured_slots: measured,
            sessions: session_metrics,
            links,
            queues,
            total_energy: self.energy,
            energy_per_slot: self.energy / denom,
            total_throughput,
            network_delay_slots,
            network_delay_secs: network_delay_slots.map(|d| d * slot_secs),
            collision_rate: if total_attempts > 0 {
                total_collisions as f64 / total_attempts as f64
            } else {
                0.0
            },
            log_utility,
            all_stable,
        }
    }
}

/// Build a [`MetricsReport`] from an explicit per-slot trace. `warmup` slots
/// are discarded from every average; the stability verdict still sees the
/// full series.
pub fn compute_metrics(
    records: &[SlotRecord],
    pairs: &PairIndex,
    sessions: &[Session],
    window: usize,
    warmup: u64,
    slot_secs: f64,
    stability_floor: f64,
) -> Result<MetricsReport, MetricsError> {
    if records.len() as u64 <= warmup {
        return Err(MetricsError::EmptyTrace { warmup });
    }
    let link_count = records
        .iter()
        .flat_map(|r| r.attempts.iter().map(|(l, _)| l.0 + 1))
        .max()
        .unwrap_or(0)
        .max(pairs.pairs().iter().map(|(l, _)| l.0 + 1).max().unwrap_or(0));
    let mut acc = MetricsAccumulator::new(
        records.len() as u64,
        warmup,
        window,
        pairs.len(),
        sessions.len(),
        link_count,
    );
    for record in records {
        acc.push(
            record.slot,
            &record.backlogs,
            &record.arrivals,
            &record.delivered,
            &record.attempts,
            record.energy,
        )?;
    }
    Ok(acc.finalize(pairs, sessions, slot_secs, stability_floor))
}
