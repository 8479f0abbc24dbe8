//! Command implementations behind the `sbra` binary: single runs, arrival
//! rate sweeps, policy comparisons, per-slot traces and the oracle checks.
//!
//! Everything returns strings or structured results so integration tests can
//! exercise the exact bytes the binary would emit.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};

use rayon::prelude::*;

use sbra_core::controllers::single_hop_probability;
use sbra_core::engine::{run, run_observed};
use sbra_core::metrics::MetricsReport;
use sbra_core::oracle::{closed_form_agreement, TinyInstance};
use sbra_core::scenario::ScenarioConfig;

pub mod harness;

/// Command-line overrides applied on top of a parsed scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub slots: Option<u64>,
}

/// Apply overrides. Overriding `slots` recomputes the default 10% warmup so
/// shortened runs stay valid.
pub fn apply_overrides(config: &mut ScenarioConfig, overrides: &Overrides) {
    if let Some(seed) = overrides.seed {
        config.seeds = vec![seed];
    }
    if let Some(slots) = overrides.slots {
        config.slots = slots;
        config.warmup = slots / 10;
    }
}

fn provenance_header(config: &ScenarioConfig, extra: &[String]) -> String {
    let mut text = String::new();
    for line in config.echo_lines() {
        writeln!(text, "# {line}").unwrap();
    }
    for line in extra {
        writeln!(text, "# {line}").unwrap();
    }
    text
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

/// One row of the sweep CSV.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub policy: String,
    pub rate: f64,
    pub seed: u64,
    pub slots: u64,
    pub delay_slots: Option<f64>,
    pub delay_secs: Option<f64>,
    pub throughput: f64,
    pub energy_per_slot: f64,
    pub collision_rate: f64,
    pub stable: bool,
}

impl SweepRow {
    fn from_report(policy: &str, rate: f64, seed: u64, report: &MetricsReport) -> Self {
        Self {
            policy: policy.to_string(),
            rate,
            seed,
            slots: report.slots,
            delay_slots: report.network_delay_slots,
            delay_secs: report.network_delay_secs,
            throughput: report.total_throughput,
            energy_per_slot: report.energy_per_slot,
            collision_rate: report.collision_rate,
            stable: report.all_stable,
        }
    }
}

/// Run every (policy, rate, seed) combination, optionally restricted to the
/// named policies. Points execute in parallel; the output order is fixed by
/// sorting on (policy, rate, seed).
pub fn sweep_rows(
    config: &ScenarioConfig,
    policy_filter: Option<&[String]>,
) -> Result<Vec<SweepRow>> {
    let mut policy_indices: Vec<usize> = Vec::new();
    match policy_filter {
        Some(names) => {
            for name in names {
                let (index, _) = config.policy_by_name(name).ok_or_else(|| {
                    anyhow!(
                        "unknown policy `{name}`; scenario defines: {}",
                        config
                            .policies
                            .iter()
                            .map(|p| p.name.as_str())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )
                })?;
                policy_indices.push(index);
            }
        }
        None => policy_indices.extend(0..config.policies.len()),
    }

    let mut points = Vec::new();
    for &policy in &policy_indices {
        for &rate in &config.rates {
            for &seed in &config.seeds {
                points.push((policy, rate, seed));
            }
        }
    }

    let mut rows = points
        .par_iter()
        .map(|&(policy, rate, seed)| -> Result<SweepRow> {
            let sim = config.sim_config(policy, rate, seed)?;
            let report = run(&sim)?;
            Ok(SweepRow::from_report(
                &config.policies[policy].name,
                rate,
                seed,
                &report,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    rows.sort_by(|a, b| {
        a.policy
            .cmp(&b.policy)
            .then(a.rate.total_cmp(&b.rate))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

const SWEEP_HEADER: &str = "policy,rate,seed,slots,mean_delay_slots,mean_delay_sec,throughput,\
                            energy_per_slot,collision_rate,stable,summary";

/// Render sweep rows as CSV: a provenance comment block, one row per seed,
/// and mean/stddev summary rows per (policy, rate) group flagged in the
/// `summary` column. The `stable` cell of a mean row holds the fraction of
/// stable seeds.
pub fn sweep_csv(config: &ScenarioConfig, policy_filter: Option<&[String]>) -> Result<String> {
    let rows = sweep_rows(config, policy_filter)?;
    let mut csv = provenance_header(config, &[]);
    csv.push_str(SWEEP_HEADER);
    csv.push('\n');

    let mut group_start = 0;
    for i in 0..=rows.len() {
        let group_done = i == rows.len()
            || rows[i].policy != rows[group_start].policy
            || rows[i].rate != rows[group_start].rate;
        if !group_done {
            continue;
        }
        let group = &rows[group_start..i];
        for row in group {
            csv.push_str(&render_row(row));
        }
        if group.len() > 1 {
            let (mean, stddev) = summarize(group);
            csv.push_str(&mean);
            csv.push_str(&stddev);
        }
        group_start = i;
    }
    Ok(csv)
}

fn render_row(row: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},\n",
        row.policy,
        row.rate,
        row.seed,
        row.slots,
        fmt_opt(row.delay_slots),
        fmt_opt(row.delay_secs),
        row.throughput,
        row.energy_per_slot,
        row.collision_rate,
        row.stable
    )
}

fn summarize(group: &[SweepRow]) -> (String, String) {
    let first = &group[0];
    let stat = |values: &[f64]| -> (Option<f64>, Option<f64>) {
        if values.is_empty() {
            return (None, None);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stddev = (values.len() > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        });
        (Some(mean), stddev)
    };

    let delays_slots: Vec<f64> = group.iter().filter_map(|r| r.delay_slots).collect();
    let delays_secs: Vec<f64> = group.iter().filter_map(|r| r.delay_secs).collect();
    let throughputs: Vec<f64> = group.iter().map(|r| r.throughput).collect();
    let energies: Vec<f64> = group.iter().map(|r| r.energy_per_slot).collect();
    let collisions: Vec<f64> = group.iter().map(|r| r.collision_rate).collect();
    let stable_fraction = group.iter().filter(|r| r.stable).count() as f64 / group.len() as f64;

    let (d_mean, d_std) = stat(&delays_slots);
    let (ds_mean, ds_std) = stat(&delays_secs);
    let (t_mean, t_std) = stat(&throughputs);
    let (e_mean, e_std) = stat(&energies);
    let (c_mean, c_std) = stat(&collisions);

    let mean_row = format!(
        "{},{},,{},{},{},{},{},{},{},mean\n",
        first.policy,
        first.rate,
        first.slots,
        fmt_opt(d_mean),
        fmt_opt(ds_mean),
        fmt_opt(t_mean),
        fmt_opt(e_mean),
        fmt_opt(c_mean),
        stable_fraction
    );
    let stddev_row = format!(
        "{},{},,{},{},{},{},{},{},,stddev\n",
        first.policy,
        first.rate,
        first.slots,
        fmt_opt(d_std),
        fmt_opt(ds_std),
        fmt_opt(t_std),
        fmt_opt(e_std),
        fmt_opt(c_std)
    );
    (mean_row, stddev_row)
}

// ---------------------------------------------------------------------------
// Single run
// ---------------------------------------------------------------------------

/// Execute the scenario's single (policy, rate, seed) point. Scenarios with
/// several policies, rates or seeds belong to `sweep`/`compare`.
pub fn run_single(config: &ScenarioConfig) -> Result<MetricsReport> {
    if config.policies.len() != 1 {
        bail!(
            "scenario defines {} policies; `run` needs exactly one (use sweep or compare)",
            config.policies.len()
        );
    }
    if config.rates.len() != 1 {
        bail!(
            "scenario defines {} rates; `run` needs exactly one (use sweep)",
            config.rates.len()
        );
    }
    if config.seeds.len() != 1 {
        bail!(
            "scenario defines {} seeds; `run` needs exactly one (use sweep or --seed)",
            config.seeds.len()
        );
    }
    let sim = config.sim_config(0, config.rates[0], config.seeds[0])?;
    Ok(run(&sim)?)
}

/// Human-readable report for `run`.
pub fn render_report(config: &ScenarioConfig, report: &MetricsReport) -> String {
    let mut text = String::new();
    writeln!(
        text,
        "policy {} | rate {} | seed {} | {} slots ({} warmup)",
        config.policies[0].name,
        config.rates[0],
        config.seeds[0],
        report.slots,
        report.warmup
    )
    .unwrap();
    for s in &report.sessions {
        writeln!(
            text,
            "  session {}: throughput {:.6} pkt/slot, delay {} slots ({} s), windowed rate {:.4}",
            s.session,
            s.throughput,
            s.delay_slots
                .map(|d| format!("{d:.4}"))
                .unwrap_or_else(|| "n/a".into()),
            s.delay_secs
                .map(|d| format!("{d:.6}"))
                .unwrap_or_else(|| "n/a".into()),
            s.windowed_rate
        )
        .unwrap();
    }
    for l in &report.links {
        writeln!(
            text,
            "  link {}: {} attempts, {} collisions, utilization {:.4}, collision rate {:.4}",
            l.link, l.attempts, l.collisions, l.utilization, l.collision_rate
        )
        .unwrap();
    }
    writeln!(
        text,
        "  network: delay {} slots, energy/slot {:.6}, collision rate {:.4}, log-utility {}, {}",
        report
            .network_delay_slots
            .map(|d| format!("{d:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        report.energy_per_slot,
        report.collision_rate,
        report
            .log_utility
            .map(|u| format!("{u:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        if report.all_stable {
            "all queues stable"
        } else {
            "UNSTABLE queues present"
        }
    )
    .unwrap();
    text
}

/// Single-row CSV (same schema as sweep) for `run --out`.
pub fn run_csv(config: &ScenarioConfig, report: &MetricsReport) -> String {
    let row = SweepRow::from_report(
        &config.policies[0].name,
        config.rates[0],
        config.seeds[0],
        report,
    );
    let mut csv = provenance_header(config, &[]);
    csv.push_str(SWEEP_HEADER);
    csv.push('\n');
    csv.push_str(&render_row(&row));
    csv
}

// ---------------------------------------------------------------------------
// Per-slot trace
// ---------------------------------------------------------------------------

const TRACE_HEADER: &str = "slot,link,session,q,c,p,attempted,collided,served";

/// Per-slot, per-pair trace CSV of the scenario's single point: slot-start
/// backlog, channel rate, effective probability and the attempt outcome.
pub fn trace_csv(config: &ScenarioConfig) -> Result<String> {
    if config.policies.len() != 1 || config.rates.len() != 1 || config.seeds.len() != 1 {
        bail!("tracing needs a scenario with exactly one policy, rate and seed");
    }
    let sim_cfg = config.sim_config(0, config.rates[0], config.seeds[0])?;
    let point = vec![format!(
        "trace.point = {{ policy = {}, rate = {}, seed = {} }}",
        config.policies[0].name, config.rates[0], config.seeds[0]
    )];
    let mut csv = provenance_header(config, &point);
    csv.push_str(TRACE_HEADER);
    csv.push('\n');

    run_observed(&sim_cfg, |sim, outcome| {
        let pairs = sim.pairs();
        for pair in 0..pairs.len() {
            let (link, session) = pairs.pair(pair);
            let attempt = outcome
                .attempts
                .iter()
                .find(|a| a.link == link && a.session == session);
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                outcome.slot,
                link,
                session,
                sim.snapshot_backlogs()[pair],
                sim.channel_rates()[link.0],
                sim.effective_probabilities()[pair],
                attempt.is_some() as u8,
                attempt.map(|a| a.collided).unwrap_or(false) as u8,
                attempt.map(|a| a.served).unwrap_or(0)
            )
            .unwrap();
        }
    })?;
    Ok(csv)
}

// ---------------------------------------------------------------------------
// Oracle checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct OracleCheckOptions {
    /// Random tuples for the closed-form agreement check.
    pub count: usize,
    /// Probability grid step.
    pub step: f64,
    /// Random tiny instances for the DP dominance check.
    pub dp_instances: usize,
    /// Random topologies for the max-weight cross-check.
    pub maxweight_cases: usize,
    pub seed: u64,
}

impl Default for OracleCheckOptions {
    fn default() -> Self {
        Self {
            count: 1000,
            step: 1e-3,
            dp_instances: 100,
            maxweight_cases: 50,
            seed: 20_100_815,
        }
    }
}

#[derive(Debug)]
pub struct OracleCheckReport {
    /// (suite name, outcome message); `Err` carries the failing case.
    pub suites: Vec<(String, Result<String, String>)>,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|(_, outcome)| outcome.is_ok())
    }

    pub fn render(&self) -> String {
        let mut text = String::new();
        for (name, outcome) in &self.suites {
            match outcome {
                Ok(detail) => writeln!(text, "PASS {name}: {detail}").unwrap(),
                Err(detail) => writeln!(text, "FAIL {name}: {detail}").unwrap(),
            }
        }
        text
    }
}

pub fn oracle_check(options: &OracleCheckOptions) -> Result<OracleCheckReport> {
    if options.step <= 0.0 || options.step > 1e-3 {
        bail!("grid step must lie in (0, 1e-3], got {}", options.step);
    }
    let mut suites = Vec::new();

    let agreement = if options.count == 0 {
        Ok("vacuous pass: 0 tuples checked (warning: increase --count)".to_string())
    } else {
        closed_form_agreement(
            options.count,
            options.step,
            options.seed,
            &single_hop_probability,
        )
        .map(|()| format!("{} tuples agree within 2 * {}", options.count, options.step))
        .map_err(|failure| failure.to_string())
    };
    suites.push(("closed-form agreement".to_string(), agreement));

    let dominance = harness::dp_dominance_check(options.dp_instances, options.seed).map(|()| {
        format!(
            "{} instances, 3 policies each, zero violations",
            options.dp_instances
        )
    });
    suites.push(("dp dominance".to_string(), dominance));

    let maxweight = harness::maxweight_check(options.maxweight_cases, options.seed).map(|()| {
        format!(
            "{} random topologies match the independent enumerator",
            options.maxweight_cases
        )
    });
    suites.push(("max-weight exhaustive".to_string(), maxweight));

    Ok(OracleCheckReport { suites })
}

// ---------------------------------------------------------------------------
// DP policy tables used by the dominance check
// ---------------------------------------------------------------------------

/// Snap a probability onto the grid {0, step, ..., 1}.
pub fn snap_to_grid(p: f64, step: f64) -> f64 {
    let n = (1.0 / step).round().max(1.0);
    ((p.clamp(0.0, 1.0) * n).round()) / n
}

/// The myopic closed-form policy evaluated inside the DP state space: at
/// slot t with a non-empty queue it plays proj(1/(e*delta) - X/c_mean),
/// where X is the expected served volume accumulated so far under this same
/// policy and c_mean the mean channel rate.
pub fn myopic_policy_table(instance: &TinyInstance) -> Vec<Vec<f64>> {
    let states = instance.buffer_cap as usize + 1;
    let mean_rate: f64 = instance
        .channel_dist
        .iter()
        .map(|&(c, pc)| pc * c as f64)
        .sum();
    let mut table = vec![vec![0.0; states]; instance.horizon];
    let mut dist = vec![0.0f64; states];
    dist[instance.initial_backlog as usize] = 1.0;
    let mut served_so_far = 0.0f64;

    for row in table.iter_mut() {
        let target = if mean_rate > 0.0 {
            1.0 / (instance.energy * instance.delta) - served_so_far / mean_rate
        } else {
            0.0
        };
        let p = snap_to_grid(target.clamp(0.0, 1.0), instance.grid_step);
        row[1..].fill(p);

        // Propagate the state distribution one slot under this table.
        let mut next = vec![0.0f64; states];
        for q in 0..states as u64 {
            let mass = dist[q as usize];
            if mass == 0.0 {
                continue;
            }
            let p_here = row[q as usize];
            for &(c, pc) in &instance.channel_dist {
                let served = q.min(c);
                served_so_far += mass * p_here * pc * served as f64;
                for &(a, pa) in &instance.arrival_dist {
                    let weight = mass * pc * pa;
                    next[(q - served + a).min(instance.buffer_cap) as usize] += weight * p_here;
                    next[(q + a).min(instance.buffer_cap) as usize] += weight * (1.0 - p_here);
                }
            }
        }
        dist = next;
    }
    table
}

// ---------------------------------------------------------------------------
// File plumbing shared by main
// ---------------------------------------------------------------------------

pub fn write_or_print(path: Option<&std::path::Path>, contents: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, contents)
            .with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}
