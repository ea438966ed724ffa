//! Classification and scoring of migration decisions: the strict and relaxed
//! correctness ratios μ_s/μ_r, per-migration hit counts κ, the unnecessary-
//! migration share, and the unserviceability distance δ.
//!
//! Everything here is a pure, post-hoc pass over the immutable run log. A
//! migration is judged against the requests its target issued *after* the
//! push, using the target's available interval as the push left it:
//!
//! - **UnM** — a second migration reached the same target before any request
//!   from it intervened; the earlier push was wasted. UnM takes precedence
//!   over TP/FP and is shared by both classification modes.
//! - **strict TP/FP** — the target's immediately following request is / is
//!   not contained in the post-migration interval.
//! - **relaxed TP/FP** — at least one / none of the target's next `L_r`
//!   requests is contained; κ counts the containments over that span. The
//!   span is read literally off the log (it may cross later migrations),
//!   and runs that end mid-span classify over the available suffix, with
//!   the truncation counted in the record.
//!
//! Migrations with no subsequent activity from their target — no request and
//! no successor migration before run end — cannot be judged and are excluded
//! from every tally.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simnet::{MigrationEvent, Policy, RequestEvent};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("μ undefined: no classified migrations")]
    UndefinedMu,
    #[error("δ undefined: run contains no requests")]
    EmptyRun,
    #[error("run record inconsistent: {reason}")]
    Inconsistent { reason: &'static str },
}

/// Verdict for one classified migration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    TruePositive,
    FalsePositive,
    Unnecessary,
}

/// TP/FP/UnM counts; the denominator of Eq.-(7)-style ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub tp: u64,
    pub fp: u64,
    pub unm: u64,
}

impl Tallies {
    pub fn add(&mut self, c: Classification) {
        match c {
            Classification::TruePositive => self.tp += 1,
            Classification::FalsePositive => self.fp += 1,
            Classification::Unnecessary => self.unm += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.unm
    }
}

/// μ = TP / (TP + FP + UnM); exact quotient, undefined on an empty tally.
pub fn mu(t: &Tallies) -> Result<f64, MetricsError> {
    let denom = t.total();
    if denom == 0 {
        return Err(MetricsError::UndefinedMu);
    }
    Ok(t.tp as f64 / denom as f64)
}

/// Both verdicts and the hit count for one migration (by log index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationOutcome {
    pub migration_index: usize,
    pub strict: Classification,
    pub relaxed: Classification,
    /// κ: containments among the target's next `L_r` requests.
    pub hits: u32,
    /// The relaxed span was cut short by run end.
    pub truncated: bool,
}

/// Full classification of a run's migration log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunClassification {
    /// One entry per classified migration, in log order.
    pub outcomes: Vec<MigrationOutcome>,
    pub strict: Tallies,
    pub relaxed: Tallies,
    /// κ samples, aligned with `outcomes`.
    pub hits: Vec<u32>,
    /// Migrations with no subsequent activity from their target.
    pub excluded: u64,
    /// Classified migrations whose relaxed span was truncated.
    pub truncated: u64,
}

/// Classifies every migration in the log against the requests its target
/// issued afterwards. `lr` is the relaxed span length (the paper's `L_r`).
pub fn classify_run(
    requests: &[RequestEvent],
    migrations: &[MigrationEvent],
    lr: usize,
) -> RunClassification {
    // Chronological per-requestor request streams.
    let mut by_requestor: BTreeMap<crate::domain::NodeId, Vec<(u64, usize)>> = BTreeMap::new();
    for (pos, r) in requests.iter().enumerate() {
        by_requestor.entry(r.requestor).or_default().push((r.index, pos));
    }
    for stream in by_requestor.values_mut() {
        stream.sort_unstable_by_key(|&(index, _)| index);
    }
    // Time of the next migration to the same target, if any.
    let mut next_time: BTreeMap<crate::domain::NodeId, u64> = BTreeMap::new();
    let mut successor = vec![None; migrations.len()];
    for (mi, m) in migrations.iter().enumerate().rev() {
        successor[mi] = next_time.get(&m.target).copied();
        next_time.insert(m.target, m.time);
    }

    let mut result = RunClassification::default();
    for (mi, m) in migrations.iter().enumerate() {
        let stream = by_requestor
            .get(&m.target)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let after = stream.partition_point(|&(index, _)| index <= m.time);
        let has_subsequent = after < stream.len();
        // The successor migration lands after its triggering request, so a
        // request at exactly that time still intervenes.
        let unnecessary = match successor[mi] {
            Some(t2) => !(has_subsequent && stream[after].0 <= t2),
            None => false,
        };
        if !unnecessary && !has_subsequent {
            result.excluded += 1;
            continue;
        }
        let span = &stream[after..stream.len().min(after + lr)];
        let hits = span
            .iter()
            .filter(|&&(_, pos)| m.resulting_available.contains(&requests[pos].interval))
            .count() as u32;
        let truncated = span.len() < lr;
        let (strict, relaxed) = if unnecessary {
            (Classification::Unnecessary, Classification::Unnecessary)
        } else {
            let first_contained = m
                .resulting_available
                .contains(&requests[span[0].1].interval);
            (
                if first_contained {
                    Classification::TruePositive
                } else {
                    Classification::FalsePositive
                },
                if hits >= 1 {
                    Classification::TruePositive
                } else {
                    Classification::FalsePositive
                },
            )
        };
        result.strict.add(strict);
        result.relaxed.add(relaxed);
        result.hits.push(hits);
        if truncated {
            result.truncated += 1;
        }
        result.outcomes.push(MigrationOutcome {
            migration_index: mi,
            strict,
            relaxed,
            hits,
            truncated,
        });
    }
    result
}

/// The complete, classified log of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub policy: Policy,
    pub seed: u64,
    /// r_N: every emitted request, serviceable or not.
    pub total_requests: u64,
    pub local_requests: u64,
    pub offloaded_served: u64,
    /// Σ r̃_i: requests nobody in the cluster could serve.
    pub unserviceable: u64,
    /// Requests that triggered at least one migration directive.
    pub requests_with_migration: u64,
    /// Σ squared endpoint distances of unserviceable requests to the
    /// serving node's available interval at request time.
    pub delta_accumulator: f64,
    /// Relaxed span length the classification used.
    pub lr: usize,
    pub strict: Tallies,
    pub relaxed: Tallies,
    /// κ per classified migration, in log order.
    pub hits_per_migration: Vec<u32>,
    pub excluded_migrations: u64,
    pub truncated_relaxed: u64,
    pub requests: Vec<RequestEvent>,
    pub migrations: Vec<MigrationEvent>,
}

impl RunRecord {
    /// Cross-checks the tallies against each other and the raw logs; every
    /// completed run must pass.
    pub fn check_consistency(&self) -> Result<(), MetricsError> {
        let fail = |reason| Err(MetricsError::Inconsistent { reason });
        if self.local_requests + self.offloaded_served + self.unserviceable != self.total_requests
        {
            return fail("outcome tallies must partition the requests");
        }
        if self.requests.len() as u64 != self.total_requests {
            return fail("request log length must equal r_N");
        }
        let classified = self.migrations.len() as u64 - self.excluded_migrations;
        if self.strict.total() != classified || self.relaxed.total() != classified {
            return fail("TP + FP + UnM must equal the classified migrations");
        }
        if self.strict.unm != self.relaxed.unm {
            return fail("strict and relaxed share the UnM set");
        }
        if self.relaxed.tp < self.strict.tp {
            return fail("relaxed classification can only convert FP to TP");
        }
        if self.hits_per_migration.len() as u64 != classified {
            return fail("one κ sample per classified migration");
        }
        if self.hits_per_migration.iter().any(|&h| h as usize > self.lr) {
            return fail("κ cannot exceed the span length L_r");
        }
        if !(self.delta_accumulator >= 0.0 && self.delta_accumulator.is_finite()) {
            return fail("δ accumulator must be finite and nonnegative");
        }
        if let (Ok(mu_s), Ok(mu_r)) = (mu(&self.strict), mu(&self.relaxed)) {
            if mu_r < mu_s {
                return fail("μ_r must dominate μ_s");
            }
        }
        Ok(())
    }
}

/// δ = (accumulated squared unserviceable distance) / r_N.
pub fn delta(record: &RunRecord) -> Result<f64, MetricsError> {
    if record.total_requests == 0 {
        return Err(MetricsError::EmptyRun);
    }
    Ok(record.delta_accumulator / record.total_requests as f64)
}

/// Recomputes δ from the raw event log alone — the independent oracle for
/// the accumulator carried in the record.
pub fn delta_replay(record: &RunRecord) -> Result<f64, MetricsError> {
    if record.requests.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let sum: f64 = record
        .requests
        .iter()
        .filter(|r| r.outcome == crate::simnet::RequestOutcome::Unserviceable)
        .map(|r| r.interval.distance_sq(&r.server_available))
        .sum();
    Ok(sum / record.requests.len() as f64)
}

/// Identity of one experiment-grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub policy: Policy,
    pub n_nodes: usize,
    pub trips: usize,
    pub req_step: f64,
}

/// One result-table row: per-run metrics averaged over a cell's seeds.
/// Fields with no defined sample in any run are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: Policy,
    pub n_nodes: usize,
    pub trips: usize,
    pub req_step: f64,
    pub runs: usize,
    /// Requests that initiated a migration, as a percentage of r_N.
    pub migration_pct: f64,
    /// Mean directives per initiating request.
    pub mean_directives: f64,
    pub mu_s: f64,
    pub mu_r: f64,
    pub mean_kappa: f64,
    /// UnM / classified migrations.
    pub unm_ratio: f64,
    pub delta: f64,
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0u64;
    for v in values.into_iter().flatten() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Averages each per-run metric over a cell's records; runs where a metric
/// is undefined (no migrations, no requests) are skipped for that metric.
pub fn summarize(cell: CellKey, records: &[RunRecord]) -> SummaryRow {
    SummaryRow {
        policy: cell.policy,
        n_nodes: cell.n_nodes,
        trips: cell.trips,
        req_step: cell.req_step,
        runs: records.len(),
        migration_pct: mean_defined(records.iter().map(|r| {
            (r.total_requests > 0)
                .then(|| 100.0 * r.requests_with_migration as f64 / r.total_requests as f64)
        })),
        mean_directives: mean_defined(records.iter().map(|r| {
            (r.requests_with_migration > 0)
                .then(|| r.migrations.len() as f64 / r.requests_with_migration as f64)
        })),
        mu_s: mean_defined(records.iter().map(|r| mu(&r.strict).ok())),
        mu_r: mean_defined(records.iter().map(|r| mu(&r.relaxed).ok())),
        mean_kappa: mean_defined(records.iter().map(|r| {
            (!r.hits_per_migration.is_empty()).then(|| {
                r.hits_per_migration.iter().map(|&h| h as f64).sum::<f64>()
                    / r.hits_per_migration.len() as f64
            })
        })),
        unm_ratio: mean_defined(records.iter().map(|r| {
            (r.strict.total() > 0).then(|| r.strict.unm as f64 / r.strict.total() as f64)
        })),
        delta: mean_defined(records.iter().map(|r| delta(r).ok())),
    }
}

/// The cross-cell mean of a policy's rows — the result tables' Average
/// column. NaN cells are skipped per metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub policy: Policy,
    pub n_nodes: usize,
    pub cells: usize,
    pub migration_pct: f64,
    pub mean_directives: f64,
    pub mu_s: f64,
    pub mu_r: f64,
    pub mean_kappa: f64,
    pub unm_ratio: f64,
    pub delta: f64,
}

/// Averages summary rows cell-wise. All rows must belong to one policy and
/// node count (the table the Average column closes).
pub fn average_rows(rows: &[SummaryRow]) -> Option<AverageRow> {
    let first = rows.first()?;
    debug_assert!(rows
        .iter()
        .all(|r| r.policy == first.policy && r.n_nodes == first.n_nodes));
    let not_nan = |v: f64| (!v.is_nan()).then_some(v);
    Some(AverageRow {
        policy: first.policy,
        n_nodes: first.n_nodes,
        cells: rows.len(),
        migration_pct: mean_defined(rows.iter().map(|r| not_nan(r.migration_pct))),
        mean_directives: mean_defined(rows.iter().map(|r| not_nan(r.mean_directives))),
        mu_s: mean_defined(rows.iter().map(|r| not_nan(r.mu_s))),
        mu_r: mean_defined(rows.iter().map(|r| not_nan(r.mu_r))),
        mean_kappa: mean_defined(rows.iter().map(|r| not_nan(r.mean_kappa))),
        unm_ratio: mean_defined(rows.iter().map(|r| not_nan(r.unm_ratio))),
        delta: mean_defined(rows.iter().map(|r| not_nan(r.delta))),
    })
}

#[cfg(test)]
impl RunRecord {
    /// Fabricates the calibration-relevant corner of a record; everything
    /// else is zeroed and deliberately not consistency-checked.
    pub(crate) fn for_calibration_test(
        total_requests: u64,
        requests_with_migration: u64,
        directives: usize,
        seed: u64,
    ) -> Self {
        use crate::domain::{NodeId, RequestInterval};
        let interval = RequestInterval::new(0.3, 0.7).expect("static interval");
        let migrations = (0..directives)
            .map(|i| MigrationEvent {
                time: i as u64,
                source: NodeId(0),
                target: NodeId(1),
                interval,
                resulting_available: interval,
                policy: Policy::Model,
            })
            .collect();
        Self {
            policy: Policy::Model,
            seed,
            total_requests,
            local_requests: total_requests,
            offloaded_served: 0,
            unserviceable: 0,
            requests_with_migration,
            delta_accumulator: 0.0,
            lr: 20,
            strict: Tallies::default(),
            relaxed: Tallies::default(),
            hits_per_migration: Vec::new(),
            excluded_migrations: 0,
            truncated_relaxed: 0,
            requests: Vec::new(),
            migrations,
        }
    }
}
