//! Artifact writers: JSON-lines event logs, summary/average CSV tables,
//! per-metric plot data, and the reproduction manifest.
//!
//! Everything here is deterministic — no timestamps, no host state — so a
//! rerun of the same spec produces byte-identical files regardless of the
//! worker count.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use edgemig::metrics::{delta, mu, CellKey, RunRecord, Tallies};
use edgemig::simnet::{MigrationEvent, Policy, RequestEvent};

use crate::spec::ExperimentSpec;

/// Writes via a sibling `.tmp` file and a rename, so a reader (or a crash)
/// never observes a partially written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Serializes rows into headered CSV bytes. Column order is the struct
/// field order, which is the documented stable schema.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).context("serializing CSV row")?;
    }
    writer
        .into_inner()
        .map_err(|e| anyhow::anyhow!("flushing CSV buffer: {e}"))
}

/// `model-n20-t1000-s0.5-seed3.jsonl`: the run's cell coordinates and seed.
pub fn log_name(cell: CellKey, seed: u64) -> String {
    format!(
        "{}-n{}-t{}-s{}-seed{}.jsonl",
        cell.policy, cell.n_nodes, cell.trips, cell.req_step, seed
    )
}

/// One JSON-lines record. The tag routes each line: a `start` header, one
/// `request` per routed request with `migration` lines interleaved right
/// after the request that triggered them, and an `end` trailer carrying
/// run totals and classification tallies.
#[derive(Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
enum LogLine<'a> {
    Start {
        policy: Policy,
        n_nodes: usize,
        trips: usize,
        req_step: f64,
        seed: u64,
    },
    Request {
        #[serde(flatten)]
        body: &'a RequestEvent,
    },
    Migration {
        #[serde(flatten)]
        body: &'a MigrationEvent,
    },
    End {
        total_requests: u64,
        local_requests: u64,
        offloaded_served: u64,
        unserviceable: u64,
        requests_with_migration: u64,
        strict: Tallies,
        relaxed: Tallies,
        excluded_migrations: u64,
        truncated_relaxed: u64,
    },
}

/// Renders a run's full event log. Requires the record's request log (call
/// before any slimming).
pub fn render_log(cell: CellKey, record: &RunRecord) -> Result<String> {
    let mut lines: Vec<String> =
        Vec::with_capacity(record.requests.len() + record.migrations.len() + 2);
    lines.push(serde_json::to_string(&LogLine::Start {
        policy: cell.policy,
        n_nodes: cell.n_nodes,
        trips: cell.trips,
        req_step: cell.req_step,
        seed: record.seed,
    })?);
    let mut migrations = record.migrations.iter().peekable();
    for request in &record.requests {
        lines.push(serde_json::to_string(&LogLine::Request { body: request })?);
        while migrations.peek().is_some_and(|m| m.time == request.index) {
            let body = migrations.next().expect("peeked");
            lines.push(serde_json::to_string(&LogLine::Migration { body })?);
        }
    }
    // Migration times are request indices, so this loop should be empty;
    // kept so a malformed record still logs every migration.
    for body in migrations {
        lines.push(serde_json::to_string(&LogLine::Migration { body })?);
    }
    lines.push(serde_json::to_string(&LogLine::End {
        total_requests: record.total_requests,
        local_requests: record.local_requests,
        offloaded_served: record.offloaded_served,
        unserviceable: record.unserviceable,
        requests_with_migration: record.requests_with_migration,
        strict: record.strict,
        relaxed: record.relaxed,
        excluded_migrations: record.excluded_migrations,
        truncated_relaxed: record.truncated_relaxed,
    })?);
    let mut text = lines.join("\n");
    text.push('\n');
    Ok(text)
}

/// Plot-data metrics, in file order. Each `plots/<name>.csv` holds one raw
/// per-run sample per row so distribution plots need no re-simulation.
pub const PLOT_METRICS: [&str; 5] = ["mu_s", "mu_r", "kappa", "unm_ratio", "delta"];

/// The per-run values behind [`PLOT_METRICS`], aligned by index. A metric
/// with no defined sample in the run (no migrations, say) is NaN, which
/// serializes to an explicit `NaN` cell.
pub fn run_metrics(record: &RunRecord) -> [f64; 5] {
    let kappa = if record.hits_per_migration.is_empty() {
        f64::NAN
    } else {
        record.hits_per_migration.iter().map(|&h| h as f64).sum::<f64>()
            / record.hits_per_migration.len() as f64
    };
    let unm_ratio = if record.strict.total() > 0 {
        record.strict.unm as f64 / record.strict.total() as f64
    } else {
        f64::NAN
    };
    [
        mu(&record.strict).unwrap_or(f64::NAN),
        mu(&record.relaxed).unwrap_or(f64::NAN),
        kappa,
        unm_ratio,
        delta(record).unwrap_or(f64::NAN),
    ]
}

/// One raw per-run metric sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlotRow {
    pub policy: Policy,
    pub n_nodes: usize,
    pub trips: usize,
    pub req_step: f64,
    pub seed: u64,
    pub value: f64,
}

/// Everything needed to reproduce an invocation: the resolved spec, the
/// tool version, and what was executed. Passing a manifest back to `run`
/// or `compare` replays it byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub spec: ExperimentSpec,
    /// Workload-generation seed (`synth` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_seed: Option<u64>,
    /// One entry per executed run, in execution order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunEntry>,
    /// Per-(cell, seed) baseline calibration derived from the Model run
    /// (`compare` only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calibrations: Vec<CalibrationEntry>,
}

impl Manifest {
    pub fn new(command: &str, spec: &ExperimentSpec) -> Self {
        Self {
            tool: "edgemig-cli".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            spec: spec.clone(),
            synth_seed: None,
            runs: Vec::new(),
            calibrations: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self).context("serializing manifest")?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

/// Where one run's event log landed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    pub policy: Policy,
    pub n_nodes: usize,
    pub trips: usize,
    pub req_step: f64,
    pub seed: u64,
    /// Log path relative to the output directory.
    pub log: String,
}

/// The Random-DM parameters one Model run calibrated (`qnm` also caps
/// DBSCAN-DM's targets); recorded so baseline rows are traceable to their
/// source run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub n_nodes: usize,
    pub trips: usize,
    pub req_step: f64,
    pub seed: u64,
    pub p_migrate: f64,
    pub qnm: usize,
}
