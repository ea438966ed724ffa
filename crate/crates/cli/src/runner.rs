//! Experiment execution: workload acquisition, the per-run pipeline, the
//! calibrated three-policy comparison, and synthetic-trace emission.
//!
//! Runs are independent, so `run` and `compare` fan (cell, seed) tasks out
//! over a Rayon pool sized by `--workers`; each run stays internally
//! sequential and writes its own event log atomically. Tables and the
//! manifest are assembled afterwards in grid order, which keeps every
//! artifact byte-identical across reruns and worker counts.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use edgemig::baselines::derive_calibration;
use edgemig::metrics::{average_rows, summarize, AverageRow, CellKey, RunRecord, SummaryRow};
use edgemig::simnet::{run_trace, Policy, SimConfig};
use edgemig::workload::{load_csv_traces, synth_workload, SynthSpec, Workload};

use crate::output::{self, CalibrationEntry, Manifest, PlotRow, RunEntry};
use crate::spec::{cell_label, ExperimentSpec, WorkloadSource};

/// How runs obtain their workload: recorded traces load once and are
/// shared; synthetic workloads are rebuilt per run from the run's seed,
/// with the generator's trip count raised to the cell's so every cell is
/// satisfiable.
enum WorkloadHandle {
    Shared(Arc<Workload>),
    Synthetic(SynthSpec),
}

impl WorkloadHandle {
    fn open(spec: &ExperimentSpec) -> Result<Self> {
        match &spec.workload {
            WorkloadSource::Csv {
                locations,
                trips,
                intervals,
            } => {
                let workload = load_csv_traces(locations, trips, intervals)
                    .context("loading CSV workload")?;
                Ok(Self::Shared(Arc::new(workload)))
            }
            WorkloadSource::Synthetic(synth) => Ok(Self::Synthetic(synth.clone())),
        }
    }

    fn for_run(&self, cell_trips: usize, seed: u64) -> Result<Arc<Workload>> {
        match self {
            Self::Shared(workload) => Ok(workload.clone()),
            Self::Synthetic(base) => {
                let mut synth = base.clone();
                synth.trips = synth.trips.max(cell_trips);
                let workload =
                    synth_workload(&synth, seed).context("generating synthetic workload")?;
                Ok(Arc::new(workload))
            }
        }
    }
}

/// Runs one cell × seed, checks the record's internal invariants, writes
/// its event log, and returns the record with the bulky request log dropped
/// (everything the tables need survives).
fn execute_one(
    config: &SimConfig,
    cell: CellKey,
    workload: &Workload,
    runs_dir: &Path,
) -> Result<(RunRecord, String)> {
    let record = run_trace(config, workload)?;
    record.check_consistency()?;
    let log = output::log_name(cell, config.seed);
    output::write_atomic(
        &runs_dir.join(&log),
        output::render_log(cell, &record)?.as_bytes(),
    )?;
    let mut slim = record;
    slim.requests = Vec::new();
    Ok((slim, log))
}

/// Runs `work` on a pool of the requested width; `None` keeps the global
/// default (one worker per core).
fn in_pool<T: Send>(workers: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building worker pool")?;
            Ok(pool.install(work))
        }
    }
}

/// Cross-cell averages per (policy, node count) — the result tables'
/// Average column — in first-appearance order.
fn averages_for(summary: &[SummaryRow]) -> Vec<AverageRow> {
    let mut groups: Vec<(Policy, usize)> = Vec::new();
    for row in summary {
        if !groups.contains(&(row.policy, row.n_nodes)) {
            groups.push((row.policy, row.n_nodes));
        }
    }
    groups
        .iter()
        .filter_map(|&(policy, n_nodes)| {
            let rows: Vec<SummaryRow> = summary
                .iter()
                .copied()
                .filter(|r| r.policy == policy && r.n_nodes == n_nodes)
                .collect();
            average_rows(&rows)
        })
        .collect()
}

fn write_tables(out: &Path, summary: &[SummaryRow]) -> Result<()> {
    output::write_atomic(&out.join("summary.csv"), &output::to_csv(summary)?)?;
    output::write_atomic(
        &out.join("averages.csv"),
        &output::to_csv(&averages_for(summary))?,
    )
}

/// Executes every grid cell × seed and writes per-run event logs, the
/// summary and averages tables, and the manifest.
pub fn run(spec: &ExperimentSpec, workers: Option<usize>) -> Result<()> {
    spec.validate()?;
    let out = spec.output.clone();
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir)
        .with_context(|| format!("creating output directory {}", runs_dir.display()))?;
    let handle = WorkloadHandle::open(spec)?;
    let cells = spec.run_cells();
    let tasks: Vec<(CellKey, u64)> = cells
        .iter()
        .flat_map(|&cell| spec.seeds.iter().map(move |&seed| (cell, seed)))
        .collect();

    let results: Vec<(RunRecord, String)> = in_pool(workers, || {
        tasks
            .par_iter()
            .map(|&(cell, seed)| {
                let workload = handle.for_run(cell.trips, seed)?;
                let config = spec.config_for(cell, seed);
                execute_one(&config, cell, &workload, &runs_dir)
                    .with_context(|| format!("{} seed={}", cell_label(cell), seed))
            })
            .collect::<Result<_>>()
    })??;

    // Tasks enumerate seeds innermost, so fixed-size chunks realign runs
    // with their cells.
    let mut summary = Vec::with_capacity(cells.len());
    for (cell, chunk) in cells.iter().zip(results.chunks_exact(spec.seeds.len())) {
        let records: Vec<RunRecord> = chunk.iter().map(|(record, _)| record.clone()).collect();
        summary.push(summarize(*cell, &records));
    }
    write_tables(&out, &summary)?;

    let mut manifest = Manifest::new("run", spec);
    manifest.runs = tasks
        .iter()
        .zip(&results)
        .map(|(&(cell, seed), (_, log))| run_entry(cell, seed, log))
        .collect();
    output::write_atomic(&out.join("manifest.json"), &manifest.to_json()?)
}

/// The fixed policy order of a comparison cell's rows, runs, and logs.
const COMPARE_POLICIES: [Policy; 3] = [Policy::Model, Policy::RandomDm, Policy::DbscanDm];

/// Runs the calibrated comparison on every base cell × seed: the Model
/// first, then Random-DM and DBSCAN-DM against the same workload with the
/// migration rate and target count the Model run exhibited (`p_migrate`,
/// `qnm`), so all three see identical traffic and a matched migration
/// budget. Emits the combined tables, raw per-run plot data, and a
/// manifest recording each calibration.
pub fn compare(spec: &ExperimentSpec, workers: Option<usize>) -> Result<()> {
    spec.validate()?;
    let out = spec.output.clone();
    let runs_dir = out.join("runs");
    let plots_dir = out.join("plots");
    for dir in [&runs_dir, &plots_dir] {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
    }
    let handle = WorkloadHandle::open(spec)?;
    let base_cells = spec.base_cells();
    let tasks: Vec<((usize, usize, f64), u64)> = base_cells
        .iter()
        .flat_map(|&cell| spec.seeds.iter().map(move |&seed| (cell, seed)))
        .collect();

    type TaskOutcome = (CalibrationEntry, Vec<(RunRecord, String)>);
    let results: Vec<TaskOutcome> = in_pool(workers, || {
        tasks
            .par_iter()
            .map(|&((n_nodes, trips, req_step), seed)| {
                let cell_for = |policy| CellKey {
                    policy,
                    n_nodes,
                    trips,
                    req_step,
                };
                let workload = handle.for_run(trips, seed)?;
                let model_cell = cell_for(Policy::Model);
                let base = spec.config_for(model_cell, seed);
                let (model, model_log) = execute_one(&base, model_cell, &workload, &runs_dir)
                    .with_context(|| format!("{} seed={}", cell_label(model_cell), seed))?;
                let calibration = derive_calibration(&model);

                let mut runs = vec![(model, model_log)];
                for policy in [Policy::RandomDm, Policy::DbscanDm] {
                    let cell = cell_for(policy);
                    let mut config = base.clone();
                    config.policy = policy;
                    config.random_dm = calibration;
                    runs.push(
                        execute_one(&config, cell, &workload, &runs_dir)
                            .with_context(|| format!("{} seed={}", cell_label(cell), seed))?,
                    );
                }
                let entry = CalibrationEntry {
                    n_nodes,
                    trips,
                    req_step,
                    seed,
                    p_migrate: calibration.p_migrate,
                    qnm: calibration.qnm,
                };
                Ok((entry, runs))
            })
            .collect::<Result<_>>()
    })??;

    // Three summary rows per base cell, in the fixed policy order.
    let mut summary = Vec::with_capacity(base_cells.len() * COMPARE_POLICIES.len());
    for (&(n_nodes, trips, req_step), chunk) in base_cells
        .iter()
        .zip(results.chunks_exact(spec.seeds.len()))
    {
        for (slot, &policy) in COMPARE_POLICIES.iter().enumerate() {
            let records: Vec<RunRecord> = chunk
                .iter()
                .map(|(_, runs)| runs[slot].0.clone())
                .collect();
            let cell = CellKey {
                policy,
                n_nodes,
                trips,
                req_step,
            };
            summary.push(summarize(cell, &records));
        }
    }
    write_tables(&out, &summary)?;

    // Raw per-run samples, one file per metric, rows in run order.
    for (metric_index, name) in output::PLOT_METRICS.iter().enumerate() {
        let rows: Vec<PlotRow> = tasks
            .iter()
            .zip(&results)
            .flat_map(|(&((n_nodes, trips, req_step), seed), (_, runs))| {
                COMPARE_POLICIES
                    .iter()
                    .zip(runs)
                    .map(move |(&policy, (record, _))| PlotRow {
                        policy,
                        n_nodes,
                        trips,
                        req_step,
                        seed,
                        value: output::run_metrics(record)[metric_index],
                    })
            })
            .collect();
        output::write_atomic(&plots_dir.join(format!("{name}.csv")), &output::to_csv(&rows)?)?;
    }

    let mut manifest = Manifest::new("compare", spec);
    for (&((n_nodes, trips, req_step), seed), (entry, runs)) in tasks.iter().zip(&results) {
        manifest.calibrations.push(entry.clone());
        for (&policy, (_, log)) in COMPARE_POLICIES.iter().zip(runs) {
            let cell = CellKey {
                policy,
                n_nodes,
                trips,
                req_step,
            };
            manifest.runs.push(run_entry(cell, seed, log));
        }
    }
    output::write_atomic(&out.join("manifest.json"), &manifest.to_json()?)
}

fn run_entry(cell: CellKey, seed: u64, log: &str) -> RunEntry {
    RunEntry {
        policy: cell.policy,
        n_nodes: cell.n_nodes,
        trips: cell.trips,
        req_step: cell.req_step,
        seed,
        log: log.to_string(),
    }
}

#[derive(Serialize)]
struct LocationRow {
    id: u64,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct TripRow {
    trip_id: u64,
    seq: u64,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct IntervalRow {
    low: f64,
    high: f64,
}

/// Materializes the spec's synthetic workload as the three CSV trace files
/// the loader reads back. The trip count is raised to the grid's largest
/// so the emitted files can drive the spec's own cells; the interval file
/// holds enough draws to cover the busiest cell (`Σ ⌊length/step⌋ + 1` at
/// the smallest grid step — the loader cycles if a longer run drains it).
pub fn synth(spec: &ExperimentSpec, seed_override: Option<u64>) -> Result<()> {
    spec.validate()?;
    let WorkloadSource::Synthetic(base) = &spec.workload else {
        bail!("synth needs a [workload.synthetic] section");
    };
    let seed = seed_override.unwrap_or(spec.seeds[0]);
    let mut synth_spec = base.clone();
    synth_spec.trips = synth_spec
        .trips
        .max(spec.grid.trips.iter().copied().max().unwrap_or(0));
    let workload = synth_workload(&synth_spec, seed).context("generating synthetic workload")?;
    let out = spec.output.clone();
    fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    let locations: Vec<LocationRow> = workload
        .locations
        .ids()
        .iter()
        .zip(workload.locations.coords())
        .map(|(&id, &(x, y))| LocationRow { id, x, y })
        .collect();
    output::write_atomic(&out.join("locations.csv"), &output::to_csv(&locations)?)?;

    let trips: Vec<TripRow> = workload
        .trips
        .trips()
        .iter()
        .enumerate()
        .flat_map(|(trip_id, waypoints)| {
            waypoints
                .iter()
                .enumerate()
                .map(move |(seq, &(x, y, _))| TripRow {
                    trip_id: trip_id as u64,
                    seq: seq as u64,
                    x,
                    y,
                })
        })
        .collect();
    output::write_atomic(&out.join("trips.csv"), &output::to_csv(&trips)?)?;

    let min_step = spec
        .grid
        .req_step
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let draws: usize = workload
        .trips
        .trips()
        .iter()
        .map(|waypoints| {
            let length = waypoints.last().map(|w| w.2).unwrap_or(0.0);
            (length / min_step).floor() as usize + 1
        })
        .sum();
    let mut stream = workload.intervals.clone();
    let intervals: Vec<IntervalRow> = (0..draws)
        .map(|_| {
            let interval = stream.next_interval().expect("synthetic streams never end");
            IntervalRow {
                low: interval.low(),
                high: interval.high(),
            }
        })
        .collect();
    output::write_atomic(&out.join("intervals.csv"), &output::to_csv(&intervals)?)?;

    let mut manifest = Manifest::new("synth", spec);
    manifest.synth_seed = Some(seed);
    output::write_atomic(&out.join("manifest.json"), &manifest.to_json()?)
}
