//! Declarative experiment specs: the cell grid, the workload source, the
//! seed list, and where artifacts land.
//!
//! A spec is one TOML file. Every combination of the `[grid]` axes is one
//! cell; every cell executes once per seed. `[sim]` holds baseline
//! simulator settings shared by all cells — grid axes and the per-run seed
//! overwrite the matching fields. Exactly one of `[workload.csv]` and
//! `[workload.synthetic]` supplies the traces.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use edgemig::metrics::CellKey;
use edgemig::simnet::{Policy, SimConfig};
use edgemig::workload::SynthSpec;

use crate::output::Manifest;

/// One experiment: a grid of simulator cells, the seeds each cell runs
/// under, and the workload feeding them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Run seeds; each grid cell executes once per entry. `--seed` replaces
    /// the whole list with a single value.
    pub seeds: Vec<u64>,
    /// Artifact directory, relative to the invocation's working directory;
    /// `--out` overrides.
    pub output: PathBuf,
    pub grid: Grid,
    /// Baseline simulator settings for every cell. The grid axes and the
    /// run seed overwrite their counterparts here, and `random_dm.seed`
    /// always follows the run seed so seeds stay independent.
    #[serde(default)]
    pub sim: SimConfig,
    pub workload: WorkloadSource,
}

/// The sweep axes. Cells enumerate in spec order with `n_nodes` outermost,
/// then `trips`, `req_step`, and (for `run`) `policy` innermost.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n_nodes: Vec<usize>,
    pub trips: Vec<usize>,
    pub req_step: Vec<f64>,
    /// Policy axis for `run`; `compare` ignores it and always runs all
    /// three policies per cell.
    #[serde(default = "default_policy_axis")]
    pub policy: Vec<Policy>,
}

fn default_policy_axis() -> Vec<Policy> {
    vec![Policy::Model]
}

/// Where request traces come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorkloadSource {
    /// Recorded traces in the CSV schemas the loader documents. Paths are
    /// resolved relative to the spec file, so specs stay relocatable.
    Csv {
        locations: PathBuf,
        trips: PathBuf,
        intervals: PathBuf,
    },
    /// A generated workload, rebuilt per run from the run's seed with the
    /// generator's trip count raised to the cell's.
    Synthetic(SynthSpec),
}

impl ExperimentSpec {
    /// Loads a spec from TOML, or recovers the embedded spec from a
    /// previous invocation's `manifest.json` (any `.json` input is treated
    /// as a manifest).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading spec {}", path.display()))?;
        let mut spec: ExperimentSpec = if path.extension().is_some_and(|e| e == "json") {
            let manifest: Manifest = serde_json::from_str(&text)
                .with_context(|| format!("parsing manifest {}", path.display()))?;
            manifest.spec
        } else {
            toml::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?
        };
        if let Some(base) = path.parent() {
            spec.resolve_paths(base);
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Joins relative workload paths onto `base`. Absolute paths (as found
    /// in manifests, which store resolved specs) pass through unchanged.
    fn resolve_paths(&mut self, base: &Path) {
        if let WorkloadSource::Csv {
            locations,
            trips,
            intervals,
        } = &mut self.workload
        {
            for path in [locations, trips, intervals] {
                if path.is_relative() {
                    *path = base.join(&path);
                }
            }
        }
    }

    /// Structural checks ahead of any run: nonempty, duplicate-free axes
    /// and seeds, and a valid simulator config for every cell.
    pub fn validate(&self) -> Result<()> {
        ensure_axis("seeds", &self.seeds)?;
        ensure_axis("grid.n_nodes", &self.grid.n_nodes)?;
        ensure_axis("grid.trips", &self.grid.trips)?;
        ensure_axis("grid.policy", &self.grid.policy)?;
        if self.grid.req_step.is_empty() {
            bail!("grid.req_step must not be empty");
        }
        for (i, &step) in self.grid.req_step.iter().enumerate() {
            if !(step.is_finite() && step > 0.0) {
                bail!("grid.req_step[{i}] must be positive and finite, got {step}");
            }
            if self.grid.req_step[..i].contains(&step) {
                bail!("grid.req_step repeats the value {step}");
            }
        }
        if self.grid.trips.contains(&0) {
            bail!("grid.trips entries must be at least 1");
        }
        for cell in self.run_cells() {
            self.config_for(cell, self.seeds[0])
                .validate()
                .with_context(|| format!("invalid config for {}", cell_label(cell)))?;
        }
        if let WorkloadSource::Synthetic(synth) = &self.workload {
            synth.validate().context("invalid [workload.synthetic]")?;
        }
        Ok(())
    }

    /// The `(n_nodes, trips, req_step)` cells in spec order — the grid
    /// `compare` iterates, where policy is not an axis.
    pub fn base_cells(&self) -> Vec<(usize, usize, f64)> {
        let mut cells = Vec::new();
        for &n_nodes in &self.grid.n_nodes {
            for &trips in &self.grid.trips {
                for &req_step in &self.grid.req_step {
                    cells.push((n_nodes, trips, req_step));
                }
            }
        }
        cells
    }

    /// The full cell grid for `run`: base cells × the policy axis, policy
    /// innermost.
    pub fn run_cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for (n_nodes, trips, req_step) in self.base_cells() {
            for &policy in &self.grid.policy {
                cells.push(CellKey {
                    policy,
                    n_nodes,
                    trips,
                    req_step,
                });
            }
        }
        cells
    }

    /// The simulator config for one cell and seed: `[sim]` baseline with
    /// the grid axes and seed written over it. The Random-DM stream seed
    /// follows the run seed (compare later replaces the whole `random_dm`
    /// block with the derived calibration).
    pub fn config_for(&self, cell: CellKey, seed: u64) -> SimConfig {
        let mut config = self.sim.clone();
        config.policy = cell.policy;
        config.n_nodes = cell.n_nodes;
        config.trips = cell.trips;
        config.req_step = cell.req_step;
        config.seed = seed;
        config.random_dm.seed = seed;
        config
    }
}

/// Human-readable cell identity for diagnostics and error contexts.
pub fn cell_label(cell: CellKey) -> String {
    format!(
        "cell policy={} n_nodes={} trips={} req_step={}",
        cell.policy, cell.n_nodes, cell.trips, cell.req_step
    )
}

fn ensure_axis<T: PartialEq + std::fmt::Debug>(name: &str, values: &[T]) -> Result<()> {
    if values.is_empty() {
        bail!("{name} must not be empty");
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            bail!("{name} repeats the entry {v:?}");
        }
    }
    Ok(())
}
