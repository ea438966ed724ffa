//! Browser playground for the interval-inference pipeline.
//!
//! Three operations back the static page in `www/`: sample a request window
//! from a mode mixture, run both detector branches over a window and report
//! every intermediate artifact (density grid, islands, inlier flags, branch
//! boxes, combined dominant interval), and race the three migration policies
//! on a small synthetic scenario.
//!
//! All three take and return JSON strings, so the wasm layer is a thin
//! `&str → String` shim and the logic is fully exercised by host tests. The
//! wasm exports live behind `target_arch = "wasm32"` and compile only for
//! the browser build.

use edgemig::baselines::derive_calibration;
use edgemig::domain::BoundaryPoint;
use edgemig::ensemble::combine_boxes;
use edgemig::kde::{
    build_grid, extract_islands, hdr_level, select_bandwidth, DEFAULT_GRID_PADDING,
    DEFAULT_GRID_RESOLUTION,
};
use edgemig::metrics::{delta, mu, RunRecord};
use edgemig::ocsvm::{inlier_bbox, suggested_sigma, train, OcsvmParams};
use edgemig::simnet::{run_trace, Policy, SimConfig};
use edgemig::workload::{synth_workload, IntervalStream, ModeSpec, SynthSpec};
use serde::Serialize;

/// Fewest window points the analyzer accepts; mirrors the receptor's
/// inference gate.
pub const MIN_POINTS: usize = 10;
/// Caps keeping a single page interaction comfortably interactive.
pub const MAX_POINTS: usize = 2000;
pub const MIN_TRIPS: usize = 50;
pub const MAX_TRIPS: usize = 600;

// --- sampling -------------------------------------------------------------

#[derive(Serialize)]
struct WindowOut {
    points: Vec<(f64, f64)>,
    noise_weight: f64,
}

/// Draws `count` request intervals from the mixture described by
/// `modes_json` (`[{"low", "high", "jitter", "weight"}, …]`; uniform noise
/// takes the weight left over) and returns them as boundary points.
pub fn sample_window(modes_json: &str, count: usize, seed: u64) -> Result<String, String> {
    if count == 0 || count > MAX_POINTS {
        return Err(format!("count must be between 1 and {MAX_POINTS}"));
    }
    let modes: Vec<ModeSpec> =
        serde_json::from_str(modes_json).map_err(|err| format!("bad modes JSON: {err}"))?;
    let weight_sum: f64 = modes.iter().map(|m| m.weight).sum();
    let noise_weight = (1.0 - weight_sum).max(0.0);
    let mut stream = IntervalStream::synthetic(modes, noise_weight, seed)
        .map_err(|err| format!("invalid mixture: {err}"))?;
    let points = (0..count)
        .map(|_| {
            let interval = stream.next_interval().expect("synthetic streams never end");
            (interval.low(), interval.high())
        })
        .collect();
    render(&WindowOut {
        points,
        noise_weight,
    })
}

// --- window analysis ------------------------------------------------------

#[derive(Serialize)]
struct BoxOut {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl From<&edgemig::domain::BoundingBox> for BoxOut {
    fn from(bbox: &edgemig::domain::BoundingBox) -> Self {
        Self {
            x0: bbox.min().x,
            y0: bbox.min().y,
            x1: bbox.max().x,
            y1: bbox.max().y,
        }
    }
}

#[derive(Serialize)]
struct GridOut {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    resolution: usize,
    /// Density per cell, row-major from the low corner, scaled to 0–255.
    cells: Vec<u8>,
}

#[derive(Serialize)]
struct IslandOut {
    #[serde(flatten)]
    bbox: BoxOut,
    mass_fraction: f64,
    cell_count: usize,
}

#[derive(Serialize)]
struct DominantOut {
    low: f64,
    high: f64,
    y1: (f64, f64),
    y2: (f64, f64),
}

#[derive(Serialize, Default)]
struct AnalysisOut {
    grid: Option<GridOut>,
    level: Option<f64>,
    islands: Vec<IslandOut>,
    kde_box: Option<BoxOut>,
    sigma: Option<f64>,
    inliers: Option<Vec<bool>>,
    ocsvm_box: Option<BoxOut>,
    dominant: Option<DominantOut>,
}

/// Runs both detector branches over the window in `points_json`
/// (`[[low, high], …]`) and reports every intermediate artifact. A branch
/// that degenerates (flat sample, untrainable model, no islands) reports
/// `null` for its artifacts instead of failing the call, mirroring how the
/// receptor quietly skips inference on such windows.
pub fn analyze_window(points_json: &str, nu: f64, thresh: f64) -> Result<String, String> {
    let raw: Vec<(f64, f64)> =
        serde_json::from_str(points_json).map_err(|err| format!("bad points JSON: {err}"))?;
    if raw.len() < MIN_POINTS || raw.len() > MAX_POINTS {
        return Err(format!(
            "need between {MIN_POINTS} and {MAX_POINTS} points, got {}",
            raw.len()
        ));
    }
    if !(0.0 < nu && nu <= 1.0) {
        return Err(format!("ν must lie in (0, 1], got {nu}"));
    }
    if !(0.0 < thresh && thresh < 1.0) {
        return Err(format!("threshold must lie in (0, 1), got {thresh}"));
    }
    let mut points = Vec::with_capacity(raw.len());
    for (i, &(x, y)) in raw.iter().enumerate() {
        if !(x.is_finite() && y.is_finite() && x <= y) {
            return Err(format!("point {i} is not an ordered finite pair: ({x}, {y})"));
        }
        points.push(BoundaryPoint::raw(x, y));
    }

    let mut out = AnalysisOut::default();

    // Density branch: bandwidth, grid, highest-density region, islands.
    if let Ok(bandwidth) = select_bandwidth(&points) {
        let grid = build_grid(&points, &bandwidth, DEFAULT_GRID_RESOLUTION, DEFAULT_GRID_PADDING)
            .map_err(|err| format!("grid evaluation failed: {err}"))?;
        let peak = grid.values().iter().cloned().fold(0.0, f64::max);
        let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        out.grid = Some(GridOut {
            x0: grid.x_range().low(),
            x1: grid.x_range().high(),
            y0: grid.y_range().low(),
            y1: grid.y_range().high(),
            resolution: grid.resolution(),
            cells: grid
                .values()
                .iter()
                .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
                .collect(),
        });
        if let Ok(level) = hdr_level(&grid, thresh) {
            out.level = Some(level);
            if let Ok(islands) = extract_islands(&grid, level) {
                out.kde_box = islands.dominant().map(|island| (&island.bbox).into());
                out.islands = islands
                    .islands
                    .iter()
                    .map(|island| IslandOut {
                        bbox: (&island.bbox).into(),
                        mass_fraction: island.mass_fraction,
                        cell_count: island.cell_count,
                    })
                    .collect();
            }
        }
    }

    // Support branch: one-class SVM inlier region.
    let sigma = suggested_sigma(&points);
    if let Ok(params) = OcsvmParams::new(nu, sigma) {
        if let Ok(model) = train(&points, &params) {
            out.sigma = Some(model.sigma());
            out.inliers = Some(points.iter().map(|p| model.decision(p) >= 0.0).collect());
            out.ocsvm_box = inlier_bbox(&model, &points).as_ref().map(BoxOut::from);
        }
    }

    // Agreement of the branches, if both produced a box.
    if let (Some(kde), Some(ocsvm)) = (&out.kde_box, &out.ocsvm_box) {
        let rebuild = |b: &BoxOut| {
            edgemig::domain::BoundingBox::new(
                BoundaryPoint::raw(b.x0, b.y0),
                BoundaryPoint::raw(b.x1, b.y1),
            )
            .expect("branch boxes are ordered")
        };
        out.dominant = combine_boxes(&rebuild(kde), &rebuild(ocsvm)).map(|dom| DominantOut {
            low: dom.interval.low(),
            high: dom.interval.high(),
            y1: (dom.y1.x, dom.y1.y),
            y2: (dom.y2.x, dom.y2.y),
        });
    }

    render(&out)
}

// --- policy comparison ----------------------------------------------------

#[derive(Serialize)]
struct CompareOut {
    trips: usize,
    n_nodes: usize,
    n_clusters: usize,
    p_migrate: f64,
    qnm: usize,
    policies: Vec<PolicyOut>,
}

#[derive(Serialize)]
struct PolicyOut {
    policy: String,
    total_requests: u64,
    initiating_requests: u64,
    directives: usize,
    mu_s: Option<f64>,
    mu_r: Option<f64>,
    kappa: Option<f64>,
    unm_ratio: Option<f64>,
    delta: Option<f64>,
}

fn policy_row(label: &str, record: &RunRecord) -> PolicyOut {
    let kappa = if record.hits_per_migration.is_empty() {
        None
    } else {
        let sum: f64 = record.hits_per_migration.iter().map(|&h| f64::from(h)).sum();
        Some(sum / record.hits_per_migration.len() as f64)
    };
    let unm_ratio = if record.strict.total() > 0 {
        Some(record.strict.unm as f64 / record.strict.total() as f64)
    } else {
        None
    };
    PolicyOut {
        policy: label.to_string(),
        total_requests: record.total_requests,
        initiating_requests: record.requests_with_migration,
        directives: record.migrations.len(),
        mu_s: mu(&record.strict).ok(),
        mu_r: mu(&record.relaxed).ok(),
        kappa,
        unm_ratio,
        delta: delta(record).ok(),
    }
}

/// Races the three policies on a fixed small scenario (20 nodes, 3
/// clusters, one dominant wide request mode): the Model runs first, its
/// measured rates calibrate the baselines, and all three see the identical
/// workload. Returns one metrics row per policy.
pub fn compare_policies(trips: usize, seed: u64) -> Result<String, String> {
    if !(MIN_TRIPS..=MAX_TRIPS).contains(&trips) {
        return Err(format!("trips must lie in [{MIN_TRIPS}, {MAX_TRIPS}]"));
    }
    let synth = SynthSpec {
        trips,
        n_locations: 120,
        city_size: 12.0,
        trip_max_len: 10.0,
        modes: vec![ModeSpec {
            low: 0.06,
            high: 0.94,
            jitter: 0.025,
            weight: 0.9,
        }],
        noise_weight: 0.1,
        ..SynthSpec::default()
    };
    let workload = synth_workload(&synth, seed).map_err(|err| err.to_string())?;
    let base = |policy: Policy| SimConfig {
        trips,
        req_step: 1.0,
        seed,
        policy,
        ..SimConfig::default()
    };

    let model = run_trace(&base(Policy::Model), &workload).map_err(|err| err.to_string())?;
    let calibration = derive_calibration(&model);
    let mut out = CompareOut {
        trips,
        n_nodes: 20,
        n_clusters: 3,
        p_migrate: calibration.p_migrate,
        qnm: calibration.qnm,
        policies: vec![policy_row("model", &model)],
    };
    for (label, policy) in [("random-dm", Policy::RandomDm), ("dbscan-dm", Policy::DbscanDm)] {
        let mut config = base(policy);
        config.random_dm = calibration;
        let record = run_trace(&config, &workload).map_err(|err| err.to_string())?;
        out.policies.push(policy_row(label, &record));
    }
    render(&out)
}

fn render<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|err| format!("serializing result: {err}"))
}

// --- wasm exports ---------------------------------------------------------

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    /// Seeds cross the JS boundary as plain numbers to spare the page
    /// BigInt handling; the u32 range is plenty for a demo.
    #[wasm_bindgen]
    pub fn sample_window(modes_json: &str, count: usize, seed: u32) -> Result<String, JsError> {
        super::sample_window(modes_json, count, u64::from(seed)).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn analyze_window(points_json: &str, nu: f64, thresh: f64) -> Result<String, JsError> {
        super::analyze_window(points_json, nu, thresh).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn compare_policies(trips: usize, seed: u32) -> Result<String, JsError> {
        super::compare_policies(trips, u64::from(seed)).map_err(|e| JsError::new(&e))
    }
}
