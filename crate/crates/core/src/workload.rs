//! Workload construction: node locations, user trips, and request-interval
//! streams, either ingested from CSV traces or generated synthetically.
//!
//! CSV ingestion normalizes interval endpoints min-max over the whole file
//! (pooled lows and highs; min → 0, max → 1). The synthetic generator draws
//! blob-clustered locations, random-walk trips across a square city, and
//! intervals from a mixture of jittered dominant modes plus uniform noise —
//! recording the mode parameters as ground truth for evaluation.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::RequestInterval;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}:{line}: {reason}")]
    InvalidRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("invalid workload spec: {reason}")]
    InvalidSpec { reason: &'static str },
    #[error("trip {index} has no waypoints")]
    EmptyTrip { index: usize },
}

/// Node placement candidates: unique ids with planar coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationTrace {
    ids: Vec<u64>,
    coords: Vec<(f64, f64)>,
}

impl LocationTrace {
    pub fn new(entries: Vec<(u64, f64, f64)>) -> Result<Self, WorkloadError> {
        let mut seen = std::collections::BTreeSet::new();
        for &(id, x, y) in &entries {
            if !(x.is_finite() && y.is_finite()) {
                return Err(WorkloadError::InvalidSpec {
                    reason: "location coordinates must be finite",
                });
            }
            if !seen.insert(id) {
                return Err(WorkloadError::InvalidSpec {
                    reason: "location ids must be unique",
                });
            }
        }
        let (ids, coords) = entries.into_iter().map(|(id, x, y)| (id, (x, y))).unzip();
        Ok(Self { ids, coords })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Ordered trips; each an ordered waypoint list `(x, y, cumulative distance)`
/// with the distances accumulated over straight-line segments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripTrace {
    trips: Vec<Vec<(f64, f64, f64)>>,
}

impl TripTrace {
    /// Builds the trace from raw waypoint paths, computing cumulative
    /// distances. Trips must have at least one waypoint.
    pub fn from_paths(paths: Vec<Vec<(f64, f64)>>) -> Result<Self, WorkloadError> {
        let mut trips = Vec::with_capacity(paths.len());
        for (index, path) in paths.into_iter().enumerate() {
            if path.is_empty() {
                return Err(WorkloadError::EmptyTrip { index });
            }
            if path.iter().any(|&(x, y)| !(x.is_finite() && y.is_finite())) {
                return Err(WorkloadError::InvalidSpec {
                    reason: "trip coordinates must be finite",
                });
            }
            let mut cum = 0.0;
            let mut trip = Vec::with_capacity(path.len());
            for (i, &(x, y)) in path.iter().enumerate() {
                if i > 0 {
                    let (px, py, _) = trip[i - 1];
                    cum += f64::hypot(x - px, y - py);
                }
                trip.push((x, y, cum));
            }
            trips.push(trip);
        }
        Ok(Self { trips })
    }

    pub fn trips(&self) -> &[Vec<(f64, f64, f64)>] {
        &self.trips
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }
}

/// One dominant request mode: a mean interval, per-endpoint uniform jitter
/// `± jitter`, and its mixture weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub low: f64,
    pub high: f64,
    pub jitter: f64,
    pub weight: f64,
}

/// A stream of request intervals: either a recorded (cycling) list or a
/// seeded mixture generator. Clones advance independently from the position
/// at the moment of cloning.
#[derive(Debug, Clone)]
pub struct IntervalStream(StreamKind);

#[derive(Debug, Clone)]
enum StreamKind {
    /// Recorded intervals, replayed in order and cycled when the run
    /// outlasts the trace.
    List {
        intervals: Vec<RequestInterval>,
        pos: usize,
    },
    Synthetic {
        modes: Vec<ModeSpec>,
        rng: ChaCha8Rng,
    },
}

impl IntervalStream {
    pub fn from_list(intervals: Vec<RequestInterval>) -> Self {
        Self(StreamKind::List { intervals, pos: 0 })
    }

    /// A mixture generator: each draw picks a mode with its weight (uniform
    /// noise takes the remaining mass) and jitters the mode's endpoints.
    /// The generator occupies its own substream of `seed`, so the same seed
    /// can safely drive node placement elsewhere.
    pub fn synthetic(
        modes: Vec<ModeSpec>,
        noise_weight: f64,
        seed: u64,
    ) -> Result<Self, WorkloadError> {
        validate_mixture(&modes, noise_weight)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(12);
        Ok(Self(StreamKind::Synthetic { modes, rng }))
    }

    /// The next interval; `None` only when a recorded list is empty.
    pub fn next_interval(&mut self) -> Option<RequestInterval> {
        match &mut self.0 {
            StreamKind::List { intervals, pos } => {
                if intervals.is_empty() {
                    return None;
                }
                let interval = intervals[*pos % intervals.len()];
                *pos += 1;
                Some(interval)
            }
            StreamKind::Synthetic { modes, rng } => {
                let pick: f64 = rng.random();
                let mut acc = 0.0;
                for mode in modes.iter() {
                    acc += mode.weight;
                    if pick < acc {
                        let jitter = |rng: &mut ChaCha8Rng| {
                            if mode.jitter > 0.0 {
                                rng.random_range(-mode.jitter..mode.jitter)
                            } else {
                                0.0
                            }
                        };
                        let a = (mode.low + jitter(rng)).clamp(0.0, 1.0);
                        let b = (mode.high + jitter(rng)).clamp(0.0, 1.0);
                        let interval = RequestInterval::new(a.min(b), a.max(b))
                            .expect("clamped ordered endpoints");
                        return Some(interval);
                    }
                }
                // Uniform noise: [min, max] of two uniforms. The pooled
                // endpoint distribution is exactly uniform on [0, 1].
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                Some(
                    RequestInterval::new(u1.min(u2), u1.max(u2)).expect("ordered uniforms"),
                )
            }
        }
    }
}

fn validate_mixture(modes: &[ModeSpec], noise_weight: f64) -> Result<(), WorkloadError> {
    let fail = |reason| Err(WorkloadError::InvalidSpec { reason });
    let mut sum = noise_weight;
    if !(0.0..=1.0).contains(&noise_weight) {
        return fail("noise weight must lie in [0, 1]");
    }
    for mode in modes {
        if !(mode.low.is_finite() && mode.high.is_finite() && mode.low <= mode.high) {
            return fail("mode interval must satisfy low ≤ high");
        }
        if !(0.0..=1.0).contains(&mode.low) || !(0.0..=1.0).contains(&mode.high) {
            return fail("mode endpoints must lie in [0, 1]");
        }
        if !(mode.jitter >= 0.0 && mode.jitter.is_finite()) {
            return fail("mode jitter must be nonnegative");
        }
        if !(0.0..=1.0).contains(&mode.weight) {
            return fail("mode weight must lie in [0, 1]");
        }
        sum += mode.weight;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return fail("mixture weights must sum to 1");
    }
    Ok(())
}

/// Everything a run consumes, with the generator's ground truth attached
/// when the workload is synthetic.
#[derive(Debug, Clone)]
pub struct Workload {
    pub locations: LocationTrace,
    pub trips: TripTrace,
    pub intervals: IntervalStream,
    pub truth: Option<SynthSpec>,
}

/// Synthetic-workload shape: location blobs in a square city, random-walk
/// trips, and the request mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_locations: usize,
    pub location_blobs: usize,
    pub blob_std: f64,
    /// Side length of the square city, in the same units as `req_step`.
    pub city_size: f64,
    pub trips: usize,
    pub trip_min_len: f64,
    pub trip_max_len: f64,
    /// Distance between consecutive trip waypoints.
    pub segment_len: f64,
    pub modes: Vec<ModeSpec>,
    pub noise_weight: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_locations: 200,
            location_blobs: 5,
            blob_std: 0.6,
            city_size: 10.0,
            trips: 1000,
            trip_min_len: 3.0,
            trip_max_len: 8.0,
            segment_len: 0.5,
            modes: vec![ModeSpec {
                low: 0.3,
                high: 0.6,
                jitter: 0.02,
                weight: 0.9,
            }],
            noise_weight: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let fail = |reason| Err(WorkloadError::InvalidSpec { reason });
        if self.n_locations == 0 || self.location_blobs == 0 {
            return fail("need at least one location and one blob");
        }
        if !(self.city_size > 0.0 && self.city_size.is_finite()) {
            return fail("city_size must be positive");
        }
        if !(self.blob_std >= 0.0 && self.blob_std.is_finite()) {
            return fail("blob_std must be nonnegative");
        }
        if !(self.trip_min_len > 0.0 && self.trip_max_len >= self.trip_min_len) {
            return fail("trip lengths must satisfy 0 < min ≤ max");
        }
        if !(self.segment_len > 0.0 && self.segment_len < self.city_size) {
            return fail("segment_len must lie in (0, city_size)");
        }
        validate_mixture(&self.modes, self.noise_weight)
    }
}

/// Standard normal via Box-Muller; `1 - u` keeps the log argument positive.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (TAU * u2).cos()
}

/// Generates a full workload from the spec. Locations, trips, and intervals
/// draw from separate substreams of `seed`, so the pieces are independent
/// and the whole construction is reproducible.
pub fn synth_workload(spec: &SynthSpec, seed: u64) -> Result<Workload, WorkloadError> {
    spec.validate()?;
    let city = spec.city_size;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(10);
    let centers: Vec<(f64, f64)> = (0..spec.location_blobs)
        .map(|_| (rng.random_range(0.0..city), rng.random_range(0.0..city)))
        .collect();
    let entries: Vec<(u64, f64, f64)> = (0..spec.n_locations)
        .map(|id| {
            let (cx, cy) = centers[rng.random_range(0..centers.len())];
            let x = (cx + spec.blob_std * gaussian(&mut rng)).clamp(0.0, city);
            let y = (cy + spec.blob_std * gaussian(&mut rng)).clamp(0.0, city);
            (id as u64, x, y)
        })
        .collect();
    let locations = LocationTrace::new(entries)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let mut paths = Vec::with_capacity(spec.trips);
    for _ in 0..spec.trips {
        let target = rng.random_range(spec.trip_min_len..=spec.trip_max_len);
        let mut pos = (rng.random_range(0.0..city), rng.random_range(0.0..city));
        let mut heading = rng.random_range(0.0..TAU);
        let mut path = vec![pos];
        let mut travelled = 0.0;
        while travelled < target {
            heading += rng.random_range(-0.5..0.5);
            let mut next = (
                pos.0 + spec.segment_len * heading.cos(),
                pos.1 + spec.segment_len * heading.sin(),
            );
            // Reflect off the city walls.
            if next.0 < 0.0 {
                next.0 = -next.0;
                heading = PI - heading;
            } else if next.0 > city {
                next.0 = 2.0 * city - next.0;
                heading = PI - heading;
            }
            if next.1 < 0.0 {
                next.1 = -next.1;
                heading = -heading;
            } else if next.1 > city {
                next.1 = 2.0 * city - next.1;
                heading = -heading;
            }
            next.0 = next.0.clamp(0.0, city);
            next.1 = next.1.clamp(0.0, city);
            path.push(next);
            pos = next;
            travelled += spec.segment_len;
        }
        paths.push(path);
    }
    let trips = TripTrace::from_paths(paths)?;

    let intervals = IntervalStream::synthetic(spec.modes.clone(), spec.noise_weight, seed)?;
    Ok(Workload {
        locations,
        trips,
        intervals,
        truth: Some(spec.clone()),
    })
}

/// Min-max normalizes interval endpoints over the whole collection: the
/// pooled minimum maps to 0, the pooled maximum to 1. A collection with a
/// single repeated value collapses to 0. Idempotent and order-preserving.
pub fn min_max_normalize(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let min = pairs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .fold(f64::INFINITY, f64::min);
    let max = pairs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let scale = |v: f64| {
        if span > 0.0 {
            (v - min) / span
        } else {
            0.0
        }
    };
    pairs.iter().map(|&(a, b)| (scale(a), scale(b))).collect()
}

#[derive(Debug, Deserialize)]
struct LocationRow {
    id: u64,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct TripRow {
    trip_id: u64,
    seq: u64,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct IntervalRow {
    low: f64,
    high: f64,
}

/// Reads all rows of a headered CSV, tagging each with its 1-based file
/// line (header on line 1).
fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, WorkloadError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| WorkloadError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row = row.map_err(|source| WorkloadError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        rows.push((i as u64 + 2, row));
    }
    Ok(rows)
}

/// Loads the three workload files. Columns (header row required):
/// locations `id,x,y`; trips `trip_id,seq,x,y`; intervals `low,high`.
/// Trips keep their first-appearance order; within a trip, rows must arrive
/// in strictly increasing `seq` order. Interval endpoints are min-max
/// normalized over the file after validation.
pub fn load_csv_traces(
    locations_path: &Path,
    trips_path: &Path,
    intervals_path: &Path,
) -> Result<Workload, WorkloadError> {
    let locations = LocationTrace::new(
        read_csv::<LocationRow>(locations_path)?
            .into_iter()
            .map(|(_, r)| (r.id, r.x, r.y))
            .collect(),
    )?;

    let mut order: Vec<u64> = Vec::new();
    let mut by_trip: std::collections::BTreeMap<u64, Vec<(u64, (f64, f64))>> = Default::default();
    for (line, row) in read_csv::<TripRow>(trips_path)? {
        let entry = by_trip.entry(row.trip_id).or_insert_with(|| {
            order.push(row.trip_id);
            Vec::new()
        });
        if let Some(&(last_seq, _)) = entry.last() {
            if row.seq <= last_seq {
                return Err(WorkloadError::InvalidRow {
                    path: trips_path.to_path_buf(),
                    line,
                    reason: format!(
                        "trip {} seq {} does not increase (previous {})",
                        row.trip_id, row.seq, last_seq
                    ),
                });
            }
        }
        entry.push((row.seq, (row.x, row.y)));
    }
    let paths = order
        .iter()
        .map(|id| by_trip[id].iter().map(|&(_, p)| p).collect())
        .collect();
    let trips = TripTrace::from_paths(paths)?;

    let mut raw = Vec::new();
    for (line, row) in read_csv::<IntervalRow>(intervals_path)? {
        if !(row.low.is_finite() && row.high.is_finite()) {
            return Err(WorkloadError::InvalidRow {
                path: intervals_path.to_path_buf(),
                line,
                reason: "interval endpoints must be finite".into(),
            });
        }
        if row.low > row.high {
            return Err(WorkloadError::InvalidRow {
                path: intervals_path.to_path_buf(),
                line,
                reason: format!("low {} exceeds high {}", row.low, row.high),
            });
        }
        raw.push((row.low, row.high));
    }
    let intervals = min_max_normalize(&raw)
        .into_iter()
        .map(|(low, high)| RequestInterval::new(low, high).expect("normalization preserves order"))
        .collect();

    Ok(Workload {
        locations,
        trips,
        intervals: IntervalStream::from_list(intervals),
        truth: None,
    })
}
