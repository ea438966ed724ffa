//! Comparison policies: Random-DM (calibrated patternless migration) and
//! DBSCAN-DM (cluster-centroid migration), including a from-scratch DBSCAN.
//!
//! Both baselines ride the same scaffolding as the Model policy — sliding
//! windows, frequency maps, directives — so runs differ only in how the
//! migrated interval and its targets are chosen, never in accounting.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryPoint, DominantInterval, NodeId, RequestInterval, SlidingWindow};
use crate::ensemble::{EnsembleConfig, EnsembleError, FrequencyMap, MigrationDirective};
use crate::metrics::RunRecord;

/// DBSCAN neighborhood parameters. Fields left out of a serialized config
/// fall back to the defaults, so partial override tables work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_samples: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 0.0296,
            min_samples: 4,
        }
    }
}

/// Clusters (as input indices, in formation order) and the noise set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanResult {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Standard DBSCAN over boundary points with Euclidean distance.
///
/// Core points have at least `min_samples` neighbors within `eps`, counting
/// themselves. Clusters expand breadth-first from the lowest-index unassigned
/// core point; border points join the first core cluster that reaches them,
/// making the output deterministic in input order.
pub fn dbscan(points: &[BoundaryPoint], params: &DbscanParams) -> DbscanResult {
    let n = points.len();
    let eps_sq = params.eps * params.eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| points[i].distance_sq(&points[j]) <= eps_sq)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_samples).collect();
    const UNASSIGNED: usize = usize::MAX;
    let mut label = vec![UNASSIGNED; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if !core[start] || label[start] != UNASSIGNED {
            continue;
        }
        let id = clusters.len();
        let mut members = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        label[start] = id;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            members.push(idx);
            if !core[idx] {
                continue; // border points belong but do not expand
            }
            for &nb in &neighbors[idx] {
                if label[nb] == UNASSIGNED {
                    label[nb] = id;
                    queue.push_back(nb);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let noise = (0..n).filter(|&i| label[i] == UNASSIGNED).collect();
    DbscanResult { clusters, noise }
}

/// The DBSCAN-DM dominant pair: centroid of the most populous cluster in the
/// window (ties break toward the earlier-formed cluster), exposed as the
/// degenerate interval `[centroid.x, centroid.y]`. `None` when all noise.
///
/// Centroids of feasible points inherit `x̄ ≤ ȳ` by convexity; the swap below
/// is a pure safety net for raw inputs.
pub fn dbscan_dm_dominant(
    points: &[BoundaryPoint],
    params: &DbscanParams,
) -> Option<DominantInterval> {
    let result = dbscan(points, params);
    let best = result
        .clusters
        .iter()
        .reduce(|best, c| if c.len() > best.len() { c } else { best })?;
    let nf = best.len() as f64;
    let cx = best.iter().map(|&i| points[i].x).sum::<f64>() / nf;
    let cy = best.iter().map(|&i| points[i].y).sum::<f64>() / nf;
    let (low, high) = if cx <= cy { (cx, cy) } else { (cy, cx) };
    let centroid = BoundaryPoint::raw(low, high);
    Some(DominantInterval {
        interval: RequestInterval::new(low, high).ok()?,
        y1: centroid,
        y2: centroid,
    })
}

/// Random-DM calibration: per-request migration probability, nodes per
/// migration, and the policy's RNG seed. Fields left out of a serialized
/// config fall back to the defaults, so partial override tables work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomDmParams {
    pub p_migrate: f64,
    pub qnm: usize,
    pub seed: u64,
}

impl Default for RandomDmParams {
    fn default() -> Self {
        Self {
            p_migrate: 0.02,
            qnm: 2,
            seed: 0,
        }
    }
}

/// Mutable Random-DM policy state: just the seeded generator.
#[derive(Debug, Clone)]
pub struct RandomDmState {
    rng: ChaCha8Rng,
}

impl RandomDmState {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_params(params: &RandomDmParams) -> Self {
        Self::new(params.seed)
    }
}

/// One Random-DM decision, invoked once per request at the serving node.
///
/// With probability `p_migrate`: draw a uniform random interval and push it
/// to `qnm` distinct uniformly chosen peers (fewer when not enough peers).
/// The coin is drawn on every call, so a run's random stream depends only on
/// the seed and the request count, not on outcomes.
pub fn random_dm_step(
    state: &mut RandomDmState,
    peers: &[NodeId],
    params: &RandomDmParams,
) -> Vec<MigrationDirective> {
    use rand::Rng;
    let coin: f64 = state.rng.random();
    if coin >= params.p_migrate || peers.is_empty() || params.qnm == 0 {
        return Vec::new();
    }
    let u1: f64 = state.rng.random();
    let u2: f64 = state.rng.random();
    let interval = RequestInterval::new(u1.min(u2), u1.max(u2)).expect("ordered uniforms");
    let point = interval.boundary_point();
    let dominant = DominantInterval {
        interval,
        y1: point,
        y2: point,
    };
    let take = params.qnm.min(peers.len());
    let mut chosen: Vec<usize> =
        rand::seq::index::sample(&mut state.rng, peers.len(), take).into_iter().collect();
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|i| MigrationDirective {
            target: peers[i],
            dominant,
        })
        .collect()
}

/// Derives Random-DM calibration from a completed Model run:
/// `p_migrate` is the fraction of requests that initiated at least one
/// migration, `qnm` the rounded mean directives per initiating request
/// (minimum 1). A migration-free run calibrates to `p = 0, qnm = 1`.
pub fn derive_calibration(model_run: &RunRecord) -> RandomDmParams {
    let initiating = model_run.requests_with_migration;
    let total = model_run.total_requests;
    let directives = model_run.migrations.len() as f64;
    let p_migrate = if total > 0 {
        initiating as f64 / total as f64
    } else {
        0.0
    };
    let qnm = if initiating > 0 {
        ((directives / initiating as f64).round() as usize).max(1)
    } else {
        1
    };
    RandomDmParams {
        p_migrate,
        qnm,
        seed: model_run.seed,
    }
}

/// DBSCAN-DM receptor state: the same pooled window and window-horizon
/// frequency accounting the Model uses, with DBSCAN in place of the
/// ensemble at firing points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DbscanDmState {
    window: SlidingWindow,
    /// `(sequence, requestor)` of every entry held in the window.
    origins: VecDeque<(u64, NodeId)>,
    /// Sequence number at which each requestor was last targeted; window
    /// entries at or before this mark no longer count towards its frequency.
    last_reset: BTreeMap<NodeId, u64>,
    seen: u64,
}

impl DbscanDmState {
    pub fn new(cfg: &EnsembleConfig) -> Result<Self, EnsembleError> {
        cfg.validate()?;
        Ok(Self {
            window: SlidingWindow::new(cfg.window).expect("validated window capacity"),
            origins: VecDeque::new(),
            last_reset: BTreeMap::new(),
            seen: 0,
        })
    }

    /// Current frequency map, derived from the window contents exactly as
    /// the Model's pooled accounting derives it.
    pub fn freq(&self) -> FrequencyMap {
        FrequencyMap::from_counts(self.origins.iter().filter_map(|&(seq, id)| {
            (seq > self.last_reset.get(&id).copied().unwrap_or(0)).then_some((id, 1))
        }))
    }

    /// Records a remote serviceable request; every `L_r` recorded requests,
    /// clusters the window and pushes the dominant centroid interval to the
    /// `qnm` most frequent requestors (count descending, ties by lower id).
    pub fn on_request(
        &mut self,
        requestor: NodeId,
        interval: RequestInterval,
        params: &DbscanParams,
        qnm: usize,
        cfg: &EnsembleConfig,
    ) -> Vec<MigrationDirective> {
        self.seen += 1;
        self.window
            .push(self.seen, interval.boundary_point())
            .expect("recorded-request counter strictly increases");
        self.origins.push_back((self.seen, requestor));
        if self.origins.len() > self.window.capacity() {
            self.origins.pop_front();
        }
        if self.seen % cfg.lr as u64 != 0 {
            return Vec::new();
        }
        let Some(dominant) = dbscan_dm_dominant(&self.window.points(), params) else {
            return Vec::new();
        };
        let mut ranked: Vec<(NodeId, u64)> = self.freq().iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(qnm)
            .map(|(target, _)| {
                self.last_reset.insert(target, self.seen);
                MigrationDirective { target, dominant }
            })
            .collect()
    }
}
