//! The edge ecosystem model: node placement, K-means clustering with
//! per-cluster sinks, intra-cluster request routing, migration application,
//! and the trip-driven event loop that produces a [`RunRecord`].
//!
//! A single run is strictly sequential: requests are emitted along trips in
//! order, each one routed, tallied, and offered to the active policy before
//! the next is drawn. All randomness flows through seeded generators on
//! dedicated streams, so a config reproduces its run bit for bit.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    random_dm_step, DbscanDmState, DbscanParams, RandomDmParams, RandomDmState,
};
use crate::domain::{NodeId, RequestInterval};
use crate::ensemble::{EnsembleConfig, MigrationDirective, ReceptorState, WindowPooling};
use crate::metrics::{classify_run, RunRecord};
use crate::workload::Workload;

/// Errors raised while building or driving the ecosystem.
#[derive(Debug, Error)]
pub enum SimnetError {
    #[error("invalid simulation config: {reason}")]
    InvalidConfig { reason: &'static str },
    #[error("k-means needs 1 ≤ k ≤ distinct locations, got k={k} over {distinct}")]
    InvalidClusterCount { k: usize, distinct: usize },
    #[error("workload provides {available} locations, config places {needed} nodes")]
    InsufficientLocations { available: usize, needed: usize },
    #[error("workload provides {available} trips, config runs {needed}")]
    InsufficientTrips { available: usize, needed: usize },
    #[error("interval stream is empty but the trips emit requests")]
    EmptyIntervalStream,
    #[error(transparent)]
    Ensemble(#[from] crate::ensemble::EnsembleError),
}

/// Which migration policy drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// The MKDE + one-class-SVM ensemble.
    Model,
    /// Coin-flip migrations of uniform random intervals to random peers.
    RandomDm,
    /// Window clustering; migrates the densest cluster's centroid interval.
    DbscanDm,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Model => "model",
            Policy::RandomDm => "random-dm",
            Policy::DbscanDm => "dbscan-dm",
        })
    }
}

/// What a migration does to the target's previous holdings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MigrationMode {
    /// The migrated interval replaces the target's available interval
    /// (bounded edge storage; the default everywhere).
    Replace,
    /// The target keeps the convex hull of old and new (sensitivity runs).
    Union,
}

/// Full configuration of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub n_clusters: usize,
    pub trips: usize,
    /// Distance between consecutive requests along a trip, in trip units.
    pub req_step: f64,
    /// Seed for placement, clustering, and initial intervals.
    pub seed: u64,
    pub policy: Policy,
    pub ensemble: EnsembleConfig,
    pub dbscan: DbscanParams,
    /// Random-DM calibration; `qnm` doubles as DBSCAN-DM's target count.
    pub random_dm: RandomDmParams,
    pub migration_mode: MigrationMode,
    pub pooling: WindowPooling,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            n_clusters: 3,
            trips: 1000,
            req_step: 1.0,
            seed: 0,
            policy: Policy::Model,
            ensemble: EnsembleConfig::default(),
            dbscan: DbscanParams::default(),
            random_dm: RandomDmParams::default(),
            migration_mode: MigrationMode::Replace,
            pooling: WindowPooling::Pooled,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimnetError> {
        let reason = if self.n_nodes == 0 {
            Some("n_nodes must be positive")
        } else if self.n_clusters == 0 || self.n_clusters > self.n_nodes {
            Some("n_clusters must lie in 1..=n_nodes")
        } else if !(self.req_step > 0.0 && self.req_step.is_finite()) {
            Some("req_step must be positive and finite")
        } else if !(self.dbscan.eps > 0.0) || self.dbscan.min_samples == 0 {
            Some("dbscan eps and min_samples must be positive")
        } else if !(0.0..=1.0).contains(&self.random_dm.p_migrate) {
            Some("random_dm.p_migrate must lie in [0, 1]")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(SimnetError::InvalidConfig { reason });
        }
        self.ensemble.validate()?;
        Ok(())
    }
}

/// One edge node: placement, cluster membership, and current holdings.
/// Receptor-side learning state is keyed by node id inside the trace runner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub location: (f64, f64),
    pub cluster_id: usize,
    pub is_sink: bool,
    /// The data interval this node can currently serve.
    pub available: RequestInterval,
    /// Event indices of the requests this node issued.
    pub request_log: Vec<u64>,
}

/// A recorded push of an interval to a peer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationEvent {
    /// Index of the request that triggered the push.
    pub time: u64,
    pub source: NodeId,
    pub target: NodeId,
    /// The migrated interval as decided by the policy.
    pub interval: RequestInterval,
    /// The target's available interval right after the push was applied.
    pub resulting_available: RequestInterval,
    pub policy: Policy,
}

/// How a request was ultimately handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestOutcome {
    /// The requestor held the interval itself.
    Local,
    /// A peer (covering peer or sink) held the interval.
    OffloadServed,
    /// Nobody in the cluster held it; the sink absorbed the miss.
    Unserviceable,
}

/// One routed request, logged with enough context to replay every metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestEvent {
    pub index: u64,
    pub requestor: NodeId,
    pub server: NodeId,
    pub interval: RequestInterval,
    /// The server's available interval at the moment of the request,
    /// before any migration this request may have triggered.
    pub server_available: RequestInterval,
    pub outcome: RequestOutcome,
    /// Number of migration directives this request triggered.
    pub directives: u32,
}

/// K-means output: per-point cluster ids, final centroids, and the
/// within-cluster sum of squares after each Lloyd iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<(f64, f64)>,
    pub wcss_history: Vec<f64>,
}

fn dist_sq(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Lloyd's algorithm from seeded farthest-point initialization, run to an
/// assignment fixpoint or 100 iterations.
///
/// Initialization picks a random first center, then repeatedly the point
/// farthest from its nearest chosen center (ties toward the lower index).
/// Clusters emptied by a reassignment round are repaired by reseeding them,
/// in ascending cluster order, at the point currently farthest from its own
/// centroid.
pub fn kmeans(
    locations: &[(f64, f64)],
    k: usize,
    seed: u64,
) -> Result<KmeansResult, SimnetError> {
    let mut distinct: Vec<(f64, f64)> = locations.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    distinct.dedup();
    if k == 0 || k > distinct.len() {
        return Err(SimnetError::InvalidClusterCount {
            k,
            distinct: distinct.len(),
        });
    }
    let n = locations.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<(f64, f64)> = vec![locations[rng.random_range(0..n)]];
    while centroids.len() < k {
        let (mut best, mut best_d) = (0usize, f64::NEG_INFINITY);
        for (i, &p) in locations.iter().enumerate() {
            let d = centroids
                .iter()
                .map(|&c| dist_sq(p, c))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        centroids.push(locations[best]);
    }

    let nearest = |p: (f64, f64), centroids: &[(f64, f64)]| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &ctr) in centroids.iter().enumerate() {
            let d = dist_sq(p, ctr);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        best
    };

    let mut assignment: Vec<usize> = vec![0; n];
    let mut wcss_history = Vec::new();
    for _ in 0..100 {
        let new_assignment: Vec<usize> =
            locations.iter().map(|&p| nearest(p, &centroids)).collect();
        let mut assignment_now = new_assignment;
        let mut counts = vec![0usize; k];
        for &c in &assignment_now {
            counts[c] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            // Reseed at the point farthest from its current centroid, never
            // stealing the last member of another cluster.
            let (mut far, mut far_d) = (None, f64::NEG_INFINITY);
            for (i, &p) in locations.iter().enumerate() {
                if counts[assignment_now[i]] <= 1 {
                    continue;
                }
                let d = dist_sq(p, centroids[assignment_now[i]]);
                if d > far_d {
                    far = Some(i);
                    far_d = d;
                }
            }
            if let Some(i) = far {
                counts[assignment_now[i]] -= 1;
                assignment_now[i] = empty;
                counts[empty] = 1;
                centroids[empty] = locations[i];
            }
        }
        let mut sums = vec![(0.0, 0.0); k];
        for (i, &c) in assignment_now.iter().enumerate() {
            sums[c].0 += locations[i].0;
            sums[c].1 += locations[i].1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = (sums[c].0 / counts[c] as f64, sums[c].1 / counts[c] as f64);
            }
        }
        let wcss: f64 = locations
            .iter()
            .zip(&assignment_now)
            .map(|(&p, &c)| dist_sq(p, centroids[c]))
            .sum();
        wcss_history.push(wcss);
        let converged = assignment_now == assignment && wcss_history.len() > 1;
        assignment = assignment_now;
        if converged {
            break;
        }
    }
    Ok(KmeansResult {
        assignment,
        centroids,
        wcss_history,
    })
}

/// The sink of each cluster: the member nearest its centroid, ties toward
/// the lower node index. Returns one node index per cluster id.
pub fn cluster_sinks(locations: &[(f64, f64)], clustering: &KmeansResult) -> Vec<usize> {
    let k = clustering.centroids.len();
    let mut sinks = vec![usize::MAX; k];
    let mut best = vec![f64::INFINITY; k];
    for (i, &p) in locations.iter().enumerate() {
        let c = clustering.assignment[i];
        let d = dist_sq(p, clustering.centroids[c]);
        if d < best[c] {
            best[c] = d;
            sinks[c] = i;
        }
    }
    sinks
}

/// Where a request ended up: who asked, who served, and whether it stayed
/// local.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingDecision {
    pub requestor: NodeId,
    pub server: NodeId,
    pub local: bool,
}

/// Routes one request: the nearest node to the origin becomes the requestor
/// (ties toward the lower id); it serves locally when its available interval
/// contains the request, otherwise the task is offloaded to the nearest
/// same-cluster peer whose interval covers it, falling back to the cluster
/// sink. An uncovered request still routes (to the sink) and is tallied
/// unserviceable by the caller.
pub fn route_request(
    nodes: &[NodeState],
    origin: (f64, f64),
    interval: &RequestInterval,
) -> RoutingDecision {
    debug_assert!(!nodes.is_empty());
    let mut requestor = 0usize;
    let mut best = f64::INFINITY;
    for (i, node) in nodes.iter().enumerate() {
        let d = dist_sq(origin, node.location);
        if d < best {
            best = d;
            requestor = i;
        }
    }
    let req = &nodes[requestor];
    if req.available.contains(interval) {
        return RoutingDecision {
            requestor: req.id,
            server: req.id,
            local: true,
        };
    }
    let mut server = None;
    let mut best = f64::INFINITY;
    for (i, node) in nodes.iter().enumerate() {
        if i == requestor || node.cluster_id != req.cluster_id {
            continue;
        }
        if !node.available.contains(interval) {
            continue;
        }
        let d = dist_sq(req.location, node.location);
        if d < best {
            best = d;
            server = Some(i);
        }
    }
    let server = server.unwrap_or_else(|| {
        nodes
            .iter()
            .position(|n| n.cluster_id == req.cluster_id && n.is_sink)
            .expect("every cluster has a sink")
    });
    RoutingDecision {
        requestor: req.id,
        server: nodes[server].id,
        local: false,
    }
}

/// Applies one directive to the target node and returns the log event.
/// Replacement swaps the target's available interval for the migrated one;
/// union keeps the convex hull. Self-migration is guarded upstream by every
/// policy, so it is a caller bug here.
pub fn apply_migration(
    nodes: &mut [NodeState],
    directive: &MigrationDirective,
    source: NodeId,
    time: u64,
    policy: Policy,
    mode: MigrationMode,
) -> MigrationEvent {
    assert_ne!(directive.target, source, "self-migration is guarded upstream");
    let node = &mut nodes[directive.target.0 as usize];
    let interval = directive.dominant.interval;
    node.available = match mode {
        MigrationMode::Replace => interval,
        MigrationMode::Union => node.available.union(&interval),
    };
    MigrationEvent {
        time,
        source,
        target: directive.target,
        interval,
        resulting_available: node.available,
        policy,
    }
}

/// Per-policy mutable state for one run.
enum PolicyState {
    Model(BTreeMap<NodeId, ReceptorState>),
    RandomDm(RandomDmState),
    DbscanDm(BTreeMap<NodeId, DbscanDmState>),
}

/// Builds the node set for a config: sample `n_nodes` distinct workload
/// locations, cluster them, appoint sinks, and deal initial intervals.
/// Sinks start with the full `[0, 1]` range (the cluster's data-rich hub);
/// other nodes draw `[a, a+w]` with width `w` uniform in `[0.1, 0.4]`.
pub fn build_nodes(config: &SimConfig, workload: &Workload) -> Result<Vec<NodeState>, SimnetError> {
    let coords = workload.locations.coords();
    if coords.len() < config.n_nodes {
        return Err(SimnetError::InsufficientLocations {
            available: coords.len(),
            needed: config.n_nodes,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let mut picked: Vec<usize> = sample(&mut rng, coords.len(), config.n_nodes)
        .into_iter()
        .collect();
    picked.sort_unstable();
    let locations: Vec<(f64, f64)> = picked.into_iter().map(|i| coords[i]).collect();

    let clustering = kmeans(&locations, config.n_clusters, config.seed)?;
    let sinks = cluster_sinks(&locations, &clustering);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let nodes = locations
        .iter()
        .enumerate()
        .map(|(i, &location)| {
            let is_sink = sinks.contains(&i);
            let available = if is_sink {
                RequestInterval::new(0.0, 1.0).expect("unit interval")
            } else {
                let w = rng.random_range(0.1..0.4);
                let a = rng.random_range(0.0..(1.0 - w));
                RequestInterval::new(a, a + w).expect("drawn inside [0, 1]")
            };
            NodeState {
                id: NodeId(i as u32),
                location,
                cluster_id: clustering.assignment[i],
                is_sink,
                available,
                request_log: Vec::new(),
            }
        })
        .collect();
    Ok(nodes)
}

/// Linear position along a trip at cumulative distance `d` (clamped to the
/// trip's ends).
fn position_at(waypoints: &[(f64, f64, f64)], d: f64) -> (f64, f64) {
    let (first, last) = (waypoints[0], waypoints[waypoints.len() - 1]);
    if d <= first.2 {
        return (first.0, first.1);
    }
    if d >= last.2 {
        return (last.0, last.1);
    }
    for pair in waypoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if d <= b.2 {
            let span = b.2 - a.2;
            if span <= 0.0 {
                return (b.0, b.1);
            }
            let t = (d - a.2) / span;
            return (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        }
    }
    (last.0, last.1)
}

/// Drives the full event loop and returns the classified run log.
///
/// Every trip emits a request at cumulative distances `0, s, 2s, …` up to
/// its length (`⌊length / s⌋ + 1` requests). Each request draws the next
/// interval from the workload stream, routes, tallies, and is offered to
/// the active policy: the Model and DBSCAN-DM record remotely originated,
/// serviceable requests at the receptor; Random-DM flips its coin on every
/// request at whichever node served it, with same-cluster peers as
/// candidate targets. Resulting directives are applied immediately, before
/// the next request is drawn.
pub fn run_trace(config: &SimConfig, workload: &Workload) -> Result<RunRecord, SimnetError> {
    config.validate()?;
    if workload.trips.trips().len() < config.trips {
        return Err(SimnetError::InsufficientTrips {
            available: workload.trips.trips().len(),
            needed: config.trips,
        });
    }
    let mut nodes = build_nodes(config, workload)?;
    let mut intervals = workload.intervals.clone();

    let mut policy_state = match config.policy {
        Policy::Model => PolicyState::Model(
            nodes
                .iter()
                .map(|n| {
                    ReceptorState::with_pooling(&config.ensemble, config.pooling)
                        .map(|s| (n.id, s))
                })
                .collect::<Result<_, _>>()?,
        ),
        Policy::RandomDm => PolicyState::RandomDm(RandomDmState::from_params(&config.random_dm)),
        Policy::DbscanDm => PolicyState::DbscanDm(
            nodes
                .iter()
                .map(|n| DbscanDmState::new(&config.ensemble).map(|s| (n.id, s)))
                .collect::<Result<_, _>>()?,
        ),
    };

    let mut requests: Vec<RequestEvent> = Vec::new();
    let mut migrations: Vec<MigrationEvent> = Vec::new();
    let mut local_requests = 0u64;
    let mut offloaded_served = 0u64;
    let mut unserviceable = 0u64;
    let mut requests_with_migration = 0u64;
    let mut delta_accumulator = 0.0f64;

    for trip in workload.trips.trips().iter().take(config.trips) {
        let length = trip.last().map(|w| w.2).unwrap_or(0.0);
        let steps = (length / config.req_step).floor() as u64;
        for s in 0..=steps {
            let origin = position_at(trip, s as f64 * config.req_step);
            let interval = intervals
                .next_interval()
                .ok_or(SimnetError::EmptyIntervalStream)?;
            let index = requests.len() as u64;
            let routing = route_request(&nodes, origin, &interval);
            let server_available = nodes[routing.server.0 as usize].available;
            let server_cluster = nodes[routing.server.0 as usize].cluster_id;
            let served = server_available.contains(&interval);
            let outcome = if routing.local {
                local_requests += 1;
                RequestOutcome::Local
            } else if served {
                offloaded_served += 1;
                RequestOutcome::OffloadServed
            } else {
                unserviceable += 1;
                delta_accumulator += interval.distance_sq(&server_available);
                RequestOutcome::Unserviceable
            };
            nodes[routing.requestor.0 as usize].request_log.push(index);

            let directives: Vec<MigrationDirective> = match &mut policy_state {
                PolicyState::Model(receptors) => {
                    if !routing.local && served {
                        receptors
                            .get_mut(&routing.server)
                            .expect("receptor state for every node")
                            .on_request(routing.requestor, interval, &config.ensemble)
                    } else {
                        Vec::new()
                    }
                }
                PolicyState::DbscanDm(receptors) => {
                    if !routing.local && served {
                        receptors
                            .get_mut(&routing.server)
                            .expect("receptor state for every node")
                            .on_request(
                                routing.requestor,
                                interval,
                                &config.dbscan,
                                config.random_dm.qnm,
                                &config.ensemble,
                            )
                    } else {
                        Vec::new()
                    }
                }
                PolicyState::RandomDm(state) => {
                    let peers: Vec<NodeId> = nodes
                        .iter()
                        .filter(|n| n.cluster_id == server_cluster && n.id != routing.server)
                        .map(|n| n.id)
                        .collect();
                    random_dm_step(state, &peers, &config.random_dm)
                }
            };

            if !directives.is_empty() {
                requests_with_migration += 1;
            }
            requests.push(RequestEvent {
                index,
                requestor: routing.requestor,
                server: routing.server,
                interval,
                server_available,
                outcome,
                directives: directives.len() as u32,
            });
            for directive in &directives {
                migrations.push(apply_migration(
                    &mut nodes,
                    directive,
                    routing.server,
                    index,
                    config.policy,
                    config.migration_mode,
                ));
            }
        }
    }

    let classification = classify_run(&requests, &migrations, config.ensemble.lr);
    Ok(RunRecord {
        policy: config.policy,
        seed: config.seed,
        total_requests: requests.len() as u64,
        local_requests,
        offloaded_served,
        unserviceable,
        requests_with_migration,
        delta_accumulator,
        lr: config.ensemble.lr,
        strict: classification.strict,
        relaxed: classification.relaxed,
        hits_per_migration: classification.hits,
        excluded_migrations: classification.excluded,
        truncated_relaxed: classification.truncated,
        requests,
        migrations,
    })
}
