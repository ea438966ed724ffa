//! Proactive data-interval migration at the network edge.
//!
//! Receptor nodes in an edge ecosystem observe the data intervals `[a, b]`
//! requested by offloaded tasks, learn the currently dominant interval from a
//! sliding window of those observations, and push ("migrate") that interval to
//! the peers that request it most often — before the next request arrives.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: intervals, boundary points, sliding windows, box geometry.
//! - [`kde`]: bivariate Gaussian kernel density estimation over boundary
//!   points, highest-density-region levels, and density islands.
//! - [`ocsvm`]: a one-class SVM trained on the same window (SMO on the dual).
//! - [`ensemble`]: the receptor-side policy combining both learners into a
//!   dominant interval plus migration target selection.
//! - [`baselines`]: Random-DM and DBSCAN-DM comparison policies.
//! - [`workload`]: trace loading (CSV) and synthetic workload generation.
//! - [`simnet`]: node placement, clustering, request routing, and the
//!   trace-driven event loop.
//! - [`metrics`]: migration classification (strict/relaxed), accuracy and
//!   unserviceable-distance summaries.

pub mod baselines;
pub mod domain;
pub mod ensemble;
pub mod kde;
pub mod metrics;
pub mod ocsvm;
pub mod simnet;
pub mod workload;

pub use domain::{BoundaryPoint, BoundingBox, DominantInterval, NodeId, RequestInterval, SlidingWindow};
