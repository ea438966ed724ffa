//! Core value types shared by every other module: request intervals, their
//! boundary-point embedding, sliding observation windows, and box geometry.
//!
//! A request for the data range `[a, b]` (normalized to the unit domain) is
//! embedded as the point `(a, b)` in the plane. Because `a <= b` always holds,
//! every observation lives on or above the diagonal; axis-aligned boxes around
//! such points inherit that property corner-wise, which is what makes the
//! box-intersection → interval readout in the ensemble well defined.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("invalid interval [{low}, {high}]: endpoints must be finite with low <= high")]
    InvalidInterval { low: f64, high: f64 },
    #[error("invalid boundary point ({x}, {y}): coordinates must be finite with x <= y")]
    InvalidPoint { x: f64, y: f64 },
    #[error("invalid box: min corner ({min_x}, {min_y}) exceeds max corner ({max_x}, {max_y})")]
    InvalidBox {
        min_x: f64,
        min_y: f64,
        max_x: f64,
        max_y: f64,
    },
    #[error("sliding window capacity must be positive")]
    ZeroCapacity,
    #[error("window time index {time} is not greater than the last pushed index {last}")]
    NonMonotonicTime { time: u64, last: u64 },
}

/// Identifier of a node in the edge network. Dense, assigned at placement time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A closed data range `[low, high]`, `0 <= low <= high` not enforced to stay
/// within `[0, 1]` (traces are normalized by the loader, but the geometry does
/// not require it). Construct via [`RequestInterval::new`]; the `low <= high`
/// invariant is preserved by every operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestInterval {
    low: f64,
    high: f64,
}

impl RequestInterval {
    pub fn new(low: f64, high: f64) -> Result<Self, DomainError> {
        if !low.is_finite() || !high.is_finite() || low > high {
            return Err(DomainError::InvalidInterval { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    /// Whether `other` lies entirely within `self`.
    pub fn contains(&self, other: &RequestInterval) -> bool {
        self.low <= other.low && other.high <= self.high
    }

    /// Squared Euclidean distance between the boundary points of the two
    /// intervals: `(a.low - b.low)^2 + (a.high - b.high)^2`. Zero iff equal.
    pub fn distance_sq(&self, other: &RequestInterval) -> f64 {
        let dl = self.low - other.low;
        let dh = self.high - other.high;
        dl * dl + dh * dh
    }

    /// Smallest interval containing both operands.
    pub fn union(&self, other: &RequestInterval) -> RequestInterval {
        RequestInterval {
            low: self.low.min(other.low),
            high: self.high.max(other.high),
        }
    }

    /// The `(low, high)` point this interval occupies in the boundary plane.
    pub fn boundary_point(&self) -> BoundaryPoint {
        BoundaryPoint {
            x: self.low,
            y: self.high,
        }
    }
}

/// A request interval embedded as the plane point `(x, y) = (low, high)`.
///
/// [`BoundaryPoint::new`] enforces the feasibility invariant `x <= y`;
/// [`BoundaryPoint::raw`] skips it for generic plane geometry (grid corners,
/// box corners of island cells), where the diagonal constraint does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
}

impl BoundaryPoint {
    /// A feasible observation: finite coordinates with `x <= y`.
    pub fn new(x: f64, y: f64) -> Result<Self, DomainError> {
        if !x.is_finite() || !y.is_finite() || x > y {
            return Err(DomainError::InvalidPoint { x, y });
        }
        Ok(Self { x, y })
    }

    /// An arbitrary plane point; no feasibility check.
    pub fn raw(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_sq(&self, other: &BoundaryPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Reads the point back as an interval. Errors when `x > y` (raw points).
    pub fn as_interval(&self) -> Result<RequestInterval, DomainError> {
        RequestInterval::new(self.x, self.y)
    }
}

/// Fixed-capacity FIFO of timestamped boundary points. Receptors keep one per
/// observation stream; when full, pushing evicts the oldest entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlidingWindow {
    capacity: usize,
    entries: VecDeque<(u64, BoundaryPoint)>,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Result<Self, DomainError> {
        if capacity == 0 {
            return Err(DomainError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an observation. Time indices must be strictly increasing; the
    /// evicted oldest entry is returned once the window is at capacity.
    pub fn push(
        &mut self,
        time: u64,
        point: BoundaryPoint,
    ) -> Result<Option<(u64, BoundaryPoint)>, DomainError> {
        if let Some(&(last, _)) = self.entries.back() {
            if time <= last {
                return Err(DomainError::NonMonotonicTime { time, last });
            }
        }
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back((time, point));
        Ok(evicted)
    }

    /// Entries oldest-first.
    pub fn iter(&self) -> impl Iterator<Item = &(u64, BoundaryPoint)> {
        self.entries.iter()
    }

    /// The window's points oldest-first, without time indices.
    pub fn points(&self) -> Vec<BoundaryPoint> {
        self.entries.iter().map(|&(_, p)| p).collect()
    }
}

/// Axis-aligned rectangle, `min` component-wise <= `max`. Corners are raw
/// plane points; boxes built over feasible point sets happen to have feasible
/// corners (see [`BoundingBox::from_points`]), but that is a theorem about the
/// inputs, not a constraint on the type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    min: BoundaryPoint,
    max: BoundaryPoint,
}

impl BoundingBox {
    pub fn new(min: BoundaryPoint, max: BoundaryPoint) -> Result<Self, DomainError> {
        if !(min.x.is_finite() && min.y.is_finite() && max.x.is_finite() && max.y.is_finite())
            || min.x > max.x
            || min.y > max.y
        {
            return Err(DomainError::InvalidBox {
                min_x: min.x,
                min_y: min.y,
                max_x: max.x,
                max_y: max.y,
            });
        }
        Ok(Self { min, max })
    }

    /// Tight box around a non-empty point set; `None` for an empty iterator.
    ///
    /// When all inputs satisfy `x <= y`, so do both corners: for any points
    /// `p, q`, `min_x <= q.x <= q.y` for the `q` attaining `min_y`, hence
    /// `min_x <= min_y`, and symmetrically `max_x <= max_y`.
    pub fn from_points<I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = BoundaryPoint>,
    {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut min = first;
        let mut max = first;
        for p in iter {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Some(Self { min, max })
    }

    pub fn min(&self) -> BoundaryPoint {
        self.min
    }

    pub fn max(&self) -> BoundaryPoint {
        self.max
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains_point(&self, p: &BoundaryPoint) -> bool {
        self.min.x <= p.x && p.x <= self.max.x && self.min.y <= p.y && p.y <= self.max.y
    }

    /// Intersection of two boxes; `None` when they do not overlap. Shared
    /// edges count as overlap (closed boxes), yielding a degenerate box.
    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let min = BoundaryPoint::raw(self.min.x.max(other.min.x), self.min.y.max(other.min.y));
        let max = BoundaryPoint::raw(self.max.x.min(other.max.x), self.max.y.min(other.max.y));
        if min.x <= max.x && min.y <= max.y {
            Some(BoundingBox { min, max })
        } else {
            None
        }
    }
}

/// The inferred dominant interval together with the two corner points it was
/// read from: `Y1` is the lower-left corner of the box intersection, `Y2` the
/// upper-right, and the interval is `[Y1.x, Y2.y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantInterval {
    pub interval: RequestInterval,
    pub y1: BoundaryPoint,
    pub y2: BoundaryPoint,
}

impl DominantInterval {
    /// Reads the dominant interval off a (non-empty) box intersection.
    ///
    /// Returns `None` when the corners cannot produce a feasible interval,
    /// i.e. `min.x > max.y`. For intersections of boxes that each bound a
    /// feasible point set this cannot happen: such boxes have feasible
    /// corners, and the intersection's `min.x <= self.min.x .. <= max.y`
    /// chain goes through whichever operand attains each coordinate.
    pub fn from_intersection(bbox: BoundingBox) -> Option<Self> {
        let interval = RequestInterval::new(bbox.min().x, bbox.max().y).ok()?;
        Some(Self {
            interval,
            y1: bbox.min(),
            y2: bbox.max(),
        })
    }
}
