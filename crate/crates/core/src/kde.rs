//! Bivariate Gaussian kernel density estimation over boundary points, plus
//! extraction of high-density "islands" and their bounding boxes.
//!
//! The estimator is the standard form
//! `f̂(q) = 1/(n·|H|^(1/2)) · Σ_i φ(H^(−1/2)(q − X_i))`
//! with `φ` the standard bivariate normal kernel and `H` a symmetric positive
//! definite bandwidth matrix. Receptors evaluate `f̂` on a regular grid, find
//! the density level whose supra-level set captures a target mass fraction
//! (the highest-density region), and report each 4-connected component of that
//! set as an island with its bounding box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BoundaryPoint, BoundingBox, RequestInterval};

/// Default evaluation grid resolution per axis.
pub const DEFAULT_GRID_RESOLUTION: usize = 128;
/// Default grid padding, in per-axis bandwidth standard deviations.
pub const DEFAULT_GRID_PADDING: f64 = 3.0;
/// Per-axis floor on the sample standard deviation used by the bandwidth
/// selector, in normalized units. Windows full of identical requests are
/// common in traces; without the floor their bandwidth would collapse.
pub const MIN_AXIS_STD: f64 = 1e-3;
/// Smallest supported grid resolution.
pub const MIN_GRID_RESOLUTION: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum KdeError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("sample has zero variance on both axes; no bandwidth can be selected")]
    DegenerateSpread,
    #[error("bandwidth matrix [[{h11}, {h12}], [{h12}, {h22}]] is not symmetric positive definite")]
    NotPositiveDefinite { h11: f64, h22: f64, h12: f64 },
    #[error("grid resolution {resolution} is below the minimum {min}")]
    ResolutionTooCoarse { resolution: usize, min: usize },
    #[error("padded grid extent has zero area")]
    DegenerateExtent,
    #[error("grid has zero total mass")]
    ZeroTotalMass,
    #[error("thresh {thresh} outside the open interval (0, 1)")]
    InvalidThresh { thresh: f64 },
    #[error("island level {level} must be a finite nonnegative real")]
    InvalidLevel { level: f64 },
}

/// Symmetric positive definite 2×2 bandwidth matrix `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthMatrix {
    h11: f64,
    h22: f64,
    h12: f64,
}

impl BandwidthMatrix {
    pub fn new(h11: f64, h22: f64, h12: f64) -> Result<Self, KdeError> {
        let spd = h11.is_finite()
            && h22.is_finite()
            && h12.is_finite()
            && h11 > 0.0
            && h22 > 0.0
            && h11 * h22 - h12 * h12 > 0.0;
        if !spd {
            return Err(KdeError::NotPositiveDefinite { h11, h22, h12 });
        }
        Ok(Self { h11, h22, h12 })
    }

    pub fn diagonal(h11: f64, h22: f64) -> Result<Self, KdeError> {
        Self::new(h11, h22, 0.0)
    }

    pub fn h11(&self) -> f64 {
        self.h11
    }

    pub fn h22(&self) -> f64 {
        self.h22
    }

    pub fn h12(&self) -> f64 {
        self.h12
    }

    pub fn det(&self) -> f64 {
        self.h11 * self.h22 - self.h12 * self.h12
    }

    /// Per-axis standard deviations `(sqrt(h11), sqrt(h22))`; these set the
    /// smoothing scale along each axis and the grid padding unit.
    pub fn axis_std(&self) -> (f64, f64) {
        (self.h11.sqrt(), self.h22.sqrt())
    }

    /// The quadratic form `z^T H^{-1} z` via the closed-form 2×2 inverse.
    fn inv_quad_form(&self, zx: f64, zy: f64) -> f64 {
        let det = self.det();
        (self.h22 * zx * zx - 2.0 * self.h12 * zx * zy + self.h11 * zy * zy) / det
    }
}

/// Scott's rule for p = 2: diagonal `H` with `h_jj = (σ̂_j · n^(−1/6))²`.
///
/// Per-axis sample standard deviations (n−1 denominator) are floored at
/// [`MIN_AXIS_STD`]; a sample with zero variance on *both* axes is rejected.
pub fn select_bandwidth(points: &[BoundaryPoint]) -> Result<BandwidthMatrix, KdeError> {
    let n = points.len();
    if n < 2 {
        return Err(KdeError::TooFewPoints { needed: 2, got: n });
    }
    let nf = n as f64;
    // Axis degeneracy is detected structurally (all values identical) rather
    // than through the computed variance, which picks up rounding dust from
    // mean accumulation on constant samples.
    let x_constant = points.iter().all(|p| p.x == points[0].x);
    let y_constant = points.iter().all(|p| p.y == points[0].y);
    if x_constant && y_constant {
        return Err(KdeError::DegenerateSpread);
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.x;
        my += p.y;
    }
    mx /= nf;
    my /= nf;
    let (mut vx, mut vy) = (0.0, 0.0);
    for p in points {
        vx += (p.x - mx) * (p.x - mx);
        vy += (p.y - my) * (p.y - my);
    }
    vx /= nf - 1.0;
    vy /= nf - 1.0;
    if x_constant {
        vx = 0.0;
    }
    if y_constant {
        vy = 0.0;
    }
    let scale = nf.powf(-1.0 / 6.0);
    let sx = vx.sqrt().max(MIN_AXIS_STD);
    let sy = vy.sqrt().max(MIN_AXIS_STD);
    BandwidthMatrix::diagonal((sx * scale).powi(2), (sy * scale).powi(2))
}

/// Evaluates `f̂(q)` for the given sample and bandwidth.
///
/// Panics if `points` is empty (precondition).
pub fn estimate_density(points: &[BoundaryPoint], h: &BandwidthMatrix, q: BoundaryPoint) -> f64 {
    assert!(!points.is_empty(), "estimate_density needs at least one point");
    let mut sum = 0.0;
    for p in points {
        let quad = h.inv_quad_form(q.x - p.x, q.y - p.y);
        sum += (-0.5 * quad).exp();
    }
    sum / (points.len() as f64 * h.det().sqrt() * std::f64::consts::TAU)
}

/// Regular `resolution × resolution` evaluation of `f̂` over a padded extent.
/// Values are stored row-major (`iy * resolution + ix`), one per cell center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    x_range: RequestInterval,
    y_range: RequestInterval,
    resolution: usize,
    values: Vec<f64>,
    cell_area: f64,
}

impl DensityGrid {
    pub fn x_range(&self) -> RequestInterval {
        self.x_range
    }

    pub fn y_range(&self) -> RequestInterval {
        self.y_range
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.resolution + ix]
    }

    pub fn cell_width(&self) -> f64 {
        self.x_range.width() / self.resolution as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.y_range.width() / self.resolution as f64
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> BoundaryPoint {
        BoundaryPoint::raw(
            self.x_range.low() + (ix as f64 + 0.5) * self.cell_width(),
            self.y_range.low() + (iy as f64 + 0.5) * self.cell_height(),
        )
    }

    /// Total mass `Σ values · cell_area`; ≈ 1 when the extent captures the
    /// sample with adequate padding.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area
    }

    /// Builds a grid directly from values; test/plumbing constructor.
    pub fn from_values(
        x_range: RequestInterval,
        y_range: RequestInterval,
        resolution: usize,
        values: Vec<f64>,
    ) -> Result<Self, KdeError> {
        if resolution < MIN_GRID_RESOLUTION {
            return Err(KdeError::ResolutionTooCoarse {
                resolution,
                min: MIN_GRID_RESOLUTION,
            });
        }
        if x_range.width() <= 0.0 || y_range.width() <= 0.0 {
            return Err(KdeError::DegenerateExtent);
        }
        assert_eq!(values.len(), resolution * resolution);
        let cell_area =
            (x_range.width() / resolution as f64) * (y_range.width() / resolution as f64);
        Ok(Self {
            x_range,
            y_range,
            resolution,
            values,
            cell_area,
        })
    }
}

/// Evaluates the density over the sample's bounding box padded by `padding`
/// bandwidth standard deviations per side. Cells are evaluated independently
/// (in parallel), so the result is bit-identical to sequential evaluation.
pub fn build_grid(
    points: &[BoundaryPoint],
    h: &BandwidthMatrix,
    resolution: usize,
    padding: f64,
) -> Result<DensityGrid, KdeError> {
    if points.is_empty() {
        return Err(KdeError::TooFewPoints { needed: 1, got: 0 });
    }
    if resolution < MIN_GRID_RESOLUTION {
        return Err(KdeError::ResolutionTooCoarse {
            resolution,
            min: MIN_GRID_RESOLUTION,
        });
    }
    let bbox = BoundingBox::from_points(points.iter().copied()).expect("non-empty");
    let (sx, sy) = h.axis_std();
    let x_lo = bbox.min().x - padding * sx;
    let x_hi = bbox.max().x + padding * sx;
    let y_lo = bbox.min().y - padding * sy;
    let y_hi = bbox.max().y + padding * sy;
    if !(x_hi > x_lo && y_hi > y_lo) {
        return Err(KdeError::DegenerateExtent);
    }
    let x_range = RequestInterval::new(x_lo, x_hi).map_err(|_| KdeError::DegenerateExtent)?;
    let y_range = RequestInterval::new(y_lo, y_hi).map_err(|_| KdeError::DegenerateExtent)?;
    let dx = x_range.width() / resolution as f64;
    let dy = y_range.width() / resolution as f64;
    let values: Vec<f64> = (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % resolution;
            let iy = idx / resolution;
            let q = BoundaryPoint::raw(
                x_lo + (ix as f64 + 0.5) * dx,
                y_lo + (iy as f64 + 0.5) * dy,
            );
            estimate_density(points, h, q)
        })
        .collect();
    Ok(DensityGrid {
        x_range,
        y_range,
        resolution,
        values,
        cell_area: dx * dy,
    })
}

/// The highest-density-region level: the largest density value `c` such that
/// cells with density ≥ `c` hold at least `(1 − thresh)` of total grid mass.
/// With `thresh = 0.8` the supra-level set is the top-20%-mass region.
pub fn hdr_level(grid: &DensityGrid, thresh: f64) -> Result<f64, KdeError> {
    if !(thresh > 0.0 && thresh < 1.0) {
        return Err(KdeError::InvalidThresh { thresh });
    }
    let total = grid.total_mass();
    if !(total > 0.0) {
        return Err(KdeError::ZeroTotalMass);
    }
    let target = (1.0 - thresh) * total;
    let mut sorted = grid.values().to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("grid values are finite"));
    let mut acc = 0.0;
    for v in &sorted {
        acc += v * grid.cell_area();
        if acc >= target {
            return Ok(*v);
        }
    }
    // Accumulating every cell reaches total ≥ target, so this is unreachable
    // barring rounding on the last cell; the minimum value is then correct.
    Ok(*sorted.last().expect("grid is non-empty"))
}

/// One 4-connected supra-level component: its bounding box in data
/// coordinates (over member cell edges), the fraction of total grid mass it
/// holds, and its cell count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub bbox: BoundingBox,
    pub mass_fraction: f64,
    pub cell_count: usize,
}

/// All islands at a level, ordered by mass descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandSet {
    pub level: f64,
    pub islands: Vec<Island>,
}

impl IslandSet {
    pub fn is_empty(&self) -> bool {
        self.islands.is_empty()
    }

    /// The most massive island, if any.
    pub fn dominant(&self) -> Option<&Island> {
        self.islands.first()
    }
}

/// Extracts the 4-connected components of `{cell : value ≥ level}`.
///
/// Each component is reported as the bounding box of its member cells' edges
/// (data coordinates) with its share of total grid mass. An empty set (no
/// cell reaches `level`) is a value, not an error.
pub fn extract_islands(grid: &DensityGrid, level: f64) -> Result<IslandSet, KdeError> {
    if !level.is_finite() || level < 0.0 {
        return Err(KdeError::InvalidLevel { level });
    }
    let res = grid.resolution();
    let total = grid.total_mass();
    // 0 = below level, u32::MAX = unvisited member, else component id + 1.
    let mut label = vec![0u32; res * res];
    for (i, &v) in grid.values().iter().enumerate() {
        if v >= level {
            label[i] = u32::MAX;
        }
    }
    let mut islands = Vec::new();
    let mut stack = Vec::new();
    for start in 0..label.len() {
        if label[start] != u32::MAX {
            continue;
        }
        let id = islands.len() as u32 + 1;
        label[start] = id;
        stack.push(start);
        let (mut min_ix, mut max_ix) = (start % res, start % res);
        let (mut min_iy, mut max_iy) = (start / res, start / res);
        let mut mass = 0.0;
        let mut cells = 0usize;
        while let Some(idx) = stack.pop() {
            let (ix, iy) = (idx % res, idx / res);
            min_ix = min_ix.min(ix);
            max_ix = max_ix.max(ix);
            min_iy = min_iy.min(iy);
            max_iy = max_iy.max(iy);
            mass += grid.values()[idx] * grid.cell_area();
            cells += 1;
            let mut visit = |nidx: usize| {
                if label[nidx] == u32::MAX {
                    label[nidx] = id;
                    stack.push(nidx);
                }
            };
            if ix > 0 {
                visit(idx - 1);
            }
            if ix + 1 < res {
                visit(idx + 1);
            }
            if iy > 0 {
                visit(idx - res);
            }
            if iy + 1 < res {
                visit(idx + res);
            }
        }
        let dx = grid.cell_width();
        let dy = grid.cell_height();
        let bbox = BoundingBox::new(
            BoundaryPoint::raw(
                grid.x_range().low() + min_ix as f64 * dx,
                grid.y_range().low() + min_iy as f64 * dy,
            ),
            BoundaryPoint::raw(
                grid.x_range().low() + (max_ix + 1) as f64 * dx,
                grid.y_range().low() + (max_iy + 1) as f64 * dy,
            ),
        )
        .expect("cell index ranges are ordered");
        islands.push(Island {
            bbox,
            mass_fraction: if total > 0.0 { mass / total } else { 0.0 },
            cell_count: cells,
        });
    }
    islands.sort_by(|a, b| {
        b.mass_fraction
            .partial_cmp(&a.mass_fraction)
            .expect("mass fractions are finite")
    });
    Ok(IslandSet { level, islands })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64) -> BoundaryPoint {
        BoundaryPoint::raw(x, y)
    }

    /// Independent density oracle: computes `H^(−1/2)` by eigendecomposition
    /// of the symmetric 2×2 matrix and sums kernel values naively — a
    /// different route than the closed-form inverse quadratic form used by
    /// the implementation.
    fn density_oracle(points: &[BoundaryPoint], h: &BandwidthMatrix, q: BoundaryPoint) -> f64 {
        let (a, b, c) = (h.h11(), h.h12(), h.h22());
        // Eigenvalues of [[a, b], [b, c]].
        let tr = a + c;
        let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
        let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
        // Eigenvector for l1.
        let (vx, vy) = if b.abs() > 1e-300 {
            let norm = ((l1 - c) * (l1 - c) + b * b).sqrt();
            ((l1 - c) / norm, b / norm)
        } else if a >= c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        // H^(-1/2) = R diag(1/sqrt(l)) R^T with R = [[vx, -vy], [vy, vx]].
        let (s1, s2) = (1.0 / l1.sqrt(), 1.0 / l2.sqrt());
        let m11 = vx * vx * s1 + vy * vy * s2;
        let m12 = vx * vy * s1 - vx * vy * s2;
        let m22 = vy * vy * s1 + vx * vx * s2;
        let mut sum = 0.0;
        for p in points {
            let (zx, zy) = (q.x - p.x, q.y - p.y);
            let ux = m11 * zx + m12 * zy;
            let uy = m12 * zx + m22 * zy;
            sum += (-0.5 * (ux * ux + uy * uy)).exp() / std::f64::consts::TAU;
        }
        sum / (points.len() as f64 * (l1 * l2).sqrt())
    }

    fn gaussian_sample(rng: &mut ChaCha8Rng, n: usize, cx: f64, cy: f64, s: f64) -> Vec<BoundaryPoint> {
        // Box-Muller pairs around (cx, cy).
        (0..n)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                let r = (-2.0 * u1.ln()).sqrt();
                let (sn, cs) = (std::f64::consts::TAU * u2).sin_cos();
                pt(cx + s * r * cs, cy + s * r * sn)
            })
            .collect()
    }

    #[test]
    fn scott_bandwidth_matches_formula_exactly() {
        // 100 points with per-axis sample std exactly 1 (n−1 denominator):
        // 50 at +sqrt(0.99), 50 at −sqrt(0.99); y = x + 1 keeps feasibility.
        let a = 0.99f64.sqrt();
        let points: Vec<BoundaryPoint> = (0..100)
            .map(|i| {
                let x = if i % 2 == 0 { a } else { -a };
                pt(x, x + 1.0)
            })
            .collect();
        let h = select_bandwidth(&points).unwrap();
        let expect = 100f64.powf(-1.0 / 3.0); // (σ̂ · n^(−1/6))² with σ̂ = 1
        assert_relative_eq!(h.h11(), expect, max_relative = 1e-12);
        assert_relative_eq!(h.h22(), expect, max_relative = 1e-12);
        assert_eq!(h.h12(), 0.0);
        assert_relative_eq!(expect, 0.215_443_469_003_188_3, max_relative = 1e-12);
    }

    #[test]
    fn scott_bandwidth_scales_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points = gaussian_sample(&mut rng, 60, 0.4, 0.6, 0.05);
        let s = 2.5;
        let scaled: Vec<BoundaryPoint> = points.iter().map(|p| pt(p.x * s, p.y * s)).collect();
        let h = select_bandwidth(&points).unwrap();
        let hs = select_bandwidth(&scaled).unwrap();
        assert_relative_eq!(hs.h11() / h.h11(), s * s, max_relative = 1e-12);
        assert_relative_eq!(hs.h22() / h.h22(), s * s, max_relative = 1e-12);
    }

    #[test]
    fn bandwidth_floors_single_degenerate_axis_and_rejects_double() {
        // Identical x, varying y: x-axis variance is zero → floored.
        let points = vec![pt(0.3, 0.5), pt(0.3, 0.9)];
        let h = select_bandwidth(&points).unwrap();
        let scale = 2f64.powf(-1.0 / 6.0);
        assert_relative_eq!(h.h11(), (MIN_AXIS_STD * scale).powi(2), max_relative = 1e-12);
        assert!(h.h22() > h.h11());
        // Identical points on both axes: rejected.
        let constant = vec![pt(0.3, 0.5); 10];
        assert_eq!(select_bandwidth(&constant), Err(KdeError::DegenerateSpread));
        assert!(matches!(
            select_bandwidth(&[pt(0.1, 0.2)]),
            Err(KdeError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn density_closed_form_kernel_values() {
        let h = BandwidthMatrix::diagonal(1.0, 1.0).unwrap();
        let points = [pt(0.0, 0.0)];
        let at_center = estimate_density(&points, &h, pt(0.0, 0.0));
        assert_relative_eq!(at_center, 1.0 / std::f64::consts::TAU, max_relative = 1e-12);
        let off = estimate_density(&points, &h, pt(1.0, 0.0));
        assert_relative_eq!(
            off,
            (-0.5f64).exp() / std::f64::consts::TAU,
            max_relative = 1e-12
        );
    }

    #[test]
    fn density_matches_eigendecomposition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let n = rng.random_range(1..=8);
            let points: Vec<BoundaryPoint> = (0..n)
                .map(|_| pt(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            // Random SPD bandwidth, including off-diagonal terms.
            let h11: f64 = rng.random_range(0.05..2.0);
            let h22: f64 = rng.random_range(0.05..2.0);
            let limit = (h11 * h22).sqrt() * 0.9;
            let h12 = rng.random_range(-limit..limit);
            let h = BandwidthMatrix::new(h11, h22, h12).unwrap();
            let q = pt(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let got = estimate_density(&points, &h, q);
            let want = density_oracle(&points, &h, q);
            assert_relative_eq!(got, want, max_relative = 1e-12, epsilon = 1e-300);
            assert!(got >= 0.0, "case {case}: density must be nonnegative");
        }
    }

    #[test]
    fn grid_values_are_definitional_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points = gaussian_sample(&mut rng, 40, 0.5, 0.7, 0.08);
        let h = select_bandwidth(&points).unwrap();
        let grid = build_grid(&points, &h, 16, 3.0).unwrap();
        for (ix, iy) in [(0, 0), (7, 3), (15, 15), (2, 14)] {
            let direct = estimate_density(&points, &h, grid.cell_center(ix, iy));
            assert_eq!(grid.value(ix, iy), direct, "cell ({ix}, {iy}) not definitional");
        }
        // Parallel evaluation is bit-identical across builds.
        let again = build_grid(&points, &h, 16, 3.0).unwrap();
        assert_eq!(grid.values(), again.values());
    }

    #[test]
    fn grid_mass_is_captured_and_converges_under_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut points = gaussian_sample(&mut rng, 120, 0.35, 0.55, 0.06);
        points.extend(gaussian_sample(&mut rng, 80, 0.7, 0.8, 0.05));
        let h = select_bandwidth(&points).unwrap();
        let grid = build_grid(&points, &h, 128, 3.0).unwrap();
        let mass = grid.total_mass();
        assert!(mass >= 0.98 && mass <= 1.001, "mass {mass} out of range");
        let fine = build_grid(&points, &h, 256, 3.0).unwrap();
        assert!(
            (fine.total_mass() - mass).abs() < 0.01,
            "refinement shifted mass: {} vs {}",
            fine.total_mass(),
            mass
        );
    }

    #[test]
    fn grid_input_validation() {
        let points = vec![pt(0.2, 0.4), pt(0.6, 0.8)];
        let h = select_bandwidth(&points).unwrap();
        assert!(matches!(
            build_grid(&points, &h, 8, 3.0),
            Err(KdeError::ResolutionTooCoarse { .. })
        ));
        assert!(matches!(
            build_grid(&[], &h, 32, 3.0),
            Err(KdeError::TooFewPoints { .. })
        ));
        // Single point with zero padding: extent collapses.
        assert!(matches!(
            build_grid(&[pt(0.2, 0.4)], &h, 32, 0.0),
            Err(KdeError::DegenerateExtent)
        ));
    }

    #[test]
    fn hdr_level_on_flat_grid_is_the_common_value() {
        let x = RequestInterval::new(0.0, 1.0).unwrap();
        let grid = DensityGrid::from_values(x, x, 16, vec![0.7; 256]).unwrap();
        for thresh in [0.1, 0.5, 0.8, 0.99] {
            assert_eq!(hdr_level(&grid, thresh).unwrap(), 0.7);
        }
        assert!(matches!(
            hdr_level(&grid, 1.0),
            Err(KdeError::InvalidThresh { .. })
        ));
        let zero = DensityGrid::from_values(x, x, 16, vec![0.0; 256]).unwrap();
        assert_eq!(hdr_level(&zero, 0.8), Err(KdeError::ZeroTotalMass));
    }

    /// Independent characterization of the HDR level: the supra-level mass
    /// must reach the target, and overshoot it by at most the mass of the
    /// cells tied at the level itself.
    fn check_hdr_characterization(grid: &DensityGrid, thresh: f64) {
        let c = hdr_level(grid, thresh).unwrap();
        let total = grid.total_mass();
        let target = (1.0 - thresh) * total;
        let above: f64 = grid.values().iter().filter(|&&v| v >= c).sum::<f64>() * grid.cell_area();
        let strictly: f64 =
            grid.values().iter().filter(|&&v| v > c).sum::<f64>() * grid.cell_area();
        assert!(above >= target - 1e-12, "supra-level mass {above} below target {target}");
        assert!(
            strictly < target + 1e-12,
            "a larger level would still capture the target: {strictly} vs {target}"
        );
    }

    #[test]
    fn hdr_level_captures_target_mass_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let points = gaussian_sample(&mut rng, 500, 0.5, 0.6, 0.07);
        let h = select_bandwidth(&points).unwrap();
        let grid = build_grid(&points, &h, 128, 3.0).unwrap();
        for thresh in [0.2, 0.5, 0.8, 0.95] {
            check_hdr_characterization(&grid, thresh);
        }
        // Captured mass at thresh = 0.8 is ≈ 20% of total, within one cell.
        let c = hdr_level(&grid, 0.8).unwrap();
        let above: f64 = grid.values().iter().filter(|&&v| v >= c).sum::<f64>() * grid.cell_area();
        let max_cell = grid.values().iter().cloned().fold(0.0, f64::max) * grid.cell_area();
        let target = 0.2 * grid.total_mass();
        assert!(above >= target && above <= target + max_cell);
        // Monotonicity in thresh.
        let mut last = 0.0;
        for thresh in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let c = hdr_level(&grid, thresh).unwrap();
            assert!(c >= last, "hdr_level not monotone at thresh {thresh}");
            last = c;
        }
    }

    /// Flood-fill oracle for islands: iterative min-label relaxation to a
    /// fixpoint, a different algorithm than the implementation's BFS.
    fn island_components_oracle(grid: &DensityGrid, level: f64) -> Vec<Vec<usize>> {
        let res = grid.resolution();
        let n = res * res;
        let mut label: Vec<usize> = (0..n)
            .map(|i| if grid.values()[i] >= level { i } else { usize::MAX })
            .collect();
        loop {
            let mut changed = false;
            for idx in 0..n {
                if label[idx] == usize::MAX {
                    continue;
                }
                let (ix, iy) = (idx % res, idx / res);
                let mut best = label[idx];
                let mut consider = |n_idx: usize| {
                    if label[n_idx] != usize::MAX {
                        best = best.min(label[n_idx]);
                    }
                };
                if ix > 0 {
                    consider(idx - 1);
                }
                if ix + 1 < res {
                    consider(idx + 1);
                }
                if iy > 0 {
                    consider(idx - res);
                }
                if iy + 1 < res {
                    consider(idx + res);
                }
                if best < label[idx] {
                    label[idx] = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (idx, &l) in label.iter().enumerate() {
            if l != usize::MAX {
                groups.entry(l).or_default().push(idx);
            }
        }
        groups.into_values().collect()
    }

    #[test]
    fn islands_match_flood_fill_oracle_on_bimodal_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut points = gaussian_sample(&mut rng, 150, 0.25, 0.35, 0.04);
        points.extend(gaussian_sample(&mut rng, 150, 0.75, 0.85, 0.04));
        let h = select_bandwidth(&points).unwrap();
        let grid = build_grid(&points, &h, 128, 3.0).unwrap();
        let level = hdr_level(&grid, 0.8).unwrap();
        let set = extract_islands(&grid, level).unwrap();
        let oracle = island_components_oracle(&grid, level);
        assert_eq!(set.islands.len(), oracle.len());
        assert_eq!(set.islands.len(), 2, "two separated modes → two islands");
        // Component structure must agree: match by cell count and the
        // min/max cell indices of each oracle component.
        let mut oracle_boxes: Vec<(usize, BoundingBox)> = oracle
            .iter()
            .map(|cells| {
                let ix = |idx: usize| idx % 128;
                let iy = |idx: usize| idx / 128;
                let min_ix = cells.iter().map(|&c| ix(c)).min().unwrap();
                let max_ix = cells.iter().map(|&c| ix(c)).max().unwrap();
                let min_iy = cells.iter().map(|&c| iy(c)).min().unwrap();
                let max_iy = cells.iter().map(|&c| iy(c)).max().unwrap();
                let bbox = BoundingBox::new(
                    BoundaryPoint::raw(
                        grid.x_range().low() + min_ix as f64 * grid.cell_width(),
                        grid.y_range().low() + min_iy as f64 * grid.cell_height(),
                    ),
                    BoundaryPoint::raw(
                        grid.x_range().low() + (max_ix + 1) as f64 * grid.cell_width(),
                        grid.y_range().low() + (max_iy + 1) as f64 * grid.cell_height(),
                    ),
                )
                .unwrap();
                (cells.len(), bbox)
            })
            .collect();
        for island in &set.islands {
            let pos = oracle_boxes
                .iter()
                .position(|(count, bbox)| *count == island.cell_count && *bbox == island.bbox)
                .unwrap_or_else(|| panic!("island {island:?} not found in oracle"));
            oracle_boxes.remove(pos);
        }
        // Masses sum to ≤ total, ordered descending, boxes inside extent.
        let mass_sum: f64 = set.islands.iter().map(|i| i.mass_fraction).sum();
        assert!(mass_sum <= 1.0 + 1e-12);
        assert!(set.islands[0].mass_fraction >= set.islands[1].mass_fraction);
        for island in &set.islands {
            assert!(island.bbox.min().x >= grid.x_range().low() - 1e-12);
            assert!(island.bbox.max().x <= grid.x_range().high() + 1e-12);
            assert!(island.bbox.min().y >= grid.y_range().low() - 1e-12);
            assert!(island.bbox.max().y <= grid.y_range().high() + 1e-12);
        }
    }

    #[test]
    fn island_degenerate_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let points = gaussian_sample(&mut rng, 50, 0.5, 0.6, 0.05);
        let h = select_bandwidth(&points).unwrap();
        let grid = build_grid(&points, &h, 32, 3.0).unwrap();
        // Level 0: one island spanning the whole grid.
        let all = extract_islands(&grid, 0.0).unwrap();
        assert_eq!(all.islands.len(), 1);
        let island = &all.islands[0];
        assert_eq!(island.cell_count, 32 * 32);
        assert_relative_eq!(island.bbox.min().x, grid.x_range().low(), max_relative = 1e-12);
        assert_relative_eq!(island.bbox.max().y, grid.y_range().high(), max_relative = 1e-12);
        assert_relative_eq!(island.mass_fraction, 1.0, max_relative = 1e-12);
        // Level above the maximum: empty set.
        let max = grid.values().iter().cloned().fold(0.0, f64::max);
        let none = extract_islands(&grid, max * 1.01).unwrap();
        assert!(none.is_empty());
        assert!(extract_islands(&grid, -0.1).is_err());
        assert!(extract_islands(&grid, f64::NAN).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_density_translation_invariant(
            seed in 0u64..1000,
            tx in -5.0f64..5.0,
            ty in -5.0f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..30);
            let points: Vec<BoundaryPoint> = (0..n)
                .map(|_| pt(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
                .collect();
            let h = BandwidthMatrix::new(0.05, 0.08, 0.01).unwrap();
            let q = pt(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let moved: Vec<BoundaryPoint> = points.iter().map(|p| pt(p.x + tx, p.y + ty)).collect();
            let q_moved = pt(q.x + tx, q.y + ty);
            let base = estimate_density(&points, &h, q);
            let shifted = estimate_density(&moved, &h, q_moved);
            prop_assert!((base - shifted).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn prop_island_masses_bounded_and_boxes_nested(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points = gaussian_sample(&mut rng, 60, 0.4, 0.6, 0.06);
            let h = select_bandwidth(&points).unwrap();
            let grid = build_grid(&points, &h, 32, 3.0).unwrap();
            let level = hdr_level(&grid, 0.8).unwrap();
            let set = extract_islands(&grid, level).unwrap();
            prop_assert!(!set.is_empty());
            let sum: f64 = set.islands.iter().map(|i| i.mass_fraction).sum();
            prop_assert!(sum <= 1.0 + 1e-12);
            for w in set.islands.windows(2) {
                prop_assert!(w[0].mass_fraction >= w[1].mass_fraction);
            }
        }
    }
}
