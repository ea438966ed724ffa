//! One-class SVM with RBF kernel, trained per sliding window.
//!
//! The dual problem is the standard one-class QP:
//! minimize `½ Σ_ij α_i α_j K(y_i, y_j)` subject to `0 ≤ α_i ≤ 1/(ν·n)` and
//! `Σ α_i = 1`, with `K(y, y') = exp(−‖y − y'‖² / (2σ²))`. It is solved by
//! SMO-style coordinate ascent on maximal violating pairs. The learnt
//! function is `F(q) = Σ α_i K(q, y_i) − ρ`; `F(q) < 0` marks `q` an outlier.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BoundaryPoint, BoundingBox, RequestInterval};

/// Default KKT tolerance for the pair solver.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Default pair-update budget: `10·n²` at the largest supported window
/// (n = 100). Smaller windows converge by tolerance far earlier.
pub const DEFAULT_MAX_PASSES: usize = 100_000;
/// Floor on σ² used by [`suggested_sigma`].
pub const MIN_SIGMA_SQ: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum OcsvmError {
    #[error("invalid parameters: nu must be in (0, 1], sigma/tolerance positive, max_passes > 0 (nu={nu}, sigma={sigma})")]
    InvalidParams { nu: f64, sigma: f64 },
    #[error("need at least 2 training points, got {got}")]
    TooFewPoints { got: usize },
    #[error("infeasible problem: nu·n = {nu}·{n} < 1 leaves the box below the simplex")]
    Infeasible { nu: f64, n: usize },
    #[error("solver did not reach tolerance after {passes} pair updates (violation {violation:.3e})")]
    NoConvergence { passes: usize, violation: f64 },
    #[error("model has no inliers among the given points")]
    NoInliers,
    #[error("invalid model parts: {reason}")]
    InvalidModel { reason: &'static str },
}

/// Training parameters. `nu` upper-bounds the fraction of non-inliers and
/// lower-bounds the fraction of support vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcsvmParams {
    pub nu: f64,
    pub sigma: f64,
    pub tolerance: f64,
    pub max_passes: usize,
}

impl OcsvmParams {
    pub fn new(nu: f64, sigma: f64) -> Result<Self, OcsvmError> {
        let p = Self {
            nu,
            sigma,
            tolerance: DEFAULT_TOLERANCE,
            max_passes: DEFAULT_MAX_PASSES,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OcsvmError> {
        let ok = self.nu > 0.0
            && self.nu <= 1.0
            && self.sigma > 0.0
            && self.sigma.is_finite()
            && self.tolerance > 0.0
            && self.max_passes > 0;
        if ok {
            Ok(())
        } else {
            Err(OcsvmError::InvalidParams {
                nu: self.nu,
                sigma: self.sigma,
            })
        }
    }
}

/// RBF width heuristic: `σ² = mean pairwise squared distance / 2`, floored at
/// [`MIN_SIGMA_SQ`]. Scale-adaptive, so behavior is stable across traces.
pub fn suggested_sigma(points: &[BoundaryPoint]) -> f64 {
    let n = points.len();
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += points[i].distance_sq(&points[j]);
            pairs += 1;
        }
    }
    let msd = if pairs > 0 { sum / pairs as f64 } else { 0.0 };
    (msd / 2.0).max(MIN_SIGMA_SQ).sqrt()
}

/// A trained model: the support vectors (training points with `α_i > 0`),
/// their dual weights, the offset `ρ`, and the kernel width.
///
/// Dual feasibility holds after training: `0 < α_i ≤ 1/(ν·n)`, `Σ α_i = 1`.
/// For `ν < 1` on points in generic position the support set is a strict
/// subset of the window; at `ν = 1` the box collapses to `α_i = 1/n` and
/// every point is a support vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    support_vectors: Vec<BoundaryPoint>,
    alphas: Vec<f64>,
    rho: f64,
    sigma: f64,
}

impl OcsvmModel {
    /// Assembles a model from explicit parts (plumbing for tests and demos).
    pub fn from_parts(
        support_vectors: Vec<BoundaryPoint>,
        alphas: Vec<f64>,
        rho: f64,
        sigma: f64,
    ) -> Result<Self, OcsvmError> {
        if support_vectors.is_empty() || support_vectors.len() != alphas.len() {
            return Err(OcsvmError::InvalidModel {
                reason: "support vector and alpha lists must be non-empty and equal length",
            });
        }
        if !alphas.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return Err(OcsvmError::InvalidModel {
                reason: "alphas must be positive finite reals",
            });
        }
        if !(sigma > 0.0 && sigma.is_finite() && rho.is_finite()) {
            return Err(OcsvmError::InvalidModel {
                reason: "sigma must be positive and rho finite",
            });
        }
        Ok(Self {
            support_vectors,
            alphas,
            rho,
            sigma,
        })
    }

    pub fn support_vectors(&self) -> &[BoundaryPoint] {
        &self.support_vectors
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The learnt function `F(q) = Σ α_i K(q, y_i) − ρ`.
    pub fn decision(&self, q: &BoundaryPoint) -> f64 {
        let two_sigma_sq = 2.0 * self.sigma * self.sigma;
        let mut sum = 0.0;
        for (sv, a) in self.support_vectors.iter().zip(&self.alphas) {
            sum += a * (-q.distance_sq(sv) / two_sigma_sq).exp();
        }
        sum - self.rho
    }

    /// The dual objective `½ Σ_ij α_i α_j K(y_i, y_j)` of this model
    /// (training points with `α = 0` contribute nothing).
    pub fn dual_objective(&self) -> f64 {
        let two_sigma_sq = 2.0 * self.sigma * self.sigma;
        let m = self.support_vectors.len();
        let mut obj = 0.0;
        for i in 0..m {
            for j in 0..m {
                let k = (-self.support_vectors[i].distance_sq(&self.support_vectors[j])
                    / two_sigma_sq)
                    .exp();
                obj += self.alphas[i] * self.alphas[j] * k;
            }
        }
        0.5 * obj
    }
}

/// Trains on a window by SMO over maximal violating pairs.
///
/// Deterministic: pair selection scans indices in order with first-wins ties,
/// so retraining on the same window yields bit-identical models.
pub fn train(points: &[BoundaryPoint], params: &OcsvmParams) -> Result<OcsvmModel, OcsvmError> {
    params.validate()?;
    let n = points.len();
    if n < 2 {
        return Err(OcsvmError::TooFewPoints { got: n });
    }
    let nf = n as f64;
    if params.nu * nf < 1.0 {
        return Err(OcsvmError::Infeasible { nu: params.nu, n });
    }
    let c = 1.0 / (params.nu * nf);
    let two_sigma_sq = 2.0 * params.sigma * params.sigma;
    let kernel: Vec<f64> = {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = (-points[i].distance_sq(&points[j]) / two_sigma_sq).exp();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let mut alpha = vec![1.0 / nf; n];
    // Gradient of the objective: g_i = Σ_j α_j K_ij.
    let mut g: Vec<f64> = (0..n)
        .map(|i| {
            let row = &kernel[i * n..(i + 1) * n];
            row.iter().zip(&alpha).map(|(k, a)| k * a).sum()
        })
        .collect();
    let mut converged = false;
    let mut last_violation = 0.0;
    for _pass in 0..params.max_passes {
        // Maximal violating pair: the largest gradient among points that can
        // shed weight vs. the smallest among points that can take it.
        let mut up: Option<usize> = None;
        let mut dn: Option<usize> = None;
        for t in 0..n {
            if alpha[t] > 0.0 && up.is_none_or(|u| g[t] > g[u]) {
                up = Some(t);
            }
            if alpha[t] < c && dn.is_none_or(|d| g[t] < g[d]) {
                dn = Some(t);
            }
        }
        let (Some(i), Some(j)) = (up, dn) else {
            // One side empty (ν = 1 box): nothing movable, KKT trivially met.
            converged = true;
            break;
        };
        last_violation = g[i] - g[j];
        if last_violation <= params.tolerance {
            converged = true;
            break;
        }
        let eta = (kernel[i * n + i] + kernel[j * n + j] - 2.0 * kernel[i * n + j]).max(1e-12);
        let delta = (last_violation / eta).min(alpha[i]).min(c - alpha[j]);
        // Exact assignment on bound hits keeps 0/C values exact.
        if delta == alpha[i] {
            alpha[i] = 0.0;
        } else {
            alpha[i] -= delta;
        }
        if delta == c - alpha[j] {
            alpha[j] = c;
        } else {
            alpha[j] += delta;
        }
        for t in 0..n {
            g[t] += delta * (kernel[j * n + t] - kernel[i * n + t]);
        }
    }
    if !converged {
        return Err(OcsvmError::NoConvergence {
            passes: params.max_passes,
            violation: last_violation,
        });
    }
    // ρ: mean decision sum over free SVs. When none are free (vertex
    // solutions: all mass at bounds), any value in the KKT bracket
    // [max g over α = C, min g over α = 0] is valid; take the midpoint,
    // falling back to the C side alone when no α = 0 exists (ν = 1).
    // Margins classify rounding stragglers with their nearest bound.
    let margin = c * 1e-9;
    let free: Vec<usize> = (0..n)
        .filter(|&t| alpha[t] > margin && alpha[t] < c - margin)
        .collect();
    let rho = if !free.is_empty() {
        free.iter().map(|&t| g[t]).sum::<f64>() / free.len() as f64
    } else {
        let lo = (0..n)
            .filter(|&t| alpha[t] >= c - margin)
            .map(|t| g[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = (0..n)
            .filter(|&t| alpha[t] <= margin)
            .map(|t| g[t])
            .fold(f64::INFINITY, f64::min);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (lo + hi) / 2.0,
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => unreachable!("Σα = 1 puts at least one α at C when none are free"),
        }
    };
    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(points[t]);
            alphas.push(alpha[t]);
        }
    }
    Ok(OcsvmModel {
        support_vectors,
        alphas,
        rho,
        sigma: params.sigma,
    })
}

/// The subset of `points` the model labels inliers (`F ≥ 0`; decision exactly
/// zero keeps the boundary support vectors).
pub fn inliers(model: &OcsvmModel, points: &[BoundaryPoint]) -> Vec<BoundaryPoint> {
    points
        .iter()
        .filter(|p| model.decision(p) >= 0.0)
        .copied()
        .collect()
}

/// Axis-aligned bounding box of the inlier subset; `None` when no inliers.
pub fn inlier_bbox(model: &OcsvmModel, points: &[BoundaryPoint]) -> Option<BoundingBox> {
    BoundingBox::from_points(inliers(model, points))
}

/// The widest inlier-supported data range: minimum inlier `x` to maximum
/// inlier `y` (the lowest and highest request boundaries).
pub fn request_bounds(
    model: &OcsvmModel,
    points: &[BoundaryPoint],
) -> Result<RequestInterval, OcsvmError> {
    let ins = inliers(model, points);
    if ins.is_empty() {
        return Err(OcsvmError::NoInliers);
    }
    let low = ins.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let high = ins.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    RequestInterval::new(low, high).map_err(|_| OcsvmError::InvalidModel {
        reason: "inlier extremes do not form an interval",
    })
}
