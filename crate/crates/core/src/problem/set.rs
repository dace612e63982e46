use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FcviError, Result};

/// A compact convex set with a closed-form Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimpleSet {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    EuclideanBall {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{x >= 0, sum(x) = scale}` in `dim` coordinates.
    Simplex {
        dim: usize,
        scale: f64,
    },
}

impl SimpleSet {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = SimpleSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = SimpleSet::EuclideanBall { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn new_simplex(dim: usize, scale: f64) -> Result<Self> {
        let set = SimpleSet::Simplex { dim, scale };
        set.validate()?;
        Ok(set)
    }

    /// `[-r, r]^n`
    pub fn symmetric_box(n: usize, r: f64) -> Result<Self> {
        Self::new_box(vec![-r; n], vec![r; n])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SimpleSet::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(FcviError::Input(format!(
                        "box bounds must be nonempty and of equal length (got {} and {})",
                        lower.len(),
                        upper.len()
                    )));
                }
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !l.is_finite() || !u.is_finite() || l > u {
                        return Err(FcviError::Input(format!(
                            "box bounds invalid at coordinate {i}: [{l}, {u}]"
                        )));
                    }
                }
            }
            SimpleSet::EuclideanBall { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(FcviError::Input("ball center must be finite and nonempty".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(FcviError::Input(format!("ball radius must be > 0, got {radius}")));
                }
            }
            SimpleSet::Simplex { dim, scale } => {
                if *dim == 0 {
                    return Err(FcviError::Input("simplex dimension must be positive".into()));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(FcviError::Input(format!("simplex scale must be > 0, got {scale}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            SimpleSet::Box { lower, .. } => lower.len(),
            SimpleSet::EuclideanBall { center, .. } => center.len(),
            SimpleSet::Simplex { dim, .. } => *dim,
        }
    }

    /// Closed-form diameter `max ||x1 - x2||` over the set.
    pub fn diameter(&self) -> f64 {
        match self {
            SimpleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l) * (u - l))
                .sum::<f64>()
                .sqrt(),
            SimpleSet::EuclideanBall { radius, .. } => 2.0 * radius,
            SimpleSet::Simplex { dim, scale } => {
                if *dim >= 2 {
                    scale * std::f64::consts::SQRT_2
                } else {
                    0.0
                }
            }
        }
    }

    /// Box midpoint, ball center or simplex barycenter.
    pub fn center(&self) -> DVector<f64> {
        match self {
            SimpleSet::Box { lower, upper } => {
                DVector::from_iterator(lower.len(), lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)))
            }
            SimpleSet::EuclideanBall { center, .. } => DVector::from_column_slice(center),
            SimpleSet::Simplex { dim, scale } => DVector::from_element(*dim, scale / *dim as f64),
        }
    }

    fn check_dim(&self, point: &DVector<f64>) -> Result<()> {
        if point.len() != self.dim() {
            return Err(FcviError::Input(format!(
                "dimension mismatch: set has dimension {}, point has {}",
                self.dim(),
                point.len()
            )));
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(point)?;
        if point.iter().any(|v| !v.is_finite()) {
            return Err(FcviError::Input("cannot project a non-finite point".into()));
        }
        Ok(self.project_unchecked(point))
    }

    pub(crate) fn project_unchecked(&self, point: &DVector<f64>) -> DVector<f64> {
        match self {
            SimpleSet::Box { lower, upper } => DVector::from_iterator(
                point.len(),
                point
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(p, (l, u))| p.clamp(*l, *u)),
            ),
            SimpleSet::EuclideanBall { center, radius } => {
                let c = DVector::from_column_slice(center);
                let offset = point - &c;
                let dist = offset.norm();
                if dist <= *radius {
                    point.clone()
                } else {
                    c + offset * (*radius / dist)
                }
            }
            SimpleSet::Simplex { scale, .. } => project_simplex(point, *scale),
        }
    }

    /// Membership test with absolute tolerance `tol`.
    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        match self {
            SimpleSet::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(p, (l, u))| *p >= l - tol && *p <= u + tol),
            SimpleSet::EuclideanBall { center, radius } => {
                (point - DVector::from_column_slice(center)).norm() <= radius + tol
            }
            SimpleSet::Simplex { scale, .. } => {
                point.iter().all(|p| *p >= -tol) && (point.sum() - scale).abs() <= tol * point.len() as f64
            }
        }
    }

    /// Strict (relative) interior test: the normal cone at such a point is
    /// `{0}` for boxes and balls and the span of the all-ones vector for the
    /// simplex.
    pub fn in_relative_interior(&self, point: &DVector<f64>, margin: f64) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        match self {
            SimpleSet::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(p, (l, u))| *p > l + margin && *p < u - margin),
            SimpleSet::EuclideanBall { center, radius } => {
                (point - DVector::from_column_slice(center)).norm() < radius - margin
            }
            SimpleSet::Simplex { scale, .. } => {
                point.iter().all(|p| *p > margin) && (point.sum() - scale).abs() <= 1e-12 * scale.max(1.0)
            }
        }
    }

    /// Extreme points, or a finite stand-in for them (the ball has a
    /// continuum; its `2n` axis points are returned). `None` when a box has
    /// too many vertices to list.
    pub fn extreme_points(&self, max_points: usize) -> Option<Vec<DVector<f64>>> {
        match self {
            SimpleSet::Box { lower, upper } => {
                let n = lower.len();
                if n >= usize::BITS as usize || (1usize << n) > max_points {
                    return None;
                }
                Some(
                    (0..(1usize << n))
                        .map(|mask| {
                            DVector::from_iterator(
                                n,
                                (0..n).map(|i| if mask >> i & 1 == 1 { upper[i] } else { lower[i] }),
                            )
                        })
                        .collect(),
                )
            }
            SimpleSet::EuclideanBall { center, radius } => {
                let n = center.len();
                let c = DVector::from_column_slice(center);
                let mut pts = Vec::with_capacity(2 * n);
                for i in 0..n {
                    for sign in [1.0, -1.0] {
                        let mut p = c.clone();
                        p[i] += sign * radius;
                        pts.push(p);
                    }
                }
                Some(pts)
            }
            SimpleSet::Simplex { dim, scale } => Some(
                (0..*dim)
                    .map(|i| {
                        let mut p = DVector::zeros(*dim);
                        p[i] = *scale;
                        p
                    })
                    .collect(),
            ),
        }
    }

    /// Uniform sample from the set (Dirichlet(1) on the simplex).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            SimpleSet::Box { lower, upper } => DVector::from_iterator(
                lower.len(),
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| if u > l { rng.random_range(*l..=*u) } else { *l }),
            ),
            SimpleSet::EuclideanBall { center, radius } => {
                let n = center.len();
                let dir: DVector<f64> = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
                let norm = dir.norm();
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / n as f64);
                let step = if norm > 0.0 {
                    dir * (r / norm)
                } else {
                    DVector::zeros(n)
                };
                DVector::from_column_slice(center) + step
            }
            SimpleSet::Simplex { dim, scale } => {
                let e = DVector::from_iterator(*dim, (0..*dim).map(|_| Exp1.sample(rng)));
                let total: f64 = e.sum();
                e * (*scale / total)
            }
        }
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            SimpleSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            SimpleSet::EuclideanBall { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            SimpleSet::Simplex { dim, scale } => (vec![0.0; *dim], vec![*scale; *dim]),
        }
    }
}

/// Sort-based projection onto `{x >= 0, sum(x) = scale}`.
pub fn project_simplex(point: &DVector<f64>, scale: f64) -> DVector<f64> {
    let mut sorted: Vec<f64> = point.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - scale) / (k + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    point.map(|v| (v - shift).max(0.0))
}
