use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operator::{min_symmetric_eigenvalue, spectral_norm};
use super::set::SimpleSet;
use crate::error::{FcviError, Result};

/// Samples used to estimate `M_g` when no closed form is available.
pub const MG_SAMPLES: usize = 10_000;
/// Inflation applied to a sampled `M_g` estimate.
pub const MG_INFLATION: f64 = 1.05;
const MG_SAMPLE_SEED: u64 = 0x6d67_5f73_616d_706c;
const MAX_BOX_VERTICES: usize = 1 << 16;

/// One convex constraint function `g_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintFn {
    /// `a^T x - d`
    Affine { normal: DVector<f64>, offset: f64 },
    /// `x^T Q x + c^T x - d` with `Q` symmetric PSD.
    ConvexQuadratic {
        quad: DMatrix<f64>,
        linear: DVector<f64>,
        offset: f64,
    },
    /// `s ||x - center|| - d`; the subgradient at the center is taken to be zero.
    NonsmoothNorm {
        scale: f64,
        center: DVector<f64>,
        offset: f64,
    },
}

impl ConstraintFn {
    pub fn affine(normal: DVector<f64>, offset: f64) -> Result<Self> {
        if normal.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(FcviError::Input("affine constraint data must be finite".into()));
        }
        Ok(ConstraintFn::Affine { normal, offset })
    }

    pub fn quadratic(quad: DMatrix<f64>, linear: DVector<f64>, offset: f64) -> Result<Self> {
        if !quad.is_square() || quad.nrows() != linear.len() {
            return Err(FcviError::Input(format!(
                "quadratic constraint: Q is {}x{}, linear term has length {}",
                quad.nrows(),
                quad.ncols(),
                linear.len()
            )));
        }
        if quad.iter().chain(linear.iter()).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(FcviError::Input("quadratic constraint data must be finite".into()));
        }
        let quad = (&quad + quad.transpose()) * 0.5;
        let min_eig = min_symmetric_eigenvalue(&quad);
        if min_eig < -1e-9 {
            return Err(FcviError::Input(format!(
                "quadratic constraint is not convex: Q has eigenvalue {min_eig:e}"
            )));
        }
        Ok(ConstraintFn::ConvexQuadratic { quad, linear, offset })
    }

    pub fn norm(scale: f64, center: DVector<f64>, offset: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) || center.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(FcviError::Input(
                "norm constraint needs finite data and scale >= 0".into(),
            ));
        }
        Ok(ConstraintFn::NonsmoothNorm { scale, center, offset })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintFn::Affine { normal, .. } => normal.len(),
            ConstraintFn::ConvexQuadratic { linear, .. } => linear.len(),
            ConstraintFn::NonsmoothNorm { center, .. } => center.len(),
        }
    }

    pub fn offset(&self) -> f64 {
        match self {
            ConstraintFn::Affine { offset, .. }
            | ConstraintFn::ConvexQuadratic { offset, .. }
            | ConstraintFn::NonsmoothNorm { offset, .. } => *offset,
        }
    }

    pub fn with_offset(&self, d: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            ConstraintFn::Affine { offset, .. }
            | ConstraintFn::ConvexQuadratic { offset, .. }
            | ConstraintFn::NonsmoothNorm { offset, .. } => *offset = d,
        }
        out
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            ConstraintFn::Affine { normal, offset } => normal.dot(x) - offset,
            ConstraintFn::ConvexQuadratic { quad, linear, offset } => x.dot(&(quad * x)) + linear.dot(x) - offset,
            ConstraintFn::NonsmoothNorm { scale, center, offset } => scale * (x - center).norm() - offset,
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintFn::Affine { normal, .. } => normal.clone(),
            ConstraintFn::ConvexQuadratic { quad, linear, .. } => quad * x * 2.0 + linear,
            ConstraintFn::NonsmoothNorm { scale, center, .. } => {
                let diff = x - center;
                let dist = diff.norm();
                if dist > 0.0 {
                    diff * (*scale / dist)
                } else {
                    DVector::zeros(x.len())
                }
            }
        }
    }

    /// Smoothness modulus `L_{g_j}`.
    pub fn smoothness(&self) -> f64 {
        match self {
            ConstraintFn::ConvexQuadratic { quad, .. } => 2.0 * spectral_norm(quad),
            _ => 0.0,
        }
    }

    /// Nonsmoothness modulus `H_{g_j}`: the linearization error of
    /// `s ||x - c||` is at most `2 s ||x1 - x2||`.
    pub fn nonsmoothness(&self) -> f64 {
        match self {
            ConstraintFn::NonsmoothNorm { scale, .. } => 2.0 * scale,
            _ => 0.0,
        }
    }

    fn is_smooth(&self) -> bool {
        !matches!(self, ConstraintFn::NonsmoothNorm { .. })
    }
}

/// How the Jacobian bound `M_g` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum JacobianBoundMethod {
    /// Attained supremum (affine, norm, vertex enumeration).
    Exact,
    /// Closed-form upper bound (quadratics over balls).
    Analytic,
    /// `inflation * max` over seeded samples.
    Sampled { inflation: f64, samples: usize },
}

/// The constraint vector `g = (g_1, ..., g_m)` with its aggregate moduli.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    dim: usize,
    items: Vec<ConstraintFn>,
    smoothness: f64,
    nonsmoothness: f64,
    jacobian_bound: f64,
    jacobian_bound_method: JacobianBoundMethod,
}

impl ConstraintSet {
    pub fn new(dim: usize, items: Vec<ConstraintFn>, set: &SimpleSet) -> Result<Self> {
        if set.dim() != dim {
            return Err(FcviError::Input(format!(
                "constraints have dimension {dim}, set has {}",
                set.dim()
            )));
        }
        for (j, c) in items.iter().enumerate() {
            if c.dim() != dim {
                return Err(FcviError::Input(format!(
                    "constraint {j} has dimension {}, expected {dim}",
                    c.dim()
                )));
            }
        }
        let smoothness = items.iter().map(|c| c.smoothness().powi(2)).sum::<f64>().sqrt();
        let nonsmoothness = items.iter().map(|c| c.nonsmoothness().powi(2)).sum::<f64>().sqrt();
        let mut method = JacobianBoundMethod::Exact;
        let mut total = 0.0;
        for c in &items {
            let (bound, m) = gradient_bound(c, set);
            total += bound * bound;
            method = merge_method(method, m);
        }
        Ok(Self {
            dim,
            items,
            smoothness,
            nonsmoothness,
            jacobian_bound: total.sqrt(),
            jacobian_bound_method: method,
        })
    }

    pub fn empty(set: &SimpleSet) -> Self {
        Self::new(set.dim(), Vec::new(), set).expect("empty constraint set is always valid")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[ConstraintFn] {
        &self.items
    }

    /// `L_g = (sum L_{g_j}^2)^{1/2}`
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// `H_g = (sum H_{g_j}^2)^{1/2}`
    pub fn nonsmoothness(&self) -> f64 {
        self.nonsmoothness
    }

    /// `M_g`, an upper bound on `||grad g(x)||` over the set.
    pub fn jacobian_bound(&self) -> f64 {
        self.jacobian_bound
    }

    pub fn jacobian_bound_method(&self) -> JacobianBoundMethod {
        self.jacobian_bound_method
    }

    pub fn all_smooth(&self) -> bool {
        self.items.iter().all(ConstraintFn::is_smooth)
    }

    pub fn values(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.items.len(), self.items.iter().map(|c| c.value(x)))
    }

    /// Column-stacked Jacobian `[grad g_1, ..., grad g_m]` (n x m).
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.dim, self.items.len());
        for (j, c) in self.items.iter().enumerate() {
            jac.set_column(j, &c.gradient(x));
        }
        jac
    }
}

fn merge_method(a: JacobianBoundMethod, b: JacobianBoundMethod) -> JacobianBoundMethod {
    use JacobianBoundMethod::*;
    match (a, b) {
        (Sampled { .. }, _) => a,
        (_, Sampled { .. }) => b,
        (Analytic, _) | (_, Analytic) => Analytic,
        _ => Exact,
    }
}

/// `sup_{x in X} ||grad g_j(x)||` or an upper bound for it.
fn gradient_bound(c: &ConstraintFn, set: &SimpleSet) -> (f64, JacobianBoundMethod) {
    match c {
        ConstraintFn::Affine { normal, .. } => (normal.norm(), JacobianBoundMethod::Exact),
        ConstraintFn::NonsmoothNorm { scale, .. } => (*scale, JacobianBoundMethod::Exact),
        ConstraintFn::ConvexQuadratic { quad, linear, .. } => {
            // ||2Qx + c|| is convex in x, so its max over a polytope sits at a vertex.
            let grad_norm = |x: &DVector<f64>| (quad * x * 2.0 + linear).norm();
            match set {
                SimpleSet::EuclideanBall { center, radius } => {
                    let c0 = DVector::from_column_slice(center);
                    let bound = grad_norm(&c0) + 2.0 * spectral_norm(quad) * radius;
                    (bound, JacobianBoundMethod::Analytic)
                }
                _ => match set.extreme_points(MAX_BOX_VERTICES) {
                    Some(vertices) => (
                        vertices.iter().map(grad_norm).fold(0.0, f64::max),
                        JacobianBoundMethod::Exact,
                    ),
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(MG_SAMPLE_SEED);
                        let max = (0..MG_SAMPLES)
                            .map(|_| grad_norm(&set.sample_uniform(&mut rng)))
                            .fold(0.0, f64::max);
                        (
                            MG_INFLATION * max,
                            JacobianBoundMethod::Sampled {
                                inflation: MG_INFLATION,
                                samples: MG_SAMPLES,
                            },
                        )
                    }
                },
            }
        }
    }
}

/// First-order model of `g` around `x_prev`:
/// `l_g(x) = g(x_prev) + grad g(x_prev)^T (x - x_prev)`.
pub fn linearize_constraints(
    g_prev: &DVector<f64>,
    jac_prev: &DMatrix<f64>,
    x_prev: &DVector<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    g_prev + jac_prev.tr_mul(&(x - x_prev))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn unit_box() -> SimpleSet {
        SimpleSet::symmetric_box(2, 1.0).unwrap()
    }

    #[test]
    fn affine_value_and_gradient() {
        let g = ConstraintFn::affine(v(&[1.0, 1.0]), 0.5).unwrap();
        let x = v(&[0.25, 0.25]);
        assert_eq!(g.value(&x), 0.0);
        assert_eq!(g.gradient(&x), v(&[1.0, 1.0]));
    }

    #[test]
    fn quadratic_at_origin() {
        let g = ConstraintFn::quadratic(DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap();
        assert_eq!(g.value(&DVector::zeros(2)), -1.0);
        assert_eq!(g.gradient(&DVector::zeros(2)), DVector::zeros(2));
    }

    #[test]
    fn norm_subgradient_is_zero_at_center() {
        let g = ConstraintFn::norm(2.0, v(&[0.5, 0.5]), 0.1).unwrap();
        assert_eq!(g.gradient(&v(&[0.5, 0.5])), DVector::zeros(2));
        assert_eq!(g.nonsmoothness(), 4.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let set = unit_box();
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let cs = ConstraintSet::new(
            2,
            vec![
                ConstraintFn::affine(v(&[1.0, -2.0]), 0.3).unwrap(),
                ConstraintFn::quadratic(q, v(&[0.1, -0.4]), 0.2).unwrap(),
                ConstraintFn::quadratic(DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap(),
            ],
            &set,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let x = set.sample_uniform(&mut rng);
            let jac = cs.jacobian(&x);
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (cs.values(&xp) - cs.values(&xm)) / (2.0 * h);
                for j in 0..cs.len() {
                    worst = worst.max((fd[j] - jac[(i, j)]).abs());
                }
            }
        }
        assert!(worst <= 1e-6, "max deviation {worst:e}");
    }

    #[test]
    fn aggregate_moduli() {
        let set = unit_box();
        let cs = ConstraintSet::new(
            2,
            vec![
                ConstraintFn::quadratic(DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap(),
                ConstraintFn::quadratic(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2), 1.0).unwrap(),
                ConstraintFn::norm(1.5, DVector::zeros(2), 1.0).unwrap(),
            ],
            &set,
        )
        .unwrap();
        assert!((cs.smoothness() - (4.0f64 + 16.0).sqrt()).abs() < 1e-12);
        assert!((cs.nonsmoothness() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_bound_holds_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        for set in [
            SimpleSet::symmetric_box(3, 1.0).unwrap(),
            SimpleSet::new_ball(vec![0.2, 0.0, -0.1], 0.7).unwrap(),
            SimpleSet::new_simplex(3, 2.0).unwrap(),
        ] {
            let cs = ConstraintSet::new(
                3,
                vec![
                    ConstraintFn::quadratic(q.clone(), v(&[0.3, -0.2, 0.1]), 0.0).unwrap(),
                    ConstraintFn::affine(v(&[1.0, 2.0, -1.0]), 0.0).unwrap(),
                    ConstraintFn::norm(0.5, v(&[0.1, 0.1, 0.1]), 0.0).unwrap(),
                ],
                &set,
            )
            .unwrap();
            for _ in 0..2000 {
                let x = set.sample_uniform(&mut rng);
                let jac = cs.jacobian(&x);
                assert!(spectral_norm(&jac) <= cs.jacobian_bound() + 1e-12);
            }
        }
    }

    #[test]
    fn linearization_examples() {
        let g = ConstraintFn::quadratic(DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap();
        let x_prev = v(&[1.0, 0.0]);
        let x = v(&[0.0, 1.0]);
        let g_prev = v(&[g.value(&x_prev)]);
        let mut jac = DMatrix::zeros(2, 1);
        jac.set_column(0, &g.gradient(&x_prev));
        let lin = linearize_constraints(&g_prev, &jac, &x_prev, &x);
        assert_eq!(lin[0], -2.0);
        assert!(lin[0] <= g.value(&x));
        assert_eq!(linearize_constraints(&g_prev, &jac, &x_prev, &x_prev), g_prev);
    }

    #[test]
    fn affine_linearization_is_exact() {
        let set = unit_box();
        let cs = ConstraintSet::new(2, vec![ConstraintFn::affine(v(&[0.5, -1.5]), 0.2).unwrap()], &set).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = set.sample_uniform(&mut rng);
            let b = set.sample_uniform(&mut rng);
            let lin = linearize_constraints(&cs.values(&a), &cs.jacobian(&a), &a, &b);
            assert!((lin - cs.values(&b)).amax() < 1e-15);
        }
    }
}
