use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FcviError, Result};

/// Tolerance on the smallest eigenvalue of `(A + A^T)/2`.
pub const MONOTONICITY_TOL: f64 = 1e-9;

pub type OperatorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum OperatorKind {
    /// `F(x) = A x + b`
    Affine { matrix: DMatrix<f64>, offset: DVector<f64> },
    /// `F(x) = A x + b + h * sign(x)`, with `sign(0) = 0`.
    AffinePlusNonsmooth {
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        nonsmooth_scale: f64,
    },
    /// Caller-supplied map; monotonicity and the moduli are the caller's claim.
    Custom { dim: usize, func: OperatorFn },
}

impl fmt::Debug for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Affine { matrix, offset } => f
                .debug_struct("Affine")
                .field("matrix", matrix)
                .field("offset", offset)
                .finish(),
            OperatorKind::AffinePlusNonsmooth {
                matrix,
                offset,
                nonsmooth_scale,
            } => f
                .debug_struct("AffinePlusNonsmooth")
                .field("matrix", matrix)
                .field("offset", offset)
                .field("nonsmooth_scale", nonsmooth_scale)
                .finish(),
            OperatorKind::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish(),
        }
    }
}

/// Monotone operator `F` together with its moduli: `L` for the Lipschitz
/// part and `H` bounding the jump of the discontinuous part.
#[derive(Debug, Clone)]
pub struct Operator {
    kind: OperatorKind,
    lipschitz: f64,
    nonsmooth: f64,
}

pub fn spectral_norm(matrix: &DMatrix<f64>) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    matrix.clone().svd(false, false).singular_values.max()
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn min_symmetric_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    let sym = (matrix + matrix.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

fn check_affine(matrix: &DMatrix<f64>, offset: &DVector<f64>) -> Result<()> {
    if !matrix.is_square() || matrix.nrows() == 0 {
        return Err(FcviError::Input(format!(
            "operator matrix must be square and nonempty, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if offset.len() != matrix.nrows() {
        return Err(FcviError::Input(format!(
            "operator offset has length {}, expected {}",
            offset.len(),
            matrix.nrows()
        )));
    }
    if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
        return Err(FcviError::Input("operator data must be finite".into()));
    }
    let min_eig = min_symmetric_eigenvalue(matrix);
    if min_eig < -MONOTONICITY_TOL {
        return Err(FcviError::Input(format!(
            "operator is not monotone: symmetric part has eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

impl Operator {
    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        check_affine(&matrix, &offset)?;
        let lipschitz = spectral_norm(&matrix);
        Ok(Self {
            kind: OperatorKind::Affine { matrix, offset },
            lipschitz,
            nonsmooth: 0.0,
        })
    }

    /// `H = 2 h sqrt(n)`, the largest possible norm of `h (sign(x) - sign(y))`.
    pub fn affine_plus_nonsmooth(matrix: DMatrix<f64>, offset: DVector<f64>, nonsmooth_scale: f64) -> Result<Self> {
        check_affine(&matrix, &offset)?;
        if !(nonsmooth_scale.is_finite() && nonsmooth_scale >= 0.0) {
            return Err(FcviError::Input(format!(
                "nonsmooth scale must be >= 0, got {nonsmooth_scale}"
            )));
        }
        let lipschitz = spectral_norm(&matrix);
        let nonsmooth = 2.0 * nonsmooth_scale * (matrix.nrows() as f64).sqrt();
        Ok(Self {
            kind: OperatorKind::AffinePlusNonsmooth {
                matrix,
                offset,
                nonsmooth_scale,
            },
            lipschitz,
            nonsmooth,
        })
    }

    pub fn custom(dim: usize, lipschitz: f64, nonsmooth: f64, func: OperatorFn) -> Result<Self> {
        if dim == 0 || !(lipschitz >= 0.0) || !(nonsmooth >= 0.0) {
            return Err(FcviError::Input(
                "custom operator needs dim > 0 and nonnegative moduli".into(),
            ));
        }
        Ok(Self {
            kind: OperatorKind::Custom { dim, func },
            lipschitz,
            nonsmooth,
        })
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            OperatorKind::Affine { matrix, .. } | OperatorKind::AffinePlusNonsmooth { matrix, .. } => matrix.nrows(),
            OperatorKind::Custom { dim, .. } => *dim,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn nonsmooth_bound(&self) -> f64 {
        self.nonsmooth
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.kind, OperatorKind::Custom { .. })
    }

    /// Linear part, when the operator has one.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            OperatorKind::Affine { matrix, .. } | OperatorKind::AffinePlusNonsmooth { matrix, .. } => Some(matrix),
            OperatorKind::Custom { .. } => None,
        }
    }

    /// The nonsmooth selection `h * sign(x)` (zero for smooth kinds).
    pub fn nonsmooth_part(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            OperatorKind::AffinePlusNonsmooth { nonsmooth_scale, .. } => x.map(|v| nonsmooth_scale * sign(v)),
            _ => DVector::zeros(x.len()),
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            OperatorKind::Affine { matrix, offset } => matrix * x + offset,
            OperatorKind::AffinePlusNonsmooth {
                matrix,
                offset,
                nonsmooth_scale,
            } => {
                let mut out = matrix * x + offset;
                if *nonsmooth_scale != 0.0 {
                    for (o, v) in out.iter_mut().zip(x.iter()) {
                        *o += nonsmooth_scale * sign(*v);
                    }
                }
                out
            }
            OperatorKind::Custom { func, .. } => func(x),
        }
    }
}

/// Sign with the selection `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_monotone_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            Operator::affine(a, DVector::zeros(2)),
            Err(FcviError::Input(_))
        ));
    }

    #[test]
    fn lipschitz_is_spectral_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 1.0]);
        let op = Operator::affine(a, DVector::zeros(2)).unwrap();
        assert!((op.lipschitz() - 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(op.nonsmooth_bound(), 0.0);
    }

    #[test]
    fn zero_nonsmooth_scale_matches_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 1.0, 0.5, 0.0, -0.5, 1.0]);
        let b = DVector::from_column_slice(&[0.1, -0.2, 0.3]);
        let smooth = Operator::affine(a.clone(), b.clone()).unwrap();
        let ns = Operator::affine_plus_nonsmooth(a, b, 0.0).unwrap();
        assert_eq!(ns.nonsmooth_bound(), 0.0);
        for _ in 0..100 {
            let x = DVector::from_iterator(3, (0..3).map(|_| rng.random_range(-1.0..1.0)));
            assert_eq!(smooth.eval(&x), ns.eval(&x));
        }
    }

    #[test]
    fn nonsmooth_selection_at_zero() {
        let op = Operator::affine_plus_nonsmooth(DMatrix::identity(2, 2), DVector::zeros(2), 0.5).unwrap();
        let f = op.eval(&DVector::from_column_slice(&[0.0, -2.0]));
        assert_eq!(f, DVector::from_column_slice(&[0.0, -2.5]));
        assert!(op.nonsmooth_bound() > 0.0);
    }
}
