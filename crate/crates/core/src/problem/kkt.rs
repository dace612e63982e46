//! Construction of instances whose KKT point is known by design.
//!
//! Given a monotone matrix `A`, constraint shapes, a target `x*` in the
//! interior of `X` and multipliers `lambda*`, the constraint offsets are set so
//! that active constraints are tight at `x*`, and the operator offset is
//! `b = -A x* - h sign(x*) - grad g(x*) lambda*`, which makes stationarity hold
//! exactly.

use nalgebra::{DMatrix, DVector};

use super::constraints::{ConstraintFn, ConstraintSet};
use super::instance::ProblemInstance;
use super::operator::Operator;
use super::set::SimpleSet;
use crate::error::{FcviError, Result};

/// A constraint shape plus its slack at `x*`; zero slack means active.
#[derive(Debug, Clone)]
pub struct KktConstraint {
    /// The offset stored in the shape is ignored.
    pub shape: ConstraintFn,
    pub slack: f64,
}

impl KktConstraint {
    pub fn active(shape: ConstraintFn) -> Self {
        Self { shape, slack: 0.0 }
    }

    pub fn inactive(shape: ConstraintFn, slack: f64) -> Self {
        Self { shape, slack }
    }

    pub fn is_active(&self) -> bool {
        self.slack == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct KktSpec {
    pub label: String,
    pub set: SimpleSet,
    /// Monotone linear part of the operator.
    pub matrix: DMatrix<f64>,
    /// Scale of the `sign(x)` term; zero gives a purely affine operator.
    pub nonsmooth_scale: f64,
    pub constraints: Vec<KktConstraint>,
    pub x_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
}

const INTERIOR_MARGIN: f64 = 1e-12;

pub fn build_kkt_instance(spec: &KktSpec) -> Result<ProblemInstance> {
    let n = spec.set.dim();
    let m = spec.constraints.len();
    if spec.x_star.len() != n || spec.lambda_star.len() != m {
        return Err(FcviError::Input(format!(
            "target sizes ({}, {}) do not match (n, m) = ({n}, {m})",
            spec.x_star.len(),
            spec.lambda_star.len()
        )));
    }
    if !spec.set.in_relative_interior(&spec.x_star, INTERIOR_MARGIN) {
        return Err(FcviError::Input(
            "x* must lie strictly inside X (a boundary point has a nonzero normal cone term)".into(),
        ));
    }
    let mut items = Vec::with_capacity(m);
    for (j, c) in spec.constraints.iter().enumerate() {
        let lambda_j = spec.lambda_star[j];
        if !(lambda_j.is_finite() && lambda_j >= 0.0) {
            return Err(FcviError::Input(format!("lambda*[{j}] = {lambda_j} must be >= 0")));
        }
        if !(c.slack.is_finite() && c.slack >= 0.0) {
            return Err(FcviError::Input(format!(
                "constraint {j}: slack {} must be >= 0",
                c.slack
            )));
        }
        if !c.is_active() && lambda_j > 0.0 {
            return Err(FcviError::Input(format!(
                "constraint {j} is inactive but lambda*[{j}] = {lambda_j} > 0"
            )));
        }
        if c.shape.dim() != n {
            return Err(FcviError::Input(format!(
                "constraint {j} has dimension {}",
                c.shape.dim()
            )));
        }
        let raw = c.shape.with_offset(0.0);
        if c.is_active() && raw.gradient(&spec.x_star).norm() == 0.0 {
            return Err(FcviError::Input(format!(
                "active constraint {j} has a zero subgradient at x*: its feasible region has no interior"
            )));
        }
        let offset = raw.value(&spec.x_star) + c.slack;
        items.push(raw.with_offset(offset));
    }
    let constraints = ConstraintSet::new(n, items, &spec.set)?;
    let jac = constraints.jacobian(&spec.x_star);
    let nonsmooth = spec.x_star.map(|v| spec.nonsmooth_scale * super::operator::sign(v));
    let offset = -(&spec.matrix * &spec.x_star) - nonsmooth - &jac * &spec.lambda_star;
    let operator = if spec.nonsmooth_scale > 0.0 {
        Operator::affine_plus_nonsmooth(spec.matrix.clone(), offset, spec.nonsmooth_scale)?
    } else {
        Operator::affine(spec.matrix.clone(), offset)?
    };
    let values = constraints.values(&spec.x_star);
    for (j, c) in spec.constraints.iter().enumerate() {
        if !c.is_active() && values[j] >= 0.0 {
            return Err(FcviError::Input(format!(
                "inactive constraint {j} is not strictly satisfied at x* (g = {})",
                values[j]
            )));
        }
    }
    ProblemInstance::new(spec.label.clone(), spec.set.clone(), operator, constraints)?
        .with_known_solution(spec.x_star.clone(), spec.lambda_star.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::canonical;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn qc1_offset() {
        let inst = canonical::qc1();
        match inst.operator().kind() {
            crate::problem::OperatorKind::Affine { offset, .. } => {
                assert_eq!(offset, &v(&[-1.75, -0.75]));
            }
            other => panic!("unexpected operator {other:?}"),
        }
        assert_eq!(inst.known_solution_residuals().unwrap().max(), 0.0);
        let c = inst.constants();
        assert!((c.l - 5f64.sqrt()).abs() < 1e-14);
        assert!((c.m_g - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((c.l_g, c.h_g), (0.0, 0.0));
    }

    #[test]
    fn no_active_constraints_gives_minus_a_xstar() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 1.0]);
        let spec = KktSpec {
            label: "free".into(),
            set: SimpleSet::symmetric_box(2, 1.0).unwrap(),
            matrix: a.clone(),
            nonsmooth_scale: 0.0,
            constraints: vec![KktConstraint::inactive(
                ConstraintFn::affine(v(&[1.0, 1.0]), 0.0).unwrap(),
                0.3,
            )],
            x_star: v(&[0.1, -0.2]),
            lambda_star: v(&[0.0]),
        };
        let inst = build_kkt_instance(&spec).unwrap();
        let f = inst.eval_operator(&spec.x_star).unwrap();
        assert!(f.norm() < 1e-15);
        assert!((inst.eval_constraints(&spec.x_star).unwrap()[0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn quadratic_active_constraint() {
        let inst = canonical::qc2();
        let x = v(&[0.25, 0.25]);
        let lambda = v(&[2.0]);
        let res = inst.eval_operator(&x).unwrap() + inst.eval_constraint_jacobian(&x).unwrap() * lambda;
        assert!(res.norm() <= 1e-12);
        match inst.operator().kind() {
            crate::problem::OperatorKind::Affine { matrix, offset } => {
                let expected = -(matrix * &x) - v(&[1.0, 1.0]);
                assert!((offset - expected).norm() < 1e-15);
            }
            other => panic!("unexpected operator {other:?}"),
        }
    }

    #[test]
    fn boundary_target_rejected() {
        let mut spec = canonical::qc1_spec();
        spec.x_star = v(&[1.0, -0.5]);
        spec.constraints[0].slack = 0.0;
        assert!(matches!(build_kkt_instance(&spec), Err(FcviError::Input(_))));
    }

    #[test]
    fn multiplier_on_inactive_constraint_rejected() {
        let mut spec = canonical::qc1_spec();
        spec.constraints[0].slack = 0.1;
        assert!(build_kkt_instance(&spec).is_err());
    }

    #[test]
    fn degenerate_active_norm_rejected() {
        let spec = KktSpec {
            label: "bad".into(),
            set: SimpleSet::symmetric_box(2, 1.0).unwrap(),
            matrix: DMatrix::identity(2, 2),
            nonsmooth_scale: 0.0,
            constraints: vec![KktConstraint::active(
                ConstraintFn::norm(1.0, v(&[0.2, 0.2]), 0.0).unwrap(),
            )],
            x_star: v(&[0.2, 0.2]),
            lambda_star: v(&[1.0]),
        };
        assert!(build_kkt_instance(&spec).is_err());
    }

    #[test]
    fn simplex_relative_interior_target() {
        let spec = KktSpec {
            label: "simplex".into(),
            set: SimpleSet::new_simplex(3, 1.0).unwrap(),
            matrix: DMatrix::identity(3, 3),
            nonsmooth_scale: 0.0,
            constraints: vec![KktConstraint::active(
                ConstraintFn::affine(v(&[1.0, 0.0, 0.0]), 0.0).unwrap(),
            )],
            x_star: v(&[0.2, 0.3, 0.5]),
            lambda_star: v(&[0.7]),
        };
        let inst = build_kkt_instance(&spec).unwrap();
        assert!(inst.known_solution_residuals().unwrap().max() <= 1e-15);
    }
}
