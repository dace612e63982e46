//! Reference instances with known KKT points.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::constraints::ConstraintFn;
use super::instance::ProblemInstance;
use super::kkt::{build_kkt_instance, KktConstraint, KktSpec};
use super::set::SimpleSet;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// `[[1, 2], [-2, 1]]`: symmetric part `I`, spectral norm `sqrt(5)`.
pub fn qc1_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 1.0])
}

/// QC1: `X = [-1, 1]^2`, `g(x) = x1 + x2 - 0.5`, `x* = (0.25, 0.25)`, `lambda* = 1`.
pub fn qc1_spec() -> KktSpec {
    KktSpec {
        label: "QC1".into(),
        set: SimpleSet::symmetric_box(2, 1.0).expect("valid box"),
        matrix: qc1_matrix(),
        nonsmooth_scale: 0.0,
        constraints: vec![KktConstraint::active(
            ConstraintFn::affine(v(&[1.0, 1.0]), 0.0).expect("finite"),
        )],
        x_star: v(&[0.25, 0.25]),
        lambda_star: v(&[1.0]),
    }
}

pub fn qc1() -> ProblemInstance {
    build_kkt_instance(&qc1_spec()).expect("QC1 is a valid KKT instance")
}

/// QC2: QC1's operator with the curved constraint `||x||^2 - 0.125 <= 0`
/// active at `x* = (0.25, 0.25)` with `lambda* = 2`.
pub fn qc2_spec() -> KktSpec {
    KktSpec {
        label: "QC2".into(),
        set: SimpleSet::symmetric_box(2, 1.0).expect("valid box"),
        matrix: qc1_matrix(),
        nonsmooth_scale: 0.0,
        constraints: vec![KktConstraint::active(
            ConstraintFn::quadratic(DMatrix::identity(2, 2), DVector::zeros(2), 0.0).expect("psd"),
        )],
        x_star: v(&[0.25, 0.25]),
        lambda_star: v(&[2.0]),
    }
}

pub fn qc2() -> ProblemInstance {
    build_kkt_instance(&qc2_spec()).expect("QC2 is a valid KKT instance")
}

/// QC1-NS: QC1 plus the nonsmooth constraint `||x - (0.25, -0.5)|| - 0.75 <= 0`,
/// also active at `x*`, with `lambda* = (1, 0.5)`.
pub fn qc1_nonsmooth_spec() -> KktSpec {
    let mut spec = qc1_spec();
    spec.label = "QC1-NS".into();
    spec.constraints.push(KktConstraint::active(
        ConstraintFn::norm(1.0, v(&[0.25, -0.5]), 0.0).expect("finite"),
    ));
    spec.lambda_star = v(&[1.0, 0.5]);
    spec
}

pub fn qc1_nonsmooth() -> ProblemInstance {
    build_kkt_instance(&qc1_nonsmooth_spec()).expect("QC1-NS is a valid KKT instance")
}

/// Random monotone matrix `P P^T / n + (S - S^T)`.
pub fn random_monotone_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let p = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &p * p.transpose() / n as f64 + (&s - s.transpose())
}

/// Random KKT spec on `[-1, 1]^n` with a mix of affine and convex quadratic
/// constraints; roughly 60% of them active.
pub fn random_kkt_spec<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> KktSpec {
    let x_star = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let mut constraints = Vec::with_capacity(m);
    let mut lambda = DVector::zeros(m);
    for j in 0..m {
        let shape = if rng.random_bool(0.5) {
            let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            ConstraintFn::affine(a, 0.0).expect("finite")
        } else {
            let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            ConstraintFn::quadratic(&r * r.transpose() / n as f64, c, 0.0).expect("psd")
        };
        if rng.random_bool(0.6) {
            lambda[j] = rng.random_range(0.1..2.0);
            constraints.push(KktConstraint::active(shape));
        } else {
            constraints.push(KktConstraint::inactive(shape, rng.random_range(0.05..0.5)));
        }
    }
    KktSpec {
        label: format!("random-n{n}-m{m}"),
        set: SimpleSet::symmetric_box(n, 1.0).expect("valid box"),
        matrix: random_monotone_matrix(rng, n),
        nonsmooth_scale: 0.0,
        constraints,
        x_star,
        lambda_star: lambda,
    }
}
