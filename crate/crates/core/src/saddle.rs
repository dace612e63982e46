//! Convex-concave saddle point problems with coupling constraints,
//! `min_{u∈U} max_{v∈V} f(u, v)` subject to `g(u, v) <= 0`, and their reduction
//! to a variational inequality over `w = (u, v)` with operator
//! `F(w) = [∇_u f(u, v); −∇_v f(u, v)]`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FcviError, Result};
use crate::metrics::gap::lattice;
use crate::metrics::{feasible_grid, MAX_GRID_DIM, PROBE_FEASIBILITY_TOL, PROBE_SET_TOL};
use crate::problem::document::{matrix_from_rows, rows_of};
use crate::problem::{
    min_symmetric_eigenvalue, spectral_norm, ConstraintDocument, ConstraintFn, ConstraintSet, Operator,
    ProblemInstance, SimpleSet, MONOTONICITY_TOL,
};

pub type PayoffValueFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type PayoffGradientFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

/// `f(u, v) = ½uᵀPu + uᵀKv − ½vᵀRv + aᵀu + bᵀv`; bilinear when `P = R = 0`.
#[derive(Clone)]
pub enum Payoff {
    Bilinear {
        k: DMatrix<f64>,
        a: DVector<f64>,
        b: DVector<f64>,
    },
    Quadratic {
        p: DMatrix<f64>,
        k: DMatrix<f64>,
        r: DMatrix<f64>,
        a: DVector<f64>,
        b: DVector<f64>,
    },
    /// Convex-concavity is the caller's responsibility.
    Custom {
        value: PayoffValueFn,
        gradient: PayoffGradientFn,
        /// Lipschitz constant of `(∇_u f, −∇_v f)`.
        lipschitz: f64,
    },
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Payoff::Bilinear { k, a, b } => f
                .debug_struct("Bilinear")
                .field("k", k)
                .field("a", a)
                .field("b", b)
                .finish(),
            Payoff::Quadratic { p, k, r, a, b } => f
                .debug_struct("Quadratic")
                .field("p", p)
                .field("k", k)
                .field("r", r)
                .field("a", a)
                .field("b", b)
                .finish(),
            Payoff::Custom { lipschitz, .. } => f.debug_struct("Custom").field("lipschitz", lipschitz).finish(),
        }
    }
}

/// `(P, K, R, a, b)`
type Blocks<'a> = (
    DMatrix<f64>,
    &'a DMatrix<f64>,
    DMatrix<f64>,
    &'a DVector<f64>,
    &'a DVector<f64>,
);

impl Payoff {
    fn blocks(&self, nu: usize, nv: usize) -> Option<Blocks<'_>> {
        match self {
            Payoff::Bilinear { k, a, b } => Some((DMatrix::zeros(nu, nu), k, DMatrix::zeros(nv, nv), a, b)),
            Payoff::Quadratic { p, k, r, a, b } => Some((p.clone(), k, r.clone(), a, b)),
            Payoff::Custom { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaddleProblem {
    pub label: String,
    pub u_set: SimpleSet,
    pub v_set: SimpleSet,
    pub payoff: Payoff,
    /// Constraints over `w = (u, v)`.
    pub coupling: Vec<ConstraintFn>,
    /// Saddle point `w*` and coupling multipliers, if known.
    pub known: Option<(DVector<f64>, DVector<f64>)>,
}

fn box_bounds(set: &SimpleSet, which: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    match set {
        SimpleSet::Box { lower, upper } => Ok((lower.clone(), upper.clone())),
        _ => Err(FcviError::Unsupported(format!(
            "{which} must be a box so that U × V is a box"
        ))),
    }
}

impl SaddleProblem {
    pub fn n_u(&self) -> usize {
        self.u_set.dim()
    }

    pub fn n_v(&self) -> usize {
        self.v_set.dim()
    }

    /// Dimensions, convex-concavity and the shapes of the payoff blocks.
    pub fn validate(&self) -> Result<()> {
        self.u_set.validate()?;
        self.v_set.validate()?;
        box_bounds(&self.u_set, "U")?;
        box_bounds(&self.v_set, "V")?;
        let (nu, nv) = (self.n_u(), self.n_v());
        if let Some((p, k, r, a, b)) = self.payoff.blocks(nu, nv) {
            if k.shape() != (nu, nv) || a.len() != nu || b.len() != nv || p.shape() != (nu, nu) || r.shape() != (nv, nv)
            {
                return Err(FcviError::Input(format!(
                    "payoff blocks do not match (n_u, n_v) = ({nu}, {nv})"
                )));
            }
            for (name, m) in [("P", &p), ("R", &r)] {
                if (m - m.transpose()).amax() > 1e-12 {
                    return Err(FcviError::Input(format!("payoff block {name} must be symmetric")));
                }
                if m.nrows() > 0 && min_symmetric_eigenvalue(m) < -MONOTONICITY_TOL {
                    return Err(FcviError::Input(format!(
                        "payoff is not convex-concave: block {name} has a negative eigenvalue"
                    )));
                }
            }
        }
        if let Some(c) = self.coupling.iter().find(|c| c.dim() != nu + nv) {
            return Err(FcviError::Input(format!(
                "coupling constraint has dimension {}, expected {}",
                c.dim(),
                nu + nv
            )));
        }
        Ok(())
    }

    fn split(&self, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nu = self.n_u();
        (w.rows(0, nu).into_owned(), w.rows(nu, self.n_v()).into_owned())
    }

    pub fn value(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match &self.payoff {
            Payoff::Bilinear { k, a, b } => u.dot(&(k * v)) + a.dot(u) + b.dot(v),
            Payoff::Quadratic { p, k, r, a, b } => {
                0.5 * u.dot(&(p * u)) + u.dot(&(k * v)) - 0.5 * v.dot(&(r * v)) + a.dot(u) + b.dot(v)
            }
            Payoff::Custom { value, .. } => value(u, v),
        }
    }

    fn coupling_values(&self, w: &DVector<f64>) -> impl Iterator<Item = f64> + '_ {
        let w = w.clone();
        self.coupling.iter().map(move |c| c.value(&w))
    }

    fn stacked(u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(u.len() + v.len(), u.iter().chain(v.iter()).copied())
    }

    /// Upper bound on `‖∇f‖` over `W`, used for grid-resolution slack.
    pub fn gradient_bound(&self) -> Result<f64> {
        let (lu, uu) = box_bounds(&self.u_set, "U")?;
        let (lv, uv) = box_bounds(&self.v_set, "V")?;
        let radius = lu
            .iter()
            .zip(&uu)
            .chain(lv.iter().zip(&uv))
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        let (nu, nv) = (self.n_u(), self.n_v());
        Ok(match self.payoff.blocks(nu, nv) {
            Some((p, k, r, a, b)) => {
                let m = block_matrix(&p, k, &r);
                spectral_norm(&m) * radius + (a.norm_squared() + b.norm_squared()).sqrt()
            }
            None => f64::INFINITY,
        })
    }
}

/// `[[P, K], [−Kᵀ, R]]`
fn block_matrix(p: &DMatrix<f64>, k: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let (nu, nv) = k.shape();
    let mut m = DMatrix::zeros(nu + nv, nu + nv);
    m.view_mut((0, 0), (nu, nu)).copy_from(p);
    m.view_mut((0, nu), (nu, nv)).copy_from(k);
    m.view_mut((nu, 0), (nv, nu)).copy_from(&(-k.transpose()));
    m.view_mut((nu, nu), (nv, nv)).copy_from(r);
    m
}

/// The variational inequality over `W = U × V` with `F(w) = (∇_u f, −∇_v f)`
/// and the coupling constraints.
pub fn saddle_to_vi(problem: &SaddleProblem) -> Result<ProblemInstance> {
    problem.validate()?;
    let (nu, nv) = (problem.n_u(), problem.n_v());
    let n = nu + nv;
    let (mut lower, mut upper) = box_bounds(&problem.u_set, "U")?;
    let (lv, uv) = box_bounds(&problem.v_set, "V")?;
    lower.extend(lv);
    upper.extend(uv);
    let set = SimpleSet::new_box(lower, upper)?;
    let operator = match &problem.payoff {
        Payoff::Custom {
            gradient, lipschitz, ..
        } => {
            let gradient = gradient.clone();
            let func: crate::problem::OperatorFn = Arc::new(move |w: &DVector<f64>| {
                let (u, v) = (w.rows(0, nu).into_owned(), w.rows(nu, nv).into_owned());
                let (gu, gv) = gradient(&u, &v);
                SaddleProblem::stacked(&gu, &(-gv))
            });
            Operator::custom(n, *lipschitz, 0.0, func)?
        }
        payoff => {
            let (p, k, r, a, b) = payoff.blocks(nu, nv).expect("built-in payoff");
            Operator::affine(block_matrix(&p, k, &r), SaddleProblem::stacked(a, &(-b)))?
        }
    };
    let constraints = ConstraintSet::new(n, problem.coupling.clone(), &set)?;
    let instance = ProblemInstance::new(problem.label.clone(), set, operator, constraints)?;
    match &problem.known {
        Some((w, lambda)) => instance.with_known_solution(w.clone(), lambda.clone()),
        None => Ok(instance),
    }
}

fn check_point(problem: &SaddleProblem, w: &DVector<f64>, what: &str) -> Result<()> {
    if w.len() != problem.n_u() + problem.n_v() {
        return Err(FcviError::Input(format!("{what} has dimension {}", w.len())));
    }
    Ok(())
}

/// `max_{(u,v) ∈ probes} f(û, v) − f(u, v̂)`: a lower bound on the saddle gap.
pub fn saddle_gap(problem: &SaddleProblem, w_hat: &DVector<f64>, probes: &[DVector<f64>]) -> Result<f64> {
    check_point(problem, w_hat, "ŵ")?;
    if probes.is_empty() {
        return Err(FcviError::Input("saddle gap needs at least one probe".into()));
    }
    let (u_hat, v_hat) = problem.split(w_hat);
    let mut best = f64::NEG_INFINITY;
    for (i, w) in probes.iter().enumerate() {
        check_point(problem, w, &format!("probe {i}"))?;
        let (u, v) = problem.split(w);
        if !problem.u_set.contains(&u, PROBE_SET_TOL)
            || !problem.v_set.contains(&v, PROBE_SET_TOL)
            || problem.coupling_values(w).any(|g| g > PROBE_FEASIBILITY_TOL)
        {
            return Err(FcviError::Input(format!(
                "probe {i} is not feasible for W ∩ {{g <= 0}}"
            )));
        }
        best = best.max(problem.value(&u_hat, &v) - problem.value(&u, &v_hat));
    }
    Ok(best)
}

/// Saddle gap over the feasible lattice of spacing `step` (`n_u + n_v <= 3`).
pub fn saddle_grid_gap(problem: &SaddleProblem, w_hat: &DVector<f64>, step: f64) -> Result<f64> {
    let instance = saddle_to_vi(problem)?;
    let grid = feasible_grid(&instance, step)?;
    saddle_gap(problem, w_hat, &grid)
}

/// Outcome of the grid check of the generalized Nash equilibrium conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct GneReport {
    pub passed: bool,
    pub tol: f64,
    /// `f(û, v̂) − min_u f(u, v̂)` over the u-player's slice.
    pub u_improvement: f64,
    /// `max_v f(û, v) − f(û, v̂)` over the v-player's slice.
    pub v_improvement: f64,
    pub best_u: Option<DVector<f64>>,
    pub best_v: Option<DVector<f64>>,
}

impl GneReport {
    pub fn max_improvement(&self) -> f64 {
        self.u_improvement.max(self.v_improvement)
    }
}

fn box_lattice(set: &SimpleSet, step: f64) -> Result<Vec<DVector<f64>>> {
    let (lower, upper) = box_bounds(set, "player set")?;
    let axes: Vec<Vec<f64>> = lower.iter().zip(&upper).map(|(l, u)| lattice(*l, *u, step)).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    Ok((0..total)
        .map(|mut idx| {
            DVector::from_iterator(
                axes.len(),
                axes.iter().map(|axis| {
                    let x = axis[idx % axis.len()];
                    idx /= axis.len();
                    x
                }),
            )
        })
        .collect())
}

/// Best deviation of one player over its constrained slice, with the other
/// player frozen. `sign` is +1 for the minimizing player, −1 for the maximizer.
fn best_deviation(
    problem: &SaddleProblem,
    candidates: &[DVector<f64>],
    make_w: impl Fn(&DVector<f64>) -> DVector<f64> + Sync,
    payoff: impl Fn(&DVector<f64>) -> f64 + Sync,
    sign: f64,
) -> Option<(f64, DVector<f64>)> {
    candidates
        .par_iter()
        .filter(|c| problem.coupling_values(&make_w(c)).all(|g| g <= 0.0))
        .map(|c| (sign * payoff(c), c.clone()))
        .reduce_with(|a, b| {
            if b.0 < a.0 || (b.0 == a.0 && b.1.as_slice() < a.1.as_slice()) {
                b
            } else {
                a
            }
        })
}

/// Checks by grid enumeration that neither player can improve by more than
/// `tol` within its own constrained slice.
pub fn check_gne(problem: &SaddleProblem, w_hat: &DVector<f64>, tol: f64, step: f64) -> Result<GneReport> {
    problem.validate()?;
    check_point(problem, w_hat, "ŵ")?;
    if problem.n_u() > MAX_GRID_DIM || problem.n_v() > MAX_GRID_DIM {
        return Err(FcviError::Unsupported(format!(
            "GNE grid check supports player dimensions <= {MAX_GRID_DIM}"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(FcviError::Parameter(format!("grid step must be > 0, got {step}")));
    }
    let (u_hat, v_hat) = problem.split(w_hat);
    let here = problem.value(&u_hat, &v_hat);
    let us = box_lattice(&problem.u_set, step)?;
    let vs = box_lattice(&problem.v_set, step)?;
    let best_u = best_deviation(
        problem,
        &us,
        |u| SaddleProblem::stacked(u, &v_hat),
        |u| problem.value(u, &v_hat),
        1.0,
    );
    let best_v = best_deviation(
        problem,
        &vs,
        |v| SaddleProblem::stacked(&u_hat, v),
        |v| problem.value(&u_hat, v),
        -1.0,
    );
    let u_improvement = best_u.as_ref().map_or(0.0, |(f, _)| (here - f).max(0.0));
    let v_improvement = best_v.as_ref().map_or(0.0, |(f, _)| (-f - here).max(0.0));
    Ok(GneReport {
        passed: u_improvement <= tol && v_improvement <= tol,
        tol,
        u_improvement,
        v_improvement,
        best_u: best_u.map(|b| b.1),
        best_v: best_v.map(|b| b.1),
    })
}

/// CG1: `f(u, v) = uv − 1.25u + 0.75v` on `U = V = [−1, 1]`, coupled by
/// `u + v − 0.5 <= 0`; saddle point `(0.25, 0.25)` with multiplier 1.
pub fn cg1() -> SaddleProblem {
    SaddleProblem {
        label: "CG1".into(),
        u_set: SimpleSet::symmetric_box(1, 1.0).expect("valid box"),
        v_set: SimpleSet::symmetric_box(1, 1.0).expect("valid box"),
        payoff: Payoff::Bilinear {
            k: DMatrix::from_element(1, 1, 1.0),
            a: DVector::from_element(1, -1.25),
            b: DVector::from_element(1, 0.75),
        },
        coupling: vec![ConstraintFn::affine(DVector::from_column_slice(&[1.0, 1.0]), 0.5).expect("finite")],
        known: Some((DVector::from_column_slice(&[0.25, 0.25]), DVector::from_element(1, 1.0))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffDocument {
    Bilinear {
        k: Vec<Vec<f64>>,
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Quadratic {
        p: Vec<Vec<f64>>,
        k: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleKnownDocument {
    pub w: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// JSON form of a [`SaddleProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleDocument {
    pub label: String,
    pub u_set: SimpleSet,
    pub v_set: SimpleSet,
    pub payoff: PayoffDocument,
    #[serde(default)]
    pub coupling: Vec<ConstraintDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<SaddleKnownDocument>,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

impl SaddleDocument {
    pub fn from_problem(problem: &SaddleProblem) -> Result<Self> {
        let payoff = match &problem.payoff {
            Payoff::Bilinear { k, a, b } => PayoffDocument::Bilinear {
                k: rows_of(k),
                a: vec_of(a),
                b: vec_of(b),
            },
            Payoff::Quadratic { p, k, r, a, b } => PayoffDocument::Quadratic {
                p: rows_of(p),
                k: rows_of(k),
                r: rows_of(r),
                a: vec_of(a),
                b: vec_of(b),
            },
            Payoff::Custom { .. } => {
                return Err(FcviError::Unsupported("custom payoffs cannot be serialized".into()));
            }
        };
        Ok(Self {
            label: problem.label.clone(),
            u_set: problem.u_set.clone(),
            v_set: problem.v_set.clone(),
            payoff,
            coupling: problem.coupling.iter().map(ConstraintDocument::from_fn).collect(),
            known_solution: problem.known.as_ref().map(|(w, l)| SaddleKnownDocument {
                w: vec_of(w),
                lambda: vec_of(l),
            }),
        })
    }

    pub fn to_problem(&self) -> Result<SaddleProblem> {
        let (nu, nv) = (self.u_set.dim(), self.v_set.dim());
        let matrix = |rows: &[Vec<f64>], r: usize, c: usize, what: &str| -> Result<DMatrix<f64>> {
            let m = matrix_from_rows(rows, what)?;
            // An empty row list reads as 0 × 0.
            if m.shape() != (r, c) && !(rows.is_empty() && r * c == 0) {
                return Err(FcviError::Input(format!(
                    "{what} must be {r} × {c}, got {:?}",
                    m.shape()
                )));
            }
            Ok(if rows.is_empty() { DMatrix::zeros(r, c) } else { m })
        };
        let payoff = match &self.payoff {
            PayoffDocument::Bilinear { k, a, b } => Payoff::Bilinear {
                k: matrix(k, nu, nv, "payoff K")?,
                a: DVector::from_vec(a.clone()),
                b: DVector::from_vec(b.clone()),
            },
            PayoffDocument::Quadratic { p, k, r, a, b } => Payoff::Quadratic {
                p: matrix(p, nu, nu, "payoff P")?,
                k: matrix(k, nu, nv, "payoff K")?,
                r: matrix(r, nv, nv, "payoff R")?,
                a: DVector::from_vec(a.clone()),
                b: DVector::from_vec(b.clone()),
            },
        };
        let coupling = self
            .coupling
            .iter()
            .enumerate()
            .map(|(j, c)| c.to_fn(j))
            .collect::<Result<Vec<_>>>()?;
        let problem = SaddleProblem {
            label: self.label.clone(),
            u_set: self.u_set.clone(),
            v_set: self.v_set.clone(),
            payoff,
            coupling,
            known: self
                .known_solution
                .as_ref()
                .map(|k| (DVector::from_vec(k.w.clone()), DVector::from_vec(k.lambda.clone()))),
        };
        problem.validate()?;
        Ok(problem)
    }
}

pub fn saddle_from_json(text: &str) -> Result<SaddleProblem> {
    let doc: SaddleDocument = serde_json::from_str(text).map_err(|source| FcviError::Json { path: None, source })?;
    doc.to_problem()
}

pub fn saddle_to_json(problem: &SaddleProblem) -> Result<String> {
    serde_json::to_string_pretty(&SaddleDocument::from_problem(problem)?)
        .map_err(|source| FcviError::Json { path: None, source })
}

pub fn load_saddle(path: impl AsRef<Path>) -> Result<SaddleProblem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FcviError::io(path, e))?;
    let doc: SaddleDocument = serde_json::from_str(&text).map_err(|source| FcviError::Json {
        path: Some(path.display().to_string()),
        source,
    })?;
    doc.to_problem()
}
