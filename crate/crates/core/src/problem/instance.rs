use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::constraints::ConstraintSet;
use super::operator::Operator;
use super::set::SimpleSet;
use crate::error::{FcviError, Result};

/// Tolerance for the known-solution invariants (feasibility, slackness,
/// stationarity).
pub const KKT_TOL: f64 = 1e-10;

/// Lipschitz-type constants the step-size policies consume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// `L`
    pub l: f64,
    /// `H`
    pub h: f64,
    /// `L_g`
    pub l_g: f64,
    /// `H_g`
    pub h_g: f64,
    /// `M_g`
    pub m_g: f64,
    /// `D_X`
    pub d_x: f64,
}

impl ProblemConstants {
    pub fn is_smooth(&self) -> bool {
        self.h == 0.0 && self.h_g == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownSolution {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
}

/// Residuals of the KKT system at a candidate `(x*, lambda*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// Distance of `x*` outside `X` (zero when inside).
    pub set_violation: f64,
    /// `max_j [g_j(x*)]_+`
    pub primal_infeasibility: f64,
    /// `max_j [-lambda*_j]_+`
    pub dual_infeasibility: f64,
    /// `max_j |lambda*_j g_j(x*)|`
    pub complementarity: f64,
    /// `||F(x*) + grad g(x*) lambda*||` at interior points, otherwise the
    /// natural residual `||x* - P_X(x* - r)||`.
    pub stationarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.set_violation,
            self.primal_infeasibility,
            self.dual_infeasibility,
            self.complementarity,
            self.stationarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// A function-constrained VI: find `x*` in `X ∩ {g <= 0}` with
/// `<F(x*), x - x*> >= 0` for every feasible `x`.
///
/// Immutable after construction; clone or share it freely across runs.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    label: String,
    set: SimpleSet,
    operator: Operator,
    constraints: ConstraintSet,
    known: Option<KnownSolution>,
    constants: ProblemConstants,
}

impl ProblemInstance {
    pub fn new(
        label: impl Into<String>,
        set: SimpleSet,
        operator: Operator,
        constraints: ConstraintSet,
    ) -> Result<Self> {
        set.validate()?;
        let n = set.dim();
        if operator.dim() != n {
            return Err(FcviError::Input(format!(
                "operator dimension {} does not match set dimension {n}",
                operator.dim()
            )));
        }
        if constraints.dim() != n {
            return Err(FcviError::Input(format!(
                "constraint dimension {} does not match set dimension {n}",
                constraints.dim()
            )));
        }
        let constants = ProblemConstants {
            l: operator.lipschitz(),
            h: operator.nonsmooth_bound(),
            l_g: constraints.smoothness(),
            h_g: constraints.nonsmoothness(),
            m_g: constraints.jacobian_bound(),
            d_x: set.diameter(),
        };
        let mut label = label.into();
        if operator.is_custom() && !label.contains("[custom]") {
            label.push_str(" [custom]");
        }
        Ok(Self {
            label,
            set,
            operator,
            constraints,
            known: None,
            constants,
        })
    }

    /// Attach a known KKT pair; rejected unless every residual is within
    /// [`KKT_TOL`].
    pub fn with_known_solution(mut self, x: DVector<f64>, lambda: DVector<f64>) -> Result<Self> {
        if x.len() != self.dim() || lambda.len() != self.num_constraints() {
            return Err(FcviError::Input(format!(
                "known solution has sizes ({}, {}), expected ({}, {})",
                x.len(),
                lambda.len(),
                self.dim(),
                self.num_constraints()
            )));
        }
        let res = self.kkt_residuals(&x, &lambda);
        if res.max() > KKT_TOL {
            return Err(FcviError::Input(format!(
                "known solution violates the KKT conditions: {res:?}"
            )));
        }
        self.known = Some(KnownSolution { x, lambda });
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set(&self) -> &SimpleSet {
        &self.set
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn known_solution(&self) -> Option<&KnownSolution> {
        self.known.as_ref()
    }

    pub fn constants(&self) -> ProblemConstants {
        self.constants
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// `||lambda*||`, if known.
    pub fn lambda_star_norm(&self) -> Option<f64> {
        self.known.as_ref().map(|k| k.lambda.norm())
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(FcviError::Input(format!(
                "dimension mismatch: instance has dimension {}, point has {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn eval_operator(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        Ok(self.operator.eval(x))
    }

    pub fn eval_constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        Ok(self.constraints.values(x))
    }

    /// Column-stacked (sub)gradients, n x m.
    pub fn eval_constraint_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        Ok(self.constraints.jacobian(x))
    }

    /// True when `x` lies in `X` within `tol`; evaluation is allowed anywhere,
    /// callers use this to flag points outside.
    pub fn in_set(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.set.contains(x, tol)
    }

    pub fn kkt_residuals(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> KktResiduals {
        let g = self.constraints.values(x);
        let jac = self.constraints.jacobian(x);
        let projected = self.set.project_unchecked(x);
        let set_violation = (x - &projected).norm();
        let primal_infeasibility = g.iter().fold(0.0f64, |m, v| m.max(*v));
        let dual_infeasibility = lambda.iter().fold(0.0f64, |m, v| m.max(-v));
        let complementarity = g
            .iter()
            .zip(lambda.iter())
            .fold(0.0f64, |m, (gj, lj)| m.max((gj * lj).abs()));
        let residual = self.operator.eval(x) + &jac * lambda;
        let stationarity = if self.set.in_relative_interior(x, 0.0) {
            match self.set {
                // Normal cone of the simplex at relative-interior points is span{1}.
                SimpleSet::Simplex { .. } => {
                    let mean = residual.mean();
                    residual.map(|r| r - mean).norm()
                }
                _ => residual.norm(),
            }
        } else {
            (x - self.set.project_unchecked(&(x - &residual))).norm()
        };
        KktResiduals {
            set_violation,
            primal_infeasibility,
            dual_infeasibility,
            complementarity,
            stationarity,
        }
    }

    /// Residuals of the attached known solution, if any.
    pub fn known_solution_residuals(&self) -> Option<KktResiduals> {
        self.known.as_ref().map(|k| self.kkt_residuals(&k.x, &k.lambda))
    }
}
