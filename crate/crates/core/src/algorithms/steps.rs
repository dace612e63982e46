use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::prox::{prox_dual, prox_primal};
use super::schedule::StepParams;
use crate::error::{FcviError, Result};
use crate::oracles::{sample_operator, stochastic_linearize, StochasticOracleSpec, Stream};
use crate::problem::{linearize_constraints, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Operator constraint extrapolation.
    Opconex,
    /// Stochastic operator, exact constraints.
    Stopconex,
    /// Stochastic operator and constraints.
    Fstopconex,
    /// Adaptive Lagrangian extrapolation.
    Adlagex,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Opconex => "opconex",
            Method::Stopconex => "stopconex",
            Method::Fstopconex => "fstopconex",
            Method::Adlagex => "adlagex",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCalls {
    /// Operator evaluations or draws.
    pub operator: usize,
    /// Constraint evaluations or draws `(g, ∇g)`.
    pub constraint: usize,
}

/// Iterates, one- and two-step memory, cached oracle values and ergodic sums.
///
/// `f`, `g`, `jac` hold the values at `x`; the `_prev` fields hold those at
/// `x_prev`, and so on. For the stochastic methods `f` is the cached draw
/// `𝔉ᵗ`, while `g` and `jac` are always exact (noise is added on use).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: usize,
    pub x: DVector<f64>,
    pub x_prev: DVector<f64>,
    pub x_prev2: DVector<f64>,
    pub lambda: DVector<f64>,
    pub lambda_prev: DVector<f64>,
    pub f: DVector<f64>,
    pub f_prev: DVector<f64>,
    pub g: DVector<f64>,
    pub g_prev: DVector<f64>,
    pub g_prev2: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub jac_prev: DMatrix<f64>,
    pub jac_prev2: DMatrix<f64>,
    /// `ℓ_g(xᵗ)`
    pub lin: DVector<f64>,
    /// `ℓ_g(xᵗ⁻¹)`
    pub lin_prev: DVector<f64>,
    /// `max_{i≤t} ‖λⁱ‖`
    pub max_lambda_norm: f64,
    pub x_sum: DVector<f64>,
    pub lambda_sum: DVector<f64>,
    pub gamma_sum: f64,
    pub calls: OracleCalls,
}

impl SolverState {
    /// `x⁻² = x⁻¹ = x⁰`, `λ⁻¹ = λ⁰ = 0`, `ℓ_g(x⁻¹) = ℓ_g(x⁰) = g(x⁰)`, and
    /// for the stochastic methods `𝔉⁻¹ = 𝔉⁰`.
    pub fn init(
        instance: &ProblemInstance,
        method: Method,
        noise: &StochasticOracleSpec,
        x0: &DVector<f64>,
    ) -> Result<Self> {
        if x0.len() != instance.dim() {
            return Err(FcviError::Input(format!(
                "x0 has dimension {}, instance has {}",
                x0.len(),
                instance.dim()
            )));
        }
        if !instance.in_set(x0, 1e-12) {
            return Err(FcviError::Input(format!("x0 = {:?} is not in X", x0.as_slice())));
        }
        let m = instance.num_constraints();
        let f = match method {
            Method::Opconex | Method::Adlagex => instance.operator().eval(x0),
            Method::Stopconex | Method::Fstopconex => sample_operator(instance, noise, x0, 0, Stream::Primary),
        };
        let g = instance.constraints().values(x0);
        let jac = instance.constraints().jacobian(x0);
        let lin = linearize_constraints(&g, &jac, x0, x0);
        Ok(Self {
            t: 0,
            x: x0.clone(),
            x_prev: x0.clone(),
            x_prev2: x0.clone(),
            lambda: DVector::zeros(m),
            lambda_prev: DVector::zeros(m),
            f_prev: f.clone(),
            f,
            g_prev: g.clone(),
            g_prev2: g.clone(),
            g,
            jac_prev: jac.clone(),
            jac_prev2: jac.clone(),
            jac,
            lin_prev: lin.clone(),
            lin,
            max_lambda_norm: 0.0,
            x_sum: DVector::zeros(x0.len()),
            lambda_sum: DVector::zeros(m),
            gamma_sum: 0.0,
            calls: OracleCalls {
                operator: 1,
                constraint: 1,
            },
        })
    }

    /// `x̄ = Σγ_i x^{i+1} / Σγ_i`, or `x` before the first step.
    pub fn x_bar(&self) -> DVector<f64> {
        if self.gamma_sum > 0.0 {
            &self.x_sum / self.gamma_sum
        } else {
            self.x.clone()
        }
    }

    /// `λ̄ = Σγ_i λ^{i+1} / Σγ_i`
    pub fn lambda_bar(&self) -> DVector<f64> {
        if self.gamma_sum > 0.0 {
            &self.lambda_sum / self.gamma_sum
        } else {
            self.lambda.clone()
        }
    }
}

/// `(1+θ) a − θ b`
fn extrapolate(a: &DVector<f64>, b: &DVector<f64>, theta: f64) -> DVector<f64> {
    a * (1.0 + theta) - b * theta
}

fn check_finite(iteration: usize, what: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FcviError::Numerical {
            iteration,
            detail: format!("{what} is not finite: {:?}", v.as_slice()),
        })
    }
}

struct Update {
    x: DVector<f64>,
    lambda: DVector<f64>,
    f: DVector<f64>,
    lin: DVector<f64>,
    operator_calls: usize,
    constraint_calls: usize,
}

fn advance(instance: &ProblemInstance, st: &SolverState, p: &StepParams, u: Update) -> Result<SolverState> {
    check_finite(st.t, "operator value", &u.f)?;
    let g = instance.constraints().values(&u.x);
    let jac = instance.constraints().jacobian(&u.x);
    check_finite(st.t, "constraint value", &g)?;
    let lambda_norm = u.lambda.norm();
    Ok(SolverState {
        t: st.t + 1,
        x_sum: &st.x_sum + &u.x * p.gamma,
        lambda_sum: &st.lambda_sum + &u.lambda * p.gamma,
        gamma_sum: st.gamma_sum + p.gamma,
        x_prev2: st.x_prev.clone(),
        x_prev: st.x.clone(),
        x: u.x,
        lambda_prev: st.lambda.clone(),
        lambda: u.lambda,
        f_prev: st.f.clone(),
        f: u.f,
        g_prev2: st.g_prev.clone(),
        g_prev: st.g.clone(),
        g,
        jac_prev2: st.jac_prev.clone(),
        jac_prev: st.jac.clone(),
        jac,
        lin_prev: st.lin.clone(),
        lin: u.lin,
        max_lambda_norm: st.max_lambda_norm.max(lambda_norm),
        calls: OracleCalls {
            operator: st.calls.operator + u.operator_calls,
            constraint: st.calls.constraint + u.constraint_calls,
        },
    })
}

fn prox_pair(
    instance: &ProblemInstance,
    st: &SolverState,
    p: &StepParams,
    s: &DVector<f64>,
    operator_part: DVector<f64>,
    jac: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let lambda = prox_dual(&st.lambda, s, p.tau)?;
    check_finite(st.t, "multiplier", &lambda)?;
    let d = operator_part + jac * &lambda;
    let x = prox_primal(&st.x, &d, p.eta, instance.set()).map_err(|e| match e {
        FcviError::Input(detail) => FcviError::Numerical {
            iteration: st.t,
            detail,
        },
        other => other,
    })?;
    check_finite(st.t, "primal iterate", &x)?;
    Ok((x, lambda))
}

/// One deterministic iteration:
/// `sᵗ = (1+θ)ℓ_g(xᵗ) − θℓ_g(xᵗ⁻¹)`, `λᵗ⁺¹ = [λᵗ + sᵗ/τ]₊`,
/// `xᵗ⁺¹ = Π_X(xᵗ − [(1+θ)F(xᵗ) − θF(xᵗ⁻¹) + ∇g(xᵗ)λᵗ⁺¹]/η)`.
pub fn opconex_step(instance: &ProblemInstance, st: &SolverState, p: &StepParams) -> Result<SolverState> {
    let s = extrapolate(&st.lin, &st.lin_prev, p.theta);
    let (x, lambda) = prox_pair(instance, st, p, &s, extrapolate(&st.f, &st.f_prev, p.theta), &st.jac)?;
    let lin = linearize_constraints(&st.g, &st.jac, &st.x, &x);
    let f = instance.operator().eval(&x);
    advance(
        instance,
        st,
        p,
        Update {
            x,
            lambda,
            f,
            lin,
            operator_calls: 1,
            constraint_calls: 1,
        },
    )
}

/// As [`opconex_step`] with `F` replaced by one fresh draw `𝔉ᵗ⁺¹` per
/// iteration from the primary stream.
pub fn stopconex_step(
    instance: &ProblemInstance,
    noise: &StochasticOracleSpec,
    st: &SolverState,
    p: &StepParams,
) -> Result<SolverState> {
    let s = extrapolate(&st.lin, &st.lin_prev, p.theta);
    let (x, lambda) = prox_pair(instance, st, p, &s, extrapolate(&st.f, &st.f_prev, p.theta), &st.jac)?;
    let lin = linearize_constraints(&st.g, &st.jac, &st.x, &x);
    let f = sample_operator(instance, noise, &x, st.t + 1, Stream::Primary);
    advance(
        instance,
        st,
        p,
        Update {
            x,
            lambda,
            f,
            lin,
            operator_calls: 1,
            constraint_calls: 1,
        },
    )
}

/// Exact `(g, ∇g)` at a cached point plus the additive noise of draw `(t, stream)`.
fn perturbed(
    noise: &StochasticOracleSpec,
    g: &DVector<f64>,
    jac: &DMatrix<f64>,
    t: usize,
    stream: Stream,
) -> (DVector<f64>, DMatrix<f64>) {
    let mut g = g.clone();
    let mut jac = jac.clone();
    if let Some(d) = noise.value_noise(g.len(), t, stream) {
        g += d;
    }
    if let Some(d) = noise.jacobian_noise(jac.nrows(), jac.ncols(), t, stream) {
        jac += d;
    }
    (g, jac)
}

/// Fully stochastic iteration. The dual step uses the bar sample `ξ̄ᵗ` at
/// both `xᵗ⁻¹` and `xᵗ⁻²`:
/// `ℓᵗ(xᵗ) = 𝔤(xᵗ⁻¹, ξ̄ᵗ) + Γ(xᵗ⁻¹, ξ̄ᵗ)ᵀ(xᵗ − xᵗ⁻¹)` and
/// `ℓᵗ(xᵗ⁻¹) = 𝔤(xᵗ⁻², ξ̄ᵗ) + Γ(xᵗ⁻², ξ̄ᵗ)ᵀ(xᵗ⁻¹ − xᵗ⁻²)`;
/// the primal step uses `Γ(xᵗ, ξᵗ)` from the primary sample.
pub fn fstopconex_step(
    instance: &ProblemInstance,
    noise: &StochasticOracleSpec,
    st: &SolverState,
    p: &StepParams,
) -> Result<SolverState> {
    let t = st.t;
    let (g1, j1) = perturbed(noise, &st.g_prev, &st.jac_prev, t, Stream::Bar);
    let (g2, j2) = perturbed(noise, &st.g_prev2, &st.jac_prev2, t, Stream::Bar);
    let lin_cur = stochastic_linearize(&g1, &j1, &st.x_prev, &st.x);
    let lin_prev = stochastic_linearize(&g2, &j2, &st.x_prev2, &st.x_prev);
    let s = extrapolate(&lin_cur, &lin_prev, p.theta);
    let jac = match noise.jacobian_noise(st.x.len(), st.jac.ncols(), t, Stream::Primary) {
        Some(d) => &st.jac + d,
        None => st.jac.clone(),
    };
    let (x, lambda) = prox_pair(instance, st, p, &s, extrapolate(&st.f, &st.f_prev, p.theta), &jac)?;
    let f = sample_operator(instance, noise, &x, t + 1, Stream::Primary);
    // The exact linearization is kept for inspection only.
    let lin = linearize_constraints(&st.g, &st.jac, &st.x, &x);
    advance(
        instance,
        st,
        p,
        Update {
            x,
            lambda,
            f,
            lin,
            operator_calls: 1,
            constraint_calls: 2,
        },
    )
}

/// Adaptive Lagrangian iteration: `sᵗ = (1+θ)g(xᵗ) − θg(xᵗ⁻¹)`,
/// `qᵗ = (1+θ)[F(xᵗ) + ∇g(xᵗ)λᵗ] − θ[F(xᵗ⁻¹) + ∇g(xᵗ⁻¹)λᵗ⁻¹]`; the dual and
/// primal steps only read the current state.
pub fn adlagex_step(instance: &ProblemInstance, st: &SolverState, p: &StepParams) -> Result<SolverState> {
    let s = extrapolate(&st.g, &st.g_prev, p.theta);
    let cur = &st.f + &st.jac * &st.lambda;
    let prev = &st.f_prev + &st.jac_prev * &st.lambda_prev;
    let q = extrapolate(&cur, &prev, p.theta);
    let lambda = prox_dual(&st.lambda, &s, p.tau)?;
    check_finite(st.t, "multiplier", &lambda)?;
    let x = prox_primal(&st.x, &q, p.eta, instance.set())?;
    check_finite(st.t, "primal iterate", &x)?;
    let lin = linearize_constraints(&st.g, &st.jac, &st.x, &x);
    let f = instance.operator().eval(&x);
    advance(
        instance,
        st,
        p,
        Update {
            x,
            lambda,
            f,
            lin,
            operator_calls: 1,
            constraint_calls: 1,
        },
    )
}

/// Dispatches one iteration of `method`.
pub fn step(
    method: Method,
    instance: &ProblemInstance,
    noise: &StochasticOracleSpec,
    st: &SolverState,
    p: &StepParams,
) -> Result<SolverState> {
    match method {
        Method::Opconex => opconex_step(instance, st, p),
        Method::Stopconex => stopconex_step(instance, noise, st, p),
        Method::Fstopconex => fstopconex_step(instance, noise, st, p),
        Method::Adlagex => adlagex_step(instance, st, p),
    }
}
