//! Step-size policies.
//!
//! The four constant policies use `γ_t = θ_t = 1`, `η_t = L_g B + η` and
//! `τ_t = τ`, with `η` and `τ` set from the instance constants, the
//! multiplier estimate `B`, the horizon `T` and (for the stochastic policies)
//! the noise levels. The adaptive policy grows `η_t` with the largest
//! multiplier seen so far.

use serde::{Deserialize, Serialize};

use crate::error::{FcviError, Result};
use crate::metrics::bounds;
use crate::oracles::StochasticOracleSpec;
use crate::problem::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    /// Deterministic, `B = ‖λ*‖ + 1` taken from the known solution.
    DetKnownLambda,
    /// Deterministic with a user-supplied `B`.
    #[serde(rename = "det_B")]
    DetB,
    /// Stochastic operator.
    #[serde(rename = "stoch_B")]
    StochB,
    /// Stochastic operator, constraint values and gradients.
    #[serde(rename = "fully_stoch_B")]
    FullyStochB,
    /// Multiplier-adaptive steps for the adaptive Lagrangian method.
    Adaptive,
}

impl PolicyName {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::DetKnownLambda => "det_known_lambda",
            PolicyName::DetB => "det_B",
            PolicyName::StochB => "stoch_B",
            PolicyName::FullyStochB => "fully_stoch_B",
            PolicyName::Adaptive => "adaptive",
        }
    }

    pub fn is_deterministic(self) -> bool {
        matches!(
            self,
            PolicyName::DetKnownLambda | PolicyName::DetB | PolicyName::Adaptive
        )
    }
}

/// How the terms of `η` are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    #[default]
    Sum,
    Max,
}

fn default_c() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: PolicyName,
    /// Multiplier estimate; required by the `*_B` policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Robustness constant adding `c√T` to `η`; `None` selects the default
    /// (`L_g D_X` for smooth noiseless runs whose `B` may be too small, else 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default)]
    pub mode: EtaMode,
    #[serde(default = "default_c")]
    pub c1: f64,
    #[serde(default = "default_c")]
    pub c2: f64,
}

impl PolicySpec {
    pub fn new(name: PolicyName) -> Self {
        Self {
            name,
            b: None,
            c: None,
            mode: EtaMode::Sum,
            c1: 6.0,
            c2: 6.0,
        }
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_mode(mut self, mode: EtaMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Step sizes for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub gamma: f64,
    pub theta: f64,
    pub eta: f64,
    pub tau: f64,
}

/// Resolved constant policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSchedule {
    pub policy: PolicyName,
    pub mode: EtaMode,
    pub horizon: usize,
    pub b: f64,
    pub c: f64,
    /// `η` before adding `L_g B`.
    pub eta_base: f64,
    /// `η_t = L_g B + η`
    pub eta: f64,
    pub tau: f64,
}

/// Online schedule `η_t = c₁L + c₂L_g max_{i≤t}‖λⁱ‖`, `γ_t = η₀/η_t`,
/// `θ_t = γ_{t−1}/γ_t`, `τ_t = βη_t`.
///
/// `γ_t` and `θ_t` are adjusted by a few ulps so that the floating-point
/// product `γ_t θ_t` equals `γ_{t−1}` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub c1: f64,
    pub c2: f64,
    pub beta: f64,
    pub l: f64,
    pub l_g: f64,
    pub eta0: f64,
    gamma_prev: f64,
    started: bool,
}

const ULP_SEARCH: usize = 64;

fn exact_theta(gamma_prev: f64, gamma: f64) -> Option<(f64, f64)> {
    let mut g = gamma;
    for _ in 0..ULP_SEARCH {
        let base = gamma_prev / g;
        let mut up = base;
        let mut down = base;
        for _ in 0..4 {
            if g * up == gamma_prev {
                return Some((g, up));
            }
            if g * down == gamma_prev {
                return Some((g, down));
            }
            up = up.next_up();
            down = down.next_down();
        }
        g = g.next_down();
    }
    None
}

impl AdaptiveSchedule {
    pub fn new(l: f64, l_g: f64, m_g: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(FcviError::Config(format!(
                "adaptive policy needs an operator Lipschitz constant L > 0, got {l}"
            )));
        }
        if !(c1 > 0.0 && c2 > 0.0) || c1 / 3.0 < c1 / c2 + 1.0 {
            return Err(FcviError::Config(format!(
                "adaptive constants must satisfy c1/3 >= c1/c2 + 1, got c1 = {c1}, c2 = {c2}"
            )));
        }
        let beta = if m_g > 0.0 {
            12.0 * m_g * m_g / (c1 * c1 * l * l)
        } else {
            1.0
        };
        Ok(Self {
            c1,
            c2,
            beta,
            l,
            l_g,
            eta0: c1 * l,
            gamma_prev: 1.0,
            started: false,
        })
    }

    /// Parameters for the next iteration given `max_{i≤t}‖λⁱ‖`.
    pub fn next(&mut self, max_lambda_norm: f64) -> Result<StepParams> {
        let eta = self.c1 * self.l + self.c2 * self.l_g * max_lambda_norm;
        if !eta.is_finite() {
            return Err(FcviError::Parameter(format!("adaptive η became {eta}")));
        }
        let (gamma, theta) = if !self.started {
            self.started = true;
            (self.eta0 / eta, 1.0)
        } else {
            exact_theta(self.gamma_prev, self.eta0 / eta).ok_or_else(|| {
                FcviError::Parameter(format!(
                    "no θ with γθ = {} exactly near γ = {}",
                    self.gamma_prev,
                    self.eta0 / eta
                ))
            })?
        };
        self.gamma_prev = gamma;
        Ok(StepParams {
            gamma,
            theta,
            eta,
            tau: self.beta * eta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant(ConstantSchedule),
    Adaptive(AdaptiveSchedule),
}

impl StepSchedule {
    pub fn policy(&self) -> PolicyName {
        match self {
            StepSchedule::Constant(c) => c.policy,
            StepSchedule::Adaptive(_) => PolicyName::Adaptive,
        }
    }

    /// Parameters for iteration `t`; `max_lambda_norm` is `max_{i≤t}‖λⁱ‖`
    /// and only matters for the adaptive policy.
    pub fn next(&mut self, max_lambda_norm: f64) -> Result<StepParams> {
        match self {
            StepSchedule::Constant(c) => Ok(StepParams {
                gamma: 1.0,
                theta: 1.0,
                eta: c.eta,
                tau: c.tau,
            }),
            StepSchedule::Adaptive(a) => a.next(max_lambda_norm),
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        match self {
            StepSchedule::Constant(c) => Some(c.horizon),
            StepSchedule::Adaptive(_) => None,
        }
    }
}

fn combine(mode: EtaMode, terms: &[f64]) -> f64 {
    match mode {
        EtaMode::Sum => terms.iter().sum(),
        EtaMode::Max => terms.iter().copied().fold(0.0, f64::max),
    }
}

/// Resolves a policy against an instance, noise model and horizon.
pub fn make_policy(
    spec: &PolicySpec,
    instance: &ProblemInstance,
    noise: &StochasticOracleSpec,
    horizon: usize,
) -> Result<StepSchedule> {
    if horizon == 0 {
        return Err(FcviError::Config("horizon T must be >= 1".into()));
    }
    let k = instance.constants();
    if spec.name == PolicyName::Adaptive {
        if spec.b.is_some() || spec.c.is_some() {
            return Err(FcviError::Config(
                "the adaptive policy takes c1 and c2, not B or c".into(),
            ));
        }
        return Ok(StepSchedule::Adaptive(AdaptiveSchedule::new(
            k.l, k.l_g, k.m_g, spec.c1, spec.c2,
        )?));
    }
    let lambda_star = instance.lambda_star_norm();
    let b = match spec.name {
        PolicyName::DetKnownLambda => {
            if spec.b.is_some() {
                return Err(FcviError::Config(
                    "det_known_lambda sets B = ‖λ*‖+1 itself; use det_B to choose B".into(),
                ));
            }
            lambda_star.ok_or_else(|| FcviError::Config("det_known_lambda needs an instance with a known λ*".into()))?
                + 1.0
        }
        _ => spec
            .b
            .ok_or_else(|| FcviError::Config(format!("policy {} needs a value for B", spec.name.as_str())))?,
    };
    if !(b.is_finite() && b >= 1.0) {
        return Err(FcviError::Config(format!("B must be >= 1, got {b}")));
    }
    let t_sqrt = (horizon as f64).sqrt();
    let d = k.d_x;
    let sigma = noise.sigma_f;
    let sigma_gamma = noise.sigma_gamma_norm();
    let noiseless = noise.is_zero();
    if spec.name.is_deterministic() && !noiseless {
        return Err(FcviError::Config(format!(
            "policy {} is deterministic but the noise model is not zero",
            spec.name.as_str()
        )));
    }
    let may_undershoot = spec.name != PolicyName::DetKnownLambda && lambda_star.is_none_or(|l| b < l + 1.0);
    let c = match spec.c {
        Some(c) if c.is_finite() && c >= 0.0 => c,
        Some(c) => return Err(FcviError::Config(format!("c must be >= 0, got {c}"))),
        None if k.is_smooth() && noiseless && may_undershoot => k.l_g * d,
        None => 0.0,
    };
    let (terms, tau): (Vec<f64>, f64) = match spec.name {
        PolicyName::DetKnownLambda | PolicyName::DetB => (
            vec![
                6.0 * k.l,
                6.0 * k.m_g * b / d,
                k.h * (3.0 * horizon as f64).sqrt() / d,
                k.h_g * b * (3.0 * horizon as f64).sqrt() / d,
            ],
            6.0 * k.m_g * d / b,
        ),
        PolicyName::StochB => (
            vec![
                8.0 * k.l,
                5.0 * k.m_g * b / d,
                2.0 * k.h * t_sqrt / d,
                2.0 * k.h_g * b * t_sqrt / d,
                2.0 * 3f64.sqrt() * sigma * t_sqrt / d,
            ],
            6.0 * k.m_g * d / b,
        ),
        PolicyName::FullyStochB => {
            let noise_levels = bounds::NoiseLevels {
                sigma_f: sigma,
                sigma_g: noise.sigma_g,
                sigma_gamma,
            };
            (
                vec![
                    8.0 * k.l,
                    8.0 * k.m_g * b / d,
                    2.0 * k.h * t_sqrt / d,
                    2.0 * k.h_g * b * t_sqrt / d,
                    2.0 * 2f64.sqrt() * sigma * t_sqrt / d,
                    8.0 * b * sigma_gamma * t_sqrt / d,
                ],
                9.0 * d / b * k.m_g.max(sigma_gamma) + 8.0 * bounds::sigma_xg(&k, &noise_levels) * t_sqrt / b,
            )
        }
        PolicyName::Adaptive => unreachable!("handled above"),
    };
    let eta_base = combine(spec.mode, &terms) + c * t_sqrt;
    if !(eta_base > 0.0 && eta_base.is_finite()) {
        return Err(FcviError::Parameter(format!(
            "policy {} gives η = {eta_base} on this instance; set c > 0",
            spec.name.as_str()
        )));
    }
    // With no constraint curvature the dual step size is arbitrary.
    let tau = if tau > 0.0 { tau } else { 1.0 };
    Ok(StepSchedule::Constant(ConstantSchedule {
        policy: spec.name,
        mode: spec.mode,
        horizon,
        b,
        c,
        eta_base,
        eta: k.l_g * b + eta_base,
        tau,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{canonical, ConstraintFn, ConstraintSet, Operator, SimpleSet};
    use nalgebra::{DMatrix, DVector};

    /// Instance with `L = 1`, `M_g = 1`, `D_X = 2`, smooth.
    fn unit_instance() -> ProblemInstance {
        let set = SimpleSet::symmetric_box(1, 1.0).unwrap();
        let op = Operator::affine(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let g = ConstraintFn::affine(DVector::from_element(1, 1.0), 0.5).unwrap();
        let cons = ConstraintSet::new(1, vec![g], &set).unwrap();
        ProblemInstance::new("unit", set, op, cons).unwrap()
    }

    fn constant(s: StepSchedule) -> ConstantSchedule {
        match s {
            StepSchedule::Constant(c) => c,
            other => panic!("expected constant schedule, got {other:?}"),
        }
    }

    #[test]
    fn det_b_example() {
        let inst = unit_instance();
        let spec = PolicySpec::new(PolicyName::DetB).with_b(2.0).with_c(0.0);
        let s = constant(make_policy(&spec, &inst, &StochasticOracleSpec::default(), 100).unwrap());
        assert_eq!(s.eta_base, 12.0);
        assert_eq!(s.tau, 6.0);
        assert_eq!(s.eta, 12.0);
    }

    #[test]
    fn stoch_b_example() {
        let inst = unit_instance();
        let noise = StochasticOracleSpec {
            sigma_f: 1.0,
            ..StochasticOracleSpec::default()
        };
        let spec = PolicySpec::new(PolicyName::StochB).with_b(2.0);
        let s = constant(make_policy(&spec, &inst, &noise, 100).unwrap());
        assert!((s.eta - (13.0 + 10.0 * 3f64.sqrt())).abs() < 1e-12);
        assert_eq!(s.tau, 6.0);
        assert_eq!(s.c, 0.0);
    }

    #[test]
    fn max_mode_takes_largest_term() {
        let inst = unit_instance();
        let spec = PolicySpec::new(PolicyName::DetB).with_b(2.0).with_mode(EtaMode::Max);
        let s = constant(make_policy(&spec, &inst, &StochasticOracleSpec::default(), 100).unwrap());
        assert_eq!(s.eta_base, 6.0);
    }

    #[test]
    fn known_lambda_uses_lambda_star() {
        let inst = canonical::qc1();
        let s = constant(
            make_policy(
                &PolicySpec::new(PolicyName::DetKnownLambda),
                &inst,
                &StochasticOracleSpec::default(),
                100,
            )
            .unwrap(),
        );
        assert_eq!(s.b, 2.0);
        let k = inst.constants();
        assert!((s.eta - (6.0 * k.l + 12.0 * k.m_g / k.d_x)).abs() < 1e-12);
        assert!((s.tau - 3.0 * k.m_g * k.d_x).abs() < 1e-12);
    }

    #[test]
    fn default_robustness_constant() {
        let inst = canonical::qc2();
        let k = inst.constants();
        let noise = StochasticOracleSpec::default();
        let under = constant(make_policy(&PolicySpec::new(PolicyName::DetB).with_b(1.0), &inst, &noise, 100).unwrap());
        assert_eq!(under.c, k.l_g * k.d_x);
        let over = constant(make_policy(&PolicySpec::new(PolicyName::DetB).with_b(3.0), &inst, &noise, 100).unwrap());
        assert_eq!(over.c, 0.0);
        let ns = canonical::qc1_nonsmooth();
        let s = constant(make_policy(&PolicySpec::new(PolicyName::DetB).with_b(1.0), &ns, &noise, 100).unwrap());
        assert_eq!(s.c, 0.0);
    }

    #[test]
    fn configuration_errors() {
        let inst = unit_instance();
        let noise = StochasticOracleSpec::default();
        let bad_b = PolicySpec::new(PolicyName::DetB).with_b(0.5);
        assert!(matches!(
            make_policy(&bad_b, &inst, &noise, 10),
            Err(FcviError::Config(_))
        ));
        let no_b = PolicySpec::new(PolicyName::StochB);
        assert!(matches!(
            make_policy(&no_b, &inst, &noise, 10),
            Err(FcviError::Config(_))
        ));
        let no_lambda = PolicySpec::new(PolicyName::DetKnownLambda);
        assert!(matches!(
            make_policy(&no_lambda, &inst, &noise, 10),
            Err(FcviError::Config(_))
        ));
        let noisy = StochasticOracleSpec {
            sigma_f: 0.1,
            ..noise.clone()
        };
        let det = PolicySpec::new(PolicyName::DetB).with_b(2.0);
        assert!(matches!(
            make_policy(&det, &inst, &noisy, 10),
            Err(FcviError::Config(_))
        ));
        let mut bad_c = PolicySpec::new(PolicyName::Adaptive);
        bad_c.c2 = 2.0;
        assert!(matches!(
            make_policy(&bad_c, &inst, &noise, 10),
            Err(FcviError::Config(_))
        ));
    }

    #[test]
    fn adaptive_initial_values() {
        let mut a = AdaptiveSchedule::new(1.0, 0.0, 2f64.sqrt(), 6.0, 6.0).unwrap();
        assert!((a.beta - 2.0 / 3.0).abs() < 1e-15);
        let p = a.next(0.0).unwrap();
        assert_eq!(p.eta, 6.0);
        assert!((p.tau - 4.0).abs() < 1e-14);
        assert_eq!((p.gamma, p.theta), (1.0, 1.0));
        let p = a.next(5.0).unwrap();
        assert_eq!((p.gamma, p.theta, p.eta), (1.0, 1.0, 6.0));
    }

    #[test]
    fn exact_theta_holds_on_awkward_ratios() {
        let mut gamma_prev = 1.0;
        let mut eta = 6.0;
        for k in 0..10_000 {
            eta += 1e-3 * ((k * 7919) % 13) as f64 / 7.0;
            let (g, th) = exact_theta(gamma_prev, 6.0 / eta).unwrap();
            assert_eq!(g * th, gamma_prev);
            assert!((g - 6.0 / eta).abs() <= 1e-14 * g);
            gamma_prev = g;
        }
    }
}
