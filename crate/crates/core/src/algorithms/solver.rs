use std::time::Instant;

use nalgebra::DVector;

use super::schedule::{make_policy, PolicyName, PolicySpec, StepParams, StepSchedule};
use super::steps::{step, Method, OracleCalls, SolverState};
use crate::error::{FcviError, Result};
use crate::metrics::{
    default_probes, geometric_checkpoints, infeasibility, ConvergenceTrace, ProbeSet, TraceMeta, TraceRecord,
    DEFAULT_PROBE_SEED, DEFAULT_SAMPLED_PROBES,
};
use crate::oracles::StochasticOracleSpec;
use crate::problem::ProblemInstance;

/// Rejects method/policy/noise combinations the methods are not defined for.
pub fn check_compatibility(method: Method, policy: PolicyName, noise: &StochasticOracleSpec) -> Result<()> {
    match (method, policy) {
        (Method::Adlagex, PolicyName::Adaptive) => {}
        (Method::Adlagex, p) => {
            return Err(FcviError::Config(format!(
                "adlagex runs with the adaptive policy, not {}",
                p.as_str()
            )))
        }
        (m, PolicyName::Adaptive) => {
            return Err(FcviError::Config(format!(
                "the adaptive policy is only defined for adlagex, not {}",
                m.as_str()
            )))
        }
        _ => {}
    }
    match method {
        Method::Opconex | Method::Adlagex if !noise.is_zero() => Err(FcviError::Config(format!(
            "{} uses exact oracles; set all noise levels to 0",
            method.as_str()
        ))),
        Method::Stopconex if !noise.constraint_noise_is_zero() => Err(FcviError::Config(
            "stopconex uses exact constraint oracles; sigma_g and sigma_gamma must be 0".into(),
        )),
        _ => Ok(()),
    }
}

/// Iterates one method under a given schedule.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    instance: &'a ProblemInstance,
    method: Method,
    schedule: StepSchedule,
    noise: StochasticOracleSpec,
    state: SolverState,
    last: Option<StepParams>,
}

impl<'a> Solver<'a> {
    pub fn new(
        instance: &'a ProblemInstance,
        method: Method,
        schedule: StepSchedule,
        noise: StochasticOracleSpec,
        x0: &DVector<f64>,
    ) -> Result<Self> {
        check_compatibility(method, schedule.policy(), &noise)?;
        noise.validate(instance.num_constraints())?;
        let state = SolverState::init(instance, method, &noise, x0)?;
        Ok(Self {
            instance,
            method,
            schedule,
            noise,
            state,
            last: None,
        })
    }

    /// Advances by one iteration and returns the parameters used.
    pub fn step(&mut self) -> Result<StepParams> {
        let p = self.schedule.next(self.state.max_lambda_norm)?;
        self.state = step(self.method, self.instance, &self.noise, &self.state, &p)?;
        self.last = Some(p);
        Ok(p)
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn last_params(&self) -> Option<StepParams> {
        self.last
    }

    pub fn x_bar(&self) -> DVector<f64> {
        self.state.x_bar()
    }

    pub fn lambda_bar(&self) -> DVector<f64> {
        self.state.lambda_bar()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Iteration counts at which the trace is recorded; geometric if empty.
    pub checkpoints: Vec<usize>,
    /// Probe points for the restricted gap; default probes if `None`.
    pub probes: Option<ProbeSet>,
    /// Record wall-clock seconds in the trace.
    pub timing: bool,
    /// Stored in the trace metadata.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x_bar: DVector<f64>,
    pub lambda_bar: DVector<f64>,
    pub x_last: DVector<f64>,
    pub lambda_last: DVector<f64>,
    pub trace: ConvergenceTrace,
    pub max_lambda_norm: f64,
    pub gamma_sum: f64,
    pub calls: OracleCalls,
    pub schedule: StepSchedule,
}

/// Runs `horizon` iterations from `x0` and records the ergodic criteria at
/// the checkpoints.
pub fn run_solver(
    instance: &ProblemInstance,
    method: Method,
    policy: &PolicySpec,
    noise: &StochasticOracleSpec,
    x0: &DVector<f64>,
    horizon: usize,
    options: &RunOptions,
) -> Result<RunOutput> {
    check_compatibility(method, policy.name, noise)?;
    let schedule = make_policy(policy, instance, noise, horizon)?;
    let mut solver = Solver::new(instance, method, schedule, noise.clone(), x0)?;
    let probes = match &options.probes {
        Some(p) => p.clone(),
        None => ProbeSet::new(
            instance,
            default_probes(instance, DEFAULT_SAMPLED_PROBES, DEFAULT_PROBE_SEED)?,
        )?,
    };
    let mut checkpoints = if options.checkpoints.is_empty() {
        geometric_checkpoints(horizon)
    } else {
        let mut c: Vec<usize> = options
            .checkpoints
            .iter()
            .copied()
            .filter(|&t| t >= 1 && t <= horizon)
            .collect();
        c.push(horizon);
        c
    };
    checkpoints.sort_unstable();
    checkpoints.dedup();

    let start = Instant::now();
    let mut records = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for t in 1..=horizon {
        let p = solver.step()?;
        if next.peek() == Some(&&t) {
            next.next();
            let x_bar = solver.x_bar();
            let st = solver.state();
            records.push(TraceRecord {
                t,
                gamma_sum: st.gamma_sum,
                infeas: infeasibility(instance, &x_bar)?,
                gap_restricted: probes.gap(&x_bar),
                lambda_norm: st.lambda.norm(),
                eta: p.eta,
                wall_s: if options.timing {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
        }
    }
    let st = solver.state();
    Ok(RunOutput {
        x_bar: st.x_bar(),
        lambda_bar: st.lambda_bar(),
        x_last: st.x.clone(),
        lambda_last: st.lambda.clone(),
        trace: ConvergenceTrace {
            meta: TraceMeta {
                instance: instance.label().to_string(),
                method: method.as_str().to_string(),
                policy: policy.name.as_str().to_string(),
                seed: options.seed,
                horizon,
            },
            records,
        },
        max_lambda_norm: st.max_lambda_norm,
        gamma_sum: st.gamma_sum,
        calls: st.calls,
        schedule: solver.schedule().clone(),
    })
}
