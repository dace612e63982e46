//! The four solvers, their step-size policies and the proximal steps they share.

mod prox;
mod schedule;
mod solver;
mod steps;

pub use prox::{prox_dual, prox_primal};
pub use schedule::{
    make_policy, AdaptiveSchedule, ConstantSchedule, EtaMode, PolicyName, PolicySpec, StepParams, StepSchedule,
};
pub use solver::{check_compatibility, run_solver, RunOptions, RunOutput, Solver};
pub use steps::{adlagex_step, fstopconex_step, opconex_step, step, stopconex_step, Method, OracleCalls, SolverState};
