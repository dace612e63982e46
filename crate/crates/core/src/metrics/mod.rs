//! Convergence criteria, grid oracles, rate fitting and closed-form bounds.

pub mod bounds;
pub(crate) mod gap;
mod rate;
mod trace;

pub use gap::{
    brute_force_weak_gap, default_probes, feasible_grid, infeasibility, is_feasible, lagrangian_gap,
    positive_part_norm, restricted_weak_gap, ProbeSet, DEFAULT_PROBE_SEED, DEFAULT_SAMPLED_PROBES, MAX_GRID_DIM,
    PROBE_FEASIBILITY_TOL, PROBE_SET_TOL,
};
pub use rate::{fit_power_law, fit_rate, ErrorChannel, RateFit, ERROR_FLOOR, MIN_TRACE_POINTS};
pub use trace::{geometric_checkpoints, ConvergenceTrace, TraceMeta, TraceRecord, TRACE_CSV_HEADER};
