use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const TRACE_CSV_HEADER: &str = "t,gamma_sum,infeas,gap_restricted,lambda_norm,eta,wall_s";

/// One checkpoint: criteria evaluated at the ergodic average `x̄_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    /// `Γ_t = Σ_{i<t} γ_i`
    pub gamma_sum: f64,
    pub infeas: f64,
    pub gap_restricted: f64,
    /// `‖λᵗ‖`
    pub lambda_norm: f64,
    /// Step size used in the last iteration.
    pub eta: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub instance: String,
    pub method: String,
    pub policy: String,
    pub seed: u64,
    pub horizon: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t, r.gamma_sum, r.infeas, r.gap_restricted, r.lambda_norm, r.eta, r.wall_s
            );
        }
        out
    }

    /// Checks the ordering and sign invariants; returns the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, r) in self.records.iter().enumerate() {
            if !(r.gamma_sum > 0.0) {
                return Err(format!("record {i}: Γ_t = {} is not positive", r.gamma_sum));
            }
            if !(r.infeas >= 0.0) {
                return Err(format!("record {i}: infeasibility {} is negative", r.infeas));
            }
            if !r.gap_restricted.is_finite() {
                return Err(format!("record {i}: restricted gap is not finite"));
            }
            if i > 0 {
                let prev = &self.records[i - 1];
                if r.t <= prev.t {
                    return Err(format!("record {i}: t = {} does not increase", r.t));
                }
                if r.gamma_sum < prev.gamma_sum {
                    return Err(format!("record {i}: Γ_t decreased"));
                }
            }
        }
        Ok(())
    }
}

/// `{1, 2, 4, ...} ∪ {horizon}`, all at most `horizon`.
pub fn geometric_checkpoints(horizon: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 1usize;
    while t < horizon {
        out.push(t);
        t *= 2;
    }
    if horizon > 0 {
        out.push(horizon);
    }
    out
}
