use serde::{Deserialize, Serialize};

use super::trace::ConvergenceTrace;
use crate::error::{FcviError, Result};

/// Errors below this are treated as having hit the floating-point floor and
/// are left out of fits.
pub const ERROR_FLOOR: f64 = 1e-13;
/// Minimum number of checkpoints for a fit over a single trace.
pub const MIN_TRACE_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorChannel {
    /// `‖[g(x̄)]₊‖`
    Infeasibility,
    /// Probe-restricted weak gap.
    Gap,
}

impl ErrorChannel {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorChannel::Infeasibility => "infeasibility",
            ErrorChannel::Gap => "gap",
        }
    }
}

/// Least-squares fit of `log(error) = intercept + slope * log(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub channel: ErrorChannel,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Number of points the fit used.
    pub points: usize,
}

/// Fits a power law through the points with `error >= ERROR_FLOOR`.
pub fn fit_power_law(channel: ErrorChannel, ts: &[f64], errors: &[f64], min_points: usize) -> Result<RateFit> {
    if ts.len() != errors.len() {
        return Err(FcviError::Fit(format!(
            "{} abscissae but {} errors",
            ts.len(),
            errors.len()
        )));
    }
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(errors)
        .filter(|(t, e)| **t > 0.0 && e.is_finite() && **e >= ERROR_FLOOR)
        .map(|(t, e)| (t.ln(), e.ln()))
        .collect();
    if pts.len() < min_points.max(2) {
        return Err(FcviError::Fit(format!(
            "{} channel has {} usable points, need at least {}",
            channel.as_str(),
            pts.len(),
            min_points.max(2)
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(FcviError::Fit("all points share the same t".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(RateFit {
        channel,
        slope,
        intercept,
        residual,
        points: pts.len(),
    })
}

/// Fit over the last `tail_fraction` of a trace's checkpoints.
pub fn fit_rate(trace: &ConvergenceTrace, channel: ErrorChannel, tail_fraction: f64) -> Result<RateFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(FcviError::Parameter(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let n = trace.records.len();
    let take = ((n as f64) * tail_fraction).ceil() as usize;
    let tail = &trace.records[n - take.min(n)..];
    let ts: Vec<f64> = tail.iter().map(|r| r.t as f64).collect();
    let errors: Vec<f64> = tail
        .iter()
        .map(|r| match channel {
            ErrorChannel::Infeasibility => r.infeas,
            ErrorChannel::Gap => r.gap_restricted,
        })
        .collect();
    fit_power_law(channel, &ts, &errors, MIN_TRACE_POINTS)
}
