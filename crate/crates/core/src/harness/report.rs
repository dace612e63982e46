use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::run::{ErrorKind, Summary};
use crate::error::{FcviError, Result};
use crate::metrics::ErrorChannel;

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub instance: String,
    pub method: String,
    pub policy: String,
    pub horizon: usize,
    pub infeasibility: Option<f64>,
    pub gap: Option<f64>,
    /// Standard errors over seeds (0 for a single seed).
    pub infeasibility_stderr: Option<f64>,
    pub gap_stderr: Option<f64>,
    pub infeasibility_slope: Option<f64>,
    pub gap_slope: Option<f64>,
    pub bound_infeasibility: Option<f64>,
    pub bound_gap: Option<f64>,
    /// Errors at most the bound at every horizon; `None` without a bound.
    pub within_bound: Option<bool>,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub error_kind: ErrorKind,
    pub rows: Vec<ReportRow>,
}

impl ReportRow {
    pub fn from_summary(s: &Summary) -> Result<Self> {
        let last = s
            .horizons
            .last()
            .ok_or_else(|| FcviError::Input(format!("summary {:?} has no horizons", s.name)))?;
        let flags: Vec<Option<bool>> = s.horizons.iter().map(|h| h.within_bound).collect();
        let within_bound = if flags.iter().all(Option::is_some) {
            Some(flags.iter().all(|f| *f == Some(true)))
        } else {
            None
        };
        Ok(Self {
            name: s.name.clone(),
            instance: s.instance.clone(),
            method: s.method.clone(),
            policy: s.policy.clone(),
            horizon: last.horizon,
            infeasibility: last.infeasibility.map(|x| x.mean),
            gap: last.gap.map(|x| x.mean),
            infeasibility_stderr: last.infeasibility.map(|x| x.stderr),
            gap_stderr: last.gap.map(|x| x.stderr),
            infeasibility_slope: s.fit(ErrorChannel::Infeasibility).map(|f| f.slope),
            gap_slope: s.fit(ErrorChannel::Gap).map(|f| f.slope),
            bound_infeasibility: last.bound.as_ref().map(|b| b.infeasibility),
            bound_gap: last.bound.as_ref().map(|b| b.gap),
            within_bound,
            failed_cells: s.failed_cells(),
        })
    }
}

/// Builds the table; pointwise and expectation summaries are not comparable
/// and are refused together.
pub fn build_report(summaries: &[Summary]) -> Result<Report> {
    let first = summaries
        .first()
        .ok_or_else(|| FcviError::Input("report needs at least one summary".into()))?;
    if let Some(other) = summaries.iter().find(|s| s.error_kind != first.error_kind) {
        return Err(FcviError::Input(format!(
            "cannot mix pointwise and expectation errors ({:?} vs {:?})",
            first.name, other.name
        )));
    }
    Ok(Report {
        error_kind: first.error_kind,
        rows: summaries.iter().map(ReportRow::from_summary).collect::<Result<_>>()?,
    })
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"))
}

fn slope(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "NO",
        None => "-",
    }
}

pub const REPORT_CSV_HEADER: &str = "name,instance,method,policy,horizon,infeasibility,gap,infeasibility_stderr,gap_stderr,infeasibility_slope,gap_slope,bound_infeasibility,bound_gap,within_bound,failed_cells";

impl Report {
    pub fn to_text(&self) -> String {
        let head = [
            "name", "instance", "method", "policy", "T", "infeas", "gap", "se_i", "se_g", "slope_i", "slope_g",
            "bound_i", "bound_g", "ok", "failed",
        ];
        let cells: Vec<[String; 15]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    r.instance.clone(),
                    r.method.clone(),
                    r.policy.clone(),
                    r.horizon.to_string(),
                    num(r.infeasibility),
                    num(r.gap),
                    num(r.infeasibility_stderr),
                    num(r.gap_stderr),
                    slope(r.infeasibility_slope),
                    slope(r.gap_slope),
                    num(r.bound_infeasibility),
                    num(r.bound_gap),
                    flag(r.within_bound).to_string(),
                    r.failed_cells.to_string(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..head.len())
            .map(|i| {
                cells
                    .iter()
                    .map(|c| c[i].len())
                    .chain([head[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!(
            "errors: {}\n",
            match self.error_kind {
                ErrorKind::Pointwise => "pointwise",
                ErrorKind::Expectation => "mean over seeds",
            }
        );
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &head);
        for c in &cells {
            line(&mut out, &c.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.instance,
                r.method,
                r.policy,
                r.horizon,
                opt(r.infeasibility),
                opt(r.gap),
                opt(r.infeasibility_stderr),
                opt(r.gap_stderr),
                opt(r.infeasibility_slope),
                opt(r.gap_slope),
                opt(r.bound_infeasibility),
                opt(r.bound_gap),
                r.within_bound.map_or("", |b| if b { "true" } else { "false" }),
                r.failed_cells
            );
        }
        out
    }
}
