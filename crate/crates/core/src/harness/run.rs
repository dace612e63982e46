use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ResolvedExperiment;
use crate::algorithms::{
    make_policy, run_solver, EtaMode, OracleCalls, PolicyName, RunOptions, RunOutput, StepSchedule,
};
use crate::error::{FcviError, Result};
use crate::metrics::bounds::{self, ChannelBounds};
use crate::metrics::{default_probes, feasible_grid, fit_power_law, ErrorChannel, ProbeSet, RateFit};
use crate::oracles::StochasticOracleSpec;
use crate::problem::{ProblemConstants, ProblemInstance};

/// Minimum number of horizons for a fit across horizons.
pub const MIN_HORIZON_POINTS: usize = 3;

/// Whether the errors are pointwise (deterministic runs) or expectations
/// estimated by a mean over seeds (stochastic runs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Pointwise,
    Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
    /// `std / √count`
    pub stderr: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            stderr: std / n.sqrt(),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub horizon: usize,
    pub seed: u64,
    /// `None` when the run succeeded.
    pub error: Option<String>,
    pub infeasibility: Option<f64>,
    pub gap: Option<f64>,
    pub max_lambda_norm: Option<f64>,
    pub gamma_sum: Option<f64>,
    pub calls: Option<OracleCalls>,
    pub trace_file: Option<String>,
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// A theoretical bound with the name of the form it was evaluated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub form: String,
    pub infeasibility: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: usize,
    pub completed: usize,
    pub failed: usize,
    pub infeasibility: Option<Stats>,
    pub gap: Option<Stats>,
    pub bound: Option<BoundValue>,
    /// Mean errors on both channels at most the bound.
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub channel: ErrorChannel,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub instance: String,
    pub method: String,
    pub policy: String,
    pub mode: EtaMode,
    pub error_kind: ErrorKind,
    pub noise: StochasticOracleSpec,
    pub constants: ProblemConstants,
    pub lambda_star_norm: Option<f64>,
    pub x0: Vec<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub horizons: Vec<HorizonSummary>,
    pub fits: Vec<FitEntry>,
    pub cells: Vec<CellResult>,
}

impl Summary {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.ok()).count()
    }

    pub fn fit(&self, channel: ErrorChannel) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|f| f.channel == channel)
            .and_then(|f| f.fit.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| FcviError::Json { path: None, source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FcviError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| FcviError::Json {
            path: Some(path.display().to_string()),
            source,
        })
    }
}

pub fn trace_file_name(horizon: usize, seed: u64) -> String {
    format!("trace_T{horizon}_seed{seed}.csv")
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_DATA_FILE: &str = "plot_data.csv";
pub const PLOT_DATA_HEADER: &str = "horizon,seed,t,series,value";

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| FcviError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| FcviError::io(path, e))
}

/// Probe set from the config: default probes plus an optional feasible grid.
pub fn build_probes(exp: &ResolvedExperiment) -> Result<ProbeSet> {
    let mut points = default_probes(&exp.instance, exp.config.probes.sampled, exp.config.probes.seed)?;
    if let Some(step) = exp.config.probes.grid_step {
        points.extend(feasible_grid(&exp.instance, step)?);
    }
    ProbeSet::new(&exp.instance, points)
}

/// Theoretical bound at horizon `t` for the schedule actually used.
///
/// The stated forms are used where they apply verbatim (sum mode, `c = 0`);
/// other deterministic constant schedules use the form in terms of the
/// realized `η`; the adaptive bound needs the realized `Γ_T`.
pub fn bound_for(
    instance: &ProblemInstance,
    schedule: &StepSchedule,
    noise: &StochasticOracleSpec,
    x0: &nalgebra::DVector<f64>,
    gamma_sum: Option<f64>,
    t: usize,
) -> Option<BoundValue> {
    let known = instance.known_solution()?;
    let lambda = known.lambda.norm();
    let k = instance.constants();
    let named = |form: &str, b: ChannelBounds| {
        (b.infeasibility.is_finite() && b.gap.is_finite()).then(|| BoundValue {
            form: form.to_string(),
            infeasibility: b.infeasibility,
            gap: b.gap,
        })
    };
    match schedule {
        StepSchedule::Adaptive(a) => {
            let x0_dist = (x0 - &known.x).norm();
            named("adaptive", bounds::adaptive(&k, a.c1, lambda, x0_dist, gamma_sum?))
        }
        StepSchedule::Constant(s) => {
            let stated = s.mode == EtaMode::Sum && s.c == 0.0;
            match s.policy {
                PolicyName::DetKnownLambda if stated => {
                    named("det_known_lambda", bounds::det_known_lambda(&k, lambda, t))
                }
                PolicyName::DetB if stated => named("det_B", bounds::det_b(&k, lambda, s.b, t)),
                PolicyName::DetKnownLambda | PolicyName::DetB => {
                    named("det_from_eta", bounds::det_from_eta(&k, lambda, s.b, s.eta_base, t))
                }
                PolicyName::StochB if stated => named("stoch_B", bounds::stoch_b(&k, lambda, s.b, noise.sigma_f, t)),
                PolicyName::FullyStochB if stated => {
                    let levels = bounds::NoiseLevels {
                        sigma_f: noise.sigma_f,
                        sigma_g: noise.sigma_g,
                        sigma_gamma: noise.sigma_gamma_norm(),
                    };
                    named("fully_stoch_B", bounds::fully_stoch_b(&k, lambda, s.b, &levels, t))
                }
                _ => None,
            }
        }
    }
}

fn run_cell(
    exp: &ResolvedExperiment,
    probes: &ProbeSet,
    out_dir: &Path,
    horizon: usize,
    seed: u64,
) -> (CellResult, Option<RunOutput>) {
    let mut cell = CellResult {
        horizon,
        seed,
        error: None,
        infeasibility: None,
        gap: None,
        max_lambda_norm: None,
        gamma_sum: None,
        calls: None,
        trace_file: None,
    };
    let options = RunOptions {
        checkpoints: Vec::new(),
        probes: Some(probes.clone()),
        timing: exp.config.timing,
        seed,
    };
    let noise = exp.noise.with_seed(seed);
    let out = match run_solver(
        &exp.instance,
        exp.config.method,
        &exp.config.policy,
        &noise,
        &exp.x0,
        horizon,
        &options,
    ) {
        Ok(out) => out,
        Err(e) => {
            cell.error = Some(e.to_string());
            return (cell, None);
        }
    };
    let name = trace_file_name(horizon, seed);
    if let Err(e) = write_atomic(&out_dir.join(&name), out.trace.to_csv().as_bytes()) {
        cell.error = Some(e.to_string());
        return (cell, None);
    }
    let last = out.trace.last().expect("horizon >= 1 records the final checkpoint");
    cell.infeasibility = Some(last.infeas);
    cell.gap = Some(last.gap_restricted);
    cell.max_lambda_norm = Some(out.max_lambda_norm);
    cell.gamma_sum = Some(out.gamma_sum);
    cell.calls = Some(out.calls);
    cell.trace_file = Some(name);
    (cell, Some(out))
}

fn fits_across_horizons(horizons: &[HorizonSummary]) -> Vec<FitEntry> {
    [ErrorChannel::Infeasibility, ErrorChannel::Gap]
        .into_iter()
        .map(|channel| {
            let (ts, errs): (Vec<f64>, Vec<f64>) = horizons
                .iter()
                .filter_map(|h| {
                    let s = match channel {
                        ErrorChannel::Infeasibility => h.infeasibility,
                        ErrorChannel::Gap => h.gap,
                    }?;
                    Some((h.horizon as f64, s.mean))
                })
                .unzip();
            match fit_power_law(channel, &ts, &errs, MIN_HORIZON_POINTS) {
                Ok(fit) => FitEntry {
                    channel,
                    fit: Some(fit),
                    error: None,
                },
                Err(e) => FitEntry {
                    channel,
                    fit: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Runs every `(horizon, seed)` cell on up to `workers` threads, writing one
/// trace per cell, `summary.json`, and optionally `plot_data.csv`.
///
/// Cell failures are recorded in the summary; only setup and output errors
/// are returned as `Err`.
pub fn run_experiment(exp: &ResolvedExperiment, out_dir: &Path, workers: usize) -> Result<Summary> {
    if workers == 0 {
        return Err(FcviError::Config("worker count must be >= 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| FcviError::io(out_dir, e))?;
    let probes = build_probes(exp)?;
    let cells: Vec<(usize, u64)> = exp
        .config
        .horizons
        .iter()
        .flat_map(|&t| exp.config.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| FcviError::Config(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<(CellResult, Option<RunOutput>)> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|&(t, s)| run_cell(exp, &probes, out_dir, t, s))
            .collect()
    });

    let mut horizons = Vec::new();
    for &t in &exp.config.horizons {
        let here: Vec<&(CellResult, Option<RunOutput>)> = results.iter().filter(|(c, _)| c.horizon == t).collect();
        let ok: Vec<&CellResult> = here.iter().map(|(c, _)| c).filter(|c| c.ok()).collect();
        let infeas: Vec<f64> = ok.iter().filter_map(|c| c.infeasibility).collect();
        let gaps: Vec<f64> = ok.iter().filter_map(|c| c.gap).collect();
        let schedule = make_policy(&exp.config.policy, &exp.instance, &exp.noise, t)?;
        let gamma_sum = ok.first().and_then(|c| c.gamma_sum);
        let bound = bound_for(&exp.instance, &schedule, &exp.noise, &exp.x0, gamma_sum, t);
        let (i_stats, g_stats) = (Stats::of(&infeas), Stats::of(&gaps));
        let within_bound = match (&bound, i_stats, g_stats) {
            (Some(b), Some(i), Some(g)) => Some(i.mean <= b.infeasibility && g.mean <= b.gap),
            _ => None,
        };
        horizons.push(HorizonSummary {
            horizon: t,
            completed: ok.len(),
            failed: here.len() - ok.len(),
            infeasibility: i_stats,
            gap: g_stats,
            bound,
            within_bound,
        });
    }

    let schedule = make_policy(&exp.config.policy, &exp.instance, &exp.noise, exp.config.horizons[0])?;
    let (b, c) = match &schedule {
        StepSchedule::Constant(s) => (Some(s.b), Some(s.c)),
        StepSchedule::Adaptive(_) => (None, None),
    };
    let noise = StochasticOracleSpec {
        master_seed: 0,
        ..exp.noise.clone()
    };
    let summary = Summary {
        name: exp.config.name.clone(),
        instance: exp.instance.label().to_string(),
        method: exp.config.method.as_str().to_string(),
        policy: exp.config.policy.name.as_str().to_string(),
        mode: exp.config.policy.mode,
        error_kind: if exp.noise.is_zero() {
            ErrorKind::Pointwise
        } else {
            ErrorKind::Expectation
        },
        noise,
        constants: exp.instance.constants(),
        lambda_star_norm: exp.instance.lambda_star_norm(),
        x0: exp.x0.iter().copied().collect(),
        b,
        c,
        fits: fits_across_horizons(&horizons),
        horizons,
        cells: results.iter().map(|(c, _)| c.clone()).collect(),
    };
    write_atomic(&out_dir.join(SUMMARY_FILE), summary.to_json()?.as_bytes())?;
    if exp.config.plot_data {
        let mut csv = String::from(PLOT_DATA_HEADER);
        csv.push('\n');
        for (cell, out) in &results {
            let Some(out) = out else { continue };
            for r in &out.trace.records {
                for (series, value) in [
                    ("infeasibility", r.infeas),
                    ("gap", r.gap_restricted),
                    ("lambda_norm", r.lambda_norm),
                    ("eta", r.eta),
                ] {
                    let _ = writeln!(csv, "{},{},{},{series},{value}", cell.horizon, cell.seed, r.t);
                }
            }
        }
        write_atomic(&out_dir.join(PLOT_DATA_FILE), csv.as_bytes())?;
    }
    Ok(summary)
}

/// Output directory: the explicit one, else the config's `out` relative to
/// its directory.
pub fn output_dir(exp: &ResolvedExperiment, explicit: Option<&Path>) -> Result<PathBuf> {
    match (explicit, &exp.config.out) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(p)) => Ok(exp.base_dir.join(p)),
        (None, None) => Err(FcviError::Config(
            "no output directory: pass --out or set \"out\"".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    fn experiment(extra: &str) -> ResolvedExperiment {
        let text = format!(
            r#"{{
                "name": "qc1",
                "instance": {{"builtin": "QC1"}},
                "method": "opconex",
                "policy": {{"name": "det_known_lambda"}},
                "horizons": [50, 100, 200, 400],
                "seeds": [0],
                "x0": [1.0, 1.0]{extra}
            }}"#
        );
        ExperimentConfig::from_json(&text, None).unwrap().resolve(".").unwrap()
    }

    #[test]
    fn stats_by_hand() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        // squared deviations 4 + 1 + 0 + 9 = 14 over 3
        assert!((s.std - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.stderr - s.std / 2.0).abs() < 1e-15);
        assert_eq!(Stats::of(&[5.0]).unwrap().std, 0.0);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn experiment_writes_traces_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let exp = experiment(", \"plot_data\": true");
        let summary = run_experiment(&exp, dir.path(), 2).unwrap();
        assert_eq!(summary.error_kind, ErrorKind::Pointwise);
        assert_eq!(summary.cells.len(), 4);
        assert_eq!(summary.failed_cells(), 0);
        for h in &summary.horizons {
            assert!(dir.path().join(trace_file_name(h.horizon, 0)).exists());
            assert_eq!(h.bound.as_ref().map(|b| b.form.as_str()), Some("det_known_lambda"));
            assert_eq!(h.within_bound, Some(true));
        }
        let fit = summary.fit(ErrorChannel::Infeasibility).unwrap();
        assert_eq!(fit.points, 4);
        let loaded = Summary::load(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(loaded, summary);
        let plot = std::fs::read_to_string(dir.path().join(PLOT_DATA_FILE)).unwrap();
        assert!(plot.starts_with(PLOT_DATA_HEADER));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let exp = experiment("");
        run_experiment(&exp, a.path(), 1).unwrap();
        run_experiment(&exp, b.path(), 3).unwrap();
        for f in [SUMMARY_FILE.to_string(), trace_file_name(400, 0)] {
            let x = std::fs::read(a.path().join(&f)).unwrap();
            let y = std::fs::read(b.path().join(&f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
        assert!(run_experiment(&exp, a.path(), 0).is_err());
    }

    #[test]
    fn numerical_failure_stays_in_its_cell() {
        use crate::problem::{ConstraintFn, ConstraintSet, Operator, SimpleSet};
        use nalgebra::DVector;
        use std::sync::Arc;
        // F(x) = x - 0.9 until x crosses 0.5, then NaN: short runs finish,
        // long ones fail.
        let op = Operator::custom(
            1,
            1.0,
            0.0,
            Arc::new(|x: &DVector<f64>| {
                if x[0] > 0.5 {
                    x.map(|_| f64::NAN)
                } else {
                    x.add_scalar(-0.9)
                }
            }),
        )
        .unwrap();
        let set = SimpleSet::new_box(vec![-1.0], vec![1.0]).unwrap();
        let g = ConstraintSet::new(
            1,
            vec![ConstraintFn::affine(DVector::from_element(1, 1.0), 1.0).unwrap()],
            &set,
        )
        .unwrap();
        let instance = ProblemInstance::new("nan", set, op, g).unwrap();
        let mut exp = experiment("");
        exp.config.horizons = vec![1, 2, 3000];
        exp.config.policy = crate::algorithms::PolicySpec::new(PolicyName::DetB)
            .with_b(1.0)
            .with_c(0.0);
        exp.instance = instance;
        exp.x0 = DVector::zeros(1);
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&exp, dir.path(), 2).unwrap();
        let failed: Vec<usize> = summary.cells.iter().filter(|c| !c.ok()).map(|c| c.horizon).collect();
        assert_eq!(failed, vec![3000]);
        assert!(summary.cells[2].error.as_deref().unwrap().contains("numerical"));
        assert_eq!(summary.horizons[2].completed, 0);
        assert!(summary.horizons[2].infeasibility.is_none());
        assert!(dir.path().join(trace_file_name(1, 0)).exists());
        assert!(!dir.path().join(trace_file_name(3000, 0)).exists());
    }

    #[test]
    fn no_leftover_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a.txt"), b"hi").unwrap();
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["a.txt".to_string()]);
    }
}
