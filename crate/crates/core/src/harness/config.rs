use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algorithms::{check_compatibility, make_policy, Method, PolicySpec};
use crate::error::{FcviError, Result};
use crate::metrics::{DEFAULT_PROBE_SEED, DEFAULT_SAMPLED_PROBES};
use crate::oracles::StochasticOracleSpec;
use crate::problem::{canonical, load_instance, InstanceDocument, ProblemInstance};
use crate::saddle::{cg1, load_saddle, saddle_to_vi, SaddleDocument, SaddleProblem};

/// Where the instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceRef {
    /// One of `QC1`, `QC2`, `QC1-NS`, `CG1`.
    Builtin(String),
    /// Path relative to the config file.
    File(PathBuf),
    /// An instance (or, with `saddle: true`, a saddle problem) document.
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_sampled")]
    pub sampled: usize,
    #[serde(default = "default_probe_seed")]
    pub seed: u64,
    /// Adds every feasible lattice point of this spacing (n <= 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
}

fn default_sampled() -> usize {
    DEFAULT_SAMPLED_PROBES
}

fn default_probe_seed() -> u64 {
    DEFAULT_PROBE_SEED
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            sampled: DEFAULT_SAMPLED_PROBES,
            seed: DEFAULT_PROBE_SEED,
            grid_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub instance: InstanceRef,
    /// Treat the instance document as a saddle problem and reduce it.
    #[serde(default)]
    pub saddle: bool,
    pub method: Method,
    pub policy: PolicySpec,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Noise levels; the seed is taken from `seeds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<StochasticOracleSpec>,
    /// Starting point; the center of `X` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub probes: ProbeConfig,
    /// Record wall-clock seconds in traces (breaks byte reproducibility).
    #[serde(default)]
    pub timing: bool,
    /// Also write a long-format `plot_data.csv`.
    #[serde(default)]
    pub plot_data: bool,
    /// Output directory, relative to the config file; the CLI flag wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A config with its instance resolved and checked.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub instance: ProblemInstance,
    pub saddle: Option<SaddleProblem>,
    pub x0: DVector<f64>,
    pub noise: StochasticOracleSpec,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

pub fn builtin_instance(name: &str) -> Result<(ProblemInstance, Option<SaddleProblem>)> {
    match name {
        "QC1" => Ok((canonical::qc1(), None)),
        "QC2" => Ok((canonical::qc2(), None)),
        "QC1-NS" => Ok((canonical::qc1_nonsmooth(), None)),
        "CG1" => {
            let game = cg1();
            Ok((saddle_to_vi(&game)?, Some(game)))
        }
        other => Err(FcviError::Config(format!(
            "unknown builtin instance {other:?}; expected QC1, QC2, QC1-NS or CG1"
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: Option<&Path>) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| FcviError::Json {
            path: path.map(|p| p.display().to_string()),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => FcviError::Config(format!("config file {} does not exist", path.display())),
            _ => FcviError::io(path, e),
        })?;
        Self::from_json(&text, Some(path))
    }

    /// Checks everything that does not need the instance.
    pub fn check_shape(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(FcviError::Config("horizons must not be empty".into()));
        }
        if self.horizons[0] == 0 {
            return Err(FcviError::Config("horizons must be >= 1".into()));
        }
        if let Some(w) = self.horizons.windows(2).find(|w| w[1] <= w[0]) {
            return Err(FcviError::Config(format!(
                "horizons must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if self.seeds.is_empty() {
            return Err(FcviError::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(FcviError::Config("seeds must be distinct".into()));
        }
        if let Some(step) = self.probes.grid_step {
            if !(step.is_finite() && step > 0.0) {
                return Err(FcviError::Config(format!("probes.grid_step must be > 0, got {step}")));
            }
        }
        Ok(())
    }

    fn load_instance(&self, base: &Path) -> Result<(ProblemInstance, Option<SaddleProblem>)> {
        match &self.instance {
            InstanceRef::Builtin(name) => builtin_instance(name),
            InstanceRef::File(p) => {
                let path = base.join(p);
                if !path.exists() {
                    return Err(FcviError::Config(format!(
                        "instance file {} does not exist",
                        path.display()
                    )));
                }
                if self.saddle {
                    let game = load_saddle(&path)?;
                    Ok((saddle_to_vi(&game)?, Some(game)))
                } else {
                    Ok((load_instance(&path)?, None))
                }
            }
            InstanceRef::Inline(value) => {
                let json = |source| FcviError::Json { path: None, source };
                if self.saddle {
                    let doc: SaddleDocument = serde_json::from_value(value.clone()).map_err(json)?;
                    let game = doc.to_problem()?;
                    Ok((saddle_to_vi(&game)?, Some(game)))
                } else {
                    let doc: InstanceDocument = serde_json::from_value(value.clone()).map_err(json)?;
                    Ok((doc.to_instance()?, None))
                }
            }
        }
    }

    /// Loads the instance and checks the policy against every horizon.
    pub fn resolve(&self, base_dir: impl AsRef<Path>) -> Result<ResolvedExperiment> {
        self.check_shape()?;
        let base_dir = base_dir.as_ref().to_path_buf();
        let (instance, saddle) = self.load_instance(&base_dir)?;
        let noise = self.noise.clone().unwrap_or_default();
        noise.validate(instance.num_constraints())?;
        check_compatibility(self.method, self.policy.name, &noise)?;
        let x0 = match &self.x0 {
            Some(x) => DVector::from_vec(x.clone()),
            None => instance.set().center(),
        };
        if x0.len() != instance.dim() || !instance.in_set(&x0, 1e-12) {
            return Err(FcviError::Config(format!(
                "x0 = {:?} is not a point of X (dimension {})",
                x0.as_slice(),
                instance.dim()
            )));
        }
        for &t in &self.horizons {
            make_policy(&self.policy, &instance, &noise, t)?;
        }
        Ok(ResolvedExperiment {
            config: self.clone(),
            instance,
            saddle,
            x0,
            noise,
            base_dir,
        })
    }
}

/// Loads and resolves a config file; relative paths are taken from its directory.
pub fn load_experiment(path: impl AsRef<Path>) -> Result<ResolvedExperiment> {
    let path = path.as_ref();
    let config = ExperimentConfig::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config.resolve(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::PolicyName;

    const QC1: &str = r#"{
        "instance": {"builtin": "QC1"},
        "method": "opconex",
        "policy": {"name": "det_known_lambda"},
        "horizons": [10, 100],
        "seeds": [0]
    }"#;

    #[test]
    fn minimal_config() {
        let cfg = ExperimentConfig::from_json(QC1, None).unwrap();
        assert_eq!(cfg.policy.name, PolicyName::DetKnownLambda);
        let r = cfg.resolve(".").unwrap();
        assert_eq!(r.x0, DVector::zeros(2));
        assert!(r.noise.is_zero());
    }

    #[test]
    fn policy_names_use_capital_b() {
        let text = QC1.replace("det_known_lambda\"", "det_B\", \"b\": 2.0");
        let cfg = ExperimentConfig::from_json(&text, None).unwrap();
        assert_eq!(cfg.policy.name, PolicyName::DetB);
        assert!(ExperimentConfig::from_json(&QC1.replace("det_known_lambda", "det_b"), None).is_err());
    }

    #[test]
    fn parse_errors_carry_locations() {
        let err = ExperimentConfig::from_json("{\n  \"method\": \"opconex\",\n  oops\n}", None).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 3"), "{text}");
        assert!(err.is_config());
    }

    #[test]
    fn shape_errors() {
        for (from, to) in [
            ("[10, 100]", "[100, 10]"),
            ("[10, 100]", "[]"),
            ("\"seeds\": [0]", "\"seeds\": []"),
            ("\"seeds\": [0]", "\"seeds\": [1, 1]"),
            ("\"QC1\"", "\"QC9\""),
            ("\"opconex\"", "\"adlagex\""),
        ] {
            let cfg = ExperimentConfig::from_json(&QC1.replace(from, to), None).unwrap();
            let err = cfg.resolve(".").unwrap_err();
            assert!(matches!(err, FcviError::Config(_)), "{from} -> {to}: {err}");
        }
        let with_x0 = QC1.replace("\"seeds\": [0]", "\"seeds\": [0], \"x0\": [2.0, 0.0]");
        assert!(ExperimentConfig::from_json(&with_x0, None)
            .unwrap()
            .resolve(".")
            .is_err());
        let missing = QC1.replace("{\"builtin\": \"QC1\"}", "{\"file\": \"nope.json\"}");
        assert!(ExperimentConfig::from_json(&missing, None)
            .unwrap()
            .resolve(".")
            .is_err());
    }

    #[test]
    fn builtin_saddle() {
        let text = QC1.replace("\"QC1\"", "\"CG1\"");
        let r = ExperimentConfig::from_json(&text, None).unwrap().resolve(".").unwrap();
        assert!(r.saddle.is_some());
        assert_eq!(r.instance.dim(), 2);
    }
}
