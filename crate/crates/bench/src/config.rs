//! Experiment configuration: presets per experiment plus overrides from a
//! flat `key = value` file.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use mgp_core::infer::{FitOptions, GradientMode};
use mgp_core::kernels::{KernelFamily, KernelSpec, SeKernel};
use mgp_core::objective::{PenaltyKind, PenaltyScale, PenaltySpec};
use mgp_core::predict::ExpertWeighting;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};
use crate::models::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Table1Sines,
    Table2Shrinkage,
    LowdimGroups,
    GpGroups20,
    GpGroups50,
    Custom,
}

impl ExperimentName {
    pub const ALL: [Self; 6] = [
        Self::Table1Sines,
        Self::Table2Shrinkage,
        Self::LowdimGroups,
        Self::GpGroups20,
        Self::GpGroups50,
        Self::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Table1Sines => "table1_sines",
            Self::Table2Shrinkage => "table2_shrinkage",
            Self::LowdimGroups => "lowdim_groups",
            Self::GpGroups20 => "gp_groups_20",
            Self::GpGroups50 => "gp_groups_50",
            Self::Custom => "custom",
        }
    }
}

impl FromStr for ExperimentName {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    pub models: Vec<ModelKind>,
    pub kernel: KernelFamily,
    /// Give the partner's shared kernel of a shared/private pair a free
    /// relative input shift.
    pub shift: bool,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    /// When nonempty, λ is chosen from this grid by cross-validation.
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub penalty_scale: PenaltyScale,
    pub fit: FitOptions,
    pub replications: usize,
    pub target: usize,
    /// Outputs of the `mgp_sub` model; empty means the target's true group
    /// where the experiment defines one.
    pub subset: Vec<usize>,
    pub weighting: ExpertWeighting,
    pub tau: f64,
    pub data: Option<PathBuf>,
    pub standardize: bool,
    pub train_points: usize,
    pub test_points: usize,
    pub noise: f64,
    /// Points held out from the end of every output of a CSV dataset.
    pub holdout: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for `name`.
    pub fn preset(name: ExperimentName) -> Self {
        let mut cfg = Self {
            experiment: name,
            models: Vec::new(),
            kernel: KernelFamily::Se,
            shift: false,
            penalty: PenaltyKind::None,
            lambda: 0.0,
            lambda_grid: Vec::new(),
            cv_folds: 4,
            penalty_scale: PenaltyScale::Unit,
            fit: FitOptions::default(),
            replications: 1,
            target: 0,
            subset: Vec::new(),
            weighting: ExpertWeighting::Uniform,
            tau: 1e-3,
            data: None,
            standardize: false,
            train_points: 20,
            test_points: 70,
            noise: 0.05,
            holdout: 0,
            out_dir: PathBuf::from("out").join(name.as_str()),
        };
        match name {
            ExperimentName::Table1Sines => {
                cfg.models = (1..=4).map(|q| ModelKind::FullQ { q }).collect();
            }
            ExperimentName::Table2Shrinkage => {
                cfg.models = vec![ModelKind::PairwiseB];
                cfg.shift = true;
                cfg.penalty = PenaltyKind::Ridge;
                cfg.lambda_grid = vec![0.0, 0.1, 1.0, 10.0];
            }
            ExperimentName::LowdimGroups => {
                cfg.models = vec![
                    ModelKind::FullQ { q: 1 },
                    ModelKind::FullQ { q: 4 },
                    ModelKind::FullQ { q: 8 },
                    ModelKind::PairwiseA,
                    ModelKind::Arrowhead,
                    ModelKind::Independent,
                    ModelKind::Subset {
                        outputs: Vec::new(),
                        q: 1,
                    },
                ];
                cfg.replications = 10;
                cfg.train_points = 7;
                cfg.test_points = 30;
            }
            ExperimentName::GpGroups20 => {
                cfg.models = vec![
                    ModelKind::FullQ { q: 3 },
                    ModelKind::Arrowhead,
                    ModelKind::PairwiseA,
                    ModelKind::Independent,
                ];
                cfg.replications = 10;
            }
            ExperimentName::GpGroups50 => {
                cfg.models = vec![ModelKind::Arrowhead, ModelKind::PairwiseA, ModelKind::Independent];
                cfg.replications = 10;
            }
            ExperimentName::Custom => {
                cfg.models = vec![ModelKind::Arrowhead];
                cfg.test_points = 100;
            }
        }
        cfg
    }

    /// Reads a config file. The `experiment` key selects the preset that the
    /// remaining keys override; `fallback` is used when the key is absent.
    pub fn from_file(path: &std::path::Path, fallback: Option<ExperimentName>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_kv(&text, fallback)
    }

    pub fn from_kv(text: &str, fallback: Option<ExperimentName>) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let name = match pairs.get("experiment") {
            Some(v) => v.parse()?,
            None => fallback.ok_or_else(|| BenchError::Config("missing `experiment` key".into()))?,
        };
        let mut cfg = Self::preset(name);
        cfg.apply(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        let mut q = None;
        let mut structure = None;
        let mut gamma = 3.7;
        let mut exponent = 0.5;
        let mut penalty_name = None;
        for (key, value) in pairs {
            let v = value.as_str();
            match key.as_str() {
                "experiment" => {}
                "models" => self.models = parse_list(v)?,
                "structure" => structure = Some(v.to_string()),
                "q" => q = Some(parse::<usize>(key, v)?),
                "kernel" => self.kernel = v.parse().map_err(BenchError::Model)?,
                "shift" => self.shift = parse(key, v)?,
                "penalty" => penalty_name = Some(v.to_string()),
                "gamma" => gamma = parse(key, v)?,
                "bridge_exponent" => exponent = parse(key, v)?,
                "lambda" => self.lambda = parse(key, v)?,
                "lambda_grid" => self.lambda_grid = parse_list(v)?,
                "cv_folds" => self.cv_folds = parse(key, v)?,
                "penalty_scale" => {
                    self.penalty_scale = match v {
                        "unit" => PenaltyScale::Unit,
                        "data_size" => PenaltyScale::DataSize,
                        _ => return Err(bad(key, v)),
                    }
                }
                "restarts" => self.fit.restarts = parse(key, v)?,
                "max_iters" => self.fit.max_iters = parse(key, v)?,
                "rel_tol" => self.fit.rel_tol = parse(key, v)?,
                "init_scale" => self.fit.init_scale = parse(key, v)?,
                "gradient_mode" => {
                    self.fit.gradient_mode = match v {
                        "analytic" => GradientMode::Analytic,
                        "finite_diff" => GradientMode::FiniteDiff,
                        "check" => GradientMode::Check,
                        _ => return Err(bad(key, v)),
                    }
                }
                "seed" => self.fit.seed = parse(key, v)?,
                "replications" => self.replications = parse(key, v)?,
                "target" => self.target = parse(key, v)?,
                "subset" => self.subset = parse_list(v)?,
                "weighting" => {
                    self.weighting = match v {
                        "uniform" => ExpertWeighting::Uniform,
                        "entropy" => ExpertWeighting::Entropy,
                        _ => return Err(bad(key, v)),
                    }
                }
                "tau" => self.tau = parse(key, v)?,
                "data" => self.data = Some(PathBuf::from(v)),
                "standardize" => self.standardize = parse(key, v)?,
                "train_points" => self.train_points = parse(key, v)?,
                "test_points" => self.test_points = parse(key, v)?,
                "noise" => self.noise = parse(key, v)?,
                "holdout" => self.holdout = parse(key, v)?,
                "out_dir" => self.out_dir = PathBuf::from(v),
                _ => return Err(BenchError::Config(format!("unknown key `{key}`"))),
            }
        }
        if let Some(s) = structure {
            let model = match (s.as_str(), q) {
                ("full_q", Some(q)) => format!("mgp_{q}"),
                ("full_q", None) => return Err(BenchError::Config("structure full_q needs `q`".into())),
                (other, _) => other.to_string(),
            };
            self.models = vec![model.parse()?];
        }
        if let Some(p) = penalty_name {
            self.penalty = match p.as_str() {
                "none" => PenaltyKind::None,
                "ridge" => PenaltyKind::Ridge,
                "l1" => PenaltyKind::L1,
                "bridge" => PenaltyKind::Bridge { exponent },
                "scad" => PenaltyKind::Scad { gamma },
                "group_l2" => PenaltyKind::GroupL2,
                _ => return Err(bad("penalty", &p)),
            };
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(BenchError::Config("no models selected".into()));
        }
        if self.replications == 0 {
            return Err(BenchError::Config("replications must be at least 1".into()));
        }
        if self.train_points < 2 || self.test_points == 0 {
            return Err(BenchError::Config(
                "need at least two training points and one test point".into(),
            ));
        }
        if !(self.noise >= 0.0) {
            return Err(BenchError::Config("noise must be nonnegative".into()));
        }
        if self.experiment == ExperimentName::Custom && self.data.is_none() {
            return Err(BenchError::Config("custom experiments need a `data` path".into()));
        }
        self.fit.validate()?;
        self.penalty_spec(self.lambda).validate()?;
        Ok(())
    }

    pub fn penalty_spec(&self, lambda: f64) -> PenaltySpec {
        PenaltySpec::new(self.penalty, lambda).with_scale(self.penalty_scale)
    }

    /// Kernel prototype for every model of the experiment.
    pub fn kernel_proto(&self) -> KernelSpec {
        match self.kernel {
            KernelFamily::Se => KernelSpec::Se(SeKernel::new(1.0, 1.0).with_shift(0.0, self.shift)),
            KernelFamily::Spectral => KernelSpec::spectral(1.0, 1.0, 1.0),
        }
    }
}

fn bad(key: &str, value: &str) -> BenchError {
    BenchError::Config(format!("invalid value `{value}` for `{key}`"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    BenchError: From<<T as FromStr>::Err>,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(BenchError::from))
        .collect()
}

impl From<std::num::ParseFloatError> for BenchError {
    fn from(e: std::num::ParseFloatError) -> Self {
        BenchError::Config(e.to_string())
    }
}

impl From<std::num::ParseIntError> for BenchError {
    fn from(e: std::num::ParseIntError) -> Self {
        BenchError::Config(e.to_string())
    }
}

/// `key = value` lines; `#` starts a comment, blank lines are ignored.
fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| BenchError::Parse {
            line: n + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(BenchError::Parse {
                line: n + 1,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let cfg = ExperimentConfig::from_kv(
            "experiment = table1_sines\n# comment\nrestarts = 2\nseed = 7  # trailing\nmodels = mgp_1, mgp_3\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.fit.restarts, 2);
        assert_eq!(cfg.fit.seed, 7);
        assert_eq!(cfg.models, vec![ModelKind::FullQ { q: 1 }, ModelKind::FullQ { q: 3 }]);
        assert_eq!(cfg.test_points, 70);
    }

    #[test]
    fn structure_and_penalty_keys() {
        let cfg = ExperimentConfig::from_kv(
            "structure = full_q\nq = 2\npenalty = scad\ngamma = 4.0\nlambda_grid = 0, 1\n",
            Some(ExperimentName::Table2Shrinkage),
        )
        .unwrap();
        assert_eq!(cfg.models, vec![ModelKind::FullQ { q: 2 }]);
        assert_eq!(cfg.penalty, PenaltyKind::Scad { gamma: 4.0 });
        assert_eq!(cfg.lambda_grid, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_kv("restarts = 2", None).is_err());
        assert!(ExperimentConfig::from_kv("experiment = table1_sines\nbogus = 1", None).is_err());
        assert!(ExperimentConfig::from_kv("experiment = table1_sines\nstructure = full_q", None).is_err());
        assert!(ExperimentConfig::from_kv("experiment = custom", None).is_err());
        assert!(matches!(
            ExperimentConfig::from_kv("experiment = table1_sines\nno equals sign", None),
            Err(BenchError::Parse { line: 2, .. })
        ));
        assert!(ExperimentConfig::from_kv("experiment = table1_sines\npenalty = scad\ngamma = 1.5", None).is_err());
    }
}
