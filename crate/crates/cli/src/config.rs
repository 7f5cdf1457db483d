//! Experiment configuration: one strict JSON document per experiment.
//!
//! Relative paths are resolved against the config file's directory and every
//! referenced input file must exist when the config is loaded. The top-level
//! `seed` drives all randomness (CMA-ES sampling, network initialization,
//! synthetic data) and is overridden by the `MECANUM_SEED` environment
//! variable.

use std::path::{Path, PathBuf};

use mecanum_core::control::{PlanOptions, ReferenceCurve};
use mecanum_core::frictionnet::TrainConfig;
use mecanum_core::loss::LossWeights;
use mecanum_core::model::{FrictionCoeffs, Pose, RobotParams, WheelVec};
use mecanum_core::optimize::{CmaesOptions, LbfgsOptions, NelderMeadOptions, DEFAULT_X0};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "MECANUM_SEED";
pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_fractions() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8, 1.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRef {
    /// Label used in reports and plots; defaults to the track file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub controls: PathBuf,
    pub track: PathBuf,
}

impl TrajectoryRef {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.track
                .file_stem()
                .map_or_else(|| "trajectory".into(), |s| s.to_string_lossy().into_owned())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub lbfgs: LbfgsOptions,
    pub nelder_mead: NelderMeadOptions,
    pub cmaes: CmaesOptions,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: WheelVec,
    pub upper: WheelVec,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Curves {
    pub circle: Option<ReferenceCurve>,
    pub eight: Option<ReferenceCurve>,
    /// Waypoint CSV in the ground-truth format.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// The robot's actual friction: drives `simulate`, and the rollout in
    /// `follow`.
    #[serde(default)]
    pub mu: Option<FrictionCoeffs>,
    /// Friction used for planning with `--mu-source file`: a JSON array of
    /// four values or an `identify` report.
    #[serde(default)]
    pub mu_file: Option<PathBuf>,
    /// Friction network for `--mu-source net`.
    #[serde(default)]
    pub net: Option<PathBuf>,
    /// Identification start point.
    #[serde(default)]
    pub x0: Option<WheelVec>,
    #[serde(default)]
    pub bounds: Option<Bounds>,
    #[serde(default)]
    pub solvers: SolverOptions,
    #[serde(default)]
    pub trajectories: Vec<TrajectoryRef>,
    #[serde(default)]
    pub curves: Curves,
    /// Start pose `[x, y, theta]` for `follow` and `simulate`. Defaults to
    /// the first waypoint with zero heading (`follow`) or the origin.
    #[serde(default)]
    pub start: Option<[f64; 3]>,
    #[serde(default)]
    pub plan: PlanOptions,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl ExperimentConfig {
    /// Load from `path`, honoring `MECANUM_SEED`.
    pub fn load(path: &Path) -> CliResult<Self> {
        let env = std::env::var(SEED_ENV).ok();
        Self::load_with_seed(path, env.as_deref())
    }

    /// Load from `path` with an explicit seed override (the value
    /// `MECANUM_SEED` would carry).
    pub fn load_with_seed(path: &Path, seed_override: Option<&str>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        if let Some(raw) = seed_override {
            cfg.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::config(path, format!("{SEED_ENV}=`{raw}` is not an unsigned integer")))?;
        }
        cfg.apply_seed();
        cfg.validate(path)?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for t in &mut self.trajectories {
            fix(&mut t.controls);
            fix(&mut t.track);
        }
        for p in [&mut self.mu_file, &mut self.net, &mut self.curves.file]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Propagate the top-level seed to every seeded component.
    pub fn apply_seed(&mut self) {
        self.solvers.cmaes.seed = self.seed;
        self.train.seed = self.seed;
    }

    fn validate(&self, path: &Path) -> CliResult<()> {
        self.robot.validate()?;
        self.weights.validate()?;
        self.train.validate()?;
        let mut files: Vec<&Path> = Vec::new();
        for t in &self.trajectories {
            files.push(&t.controls);
            files.push(&t.track);
        }
        files.extend(
            [&self.mu_file, &self.net, &self.curves.file]
                .into_iter()
                .flatten()
                .map(PathBuf::as_path),
        );
        if let Some(missing) = files.iter().find(|f| !f.is_file()) {
            return Err(CliError::config(
                path,
                format!("referenced file {} does not exist", missing.display()),
            ));
        }
        for c in [&self.curves.circle, &self.curves.eight].into_iter().flatten() {
            c.validate()?;
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(CliError::config(path, format!("fraction {f} outside (0, 1]")));
        }
        if let Some(x0) = self.x0 {
            FrictionCoeffs::new(x0)?;
        }
        Ok(())
    }

    pub fn x0(&self) -> WheelVec {
        self.x0.unwrap_or(DEFAULT_X0)
    }

    pub fn start_pose(&self) -> Option<Pose> {
        self.start.map(|[x, y, theta]| Pose::new(x, y, theta))
    }
}
