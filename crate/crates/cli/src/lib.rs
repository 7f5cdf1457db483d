//! Command-line front end for the mecanum simulator.
//!
//! Exit codes: 0 on success, 1 when a solver stops without converging or a
//! check fails (outputs are still written), 2 on bad input.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod fixtures;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use mecanum_core::model::{Pose, RobotParams, WheelVec};
use mecanum_core::optimize::Solver;

use crate::commands::{CurveChoice, MuSource, NetKind, Outcome};
use crate::config::{ExperimentConfig, DEFAULT_SEED, SEED_ENV};
pub use crate::error::{CliError, CliResult, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "mecanum",
    version,
    about = "Mecanum robot simulation, friction identification and path following"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    /// Projected L-BFGS with analytic gradients.
    Qn,
    /// Nelder-Mead simplex.
    Nm,
    /// CMA-ES.
    Cmaes,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Qn => Solver::QuasiNewton,
            SolverArg::Nm => Solver::NelderMead,
            SolverArg::Cmaes => Solver::Cmaes,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CurveArg {
    Circle,
    Eight,
    File,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MuSourceArg {
    File,
    Net,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NetKindArg {
    /// 4-16-4 net mapping commands to friction.
    Friction,
    /// 3-32-4 inverse-dynamics baseline mapping pose changes to duty.
    Baseline,
}

fn parse_list<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated values, got {}", v.len()))
}

fn parse_mu(s: &str) -> Result<WheelVec, String> {
    parse_list::<4>(s)
}

fn parse_pose(s: &str) -> Result<[f64; 3], String> {
    parse_list::<3>(s)
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunFiles {
    /// Control CSV; use with --track instead of the config's trajectories.
    #[arg(long, requires = "track")]
    pub controls: Option<PathBuf>,
    /// Ground-truth CSV.
    #[arg(long, requires = "controls")]
    pub track: Option<PathBuf>,
}

impl RunFiles {
    fn pair(&self) -> Option<(&Path, &Path)> {
        Some((self.controls.as_deref()?, self.track.as_deref()?))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a control schedule and write the trajectory and a plot.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Control CSV.
        #[arg(long)]
        controls: PathBuf,
        /// Friction `m1,m2,m3,m4`; defaults to the config's `mu`.
        #[arg(long, value_parser = parse_mu)]
        mu: Option<WheelVec>,
        /// Start pose `x,y,theta`.
        #[arg(long, value_parser = parse_pose)]
        start: Option<[f64; 3]>,
    },
    /// Identify per-wheel friction from recorded runs.
    Identify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        files: RunFiles,
        #[arg(long, value_enum, default_value = "qn")]
        solver: SolverArg,
        /// Identify each run separately instead of all jointly.
        #[arg(long)]
        per_trajectory: bool,
        /// Worker threads for --per-trajectory.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare the analytic friction gradient with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        files: RunFiles,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-6)]
        h: f64,
        /// Friction at which to check; defaults to the config's `x0`.
        #[arg(long, value_parser = parse_mu)]
        at: Option<WheelVec>,
    },
    /// Plan wheel commands for a reference curve and roll them out.
    Follow {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "circle")]
        curve: CurveArg,
        #[arg(long, value_enum, default_value = "file")]
        mu_source: MuSourceArg,
        /// Friction network JSON, overriding the config's `net`.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Identify from growing prefixes of the data.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated fractions in (0, 1]; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Generate the synthetic identification fixtures.
    Fixtures {
        /// Output directory.
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        /// Config supplying robot parameters and seed.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = crate::fixtures::FIXTURE_COUNT)]
        count: usize,
    },
    /// Train the friction network or the inverse-dynamics baseline.
    TrainNet {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: NetKindArg,
        /// Weights file to write; defaults to `<output_dir>/<kind>_net.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(cfg: &ExperimentConfig, out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| cfg.output_dir.clone())
}

/// Execute a parsed command.
pub fn execute(command: &Command) -> CliResult<Outcome> {
    match command {
        Command::Simulate {
            common,
            controls,
            mu,
            start,
        } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let start = start.map(|[x, y, th]| Pose::new(x, y, th));
            commands::simulate_cmd(&cfg, controls, *mu, start, &out_dir(&cfg, &common.out))
        }
        Command::Identify {
            common,
            files,
            solver,
            per_trajectory,
            jobs,
        } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            commands::identify_cmd(
                &cfg,
                files.pair(),
                (*solver).into(),
                *per_trajectory,
                *jobs,
                &out_dir(&cfg, &common.out),
            )
        }
        Command::Gradcheck { common, files, h, at } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            commands::gradcheck_cmd(&cfg, files.pair(), *h, *at, &out_dir(&cfg, &common.out))
        }
        Command::Follow {
            common,
            curve,
            mu_source,
            net,
        } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let curve = match curve {
                CurveArg::Circle => CurveChoice::Circle,
                CurveArg::Eight => CurveChoice::Eight,
                CurveArg::File => CurveChoice::File,
            };
            let source = match mu_source {
                MuSourceArg::File => MuSource::File,
                MuSourceArg::Net => MuSource::Net,
            };
            commands::follow_cmd(&cfg, curve, source, net.as_deref(), &out_dir(&cfg, &common.out))
        }
        Command::Sweep { common, fractions } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            commands::sweep_cmd(&cfg, fractions.clone(), &out_dir(&cfg, &common.out))
        }
        Command::Fixtures { out, config, count } => {
            let (params, seed) = match config {
                Some(p) => {
                    let cfg = ExperimentConfig::load(p)?;
                    (cfg.robot, cfg.seed)
                }
                None => {
                    let seed = match std::env::var(SEED_ENV) {
                        Ok(raw) => raw
                            .trim()
                            .parse()
                            .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{raw}` is not an unsigned integer")))?,
                        Err(_) => DEFAULT_SEED,
                    };
                    (RobotParams::default(), seed)
                }
            };
            commands::fixtures_cmd(&params, seed, *count, out)
        }
        Command::TrainNet { config, kind, out } => {
            let cfg = ExperimentConfig::load(config)?;
            let (kind, name) = match kind {
                NetKindArg::Friction => (NetKind::Friction, "friction_net.json"),
                NetKindArg::Baseline => (NetKind::Baseline, "baseline_net.json"),
            };
            let file = out.clone().unwrap_or_else(|| cfg.output_dir.join(name));
            commands::train_net_cmd(&cfg, kind, &file)
        }
    }
}

/// Parse arguments, run, report, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let started = std::time::Instant::now();
    match execute(&cli.command) {
        Ok(outcome) => {
            // A closed pipe (`| head`) is not an error worth reporting.
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", outcome.summary);
            for f in &outcome.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            eprintln!("done in {:.3} s", started.elapsed().as_secs_f64());
            if outcome.ok {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
