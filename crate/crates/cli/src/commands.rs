//! The subcommands. Each returns an [`Outcome`]; file outputs never contain
//! wall-clock times, so re-running a command reproduces them byte for byte.

use std::path::{Path, PathBuf};

use mecanum_core::control::{
    baseline_dataset, discretize, plan_for_waypoints, rollout, train_baseline, LobeDirection, PlanReport,
    ReferenceCurve, TrackingReport,
};
use mecanum_core::frictionnet::{predict_friction, train, Mlp, OutputTransform, Sample, FRICTION_NET_SIZES};
use mecanum_core::model::{
    simulate, ControlSchedule, FrictionCoeffs, GroundTruthTrack, Pose, RobotParams, WheelVec, WHEELS,
};
use mecanum_core::optimize::{
    data_efficiency_sweep, gradient_check_with, identify_cmaes, identify_nelder_mead, identify_quasi_newton,
    GradientCheck, IdentificationProblem, Recording, SolveReport, Solver,
};
use mecanum_core::spline::SplinePath;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, TrajectoryRef};
use crate::csvio::{read_controls, read_track, write_controls, write_table, write_text, write_trajectory};
use crate::error::{CliError, CliResult};
use crate::svg::{Plot, Series, PALETTE};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False when a solver stopped without meeting its tolerance or a check
    /// failed; outputs are still written.
    pub ok: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn json_file(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    write_text(path, &(text + "\n"))
}

fn svg_file(path: &Path, plot: &Plot) -> CliResult<()> {
    write_text(path, &plot.render())
}

fn fmt_mu(mu: &WheelVec) -> String {
    let parts: Vec<String> = mu.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn positions(poses: &[Pose]) -> Vec<[f64; 2]> {
    poses.iter().map(Pose::position).collect()
}

/// A named recorded run loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub name: String,
    pub recording: Recording,
}

pub fn load_run(params: &RobotParams, name: String, controls: &Path, track: &Path) -> CliResult<LoadedRun> {
    let schedule = read_controls(controls, params)?;
    let track = read_track(track)?;
    let recording = Recording::new(schedule, track).map_err(|e| CliError::config(controls, e.to_string()))?;
    Ok(LoadedRun { name, recording })
}

/// Runs from an explicit `(controls, track)` pair, else from the config.
pub fn load_runs(cfg: &ExperimentConfig, pair: Option<(&Path, &Path)>) -> CliResult<Vec<LoadedRun>> {
    let refs: Vec<TrajectoryRef> = match pair {
        Some((c, t)) => vec![TrajectoryRef {
            name: None,
            controls: c.to_path_buf(),
            track: t.to_path_buf(),
        }],
        None => cfg.trajectories.clone(),
    };
    if refs.is_empty() {
        return Err(CliError::Usage(
            "no trajectories: list them under `trajectories` in the config or pass --controls and --track".into(),
        ));
    }
    refs.iter()
        .map(|r| load_run(&cfg.robot, r.label(), &r.controls, &r.track))
        .collect()
}

pub fn problem_for(cfg: &ExperimentConfig, runs: &[LoadedRun]) -> CliResult<IdentificationProblem> {
    let p = IdentificationProblem::new(
        cfg.robot,
        runs.iter().map(|r| r.recording.clone()).collect(),
        cfg.weights,
    )?;
    Ok(match &cfg.bounds {
        Some(b) => p.with_bounds(b.lower, b.upper)?,
        None => p,
    })
}

pub fn solve(cfg: &ExperimentConfig, problem: &IdentificationProblem, solver: Solver) -> CliResult<SolveReport> {
    let x0 = cfg.x0();
    Ok(match solver {
        Solver::QuasiNewton => identify_quasi_newton(problem, &x0, &cfg.solvers.lbfgs)?,
        Solver::NelderMead => identify_nelder_mead(problem, &x0, &cfg.solvers.nelder_mead)?,
        Solver::Cmaes => identify_cmaes(problem, &x0, &cfg.solvers.cmaes)?,
    })
}

// ---------------------------------------------------------------- simulate

pub fn simulate_cmd(
    cfg: &ExperimentConfig,
    controls: &Path,
    mu: Option<WheelVec>,
    start: Option<Pose>,
    out: &Path,
) -> CliResult<Outcome> {
    let mu = match mu {
        Some(m) => FrictionCoeffs::new(m)?,
        None => cfg
            .mu
            .ok_or_else(|| CliError::Usage("no friction given: pass --mu or set `mu` in the config".into()))?,
    };
    let schedule = read_controls(controls, &cfg.robot)?;
    let start = start.or(cfg.start_pose()).unwrap_or_default();
    let traj = simulate(&cfg.robot, &mu, &schedule, start);
    let csv = out.join("trajectory.csv");
    let svg = out.join("trajectory.svg");
    write_trajectory(&csv, &traj)?;
    svg_file(
        &svg,
        &Plot::path(
            "Simulated path",
            vec![Series::new("predicted", PALETTE[1], positions(&traj.poses))],
        ),
    )?;
    let end = traj.last().copied().unwrap_or_default();
    Ok(Outcome {
        ok: true,
        files: vec![csv, svg],
        summary: format!(
            "simulated {} steps; final pose ({:.6}, {:.6}, {:.6})",
            schedule.len(),
            end.x,
            end.y,
            end.theta
        ),
    })
}

// ---------------------------------------------------------------- identify

/// Serialized identification result. Leaves out timing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifyResult {
    pub trajectories: Vec<String>,
    pub solver: Solver,
    pub mu_hat: FrictionCoeffs,
    pub final_loss: f64,
    pub iterations: usize,
    pub function_evals: usize,
    pub gradient_evals: usize,
    pub converged: bool,
}

impl IdentifyResult {
    fn new(trajectories: Vec<String>, r: &SolveReport) -> Self {
        Self {
            trajectories,
            solver: r.solver,
            mu_hat: r.mu_hat,
            final_loss: r.final_loss,
            iterations: r.iterations,
            function_evals: r.function_evals,
            gradient_evals: r.gradient_evals,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifyFile {
    pub results: Vec<IdentifyResult>,
}

fn overlay(runs: &[LoadedRun], params: &RobotParams, fits: &[(usize, FrictionCoeffs)]) -> Plot {
    let mut series = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        let rec = &run.recording;
        let start = rec.target().start;
        let mu = fits.iter().find(|(i, _)| *i == k).map(|(_, m)| *m).unwrap_or(fits[0].1);
        let fitted = simulate(params, &mu, &rec.schedule, start);
        let frictionless = simulate(params, &FrictionCoeffs::zero(), &rec.schedule, start);
        series.push(Series::new(
            format!("{} ground truth", run.name),
            PALETTE[0],
            rec.track.points(),
        ));
        series.push(Series::new(
            format!("{} identified", run.name),
            PALETTE[1],
            positions(&fitted.poses),
        ));
        series.push(
            Series::new(
                format!("{} frictionless", run.name),
                PALETTE[5],
                positions(&frictionless.poses),
            )
            .dashed(),
        );
    }
    Plot::path("Ground truth vs identified model", series)
}

pub fn identify_cmd(
    cfg: &ExperimentConfig,
    pair: Option<(&Path, &Path)>,
    solver: Solver,
    per_trajectory: bool,
    jobs: usize,
    out: &Path,
) -> CliResult<Outcome> {
    let runs = load_runs(cfg, pair)?;
    let mut results = Vec::new();
    let mut curves: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    let mut fits = Vec::new();
    if per_trajectory {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
        let reports: Vec<CliResult<SolveReport>> = pool.install(|| {
            runs.par_iter()
                .map(|r| solve(cfg, &problem_for(cfg, std::slice::from_ref(r))?, solver))
                .collect()
        });
        for (k, (run, report)) in runs.iter().zip(reports).enumerate() {
            let report = report?;
            fits.push((k, report.mu_hat));
            curves.push((run.name.clone(), report.loss_curve.clone()));
            results.push(IdentifyResult::new(vec![run.name.clone()], &report));
        }
    } else {
        let report = solve(cfg, &problem_for(cfg, &runs)?, solver)?;
        let names: Vec<String> = runs.iter().map(|r| r.name.clone()).collect();
        fits.push((0, report.mu_hat));
        curves.push(("all".into(), report.loss_curve.clone()));
        results.push(IdentifyResult::new(names, &report));
    }

    let json = out.join("identify.json");
    let curve_csv = out.join("loss_curve.csv");
    let svg = out.join("overlay.svg");
    let rows: Vec<Vec<String>> = curves
        .iter()
        .flat_map(|(name, c)| {
            c.iter()
                .map(move |(i, f)| vec![name.clone(), i.to_string(), f.to_string()])
        })
        .collect();
    write_table(&curve_csv, &["trajectory", "iteration", "loss"], &rows)?;
    svg_file(&svg, &overlay(&runs, &cfg.robot, &fits))?;
    let ok = results.iter().all(|r| r.converged);
    let summary = results
        .iter()
        .map(|r| {
            format!(
                "{}: mu_hat = {} loss = {:e} iterations = {}{}",
                r.trajectories.join("+"),
                fmt_mu(r.mu_hat.as_array()),
                r.final_loss,
                r.iterations,
                if r.converged { "" } else { " (not converged)" }
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    json_file(&json, &IdentifyFile { results })?;
    Ok(Outcome {
        ok,
        files: vec![json, curve_csv, svg],
        summary,
    })
}

// --------------------------------------------------------------- gradcheck

/// Largest acceptable component error for `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Check `gradient` against finite differences and write a report table.
pub fn gradcheck_with<G>(
    problem: &IdentificationProblem,
    x: &WheelVec,
    h: f64,
    out: &Path,
    gradient: G,
) -> CliResult<(Outcome, GradientCheck)>
where
    G: Fn(&WheelVec) -> WheelVec,
{
    let check = gradient_check_with(problem, x, h, gradient)?;
    let csv = out.join("gradcheck.csv");
    let rows: Vec<Vec<String>> = check
        .components
        .iter()
        .enumerate()
        .map(|(j, c)| {
            vec![
                (j + 1).to_string(),
                c.analytic.to_string(),
                c.numeric.to_string(),
                c.rel_err.to_string(),
            ]
        })
        .collect();
    write_table(&csv, &["wheel", "analytic", "numeric", "rel_err"], &rows)?;
    let mut table = format!(
        "{:>5}  {:>22}  {:>22}  {:>10}\n",
        "wheel", "analytic", "numeric", "rel_err"
    );
    for (j, c) in check.components.iter().enumerate() {
        table.push_str(&format!(
            "{:>5}  {:>22.15e}  {:>22.15e}  {:>10.3e}\n",
            j + 1,
            c.analytic,
            c.numeric,
            c.rel_err
        ));
    }
    let worst = check.max_rel_err();
    let ok = worst <= GRADCHECK_TOLERANCE;
    table.push_str(&format!(
        "max rel_err {worst:.3e} at mu = {} with h = {h:e}: {}",
        fmt_mu(x),
        if ok { "pass" } else { "FAIL" }
    ));
    Ok((
        Outcome {
            ok,
            files: vec![csv],
            summary: table,
        },
        check,
    ))
}

pub fn gradcheck_cmd(
    cfg: &ExperimentConfig,
    pair: Option<(&Path, &Path)>,
    h: f64,
    at: Option<WheelVec>,
    out: &Path,
) -> CliResult<Outcome> {
    let runs = load_runs(cfg, pair)?;
    let problem = problem_for(cfg, &runs)?;
    let x = at.unwrap_or(cfg.x0());
    Ok(gradcheck_with(&problem, &x, h, out, |mu| problem.loss_and_gradient(mu).1)?.0)
}

// ------------------------------------------------------------------ follow

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveChoice {
    Circle,
    Eight,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuSource {
    File,
    Net,
}

/// Unit circle lap in 8 s sampled at 4 waypoints/s.
pub fn default_circle() -> ReferenceCurve {
    ReferenceCurve::circle(1.0, 8.0, 4.0)
}

/// Gerono figure-8 of scale 1 m in 12 s, left lobe forwards and right lobe
/// backwards.
pub fn default_eight() -> ReferenceCurve {
    ReferenceCurve::eight(1.0, LobeDirection::Forward, LobeDirection::Backward, 12.0, 4.0)
}

fn read_mu_file(path: &Path) -> CliResult<FrictionCoeffs> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
    let candidate = if v.is_array() {
        v
    } else if let Some(m) = v.get("mu_hat") {
        m.clone()
    } else if let Some(m) = v.pointer("/results/0/mu_hat") {
        m.clone()
    } else {
        return Err(CliError::config(
            path,
            "expected a friction array or an identify report",
        ));
    };
    serde_json::from_value(candidate).map_err(|e| CliError::config(path, e.to_string()))
}

/// Network-predicted friction averaged over the plan's segment commands.
fn net_friction(net: &Mlp, commands: &[WheelVec]) -> CliResult<FrictionCoeffs> {
    let mut sum = [0.0; WHEELS];
    for w in commands {
        let mu = predict_friction(net, w)?;
        for (acc, m) in sum.iter_mut().zip(mu.as_array()) {
            *acc += m;
        }
    }
    let n = commands.len().max(1) as f64;
    Ok(FrictionCoeffs::clamped(sum.map(|s| s / n)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PlanSummary {
    final_loss: f64,
    initial_loss: f64,
    iterations: usize,
    warmup_iterations: usize,
    function_evals: usize,
    gradient_evals: usize,
    converged: bool,
    predicted: TrackingReport,
}

impl From<&PlanReport> for PlanSummary {
    fn from(r: &PlanReport) -> Self {
        Self {
            final_loss: r.final_loss,
            initial_loss: r.initial_loss,
            iterations: r.iterations,
            warmup_iterations: r.warmup_iterations,
            function_evals: r.function_evals,
            gradient_evals: r.gradient_evals,
            converged: r.converged,
            predicted: r.predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct FollowFile {
    curve: &'static str,
    mu_source: &'static str,
    mu_plan: FrictionCoeffs,
    mu_true: FrictionCoeffs,
    start: Pose,
    segments: usize,
    plan: PlanSummary,
    rollout: TrackingReport,
}

pub fn follow_cmd(
    cfg: &ExperimentConfig,
    curve: CurveChoice,
    source: MuSource,
    net_override: Option<&Path>,
    out: &Path,
) -> CliResult<Outcome> {
    let waypoints: GroundTruthTrack = match curve {
        CurveChoice::Circle => discretize(cfg.curves.circle.as_ref().unwrap_or(&default_circle()))?,
        CurveChoice::Eight => discretize(cfg.curves.eight.as_ref().unwrap_or(&default_eight()))?,
        CurveChoice::File => {
            let path = cfg
                .curves
                .file
                .as_ref()
                .ok_or_else(|| CliError::Usage("--curve file needs `curves.file` in the config".into()))?;
            read_track(path)?
        }
    };
    let first = waypoints.samples()[0];
    let start = cfg.start_pose().unwrap_or(Pose::new(first.x, first.y, 0.0));
    let params = cfg.robot;

    let (mu_plan, plan, report) = match source {
        MuSource::File => {
            let mu = match &cfg.mu_file {
                Some(p) => read_mu_file(p)?,
                None => cfg
                    .mu
                    .ok_or_else(|| CliError::Usage("--mu-source file needs `mu_file` or `mu` in the config".into()))?,
            };
            let (plan, report) = plan_for_waypoints(&params, &mu, &waypoints, start, &cfg.plan)?;
            (mu, plan, report)
        }
        MuSource::Net => {
            let path = net_override
                .map(Path::to_path_buf)
                .or_else(|| cfg.net.clone())
                .ok_or_else(|| CliError::Usage("--mu-source net needs --net or `net` in the config".into()))?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let net = Mlp::from_json(&text).map_err(|e| CliError::config(&path, e.to_string()))?;
            // The friction depends on the commands being planned: plan once
            // with the idle prediction, then again with the prediction for
            // that first plan's commands.
            let mu0 = predict_friction(&net, &[0.0; WHEELS])?;
            let (first_plan, _) = plan_for_waypoints(&params, &mu0, &waypoints, start, &cfg.plan)?;
            let mu1 = net_friction(&net, &first_plan.omega_s)?;
            let (plan, report) = plan_for_waypoints(&params, &mu1, &waypoints, start, &cfg.plan)?;
            (mu1, plan, report)
        }
    };
    let mu_true = cfg.mu.unwrap_or(mu_plan);
    let (traj, tracking) = rollout(&params, &mu_true, &plan, start)?;
    let predicted = simulate(&params, &mu_plan, &plan.schedule()?, start);

    let plan_csv = out.join("plan.csv");
    let predicted_csv = out.join("predicted.csv");
    let rollout_csv = out.join("rollout.csv");
    let json = out.join("follow.json");
    let svg = out.join("follow.svg");
    write_controls(&plan_csv, &plan.times(), &plan.omega_s)?;
    write_trajectory(&predicted_csv, &predicted)?;
    write_trajectory(&rollout_csv, &traj)?;
    let reference = SplinePath::fit(&waypoints.points())?.polyline(16);
    svg_file(
        &svg,
        &Plot::path(
            "Path following",
            vec![
                Series::new("reference", PALETTE[2], reference),
                Series::new("predicted", PALETTE[1], positions(&predicted.poses)),
                Series::new("rollout", PALETTE[0], positions(&traj.poses)).dashed(),
            ],
        ),
    )?;
    let curve_name = match curve {
        CurveChoice::Circle => "circle",
        CurveChoice::Eight => "eight",
        CurveChoice::File => "file",
    };
    let doc = FollowFile {
        curve: curve_name,
        mu_source: match source {
            MuSource::File => "file",
            MuSource::Net => "net",
        },
        mu_plan,
        mu_true,
        start,
        segments: plan.segments(),
        plan: PlanSummary::from(&report),
        rollout: tracking,
    };
    json_file(&json, &doc)?;
    Ok(Outcome {
        ok: report.converged,
        files: vec![plan_csv, predicted_csv, rollout_csv, json, svg],
        summary: format!(
            "{curve_name}: {} segments, rollout mean deviation {:.4e} m (max {:.4e} m), plan loss {:.4e}{}",
            plan.segments(),
            tracking.mean_deviation,
            tracking.max_deviation,
            report.final_loss,
            if report.converged { "" } else { " (not converged)" }
        ),
    })
}

// ------------------------------------------------------------------- sweep

pub fn sweep_cmd(cfg: &ExperimentConfig, fractions: Option<Vec<f64>>, out: &Path) -> CliResult<Outcome> {
    let mut fractions = fractions.unwrap_or_else(|| cfg.fractions.clone());
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    if fractions.is_empty() {
        return Err(CliError::Usage("no fractions to sweep".into()));
    }
    let runs = load_runs(cfg, None)?;
    let problem = problem_for(cfg, &runs)?;
    let points = data_efficiency_sweep(&problem, &fractions, &cfg.x0(), &cfg.solvers.lbfgs)?;
    let csv = out.join("sweep.csv");
    let svg = out.join("sweep.svg");
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut row = vec![
                p.fraction.to_string(),
                p.final_loss.map_or(String::new(), |v| v.to_string()),
            ];
            match &p.report {
                Some(r) => {
                    row.extend(r.mu_hat.as_array().iter().map(f64::to_string));
                    row.push(r.iterations.to_string());
                    row.push(r.converged.to_string());
                }
                None => row.extend(std::iter::repeat_n(String::new(), WHEELS + 2)),
            }
            row.push(p.note.clone().unwrap_or_default());
            row
        })
        .collect();
    write_table(
        &csv,
        &[
            "fraction",
            "final_loss",
            "mu1",
            "mu2",
            "mu3",
            "mu4",
            "iterations",
            "converged",
            "note",
        ],
        &rows,
    )?;
    let curve: Vec<[f64; 2]> = points
        .iter()
        .filter_map(|p| p.final_loss.map(|l| [p.fraction, l]))
        .collect();
    svg_file(
        &svg,
        &Plot {
            title: "Data efficiency".into(),
            x_label: "fraction of samples used".into(),
            y_label: "full-data loss".into(),
            equal_aspect: false,
            series: vec![Series::new("full-data loss", PALETTE[1], curve)],
        },
    )?;
    let ok = points.iter().all(|p| p.report.as_ref().is_none_or(|r| r.converged));
    let summary = points
        .iter()
        .map(|p| match p.final_loss {
            Some(l) => format!("fraction {}: full-data loss {l:e}", p.fraction),
            None => format!("fraction {}: {}", p.fraction, p.note.clone().unwrap_or_default()),
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        ok,
        files: vec![csv, svg],
        summary,
    })
}

// ---------------------------------------------------------------- fixtures

pub fn fixtures_cmd(params: &RobotParams, seed: u64, count: usize, out: &Path) -> CliResult<Outcome> {
    let files = crate::fixtures::write_all(out, params, seed, count)?;
    Ok(Outcome {
        ok: true,
        summary: format!("wrote {count} fixtures to {} (base seed {seed})", out.display()),
        files,
    })
}

// --------------------------------------------------------------- train-net

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Friction,
    Baseline,
}

/// Constant-command stretches of a schedule.
fn command_blocks(schedule: &ControlSchedule) -> Vec<WheelVec> {
    let mut blocks: Vec<WheelVec> = Vec::new();
    for w in schedule.controls() {
        if blocks.last() != Some(w) {
            blocks.push(*w);
        }
    }
    blocks
}

pub fn train_net_cmd(cfg: &ExperimentConfig, kind: NetKind, out_file: &Path) -> CliResult<Outcome> {
    let trained = match kind {
        NetKind::Baseline => {
            let mu = cfg
                .mu
                .ok_or_else(|| CliError::Usage("the baseline's synthetic runs need `mu` in the config".into()))?;
            let data = baseline_dataset(&cfg.robot, &mu, 8, cfg.seed)?;
            train_baseline(&data, &cfg.train)?
        }
        NetKind::Friction => {
            // Each run's identified friction labels every command it held.
            let runs = load_runs(cfg, None)?;
            let mut samples = Vec::new();
            for run in &runs {
                let report = solve(cfg, &problem_for(cfg, std::slice::from_ref(run))?, Solver::QuasiNewton)?;
                for w in command_blocks(&run.recording.schedule) {
                    samples.push(Sample {
                        input: w.to_vec(),
                        target: report.mu_hat.as_array().to_vec(),
                    });
                }
            }
            let net = Mlp::random(&FRICTION_NET_SIZES, OutputTransform::TwoSigmoid, cfg.train.seed)?
                .with_input_scale(vec![1.0 / cfg.robot.omega_max; WHEELS])?;
            train(&net, &samples, &cfg.train)?
        }
    };
    write_text(out_file, &(trained.net.to_json()? + "\n"))?;
    let history = out_file.with_extension("history.csv");
    let last = trained.history.len() - 1;
    let rows: Vec<Vec<String>> = trained
        .history
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 100 == 0 || *i == last)
        .map(|(i, l)| vec![i.to_string(), l.to_string()])
        .collect();
    write_table(&history, &["epoch", "loss"], &rows)?;
    Ok(Outcome {
        ok: true,
        files: vec![out_file.to_path_buf(), history],
        summary: format!(
            "trained {:?} net: loss {:e} -> {:e}",
            trained.net.sizes(),
            trained.history[0],
            trained.history[last]
        ),
    })
}
