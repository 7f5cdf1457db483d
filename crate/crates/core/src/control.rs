//! Path following: turn a reference curve into timed waypoints, optimize
//! piecewise-constant wheel commands through the differentiable model, and
//! score open-loop rollouts against the reference.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frictionnet::{
    predict_controls_baseline, train, Mlp, OutputTransform, Sample, TrainConfig, Trained, BASELINE_NET_SIZES,
};
use crate::grad::{loss_gradient_controls, squared_error_gradient_controls, SegmentMap};
use crate::loss::{compute_loss_prepared, LossWeights, TrackingTarget};
use crate::model::{
    kinematic_matrix, simulate, steady_state_omega, ControlSchedule, FrictionCoeffs, GroundTruthTrack, Pose,
    RigidTransform, RobotParams, Trajectory, WheelVec, WHEELS,
};
use crate::optimize::{lbfgs, LbfgsOptions};
use crate::spline::SplinePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LobeDirection {
    /// Increasing curve parameter.
    #[default]
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveShape {
    /// Arc traversed at constant angular rate from `start_angle` through `span` radians.
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
        #[serde(default = "default_start_angle")]
        start_angle: f64,
        #[serde(default = "default_span")]
        span: f64,
    },
    /// Lemniscate of Gerono `x = a·cos φ, y = a·sin φ·cos φ`, centred on the
    /// crossing point. The left lobe is driven first, then the right one;
    /// each takes half the duration and starts at the crossing.
    Eight {
        scale: f64,
        #[serde(default)]
        left: LobeDirection,
        #[serde(default = "backward")]
        right: LobeDirection,
    },
    /// Polyline traversed at constant speed along its length.
    Polyline { points: Vec<[f64; 2]> },
}

fn default_start_angle() -> f64 {
    -FRAC_PI_2
}

fn default_span() -> f64 {
    TAU
}

fn backward() -> LobeDirection {
    LobeDirection::Backward
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCurve {
    pub shape: CurveShape,
    /// Seconds.
    pub duration: f64,
    /// Waypoints per second.
    pub rate: f64,
}

impl ReferenceCurve {
    pub fn circle(radius: f64, duration: f64, rate: f64) -> Self {
        Self {
            shape: CurveShape::Circle {
                center: [0.0, 0.0],
                radius,
                start_angle: default_start_angle(),
                span: TAU,
            },
            duration,
            rate,
        }
    }

    pub fn eight(scale: f64, left: LobeDirection, right: LobeDirection, duration: f64, rate: f64) -> Self {
        Self {
            shape: CurveShape::Eight { scale, left, right },
            duration,
            rate,
        }
    }

    pub fn polyline(points: Vec<[f64; 2]>, duration: f64, rate: f64) -> Self {
        Self {
            shape: CurveShape::Polyline { points },
            duration,
            rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidCurve(format!(
                "duration must be ≥ 0, got {}",
                self.duration
            )));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidCurve(format!(
                "waypoint rate must be > 0, got {}",
                self.rate
            )));
        }
        match &self.shape {
            CurveShape::Circle {
                center,
                radius,
                start_angle,
                span,
            } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidCurve(format!("circle radius must be > 0, got {radius}")));
                }
                if !(center.iter().all(|v| v.is_finite()) && start_angle.is_finite() && span.is_finite()) {
                    return Err(Error::InvalidCurve("non-finite circle parameter".into()));
                }
            }
            CurveShape::Eight { scale, .. } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::InvalidCurve(format!("figure-8 scale must be > 0, got {scale}")));
                }
            }
            CurveShape::Polyline { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidCurve(format!(
                        "polyline needs ≥ 2 points, got {}",
                        points.len()
                    )));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidCurve("non-finite polyline point".into()));
                }
            }
        }
        Ok(())
    }

    /// Position at normalized time `u ∈ [0, 1]`.
    pub fn point_at(&self, u: f64) -> [f64; 2] {
        match &self.shape {
            CurveShape::Circle {
                center,
                radius,
                start_angle,
                span,
            } => {
                let a = start_angle + span * u;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
            CurveShape::Eight { scale, left, right } => {
                // Left lobe spans φ ∈ [π/2, 3π/2], right lobe φ ∈ [−π/2, π/2].
                let (lobe_start, dir, v) = if u <= 0.5 {
                    (FRAC_PI_2, *left, 2.0 * u)
                } else {
                    (-FRAC_PI_2, *right, 2.0 * u - 1.0)
                };
                let phi = match dir {
                    LobeDirection::Forward => lobe_start + PI * v,
                    LobeDirection::Backward => lobe_start + PI * (1.0 - v),
                };
                [scale * phi.cos(), scale * phi.sin() * phi.cos()]
            }
            CurveShape::Polyline { points } => {
                let lengths: Vec<f64> = points
                    .windows(2)
                    .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
                    .collect();
                let total: f64 = lengths.iter().sum();
                if total == 0.0 {
                    return points[0];
                }
                let mut s = u.clamp(0.0, 1.0) * total;
                for (i, l) in lengths.iter().enumerate() {
                    if s <= *l || i == lengths.len() - 1 {
                        let f = if *l > 0.0 { (s / l).min(1.0) } else { 0.0 };
                        let (a, b) = (points[i], points[i + 1]);
                        return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
                    }
                    s -= l;
                }
                points[points.len() - 1]
            }
        }
    }

    /// Number of waypoint intervals, `round(n·T)`.
    pub fn segments(&self) -> usize {
        (self.rate * self.duration).round() as usize
    }
}

/// `n·T + 1` waypoints uniform in time.
pub fn discretize(curve: &ReferenceCurve) -> Result<GroundTruthTrack> {
    curve.validate()?;
    let segments = curve.segments();
    if segments < 1 {
        return Err(Error::TooFewWaypoints(segments + 1));
    }
    let times: Vec<f64> = (0..=segments)
        .map(|k| curve.duration * k as f64 / segments as f64)
        .collect();
    let points: Vec<[f64; 2]> = (0..=segments)
        .map(|k| curve.point_at(k as f64 / segments as f64))
        .collect();
    GroundTruthTrack::from_points(&times, &points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// All segments optimized together from zero controls.
    #[default]
    Joint,
    /// Segments optimized one at a time against the waypoints reached so
    /// far, then polished jointly.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanOptions {
    pub weights: LossWeights,
    /// Simulation steps per second within each segment.
    pub control_rate: f64,
    /// Iteration cap for the tracking-loss phase.
    pub max_iterations: usize,
    /// Iteration cap for the warm-up fit, which runs until its projected
    /// gradient vanishes so that equal tasks reach equal plans.
    pub warm_up_iterations: usize,
    pub mode: PlanMode,
    /// First fit the squared distances to the waypoints, then polish with
    /// the tracking loss. With the robot parked on the reference spline the
    /// spline term is a cone at zero controls, which otherwise traps the
    /// solver at its starting point.
    pub warm_up: bool,
    /// Weight (m²/rad²) of holding the start heading in the warm-up fit.
    /// Waypoints constrain position only, so without it the fit is not
    /// unique.
    pub heading_weight: f64,
    /// Weight of `Σω²` in the warm-up fit.
    pub effort_weight: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            control_rate: 240.0,
            max_iterations: 2000,
            warm_up_iterations: 5000,
            mode: PlanMode::Joint,
            warm_up: true,
            heading_weight: 1.0,
            effort_weight: 0.0,
        }
    }
}

/// Piecewise-constant commands, one per waypoint interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPlan {
    pub waypoints: GroundTruthTrack,
    pub omega_s: Vec<WheelVec>,
    pub omega_max: f64,
    /// Simulation steps per segment.
    pub substeps: usize,
}

impl ControlPlan {
    pub fn segments(&self) -> usize {
        self.omega_s.len()
    }

    /// Segment boundaries.
    pub fn times(&self) -> Vec<f64> {
        self.waypoints.samples().iter().map(|s| s.t).collect()
    }

    /// The plan at simulation resolution.
    pub fn schedule(&self) -> Result<ControlSchedule> {
        Ok(ControlSchedule::new(self.times(), self.omega_s.clone())?.refined(self.substeps))
    }

    pub fn within_bounds(&self) -> bool {
        self.omega_s.iter().flatten().all(|w| w.abs() <= self.omega_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub final_loss: f64,
    /// Loss of the all-zero plan.
    pub initial_loss: f64,
    /// Iterations of the final phase.
    pub iterations: usize,
    /// Iterations spent before the final phase (warm-up and sequential fits).
    pub warmup_iterations: usize,
    pub function_evals: usize,
    pub gradient_evals: usize,
    pub wall_time: f64,
    pub loss_curve: Vec<(usize, f64)>,
    pub converged: bool,
    /// Tracking of the plan under the planning friction.
    pub predicted: TrackingReport,
}

impl PlanReport {
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    /// Mean distance from every simulated position to the reference spline.
    pub mean_deviation: f64,
    pub max_deviation: f64,
    /// Distance from the last simulated position to the last waypoint.
    pub endpoint_error: f64,
    /// Planar speed during the last step.
    pub final_speed: f64,
}

#[derive(Clone)]
struct PlanProblem<'a> {
    params: &'a RobotParams,
    mu: &'a FrictionCoeffs,
    times: Vec<f64>,
    substeps: usize,
    target: TrackingTarget,
    objective: Objective,
}

#[derive(Clone, Copy)]
enum Objective {
    Tracking(LossWeights),
    /// Squared waypoint and heading-hold error plus `effort·Σω²`.
    SquaredError {
        heading: f64,
        effort: f64,
    },
}

impl PlanProblem<'_> {
    fn schedule(&self, x: &[f64]) -> ControlSchedule {
        let controls = x.chunks(WHEELS).map(|c| std::array::from_fn(|j| c[j])).collect();
        ControlSchedule::new(self.times.clone(), controls)
            .expect("segment times are validated")
            .refined(self.substeps)
    }

    fn loss(&self, x: &[f64]) -> f64 {
        match self.objective {
            Objective::Tracking(w) => {
                compute_loss_prepared(self.params, self.mu, &self.schedule(x), &self.target, &w).total
            }
            Objective::SquaredError { .. } => self.loss_gradient(x).0,
        }
    }

    fn loss_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let segments = x.len() / WHEELS;
        let map = SegmentMap::uniform(segments, self.substeps);
        let schedule = self.schedule(x);
        match self.objective {
            Objective::Tracking(w) => {
                let (r, g) = loss_gradient_controls(self.params, self.mu, &schedule, &map, &self.target, &w);
                (r.total, g.values)
            }
            Objective::SquaredError { heading, effort } => {
                let (f, g) =
                    squared_error_gradient_controls(self.params, self.mu, &schedule, &map, &self.target, heading);
                let penalty: f64 = x.iter().map(|v| v * v).sum();
                let g = g.values.iter().zip(x).map(|(gi, xi)| gi + 2.0 * effort * xi).collect();
                (f + effort * penalty, g)
            }
        }
    }
}

/// Plan commands for a reference curve.
pub fn plan_controls(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    curve: &ReferenceCurve,
    start: Pose,
    opts: &PlanOptions,
) -> Result<(ControlPlan, PlanReport)> {
    plan_for_waypoints(params, mu, &discretize(curve)?, start, opts)
}

/// Plan commands through explicit timed waypoints.
pub fn plan_for_waypoints(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    waypoints: &GroundTruthTrack,
    start: Pose,
    opts: &PlanOptions,
) -> Result<(ControlPlan, PlanReport)> {
    params.validate()?;
    opts.weights.validate()?;
    if !(opts.control_rate.is_finite() && opts.control_rate > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "control rate must be > 0, got {}",
            opts.control_rate
        )));
    }
    if waypoints.len() < 2 {
        return Err(Error::TooFewWaypoints(waypoints.len()));
    }
    let started = Instant::now();
    // Commands are body-frame, so solve in the start pose's frame; tasks that
    // differ by a rigid motion then pose the same problem.
    let (original, world_start) = (waypoints, start);
    let local = waypoints.transformed(&RigidTransform::into_frame_of(&start));
    let (waypoints, start) = (&local, Pose::new(0.0, 0.0, 0.0));
    let times: Vec<f64> = waypoints.samples().iter().map(|s| s.t).collect();
    let segments = times.len() - 1;
    let seg_dt = (times[segments] - times[0]) / segments as f64;
    let substeps = ((opts.control_rate * seg_dt).round() as usize).max(1);
    let coarse = ControlSchedule::new(times.clone(), vec![[0.0; WHEELS]; segments])?;
    let target = TrackingTarget::with_start(&coarse.refined(substeps), waypoints, start)?;
    let problem = PlanProblem {
        params,
        mu,
        times,
        substeps,
        target,
        objective: Objective::Tracking(opts.weights),
    };

    let n = WHEELS * segments;
    let lo = vec![-params.omega_max; n];
    let hi = vec![params.omega_max; n];
    let lbfgs_opts = LbfgsOptions {
        max_iterations: opts.max_iterations,
        ..Default::default()
    };
    let warm = PlanProblem {
        objective: Objective::SquaredError {
            heading: opts.heading_weight,
            effort: opts.effort_weight,
        },
        ..problem.clone()
    };
    let warm_up = opts.warm_up;
    let first = if warm_up { &warm } else { &problem };
    let mut warmup_iterations = 0;
    let mut x0 = match opts.mode {
        PlanMode::Joint => vec![0.0; n],
        PlanMode::Sequential => {
            sequential_warm_start(first, waypoints, start, &lo, &hi, &lbfgs_opts, &mut warmup_iterations)?
        }
    };
    if warm_up {
        let tight = LbfgsOptions {
            max_iterations: opts.warm_up_iterations,
            pg_tol: 1e-13,
            rel_tol: 0.0,
            x_tol: 0.0,
            ..lbfgs_opts.clone()
        };
        let m = lbfgs::minimize(|x| warm.loss(x), |x| warm.loss_gradient(x), &x0, &lo, &hi, &tight);
        warmup_iterations += m.iterations;
        x0 = m.x;
    }
    let zero = vec![0.0; n];
    let initial_loss = problem.loss(&zero);
    let mut m = lbfgs::minimize(
        |x| problem.loss(x),
        |x| problem.loss_gradient(x),
        &x0,
        &lo,
        &hi,
        &lbfgs_opts,
    );
    if m.f > initial_loss {
        m.x = zero;
        m.f = initial_loss;
    }
    canonicalize(params, mu, &mut m.x);
    m.f = problem.loss(&m.x);

    let plan = ControlPlan {
        waypoints: original.clone(),
        omega_s: m.x.chunks(WHEELS).map(|c| std::array::from_fn(|j| c[j])).collect(),
        omega_max: params.omega_max,
        substeps,
    };
    let predicted = rollout(params, mu, &plan, world_start)?.1;
    let report = PlanReport {
        final_loss: m.f,
        initial_loss,
        iterations: m.iterations,
        warmup_iterations,
        function_evals: m.function_evals,
        gradient_evals: m.gradient_evals,
        wall_time: started.elapsed().as_secs_f64(),
        loss_curve: m.curve,
        converged: m.converged,
        predicted,
    };
    Ok((plan, report))
}

/// Commands along `(1/a)·(1,1,-1,-1)` (with `a` the per-wheel friction
/// factors) leave every wheel velocity combination, and so the trajectory,
/// unchanged. Pick the smallest-norm command on that line within bounds so
/// equal tasks get equal plans; stalled wheels are set to zero.
fn canonicalize(params: &RobotParams, mu: &FrictionCoeffs, x: &mut [f64]) {
    const NULL: WheelVec = [1.0, 1.0, -1.0, -1.0];
    let a: WheelVec = std::array::from_fn(|j| params.wheel_factor(mu.as_array()[j]));
    let stalled = a.contains(&0.0);
    for seg in x.chunks_mut(WHEELS) {
        if stalled {
            for j in 0..WHEELS {
                if a[j] == 0.0 {
                    seg[j] = 0.0;
                }
            }
            continue;
        }
        let n: WheelVec = std::array::from_fn(|j| NULL[j] / a[j]);
        let nn: f64 = n.iter().map(|v| v * v).sum();
        let t = -(0..WHEELS).map(|j| seg[j] * n[j]).sum::<f64>() / nn;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for j in 0..WHEELS {
            let (p, q) = ((-params.omega_max - seg[j]) / n[j], (params.omega_max - seg[j]) / n[j]);
            lo = lo.max(p.min(q));
            hi = hi.min(p.max(q));
        }
        let t = t.clamp(lo.min(0.0), hi.max(0.0));
        for j in 0..WHEELS {
            seg[j] = (seg[j] + t * n[j]).clamp(-params.omega_max, params.omega_max);
        }
    }
}

/// Fit each segment in turn against the waypoints up to its end, starting
/// from the previous segment's command.
fn sequential_warm_start(
    problem: &PlanProblem,
    waypoints: &GroundTruthTrack,
    start: Pose,
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsOptions,
    iterations: &mut usize,
) -> Result<Vec<f64>> {
    let segments = problem.times.len() - 1;
    let mut x = vec![0.0; WHEELS * segments];
    for k in 0..segments {
        let prefix = GroundTruthTrack::new(waypoints.samples()[..k + 2].to_vec())?;
        let times = problem.times[..k + 2].to_vec();
        let coarse = ControlSchedule::new(times.clone(), vec![[0.0; WHEELS]; k + 1])?;
        let sub = PlanProblem {
            params: problem.params,
            mu: problem.mu,
            times,
            substeps: problem.substeps,
            target: TrackingTarget::with_start(&coarse.refined(problem.substeps), &prefix, start)?,
            objective: problem.objective,
        };
        if k > 0 {
            let (done, rest) = x.split_at_mut(WHEELS * k);
            rest[..WHEELS].copy_from_slice(&done[WHEELS * (k - 1)..]);
        }
        let fixed = x[..WHEELS * k].to_vec();
        let range = WHEELS * k..WHEELS * (k + 1);
        let full = |seg: &[f64]| {
            let mut v = fixed.clone();
            v.extend_from_slice(seg);
            v
        };
        let m = lbfgs::minimize(
            |seg| sub.loss(&full(seg)),
            |seg| {
                let (f, g) = sub.loss_gradient(&full(seg));
                (f, g[range.clone()].to_vec())
            },
            &x[range.clone()],
            &lo[range.clone()],
            &hi[range.clone()],
            opts,
        );
        *iterations += m.iterations;
        x[range.clone()].copy_from_slice(&m.x);
    }
    Ok(x)
}

/// Simulate a plan and compare it with the plan's reference.
pub fn rollout(
    params: &RobotParams,
    mu_true: &FrictionCoeffs,
    plan: &ControlPlan,
    start: Pose,
) -> Result<(Trajectory, TrackingReport)> {
    let schedule = plan.schedule()?;
    let traj = simulate(params, mu_true, &schedule, start);
    let spline = SplinePath::fit(&plan.waypoints.points())?;
    let deviations: Vec<f64> = traj
        .poses
        .iter()
        .map(|p| spline.closest_point(p.position()).distance)
        .collect();
    let last = traj.poses[traj.poses.len() - 1];
    let goal = plan.waypoints.samples()[plan.waypoints.len() - 1];
    let b = kinematic_matrix(params);
    let final_speed = schedule.controls().last().map_or(0.0, |w| {
        let v = b.apply(&steady_state_omega(params, mu_true, w));
        v.vx.hypot(v.vy)
    });
    let report = TrackingReport {
        mean_deviation: deviations.iter().sum::<f64>() / deviations.len() as f64,
        max_deviation: deviations.iter().copied().fold(0.0, f64::max),
        endpoint_error: (last.x - goal.x).hypot(last.y - goal.y),
        final_speed,
    };
    Ok((traj, report))
}

/// Commands from the inverse-dynamics baseline: each waypoint step,
/// rescaled to the net's training interval `sample_dt`, is mapped to a duty
/// cycle and multiplied by `omega_max`.
pub fn baseline_plan(
    params: &RobotParams,
    net: &Mlp,
    waypoints: &GroundTruthTrack,
    sample_dt: f64,
    control_rate: f64,
) -> Result<ControlPlan> {
    if waypoints.len() < 2 {
        return Err(Error::TooFewWaypoints(waypoints.len()));
    }
    let s = waypoints.samples();
    let omega_s = s
        .windows(2)
        .map(|w| {
            let k = sample_dt / (w[1].t - w[0].t);
            let delta = [(w[1].x - w[0].x) * k, (w[1].y - w[0].y) * k, 0.0];
            let duty = predict_controls_baseline(net, &delta)?;
            Ok(duty.map(|d| d.clamp(-1.0, 1.0) * params.omega_max))
        })
        .collect::<Result<Vec<WheelVec>>>()?;
    let seg_dt = (s[s.len() - 1].t - s[0].t) / (s.len() - 1) as f64;
    Ok(ControlPlan {
        waypoints: waypoints.clone(),
        omega_s,
        omega_max: params.omega_max,
        substeps: ((control_rate * seg_dt).round() as usize).max(1),
    })
}

/// Training pairs for the inverse-dynamics baseline: world-frame pose
/// changes over one camera interval mapped to the duty that caused them.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineData {
    pub samples: Vec<Sample>,
    /// Camera interval the pose changes span, s.
    pub sample_dt: f64,
}

/// Seconds each synthetic baseline run lasts.
pub const BASELINE_RUN_SECONDS: f64 = 2.0;
const BASELINE_SIM_RATE: f64 = 240.0;
const BASELINE_CAMERA_STRIDE: usize = 4;
const BASELINE_KEEP_EVERY: usize = 12;

/// Drive `runs` constant random duty vectors from rest and collect
/// `(Δx, Δy, Δθ) → duty` pairs at camera rate.
pub fn baseline_dataset(params: &RobotParams, mu: &FrictionCoeffs, runs: usize, seed: u64) -> Result<BaselineData> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for _ in 0..runs {
        let duty: WheelVec = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let schedule = ControlSchedule::constant(
            BASELINE_RUN_SECONDS,
            BASELINE_SIM_RATE,
            duty.map(|d| d * params.omega_max),
        )?;
        let traj = simulate(params, mu, &schedule, Pose::default());
        let track = GroundTruthTrack::from_trajectory(&traj, BASELINE_CAMERA_STRIDE);
        let pairs: Vec<Sample> = track
            .samples()
            .windows(2)
            .map(|w| Sample {
                input: vec![
                    w[1].x - w[0].x,
                    w[1].y - w[0].y,
                    w[1].theta.unwrap_or(0.0) - w[0].theta.unwrap_or(0.0),
                ],
                target: duty.to_vec(),
            })
            .collect();
        samples.extend(pairs.into_iter().step_by(BASELINE_KEEP_EVERY));
    }
    Ok(BaselineData {
        samples,
        sample_dt: BASELINE_CAMERA_STRIDE as f64 / BASELINE_SIM_RATE,
    })
}

/// Fit the 3-32-4 baseline, with inputs scaled by their largest magnitude.
pub fn train_baseline(data: &BaselineData, cfg: &TrainConfig) -> Result<Trained> {
    let scale = (0..3)
        .map(|k| {
            let m = data.samples.iter().map(|s| s.input[k].abs()).fold(0.0, f64::max);
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect();
    let net = Mlp::random(&BASELINE_NET_SIZES, OutputTransform::Tanh, cfg.seed)?.with_input_scale(scale)?;
    train(&net, &data.samples, cfg)
}

/// Apply a rigid transform to both a waypoint track and a start pose.
pub fn transform_task(waypoints: &GroundTruthTrack, start: &Pose, tf: &RigidTransform) -> (GroundTruthTrack, Pose) {
    (waypoints.transformed(tf), tf.apply_pose(start))
}
