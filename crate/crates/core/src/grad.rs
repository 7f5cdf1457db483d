//! Analytic derivatives of the tracking loss, by forward accumulation of pose
//! sensitivities alongside the pose integration.
//!
//! For each step the sensitivity matrix `J = ∂(x, y, θ)/∂p` is propagated as
//!
//! ```text
//! ∂x' = ∂x + dt·(c·b1j − s·b2j)·∂ω_j − dt·(vx·s + vy·c)·∂θ
//! ∂y' = ∂y + dt·(s·b1j + c·b2j)·∂ω_j + dt·(vx·c − vy·s)·∂θ
//! ∂θ' = ∂θ + dt·b3j·∂ω_j
//! ```
//!
//! with `s, c` taken at the heading before the step. Loss terms are
//! accumulated before the update of the same step, so `J` is exactly the
//! derivative of the pose that enters the loss. Closest points on the spline
//! are held constant.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::loss::{accumulate, sample_term, LossReport, LossWeights, MatchedSample, TrackingTarget};
use crate::model::{
    kinematic_matrix, step_pose, BodyVelocity, ControlSchedule, FrictionCoeffs, GroundTruthTrack, KinematicMatrix,
    Pose, RobotParams, WheelVec, WHEELS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    Friction,
    Controls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVector {
    pub wrt: GradTarget,
    pub values: Vec<f64>,
}

impl GradVector {
    pub fn friction(&self) -> WheelVec {
        std::array::from_fn(|j| self.values[j])
    }

    pub fn segment(&self, s: usize) -> WheelVec {
        std::array::from_fn(|j| self.values[WHEELS * s + j])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// How sensitivities and loss accumulation are interleaved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradOrdering {
    /// Accumulate loss with the current sensitivities, then advance pose and
    /// sensitivities together.
    #[default]
    Exact,
    /// Advance the sensitivities before accumulating the loss and use
    /// `(vx·c + vy·s)` as the heading coupling of the y row. Kept only for
    /// comparison; it is not the derivative of the loss.
    Literal,
}

/// `∂ω_j/∂μ_j = −ω_s,j·M·g·R/(4·Ts)` (zero where the speed factor is clamped).
pub fn domega_dmu(params: &RobotParams, omega_s: &WheelVec) -> WheelVec {
    let k = params.friction_gain();
    omega_s.map(|w| -w * k)
}

/// `∂ω_j/∂ω_s,j`: the clamped speed factor.
pub fn domega_domega_s(params: &RobotParams, mu: &FrictionCoeffs) -> WheelVec {
    mu.as_array().map(|m| params.wheel_factor(m))
}

/// Sensitivities of `(x, y, θ)` to a set of parameters, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseJacobian {
    cols: usize,
    data: Vec<f64>,
}

impl PoseJacobian {
    pub fn zeros(cols: usize) -> Self {
        Self {
            cols,
            data: vec![0.0; 3 * cols],
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// `g[c] += J[0][c]·e0 + J[1][c]·e1` over `cols`.
    fn pull_back(&self, e: [f64; 2], cols: std::ops::Range<usize>, g: &mut [f64]) {
        let n = self.cols;
        for c in cols {
            g[c] += self.data[c] * e[0] + self.data[n + c] * e[1];
        }
    }

    /// `g[c] += J[0][c]·e0 + J[1][c]·e1 + J[2][c]·e2` over `cols`.
    fn pull_back_pose(&self, e: [f64; 3], cols: std::ops::Range<usize>, g: &mut [f64]) {
        let n = self.cols;
        for c in cols {
            g[c] += self.data[c] * e[0] + self.data[n + c] * e[1] + self.data[2 * n + c] * e[2];
        }
    }

    /// Advance columns `cols` through one step. `direct(c)` yields the
    /// wheel index driven by column `c` and its `∂ω` (0 when the column does
    /// not act in this step).
    fn advance(
        &mut self,
        b: &KinematicMatrix,
        pose: &Pose,
        vel: &BodyVelocity,
        dt: f64,
        ordering: GradOrdering,
        cols: std::ops::Range<usize>,
        direct: impl Fn(usize) -> (usize, f64),
    ) {
        let (s, c) = pose.theta.sin_cos();
        let n = self.cols;
        let kx = -(vel.vx * s + vel.vy * c);
        let ky = match ordering {
            GradOrdering::Exact => vel.vx * c - vel.vy * s,
            GradOrdering::Literal => vel.vx * c + vel.vy * s,
        };
        for col in cols {
            let (j, dw) = direct(col);
            let jt = self.data[2 * n + col];
            let (b0, b1, b2) = (b.entry(0, j), b.entry(1, j), b.entry(2, j));
            self.data[col] += dt * (dw * (c * b0 - s * b1) + kx * jt);
            self.data[n + col] += dt * (dw * (s * b0 + c * b1) + ky * jt);
            self.data[2 * n + col] += dt * b2 * dw;
        }
    }
}

/// Loss and `∂L/∂μ` against a prepared target.
pub fn loss_gradient_mu_prepared(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    schedule: &ControlSchedule,
    target: &TrackingTarget,
    weights: &LossWeights,
    ordering: GradOrdering,
) -> (LossReport, GradVector) {
    let b = kinematic_matrix(params);
    let k = params.friction_gain();
    let mu = mu.as_array();
    let factors = mu.map(|m| params.wheel_factor(m));
    // Clamp subgradient: no sensitivity where the factor is floored at zero.
    let active = mu.map(|m| params.raw_wheel_factor(m) > 0.0);

    let mut report = LossReport::merged(&[]);
    let mut g = vec![0.0; WHEELS];
    let mut jac = PoseJacobian::zeros(WHEELS);
    let mut cursor = target.cursor();
    let mut pose = target.start;
    let n = schedule.len();
    let controls = schedule.controls();

    for i in 0..=n {
        let step = (i < n).then(|| {
            let ws = controls[i];
            let omega: WheelVec = std::array::from_fn(|j| ws[j] * factors[j]);
            let dw: WheelVec = std::array::from_fn(|j| if active[j] { -ws[j] * k } else { 0.0 });
            (b.apply(&omega), dw, schedule.dt(i))
        });
        if ordering == GradOrdering::Literal {
            if let Some((vel, dw, dt)) = &step {
                jac.advance(&b, &pose, vel, *dt, ordering, 0..WHEELS, |c| (c, dw[c]));
            }
        }
        for m in cursor.at(i) {
            let (term, e) = sample_term(pose.position(), m, &target.spline, weights);
            accumulate(&mut report, term, weights);
            jac.pull_back(e, 0..WHEELS, &mut g);
        }
        if let Some((vel, dw, dt)) = step {
            if ordering == GradOrdering::Exact {
                jac.advance(&b, &pose, &vel, dt, ordering, 0..WHEELS, |c| (c, dw[c]));
            }
            pose = step_pose(&pose, &vel, dt);
        }
    }
    (
        report,
        GradVector {
            wrt: GradTarget::Friction,
            values: g,
        },
    )
}

pub fn loss_gradient_mu(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    schedule: &ControlSchedule,
    track: &GroundTruthTrack,
    weights: &LossWeights,
) -> Result<(LossReport, GradVector)> {
    weights.validate()?;
    let target = TrackingTarget::new(schedule, track)?;
    Ok(loss_gradient_mu_prepared(
        params,
        mu,
        schedule,
        &target,
        weights,
        GradOrdering::Exact,
    ))
}

/// Assignment of schedule intervals to control segments. Segment indices are
/// non-decreasing along the schedule and every segment owns at least one interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    of_interval: Vec<usize>,
    count: usize,
}

impl SegmentMap {
    /// One segment per interval.
    pub fn per_interval(intervals: usize) -> Self {
        Self {
            of_interval: (0..intervals).collect(),
            count: intervals,
        }
    }

    /// `segments` segments of `substeps` intervals each.
    pub fn uniform(segments: usize, substeps: usize) -> Self {
        Self {
            of_interval: (0..segments * substeps).map(|i| i / substeps.max(1)).collect(),
            count: segments,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn intervals(&self) -> usize {
        self.of_interval.len()
    }

    pub fn segment_of(&self, interval: usize) -> usize {
        self.of_interval[interval]
    }
}

/// Loss and its gradient with respect to the per-segment desired wheel
/// speeds. Every interval of a segment is assumed to carry that segment's
/// control; the gradient treats them as one tied variable.
pub fn loss_gradient_controls(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    schedule: &ControlSchedule,
    segments: &SegmentMap,
    target: &TrackingTarget,
    weights: &LossWeights,
) -> (LossReport, GradVector) {
    let mut report = LossReport::merged(&[]);
    let g = controls_pass(params, mu, schedule, segments, target, |pose, m| {
        let (term, e) = sample_term(pose.position(), m, &target.spline, weights);
        accumulate(&mut report, term, weights);
        [e[0], e[1], 0.0]
    });
    (report, g)
}

/// `Σ‖p − g‖² + heading_weight·Σ(θ − θ_start)²` over the synchronous
/// samples, and its gradient with respect to the per-segment controls.
/// Smooth, unlike the tracking loss, which makes it a good warm start.
pub fn squared_error_gradient_controls(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    schedule: &ControlSchedule,
    segments: &SegmentMap,
    target: &TrackingTarget,
    heading_weight: f64,
) -> (f64, GradVector) {
    let mut total = 0.0;
    let theta0 = target.start.theta;
    let g = controls_pass(params, mu, schedule, segments, target, |pose, m| {
        let d = [pose.x - m.position[0], pose.y - m.position[1], pose.theta - theta0];
        total += d[0] * d[0] + d[1] * d[1] + heading_weight * d[2] * d[2];
        [2.0 * d[0], 2.0 * d[1], 2.0 * heading_weight * d[2]]
    });
    (total, g)
}

/// Forward sensitivity pass over the controls. `on_sample` receives the
/// predicted pose and the matched sample and returns `∂L/∂(x, y, θ)`.
fn controls_pass(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    schedule: &ControlSchedule,
    segments: &SegmentMap,
    target: &TrackingTarget,
    mut on_sample: impl FnMut(&Pose, &MatchedSample) -> [f64; 3],
) -> GradVector {
    assert_eq!(
        segments.intervals(),
        schedule.len(),
        "segment map does not cover the schedule"
    );
    let b = kinematic_matrix(params);
    let factors = domega_domega_s(params, mu);
    let nvars = WHEELS * segments.count();

    let mut g = vec![0.0; nvars];
    let mut jac = PoseJacobian::zeros(nvars);
    let mut cursor = target.cursor();
    let mut pose = target.start;
    let n = schedule.len();
    let controls = schedule.controls();
    // Columns of segments not yet started are identically zero.
    let mut live = 0;

    for i in 0..=n {
        for m in cursor.at(i) {
            let e = on_sample(&pose, m);
            jac.pull_back_pose(e, 0..live, &mut g);
        }
        if i < n {
            let seg = segments.segment_of(i);
            live = live.max(WHEELS * (seg + 1));
            let ws = controls[i];
            let omega: WheelVec = std::array::from_fn(|j| ws[j] * factors[j]);
            let vel = b.apply(&omega);
            let dt = schedule.dt(i);
            let first = WHEELS * seg;
            jac.advance(&b, &pose, &vel, dt, GradOrdering::Exact, 0..live, |c| {
                let j = c % WHEELS;
                (
                    j,
                    if c >= first && c < first + WHEELS {
                        factors[j]
                    } else {
                        0.0
                    },
                )
            });
            pose = step_pose(&pose, &vel, dt);
        }
    }
    GradVector {
        wrt: GradTarget::Controls,
        values: g,
    }
}

/// Friction expressed through an unconstrained variable: `μ = 2·σ(raw)`, so
/// the speed factor is `1 − σ(raw)·M·g·R/(2·Ts)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidReparam {
    pub sigma: WheelVec,
    /// `dσ/draw = σ(1 − σ)`.
    pub chain: WheelVec,
    /// Steady-state speed factor per wheel.
    pub factor: WheelVec,
    pub mu: FrictionCoeffs,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid_reparam(params: &RobotParams, mu_raw: &WheelVec) -> SigmoidReparam {
    let sigma = mu_raw.map(sigmoid);
    let half_gain = params.mass * params.gravity * params.wheel_radius / (2.0 * params.stall_torque);
    SigmoidReparam {
        sigma,
        chain: sigma.map(|s| s * (1.0 - s)),
        factor: sigma.map(|s| (1.0 - s * half_gain).max(0.0)),
        mu: FrictionCoeffs::clamped(sigma.map(|s| 2.0 * s)),
    }
}

/// Inverse of the reparameterization for `μ` strictly inside `(0, 2)`.
pub fn mu_to_raw(mu: &WheelVec) -> WheelVec {
    mu.map(|m| logit((m / 2.0).clamp(1e-12, 1.0 - 1e-12)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::compute_loss_prepared;
    use crate::model::{simulate, steady_state_omega, TrackSample};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (ControlSchedule, GroundTruthTrack, FrictionCoeffs) {
        let phases: Vec<(f64, WheelVec)> = (0..3)
            .map(|_| (0.5, std::array::from_fn(|_| rng.random_range(-10.0..10.0))))
            .collect();
        let s = ControlSchedule::piecewise(0.0, 240.0, &phases).unwrap();
        let truth = FrictionCoeffs::new(std::array::from_fn(|_| rng.random_range(0.0..2.0))).unwrap();
        let traj = simulate(&params(), &truth, &s, Pose::new(0.0, 0.0, rng.random_range(-1.0..1.0)));
        // Perturbed observations so the loss is away from its kinks.
        let samples = traj
            .times
            .iter()
            .zip(&traj.poses)
            .step_by(4)
            .map(|(&t, p)| TrackSample {
                t,
                x: p.x + rng.random_range(-0.01..0.01),
                y: p.y + rng.random_range(-0.01..0.01),
                theta: Some(p.theta),
            })
            .collect();
        let mu = FrictionCoeffs::new(std::array::from_fn(|_| rng.random_range(0.1..1.9))).unwrap();
        (s, GroundTruthTrack::new(samples).unwrap(), mu)
    }

    fn fd_mu(s: &ControlSchedule, target: &TrackingTarget, w: &LossWeights, mu: &FrictionCoeffs, h: f64) -> WheelVec {
        std::array::from_fn(|j| {
            let mut up = mu.to_array();
            let mut dn = mu.to_array();
            up[j] += h;
            dn[j] -= h;
            let f =
                |m: WheelVec| compute_loss_prepared(&params(), &FrictionCoeffs::new(m).unwrap(), s, target, w).total;
            (f(up) - f(dn)) / (2.0 * h)
        })
    }

    fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
        (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
    }

    #[test]
    fn domega_examples() {
        assert_eq!(domega_dmu(&params(), &[0.0; 4]), [0.0; 4]);
        for v in domega_dmu(&params(), &[10.0; 4]) {
            assert_abs_diff_eq!(v, -4.9, epsilon = 1e-12);
        }
        let ws = [3.0, -7.0, 0.5, 9.0];
        let mu = [0.4, 1.1, 0.9, 1.7];
        let h = 1e-6;
        let d = domega_dmu(&params(), &ws);
        for j in 0..4 {
            let mut up = mu;
            let mut dn = mu;
            up[j] += h;
            dn[j] -= h;
            let f = |m: WheelVec| steady_state_omega(&params(), &FrictionCoeffs::new(m).unwrap(), &ws)[j];
            let fd = (f(up) - f(dn)) / (2.0 * h);
            assert!(close(d[j], fd, 1e-6, 1e-12), "{} vs {fd}", d[j]);
        }
    }

    #[test]
    fn clamped_factor_gradient() {
        let f = domega_domega_s(&params(), &FrictionCoeffs::uniform(2.0).unwrap());
        for v in f {
            assert_abs_diff_eq!(v, 0.02, epsilon = 1e-12);
        }
    }

    #[test]
    fn mu_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = LossWeights::default();
        for _ in 0..5 {
            let (s, track, mu) = random_case(&mut rng);
            let target = TrackingTarget::new(&s, &track).unwrap();
            let (_, g) = loss_gradient_mu_prepared(&params(), &mu, &s, &target, &w, GradOrdering::Exact);
            let fd = fd_mu(&s, &target, &w, &mu, 1e-6);
            for j in 0..4 {
                assert!(
                    close(g.values[j], fd[j], 1e-5, 1e-8),
                    "wheel {j}: {} vs {}",
                    g.values[j],
                    fd[j]
                );
            }
        }
    }

    #[test]
    fn literal_ordering_is_not_the_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = LossWeights::default();
        let (s, track, mu) = random_case(&mut rng);
        let target = TrackingTarget::new(&s, &track).unwrap();
        let (_, lit) = loss_gradient_mu_prepared(&params(), &mu, &s, &target, &w, GradOrdering::Literal);
        let fd = fd_mu(&s, &target, &w, &mu, 1e-6);
        assert!((0..4).any(|j| !close(lit.values[j], fd[j], 1e-5, 1e-8)));
    }

    #[test]
    fn motionless_robot_has_no_friction_gradient() {
        let s = ControlSchedule::constant(1.0, 240.0, [0.0; 4]).unwrap();
        let track = GroundTruthTrack::from_points(&[0.0, 0.5, 1.0], &[[0.0, 0.0], [0.2, 0.1], [0.4, 0.3]]).unwrap();
        let (_, g) = loss_gradient_mu(
            &params(),
            &FrictionCoeffs::uniform(0.7).unwrap(),
            &s,
            &track,
            &LossWeights::default(),
        )
        .unwrap();
        assert_eq!(g.values, vec![0.0; 4]);
    }

    #[test]
    fn zero_loss_has_zero_gradient() {
        let s = ControlSchedule::piecewise(0.0, 240.0, &[(1.0, [4.0, 6.0, 2.0, 8.0])]).unwrap();
        let mu = FrictionCoeffs::new([0.3, 0.5, 0.7, 0.9]).unwrap();
        let track = GroundTruthTrack::from_trajectory(&simulate(&params(), &mu, &s, Pose::default()), 4);
        let (r, g) = loss_gradient_mu(&params(), &mu, &s, &track, &LossWeights::default()).unwrap();
        assert!(r.total < 1e-9);
        for v in g.values {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn idle_wheel_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phases: Vec<(f64, WheelVec)> = (0..3)
            .map(|_| {
                (
                    0.5,
                    [rng.random_range(-9.0..9.0), 0.0, rng.random_range(-9.0..9.0), 5.0],
                )
            })
            .collect();
        let s = ControlSchedule::piecewise(0.0, 240.0, &phases).unwrap();
        let truth = FrictionCoeffs::new([0.2, 0.4, 0.6, 0.8]).unwrap();
        let track = GroundTruthTrack::from_trajectory(&simulate(&params(), &truth, &s, Pose::default()), 4);
        let (_, g) = loss_gradient_mu(
            &params(),
            &FrictionCoeffs::uniform(1.0).unwrap(),
            &s,
            &track,
            &LossWeights::default(),
        )
        .unwrap();
        assert_eq!(g.values[1], 0.0);
        assert!(g.values[0] != 0.0);
    }

    #[test]
    fn overshoot_gradient_points_towards_more_friction() {
        // Prediction with less friction than the truth runs ahead along +Y;
        // increasing every μ_j shortens it, so ∂L/∂μ_j < 0.
        let s = ControlSchedule::constant(2.0, 240.0, [6.0; 4]).unwrap();
        let truth = FrictionCoeffs::uniform(1.0).unwrap();
        let track = GroundTruthTrack::from_trajectory(&simulate(&params(), &truth, &s, Pose::default()), 4);
        let (_, g) = loss_gradient_mu(
            &params(),
            &FrictionCoeffs::uniform(0.5).unwrap(),
            &s,
            &track,
            &LossWeights::default(),
        )
        .unwrap();
        assert!(g.values.iter().all(|&v| v < 0.0), "{:?}", g.values);
    }

    #[test]
    fn heading_sensitivity_closed_form() {
        let s = ControlSchedule::constant(1.0, 100.0, [3.0, 5.0, -2.0, 7.0]).unwrap();
        let p = params();
        let b = kinematic_matrix(&p);
        let dw = domega_dmu(&p, &s.controls()[0]);
        let mut jac = PoseJacobian::zeros(4);
        let mut pose = Pose::default();
        let mu = FrictionCoeffs::uniform(0.5).unwrap();
        for i in 0..s.len() {
            let vel = b.apply(&steady_state_omega(&p, &mu, &s.controls()[i]));
            jac.advance(&b, &pose, &vel, s.dt(i), GradOrdering::Exact, 0..4, |c| (c, dw[c]));
            pose = step_pose(&pose, &vel, s.dt(i));
        }
        for j in 0..4 {
            assert_abs_diff_eq!(jac.get(2, j), 100.0 * 0.01 * b.entry(2, j) * dw[j], epsilon = 1e-14);
        }
    }

    fn fd_controls(
        s: &ControlSchedule,
        segs: &SegmentMap,
        seg_controls: &[WheelVec],
        target: &TrackingTarget,
        mu: &FrictionCoeffs,
        w: &LossWeights,
        h: f64,
    ) -> Vec<f64> {
        let eval = |u: &[WheelVec]| {
            let steps: Vec<WheelVec> = (0..s.len()).map(|i| u[segs.segment_of(i)]).collect();
            compute_loss_prepared(&params(), mu, &s.with_controls(steps).unwrap(), target, w).total
        };
        let mut out = Vec::new();
        for seg in 0..segs.count() {
            for j in 0..4 {
                let mut up = seg_controls.to_vec();
                let mut dn = seg_controls.to_vec();
                up[seg][j] += h;
                dn[seg][j] -= h;
                out.push((eval(&up) - eval(&dn)) / (2.0 * h));
            }
        }
        out
    }

    #[test]
    fn control_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = LossWeights::default();
        let mu = FrictionCoeffs::new([0.3, 0.5, 0.7, 0.9]).unwrap();
        let (segments, sub) = (4, 30);
        let seg_controls: Vec<WheelVec> = (0..segments)
            .map(|_| std::array::from_fn(|_| rng.random_range(-10.0..10.0)))
            .collect();
        let steps: Vec<WheelVec> = (0..segments * sub).map(|i| seg_controls[i / sub]).collect();
        let times: Vec<f64> = (0..=segments * sub).map(|i| i as f64 / 120.0).collect();
        let s = ControlSchedule::new(times, steps).unwrap();
        let map = SegmentMap::uniform(segments, sub);
        let waypoints = GroundTruthTrack::from_points(
            &[0.0, 0.25, 0.5, 0.75, 1.0],
            &[[0.0, 0.0], [0.05, 0.1], [0.1, 0.25], [0.0, 0.3], [-0.1, 0.35]],
        )
        .unwrap();
        let target = TrackingTarget::with_start(&s, &waypoints, Pose::new(0.0, 0.0, 0.2)).unwrap();
        let (_, g) = loss_gradient_controls(&params(), &mu, &s, &map, &target, &w);
        let fd = fd_controls(&s, &map, &seg_controls, &target, &mu, &w, 1e-6);
        assert_eq!(g.values.len(), 16);
        for (a, b) in g.values.iter().zip(&fd) {
            assert!(close(*a, *b, 1e-5, 1e-8), "{a} vs {b}");
        }
        // The last segment only moves the final waypoint.
        assert!(g.segment(3).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn single_segment_on_target_has_zero_gradient() {
        let mu = FrictionCoeffs::uniform(0.4).unwrap();
        let s = ControlSchedule::constant(1.0, 60.0, [4.0, 6.0, 3.0, 5.0]).unwrap();
        let end = *simulate(&params(), &mu, &s, Pose::default()).last().unwrap();
        let wp = GroundTruthTrack::from_points(&[0.0, 1.0], &[[0.0, 0.0], [end.x, end.y]]).unwrap();
        let target = TrackingTarget::with_start(&s, &wp, Pose::default()).unwrap();
        let (r, g) = loss_gradient_controls(
            &params(),
            &mu,
            &s,
            &SegmentMap::uniform(1, 60),
            &target,
            &LossWeights::default(),
        );
        assert!(r.total < 1e-12);
        assert!(g.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn sigmoid_reparam_values() {
        let r = sigmoid_reparam(&params(), &[0.0; 4]);
        for j in 0..4 {
            assert_abs_diff_eq!(r.sigma[j], 0.5);
            assert_abs_diff_eq!(r.factor[j], 0.51, epsilon = 1e-12);
            assert_abs_diff_eq!(r.mu.as_array()[j], 1.0);
        }
        let r = sigmoid_reparam(&params(), &[-800.0; 4]);
        assert_abs_diff_eq!(r.factor[0], 1.0);
        let x = [0.7, -1.3, 2.2, -0.1];
        let r = sigmoid_reparam(&params(), &x);
        for j in 0..4 {
            let h = 1e-7;
            let fd = (sigmoid(x[j] + h) - sigmoid(x[j] - h)) / (2.0 * h);
            assert!(close(r.chain[j], fd, 1e-7, 1e-12));
            // Same factor as the μ = 2σ form.
            assert_abs_diff_eq!(r.factor[j], params().wheel_factor(r.mu.as_array()[j]), epsilon = 1e-12);
        }
        let back = mu_to_raw(r.mu.as_array());
        for j in 0..4 {
            assert_abs_diff_eq!(back[j], x[j], epsilon = 1e-9);
        }
    }
}
