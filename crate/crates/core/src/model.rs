//! Forward model of the four-wheel mecanum robot.
//!
//! Wheel order everywhere is (front-left, front-right, rear-left, rear-right),
//! i.e. the column order of the kinematic matrix. The body frame has +Y as
//! the driving direction: equal positive wheel speeds move the robot along
//! its own +Y axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WHEELS: usize = 4;

/// One value per wheel.
pub type WheelVec = [f64; WHEELS];

/// Physical constants of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    /// Robot mass, kg.
    pub mass: f64,
    /// m/s².
    pub gravity: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Motor stall torque, N·m.
    pub stall_torque: f64,
    /// Half the wheelbase, m.
    pub half_length: f64,
    /// Half the track width, m.
    pub half_width: f64,
    /// Wheel inertia about the motor shaft, kg·m². Only the transient model uses it.
    pub wheel_inertia: f64,
    /// Desired wheel speed at full duty, rad/s.
    pub omega_max: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass: 4.0,
            gravity: 9.8,
            wheel_radius: 0.03,
            stall_torque: 0.6,
            half_length: 0.1,
            half_width: 0.1,
            wheel_inertia: 0.001,
            omega_max: 10.0,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("wheel_radius", self.wheel_radius),
            ("stall_torque", self.stall_torque),
            ("half_length", self.half_length),
            ("half_width", self.half_width),
            ("wheel_inertia", self.wheel_inertia),
            ("omega_max", self.omega_max),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams {
                    field,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        Ok(())
    }

    /// `M·g·R / (4·Ts)`: the fractional speed loss per unit friction coefficient.
    pub fn friction_gain(&self) -> f64 {
        self.mass * self.gravity * self.wheel_radius / (4.0 * self.stall_torque)
    }

    /// `l_a + l_b`.
    pub fn l_ab(&self) -> f64 {
        self.half_length + self.half_width
    }

    /// Unclamped steady-state speed factor `1 − μ·M·g·R/(4·Ts)`.
    pub fn raw_wheel_factor(&self, mu: f64) -> f64 {
        1.0 - mu * self.friction_gain()
    }

    /// Steady-state speed factor, floored at zero: friction can stop a wheel
    /// but never reverse it.
    pub fn wheel_factor(&self, mu: f64) -> f64 {
        self.raw_wheel_factor(mu).max(0.0)
    }
}

/// Per-wheel Coulomb friction coefficients, each in `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct FrictionCoeffs([f64; WHEELS]);

impl FrictionCoeffs {
    pub const MIN: f64 = 0.0;
    pub const MAX: f64 = 2.0;

    pub fn new(mu: WheelVec) -> Result<Self> {
        for (index, &value) in mu.iter().enumerate() {
            if !(Self::MIN..=Self::MAX).contains(&value) {
                return Err(Error::FrictionOutOfRange { index, value });
            }
        }
        Ok(Self(mu))
    }

    /// Clamp each entry into `[0, 2]` (NaN maps to 0).
    pub fn clamped(mu: WheelVec) -> Self {
        Self(mu.map(|m| if m.is_nan() { 0.0 } else { m.clamp(Self::MIN, Self::MAX) }))
    }

    pub fn zero() -> Self {
        Self([0.0; WHEELS])
    }

    pub fn uniform(value: f64) -> Result<Self> {
        Self::new([value; WHEELS])
    }

    pub fn as_array(&self) -> &WheelVec {
        &self.0
    }

    pub fn to_array(self) -> WheelVec {
        self.0
    }
}

impl TryFrom<[f64; 4]> for FrictionCoeffs {
    type Error = Error;
    fn try_from(value: [f64; 4]) -> Result<Self> {
        Self::new(value)
    }
}

impl From<FrictionCoeffs> for [f64; 4] {
    fn from(value: FrictionCoeffs) -> Self {
        value.0
    }
}

/// Planar pose. `theta` is never wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub vx: f64,
    pub vy: f64,
    pub omega_z: f64,
}

/// Planar rigid motion: rotate by `angle` about the origin, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform {
    pub fn new(angle: f64, tx: f64, ty: f64) -> Self {
        Self { angle, tx, ty }
    }

    /// The transform taking world coordinates into `pose`'s body frame, so
    /// that `pose` itself maps to the origin with zero heading.
    pub fn into_frame_of(pose: &Pose) -> Self {
        let (s, c) = pose.theta.sin_cos();
        Self {
            angle: -pose.theta,
            tx: -(c * pose.x + s * pose.y),
            ty: s * pose.x - c * pose.y,
        }
    }

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [c * p[0] - s * p[1] + self.tx, s * p[0] + c * p[1] + self.ty]
    }

    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        let [x, y] = self.apply_point(pose.position());
        Pose::new(x, y, pose.theta + self.angle)
    }
}

/// The 3×4 map from wheel speeds to body velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicMatrix(pub [[f64; WHEELS]; 3]);

impl KinematicMatrix {
    pub fn entry(&self, row: usize, wheel: usize) -> f64 {
        self.0[row][wheel]
    }

    pub fn apply(&self, omega: &WheelVec) -> BodyVelocity {
        let row = |r: usize| -> f64 { self.0[r].iter().zip(omega).map(|(b, w)| b * w).sum() };
        BodyVelocity {
            vx: row(0),
            vy: row(1),
            omega_z: row(2),
        }
    }
}

/// Piecewise-constant desired wheel speeds. Interval `i` spans
/// `[times[i], times[i + 1])` and applies `omega_s[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    times: Vec<f64>,
    omega_s: Vec<WheelVec>,
}

impl ControlSchedule {
    pub fn new(times: Vec<f64>, omega_s: Vec<WheelVec>) -> Result<Self> {
        if omega_s.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no control intervals".into()));
        }
        if times.len() != omega_s.len() + 1 {
            return Err(Error::InvalidSchedule(format!(
                "{} timestamps for {} intervals (need one more timestamp than intervals)",
                times.len(),
                omega_s.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidSchedule(format!("timestamp {i} is not finite")));
        }
        if let Some(i) = omega_s.iter().position(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSchedule(format!("control {i} is not finite")));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { times, omega_s })
    }

    /// Map duty cycles in `[-1, 1]` to desired speeds `duty · omega_max`.
    pub fn from_duty(times: Vec<f64>, duty: &[WheelVec], params: &RobotParams) -> Result<Self> {
        if let Some(i) = duty.iter().position(|d| d.iter().any(|v| !(-1.0..=1.0).contains(v))) {
            return Err(Error::InvalidSchedule(format!("duty {i} outside [-1, 1]")));
        }
        let omega = duty.iter().map(|d| d.map(|v| v * params.omega_max)).collect();
        Self::new(times, omega)
    }

    /// Uniform-rate schedule built from `(duration, omega_s)` phases.
    pub fn piecewise(t0: f64, rate_hz: f64, phases: &[(f64, WheelVec)]) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidSchedule(format!("rate must be positive, got {rate_hz}")));
        }
        let mut omega_s = Vec::new();
        for &(duration, w) in phases {
            let steps = (duration * rate_hz).round() as usize;
            omega_s.extend(std::iter::repeat_n(w, steps));
        }
        let times = (0..=omega_s.len()).map(|i| t0 + i as f64 / rate_hz).collect();
        Self::new(times, omega_s)
    }

    pub fn constant(duration: f64, rate_hz: f64, omega_s: WheelVec) -> Result<Self> {
        Self::piecewise(0.0, rate_hz, &[(duration, omega_s)])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn controls(&self) -> &[WheelVec] {
        &self.omega_s
    }

    pub fn len(&self) -> usize {
        self.omega_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_s.is_empty()
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Same timestamps, new controls.
    pub fn with_controls(&self, omega_s: Vec<WheelVec>) -> Result<Self> {
        Self::new(self.times.clone(), omega_s)
    }

    /// Split every interval into `parts` equal sub-intervals with the same control.
    pub fn refined(&self, parts: usize) -> Self {
        let parts = parts.max(1);
        let mut times = Vec::with_capacity(self.len() * parts + 1);
        let mut omega_s = Vec::with_capacity(self.len() * parts);
        for (i, w) in self.omega_s.iter().enumerate() {
            let (a, b) = (self.times[i], self.times[i + 1]);
            for p in 0..parts {
                times.push(a + (b - a) * p as f64 / parts as f64);
                omega_s.push(*w);
            }
        }
        times.push(self.times[self.times.len() - 1]);
        Self { times, omega_s }
    }

    /// Keep the intervals that end at or before `t_end`.
    pub fn truncated(&self, t_end: f64) -> Option<Self> {
        let n = self.times[1..].iter().take_while(|&&t| t <= t_end).count();
        (n > 0).then(|| Self {
            times: self.times[..=n].to_vec(),
            omega_s: self.omega_s[..n].to_vec(),
        })
    }
}

/// Simulated poses at schedule timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn last(&self) -> Option<&Pose> {
        self.poses.last()
    }
}

/// One camera observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: Option<f64>,
}

/// Observed poses at camera rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    samples: Vec<TrackSample>,
}

impl GroundTruthTrack {
    pub fn new(samples: Vec<TrackSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrack);
        }
        for (i, s) in samples.iter().enumerate() {
            let finite = s.t.is_finite() && s.x.is_finite() && s.y.is_finite() && s.theta.is_none_or(f64::is_finite);
            if !finite {
                return Err(Error::InvalidTrack(format!("sample {i} is not finite")));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidTrack(format!(
                "timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(Self { samples })
    }

    /// Sample every `stride`-th pose of a trajectory (always keeping the first).
    pub fn from_trajectory(traj: &Trajectory, stride: usize) -> Self {
        let stride = stride.max(1);
        let samples = traj
            .times
            .iter()
            .zip(&traj.poses)
            .step_by(stride)
            .map(|(&t, p)| TrackSample {
                t,
                x: p.x,
                y: p.y,
                theta: Some(p.theta),
            })
            .collect();
        Self { samples }
    }

    /// Position-only waypoints.
    pub fn from_points(times: &[f64], points: &[[f64; 2]]) -> Result<Self> {
        if times.len() != points.len() {
            return Err(Error::InvalidTrack(format!(
                "{} timestamps for {} points",
                times.len(),
                points.len()
            )));
        }
        Self::new(
            times
                .iter()
                .zip(points)
                .map(|(&t, p)| TrackSample {
                    t,
                    x: p[0],
                    y: p[1],
                    theta: None,
                })
                .collect(),
        )
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|s| [s.x, s.y]).collect()
    }

    /// Starting pose for simulation. A missing heading is estimated from the
    /// first displacement, assuming the robot drives along its body +Y axis.
    pub fn initial_pose(&self) -> Pose {
        let first = self.samples[0];
        let theta = first.theta.unwrap_or_else(|| {
            self.samples
                .iter()
                .skip(1)
                .map(|s| (s.x - first.x, s.y - first.y))
                .find(|(dx, dy)| dx.hypot(*dy) > 1e-12)
                .map_or(0.0, |(dx, dy)| dy.atan2(dx) - std::f64::consts::FRAC_PI_2)
        });
        Pose::new(first.x, first.y, theta)
    }

    /// Earliest samples covering `fraction` of the sample count (at least one).
    pub fn prefix(&self, fraction: f64) -> Self {
        let n = ((self.samples.len() as f64 * fraction).round() as usize).clamp(1, self.samples.len());
        Self {
            samples: self.samples[..n].to_vec(),
        }
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let [x, y] = tf.apply_point([s.x, s.y]);
                TrackSample {
                    t: s.t,
                    x,
                    y,
                    theta: s.theta.map(|th| th + tf.angle),
                }
            })
            .collect();
        Self { samples }
    }
}

/// Steady-state wheel speeds under friction, `ω_j = ω_s,j · (1 − μ_j·M·g·R/(4·Ts))`.
pub fn steady_state_omega(params: &RobotParams, mu: &FrictionCoeffs, omega_s: &WheelVec) -> WheelVec {
    std::array::from_fn(|j| omega_s[j] * params.wheel_factor(mu.0[j]))
}

/// Wheel speed during spin-up from rest. Reference only; identification uses
/// the steady-state model.
pub fn transient_omega(params: &RobotParams, mu_j: f64, omega_s_j: f64, t: f64) -> Result<f64> {
    if omega_s_j == 0.0 {
        return Err(Error::ZeroDesiredSpeed);
    }
    let steady = omega_s_j * params.wheel_factor(mu_j);
    let decay = (-params.stall_torque * t / (params.wheel_inertia * omega_s_j)).exp();
    Ok(steady * (1.0 - decay))
}

pub fn kinematic_matrix(params: &RobotParams) -> KinematicMatrix {
    let l = params.l_ab();
    let s = params.wheel_radius / (4.0 * l);
    KinematicMatrix([
        [-l * s, l * s, -l * s, l * s],
        [l * s, l * s, l * s, l * s],
        [s, -s, -s, s],
    ])
}

pub fn body_velocity(b: &KinematicMatrix, omega: &WheelVec) -> BodyVelocity {
    b.apply(omega)
}

/// Explicit Euler step using the heading at the start of the step.
pub fn step_pose(pose: &Pose, vel: &BodyVelocity, dt: f64) -> Pose {
    let (s, c) = pose.theta.sin_cos();
    Pose {
        x: pose.x + dt * (c * vel.vx - s * vel.vy),
        y: pose.y + dt * (s * vel.vx + c * vel.vy),
        theta: pose.theta + dt * vel.omega_z,
    }
}

pub fn simulate(params: &RobotParams, mu: &FrictionCoeffs, schedule: &ControlSchedule, start: Pose) -> Trajectory {
    let b = kinematic_matrix(params);
    let mut poses = Vec::with_capacity(schedule.len() + 1);
    let mut pose = start;
    poses.push(pose);
    for (i, omega_s) in schedule.controls().iter().enumerate() {
        let omega = steady_state_omega(params, mu, omega_s);
        pose = step_pose(&pose, &b.apply(&omega), schedule.dt(i));
        poses.push(pose);
    }
    Trajectory {
        times: schedule.times().to_vec(),
        poses,
    }
}
