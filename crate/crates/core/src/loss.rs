//! Simulation-to-reality gap between a predicted and an observed trajectory.
//!
//! The loss is a weighted sum, over every control timestamp that carries a
//! ground-truth sample, of two Euclidean distances measured from the predicted
//! position: to the synchronous ground-truth sample, and to the closest point
//! of a spline fitted through all ground-truth samples. The pose used at a
//! timestamp is the one *before* that step's update, so the final schedule
//! timestamp is also evaluated after the last step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    kinematic_matrix, step_pose, ControlSchedule, FrictionCoeffs, GroundTruthTrack, Pose, RobotParams, WheelVec,
};
use crate::spline::SplinePath;

/// Distances below this are treated as zero for gradient purposes.
pub const ZERO_DISTANCE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// Spline (closest-point) term.
    pub w1: f64,
    /// Synchronous ground-truth term.
    pub w2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w1: 0.8, w2: 0.2 }
    }
}

impl LossWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        let w = Self { w1, w2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1.is_finite() && self.w2.is_finite() && self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and ≥ 0, got {self:?}"
            )));
        }
        if self.w1 + self.w2 <= 0.0 {
            return Err(Error::InvalidWeights("w1 + w2 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleTerm {
    /// Ground-truth sample index.
    pub k: usize,
    /// Control timestamp index the sample was matched to.
    pub step: usize,
    pub d_gt: f64,
    pub d_sp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub l_gt: f64,
    pub l_sp: f64,
    pub terms: Vec<SampleTerm>,
}

impl LossReport {
    fn new() -> Self {
        Self {
            total: 0.0,
            l_gt: 0.0,
            l_sp: 0.0,
            terms: Vec::new(),
        }
    }

    /// Combine reports of independent trajectories.
    pub fn merged(reports: &[LossReport]) -> Self {
        let mut out = Self::new();
        for r in reports {
            out.total += r.total;
            out.l_gt += r.l_gt;
            out.l_sp += r.l_sp;
            out.terms.extend_from_slice(&r.terms);
        }
        out
    }
}

/// A ground-truth sample bound to the control timestamp it is compared at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedSample {
    pub step: usize,
    pub k: usize,
    pub position: [f64; 2],
}

/// Pair each ground-truth sample with the first control timestamp `t_i`
/// satisfying `|t_i − t_gt| < Δt_i / 2`. The final timestamp uses the last
/// interval's `Δt`. Result is ordered by step.
pub fn align(schedule: &ControlSchedule, track: &GroundTruthTrack) -> Result<Vec<MatchedSample>> {
    let times = schedule.times();
    let n = schedule.len();
    let half_dt = |i: usize| 0.5 * schedule.dt(i.min(n - 1));
    let max_half = (0..n).map(half_dt).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(track.len());
    for (k, s) in track.samples().iter().enumerate() {
        let start = times.partition_point(|&t| t < s.t - max_half);
        let step = (start..times.len())
            .take_while(|&i| times[i] < s.t + max_half)
            .find(|&i| (times[i] - s.t).abs() < half_dt(i));
        match step {
            Some(step) => out.push(MatchedSample {
                step,
                k,
                position: [s.x, s.y],
            }),
            None => return Err(Error::OrphanSample { index: k, t: s.t }),
        }
    }
    out.sort_by_key(|m| m.step);
    Ok(out)
}

/// A ground-truth track prepared for repeated loss evaluation against one
/// schedule: the start pose, the sample alignment and the fitted spline.
#[derive(Debug, Clone)]
pub struct TrackingTarget {
    pub start: Pose,
    pub matches: Vec<MatchedSample>,
    pub spline: SplinePath,
}

impl TrackingTarget {
    /// Starts the simulation at the first ground-truth pose.
    pub fn new(schedule: &ControlSchedule, track: &GroundTruthTrack) -> Result<Self> {
        Self::with_start(schedule, track, track.initial_pose())
    }

    pub fn with_start(schedule: &ControlSchedule, track: &GroundTruthTrack, start: Pose) -> Result<Self> {
        if track.is_empty() {
            return Err(Error::EmptyTrack);
        }
        let matches = align(schedule, track)?;
        let spline = SplinePath::fit(&track.points())?;
        Ok(Self { start, matches, spline })
    }

    /// Walks matched samples in step order; `at(i)` yields those compared at timestamp `i`.
    pub(crate) fn cursor(&self) -> MatchCursor<'_> {
        MatchCursor {
            matches: &self.matches,
            next: 0,
        }
    }
}

pub(crate) struct MatchCursor<'a> {
    matches: &'a [MatchedSample],
    next: usize,
}

impl<'a> MatchCursor<'a> {
    pub(crate) fn at(&mut self, step: usize) -> &'a [MatchedSample] {
        let begin = self.next;
        while self.next < self.matches.len() && self.matches[self.next].step == step {
            self.next += 1;
        }
        &self.matches[begin..self.next]
    }
}

/// Loss contribution of one matched sample and its derivative with respect to
/// the predicted position (closest point held fixed).
pub(crate) fn sample_term(
    pos: [f64; 2],
    sample: &MatchedSample,
    spline: &SplinePath,
    weights: &LossWeights,
) -> (SampleTerm, [f64; 2]) {
    let dp = [pos[0] - sample.position[0], pos[1] - sample.position[1]];
    let proj = spline.closest_point(pos);
    let dq = [pos[0] - proj.point[0], pos[1] - proj.point[1]];
    let d_gt = dp[0].hypot(dp[1]);
    let d_sp = dq[0].hypot(dq[1]);
    let mut dpos = [0.0; 2];
    if d_sp >= ZERO_DISTANCE_GUARD {
        dpos[0] += weights.w1 * dq[0] / d_sp;
        dpos[1] += weights.w1 * dq[1] / d_sp;
    }
    if d_gt >= ZERO_DISTANCE_GUARD {
        dpos[0] += weights.w2 * dp[0] / d_gt;
        dpos[1] += weights.w2 * dp[1] / d_gt;
    }
    (
        SampleTerm {
            k: sample.k,
            step: sample.step,
            d_gt,
            d_sp,
        },
        dpos,
    )
}

pub(crate) fn accumulate(report: &mut LossReport, term: SampleTerm, weights: &LossWeights) {
    report.l_gt += term.d_gt;
    report.l_sp += term.d_sp;
    report.total += weights.w1 * term.d_sp + weights.w2 * term.d_gt;
    report.terms.push(term);
}

/// Loss with the per-step wheel speeds already resolved.
pub(crate) fn loss_from_wheel_speeds(
    params: &RobotParams,
    schedule: &ControlSchedule,
    omega: impl Fn(usize) -> WheelVec,
    target: &TrackingTarget,
    weights: &LossWeights,
) -> LossReport {
    let b = kinematic_matrix(params);
    let mut report = LossReport::new();
    let mut cursor = target.cursor();
    let mut pose = target.start;
    for i in 0..=schedule.len() {
        for m in cursor.at(i) {
            let (term, _) = sample_term(pose.position(), m, &target.spline, weights);
            accumulate(&mut report, term, weights);
        }
        if i < schedule.len() {
            pose = step_pose(&pose, &b.apply(&omega(i)), schedule.dt(i));
        }
    }
    report
}

/// Loss of friction `mu` against a prepared target.
pub fn compute_loss_prepared(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    schedule: &ControlSchedule,
    target: &TrackingTarget,
    weights: &LossWeights,
) -> LossReport {
    let factors = mu.as_array().map(|m| params.wheel_factor(m));
    let controls = schedule.controls();
    loss_from_wheel_speeds(
        params,
        schedule,
        |i| std::array::from_fn(|j| controls[i][j] * factors[j]),
        target,
        weights,
    )
}

pub fn compute_loss(
    params: &RobotParams,
    mu: &FrictionCoeffs,
    schedule: &ControlSchedule,
    track: &GroundTruthTrack,
    weights: &LossWeights,
) -> Result<LossReport> {
    weights.validate()?;
    let target = TrackingTarget::new(schedule, track)?;
    Ok(compute_loss_prepared(params, mu, schedule, &target, weights))
}
