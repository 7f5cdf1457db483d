//! Friction identification: bound-constrained quasi-Newton with analytic
//! gradients, derivative-free baselines, gradient checking and
//! data-efficiency sweeps.

pub mod cmaes;
pub mod lbfgs;
pub mod nelder_mead;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{loss_gradient_mu_prepared, sigmoid, GradOrdering};
use crate::loss::{compute_loss_prepared, LossWeights, TrackingTarget};
use crate::model::{ControlSchedule, FrictionCoeffs, GroundTruthTrack, RobotParams, WheelVec, WHEELS};

pub use cmaes::CmaesOptions;
pub use lbfgs::LbfgsOptions;
pub use nelder_mead::NelderMeadOptions;

/// Outcome of a generic minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub function_evals: usize,
    pub gradient_evals: usize,
    /// Best objective value after each iteration, starting with iteration 0.
    pub curve: Vec<(usize, f64)>,
    /// Best point after each iteration.
    pub path: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Default starting point: the middle of the admissible box.
pub const DEFAULT_X0: WheelVec = [1.0; WHEELS];

/// One recorded run: the commanded schedule and the observed track.
#[derive(Debug, Clone)]
pub struct Recording {
    pub schedule: ControlSchedule,
    pub track: GroundTruthTrack,
    target: TrackingTarget,
}

impl Recording {
    pub fn new(schedule: ControlSchedule, track: GroundTruthTrack) -> Result<Self> {
        let target = TrackingTarget::new(&schedule, &track)?;
        Ok(Self {
            schedule,
            track,
            target,
        })
    }

    pub fn target(&self) -> &TrackingTarget {
        &self.target
    }

    /// Earliest `fraction` of the ground-truth samples, with the schedule cut
    /// just past the last kept sample.
    pub fn prefix(&self, fraction: f64) -> Result<Self> {
        if fraction >= 1.0 {
            return Ok(self.clone());
        }
        let n_keep = (self.track.len() as f64 * fraction).round() as usize;
        if n_keep < 2 {
            return Err(Error::TrackTooShort(n_keep));
        }
        let track = self.track.prefix(fraction);
        let last = track.samples()[track.len() - 1].t;
        let max_dt = (0..self.schedule.len())
            .map(|i| self.schedule.dt(i))
            .fold(0.0, f64::max);
        let schedule = self
            .schedule
            .truncated(last + 0.5 * max_dt)
            .ok_or_else(|| Error::InvalidSchedule(format!("no control interval ends before t = {last}")))?;
        Self::new(schedule, track)
    }
}

/// Friction identification over one or more recordings; losses and
/// gradients of the recordings are summed.
#[derive(Debug, Clone)]
pub struct IdentificationProblem {
    pub params: RobotParams,
    pub weights: LossWeights,
    recordings: Vec<Recording>,
    lower: WheelVec,
    upper: WheelVec,
}

impl IdentificationProblem {
    pub fn new(params: RobotParams, recordings: Vec<Recording>, weights: LossWeights) -> Result<Self> {
        params.validate()?;
        weights.validate()?;
        if recordings.is_empty() {
            return Err(Error::NoTrajectories);
        }
        Ok(Self {
            params,
            weights,
            recordings,
            lower: [0.0; WHEELS],
            upper: [2.0; WHEELS],
        })
    }

    /// Convenience constructor from a single schedule and track.
    pub fn single(
        params: RobotParams,
        schedule: ControlSchedule,
        track: GroundTruthTrack,
        weights: LossWeights,
    ) -> Result<Self> {
        Self::new(params, vec![Recording::new(schedule, track)?], weights)
    }

    /// Narrow the box. Bounds must satisfy `0 ≤ lo < hi ≤ 2` per wheel.
    pub fn with_bounds(mut self, lower: WheelVec, upper: WheelVec) -> Result<Self> {
        for j in 0..WHEELS {
            if !(lower[j] >= 0.0 && upper[j] <= 2.0 && lower[j] < upper[j]) {
                return Err(Error::InvalidBounds(format!(
                    "wheel {j}: need 0 ≤ lo < hi ≤ 2, got [{}, {}]",
                    lower[j], upper[j]
                )));
            }
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn bounds(&self) -> (WheelVec, WheelVec) {
        (self.lower, self.upper)
    }

    /// One sub-problem per recording, sharing parameters, weights and box.
    pub fn split(&self) -> Vec<Self> {
        self.recordings
            .iter()
            .map(|r| Self {
                recordings: vec![r.clone()],
                ..self.clone()
            })
            .collect()
    }

    /// Problem restricted to the earliest `fraction` of every track.
    pub fn prefix(&self, fraction: f64) -> Result<Self> {
        let recordings = self
            .recordings
            .iter()
            .map(|r| r.prefix(fraction))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            recordings,
            ..self.clone()
        })
    }

    pub fn loss(&self, mu: &WheelVec) -> f64 {
        let mu = FrictionCoeffs::clamped(*mu);
        self.recordings
            .iter()
            .map(|r| compute_loss_prepared(&self.params, &mu, &r.schedule, &r.target, &self.weights).total)
            .sum()
    }

    pub fn loss_and_gradient(&self, mu: &WheelVec) -> (f64, WheelVec) {
        self.loss_and_gradient_ordered(mu, GradOrdering::Exact)
    }

    pub fn loss_and_gradient_ordered(&self, mu: &WheelVec, ordering: GradOrdering) -> (f64, WheelVec) {
        let mu = FrictionCoeffs::clamped(*mu);
        let mut total = 0.0;
        let mut g = [0.0; WHEELS];
        for r in &self.recordings {
            let (report, grad) =
                loss_gradient_mu_prepared(&self.params, &mu, &r.schedule, &r.target, &self.weights, ordering);
            total += report.total;
            for j in 0..WHEELS {
                g[j] += grad.values[j];
            }
        }
        (total, g)
    }

    /// Loss as a function of the unconstrained variable, `μ = 2·σ(raw)`.
    pub fn loss_raw(&self, raw: &[f64]) -> f64 {
        let mu: WheelVec = std::array::from_fn(|j| 2.0 * sigmoid(raw[j]));
        self.loss(&mu)
    }

    fn check_start(&self, x0: &WheelVec) -> Result<()> {
        for j in 0..WHEELS {
            if !(x0[j] >= self.lower[j] && x0[j] <= self.upper[j]) {
                return Err(Error::InvalidBounds(format!(
                    "start value {} for wheel {j} lies outside [{}, {}]",
                    x0[j], self.lower[j], self.upper[j]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    QuasiNewton,
    NelderMead,
    Cmaes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: Solver,
    pub mu_hat: FrictionCoeffs,
    pub final_loss: f64,
    pub iterations: usize,
    pub function_evals: usize,
    pub gradient_evals: usize,
    /// Seconds.
    pub wall_time: f64,
    pub loss_curve: Vec<(usize, f64)>,
    pub converged: bool,
}

impl SolveReport {
    /// Copy with the wall-clock time zeroed, for reproducible comparison.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
    }

    fn from_minimum(solver: Solver, m: Minimum, mu: WheelVec, started: Instant) -> Self {
        Self {
            solver,
            mu_hat: FrictionCoeffs::clamped(mu),
            final_loss: m.f,
            iterations: m.iterations,
            function_evals: m.function_evals,
            gradient_evals: m.gradient_evals,
            wall_time: started.elapsed().as_secs_f64(),
            loss_curve: m.curve,
            converged: m.converged,
        }
    }
}

fn to_wheels(x: &[f64]) -> WheelVec {
    std::array::from_fn(|j| x[j])
}

/// Projected L-BFGS with analytic gradients.
pub fn identify_quasi_newton(
    problem: &IdentificationProblem,
    x0: &WheelVec,
    opts: &LbfgsOptions,
) -> Result<SolveReport> {
    Ok(identify_quasi_newton_traced(problem, x0, opts)?.0)
}

/// As [`identify_quasi_newton`], also returning every iterate.
pub fn identify_quasi_newton_traced(
    problem: &IdentificationProblem,
    x0: &WheelVec,
    opts: &LbfgsOptions,
) -> Result<(SolveReport, Vec<WheelVec>)> {
    problem.check_start(x0)?;
    let started = Instant::now();
    let m = lbfgs::minimize(
        |x| problem.loss(&to_wheels(x)),
        |x| {
            let (f, g) = problem.loss_and_gradient(&to_wheels(x));
            (f, g.to_vec())
        },
        x0,
        &problem.lower,
        &problem.upper,
        opts,
    );
    let path = m.path.iter().map(|p| to_wheels(p)).collect();
    let mu = to_wheels(&m.x);
    Ok((SolveReport::from_minimum(Solver::QuasiNewton, m, mu, started), path))
}

/// Nelder-Mead on the sigmoid reparameterization.
pub fn identify_nelder_mead(
    problem: &IdentificationProblem,
    x0: &WheelVec,
    opts: &NelderMeadOptions,
) -> Result<SolveReport> {
    problem.check_start(x0)?;
    let started = Instant::now();
    let raw0 = crate::grad::mu_to_raw(x0);
    let m = nelder_mead::minimize(|r| problem.loss_raw(r), &raw0, opts);
    let mu = std::array::from_fn(|j| 2.0 * sigmoid(m.x[j]));
    Ok(SolveReport::from_minimum(Solver::NelderMead, m, mu, started))
}

/// CMA-ES on the sigmoid reparameterization.
pub fn identify_cmaes(problem: &IdentificationProblem, x0: &WheelVec, opts: &CmaesOptions) -> Result<SolveReport> {
    problem.check_start(x0)?;
    let started = Instant::now();
    let raw0 = crate::grad::mu_to_raw(x0);
    let m = cmaes::minimize(|r| problem.loss_raw(r), &raw0, opts);
    let mu = std::array::from_fn(|j| 2.0 * sigmoid(m.x[j]));
    Ok(SolveReport::from_minimum(Solver::Cmaes, m, mu, started))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentCheck {
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-3)`: a relative
    /// error that degrades to an absolute one for tiny components.
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub x: WheelVec,
    pub h: f64,
    pub components: Vec<ComponentCheck>,
}

impl GradientCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.components.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }
}

/// Scale floor in [`ComponentCheck::rel_err`].
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Compare the analytic gradient with central differences of the loss.
pub fn gradient_check(problem: &IdentificationProblem, x: &WheelVec, h: f64) -> Result<GradientCheck> {
    gradient_check_with(problem, x, h, |mu| problem.loss_and_gradient(mu).1)
}

/// As [`gradient_check`] with a caller-supplied gradient.
pub fn gradient_check_with<G>(
    problem: &IdentificationProblem,
    x: &WheelVec,
    h: f64,
    gradient: G,
) -> Result<GradientCheck>
where
    G: Fn(&WheelVec) -> WheelVec,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidBounds(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    for j in 0..WHEELS {
        if !(x[j] - h > problem.lower[j] && x[j] + h < problem.upper[j]) {
            return Err(Error::InvalidBounds(format!(
                "wheel {j}: {} is within h = {h} of the box [{}, {}]",
                x[j], problem.lower[j], problem.upper[j]
            )));
        }
    }
    let analytic = gradient(x);
    let components = (0..WHEELS)
        .map(|j| {
            let mut up = *x;
            let mut down = *x;
            up[j] += h;
            down[j] -= h;
            let numeric = (problem.loss(&up) - problem.loss(&down)) / (2.0 * h);
            let a = analytic[j];
            let scale = a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            ComponentCheck {
                analytic: a,
                numeric,
                rel_err: (a - numeric).abs() / scale,
            }
        })
        .collect();
    Ok(GradientCheck { x: *x, h, components })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    /// Full-data loss at the friction identified from the prefix.
    pub final_loss: Option<f64>,
    pub report: Option<SolveReport>,
    pub note: Option<String>,
}

/// Identify from growing prefixes of the data and score each estimate on
/// the full data.
pub fn data_efficiency_sweep(
    problem: &IdentificationProblem,
    fractions: &[f64],
    x0: &WheelVec,
    opts: &LbfgsOptions,
) -> Result<Vec<SweepPoint>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidBounds(format!("fraction {f} outside (0, 1]")));
    }
    fractions
        .iter()
        .map(|&fraction| match problem.prefix(fraction) {
            Ok(sub) => {
                let report = identify_quasi_newton(&sub, x0, opts)?;
                Ok(SweepPoint {
                    fraction,
                    final_loss: Some(problem.loss(report.mu_hat.as_array())),
                    report: Some(report),
                    note: None,
                })
            }
            Err(e) => Ok(SweepPoint {
                fraction,
                final_loss: None,
                report: None,
                note: Some(format!("skipped: {e}")),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, Pose};

    fn params() -> RobotParams {
        RobotParams::default()
    }

    fn two_phase_schedule() -> ControlSchedule {
        ControlSchedule::piecewise(
            0.0,
            240.0,
            &[
                (1.0, [6.0, 4.0, 5.0, 7.0]),
                (1.0, [-5.0, 6.0, -4.0, 5.5]),
                (1.0, [4.0, -6.0, 7.0, -3.5]),
            ],
        )
        .unwrap()
    }

    fn synthetic(mu: WheelVec, schedule: ControlSchedule) -> IdentificationProblem {
        let traj = simulate(&params(), &FrictionCoeffs::new(mu).unwrap(), &schedule, Pose::default());
        let track = GroundTruthTrack::from_trajectory(&traj, 4);
        IdentificationProblem::single(params(), schedule, track, LossWeights::default()).unwrap()
    }

    fn max_err(a: &WheelVec, b: &WheelVec) -> f64 {
        (0..WHEELS).map(|j| (a[j] - b[j]).abs()).fold(0.0, f64::max)
    }

    const MU_STAR: WheelVec = [0.3, 0.5, 0.7, 0.9];

    #[test]
    fn quasi_newton_recovers_friction() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        let (r, path) = identify_quasi_newton_traced(&p, &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
        assert!(max_err(r.mu_hat.as_array(), &MU_STAR) < 1e-3, "{:?}", r);
        for x in path {
            assert!(x.iter().all(|v| (0.0..=2.0).contains(v)));
        }
        for w in r.loss_curve.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn quasi_newton_from_upper_corner_reaches_zero_friction() {
        let p = synthetic([0.0; 4], two_phase_schedule());
        let r = identify_quasi_newton(&p, &[2.0; 4], &LbfgsOptions::default()).unwrap();
        assert!(max_err(r.mu_hat.as_array(), &[0.0; 4]) < 1e-3, "{:?}", r);
    }

    #[test]
    fn zero_information_returns_start() {
        let schedule = ControlSchedule::constant(1.0, 240.0, [0.0; 4]).unwrap();
        let track = GroundTruthTrack::from_points(&[0.0, 0.5, 1.0], &[[0.0, 0.0], [0.1, 0.0], [0.2, 0.1]]).unwrap();
        let p = IdentificationProblem::single(params(), schedule, track, LossWeights::default()).unwrap();
        let x0 = [0.4, 1.2, 0.9, 1.7];
        let r = identify_quasi_newton(&p, &x0, &LbfgsOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 1);
        assert_eq!(r.mu_hat.to_array(), x0);
    }

    #[test]
    fn start_outside_box_is_rejected() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        assert!(identify_quasi_newton(&p, &[2.5, 1.0, 1.0, 1.0], &LbfgsOptions::default()).is_err());
    }

    #[test]
    fn derivative_free_solvers_recover_friction() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        let nm = identify_nelder_mead(&p, &DEFAULT_X0, &NelderMeadOptions::default()).unwrap();
        assert!(max_err(nm.mu_hat.as_array(), &MU_STAR) < 1e-2, "{:?}", nm);
        let qn = identify_quasi_newton(&p, &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
        assert!(nm.function_evals > qn.gradient_evals);

        let cma = identify_cmaes(&p, &DEFAULT_X0, &CmaesOptions::default()).unwrap();
        assert!(max_err(cma.mu_hat.as_array(), &MU_STAR) < 1e-2, "{:?}", cma);
        assert!(cma.function_evals > qn.gradient_evals);
        assert!((cma.final_loss - qn.final_loss).abs() < 1e-4);
    }

    #[test]
    fn cmaes_is_reproducible() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        let a = identify_cmaes(&p, &DEFAULT_X0, &CmaesOptions::default()).unwrap();
        let b = identify_cmaes(&p, &DEFAULT_X0, &CmaesOptions::default()).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
    }

    #[test]
    fn single_control_vector_fits_but_is_not_identifiable() {
        let schedule = ControlSchedule::constant(3.0, 240.0, [5.0, 5.0, 5.0, 5.0]).unwrap();
        let p = synthetic(MU_STAR, schedule);
        let r = identify_quasi_newton(&p, &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
        assert!(r.final_loss < 1e-6, "{:?}", r);
    }

    #[test]
    fn gradient_check_passes_at_random_point() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        let c = gradient_check(&p, &[0.8, 1.1, 0.4, 1.6], 1e-6).unwrap();
        assert!(c.max_rel_err() < 1e-5, "{:?}", c);
    }

    #[test]
    fn gradient_check_with_idle_controls_is_zero() {
        let schedule = ControlSchedule::constant(1.0, 240.0, [0.0; 4]).unwrap();
        let track = GroundTruthTrack::from_points(&[0.0, 0.5, 1.0], &[[0.0, 0.0], [0.1, 0.0], [0.2, 0.1]]).unwrap();
        let p = IdentificationProblem::single(params(), schedule, track, LossWeights::default()).unwrap();
        let c = gradient_check(&p, &[1.0; 4], 1e-6).unwrap();
        for comp in &c.components {
            assert_eq!(comp.analytic, 0.0);
            assert_eq!(comp.numeric, 0.0);
        }
    }

    #[test]
    fn gradient_check_detects_sign_flip() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        let x = [0.8, 1.1, 0.4, 1.6];
        let c = gradient_check_with(&p, &x, 1e-6, |mu| {
            let mut g = p.loss_and_gradient(mu).1;
            g[1] = -g[1];
            g
        })
        .unwrap();
        assert!(c.max_rel_err() > 0.1);
    }

    #[test]
    fn gradient_check_rejects_points_near_the_bound() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        assert!(gradient_check(&p, &[0.0, 1.0, 1.0, 1.0], 1e-6).is_err());
    }

    #[test]
    fn full_fraction_reproduces_baseline() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        let base = identify_quasi_newton(&p, &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
        let sweep = data_efficiency_sweep(&p, &[1.0], &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
        assert_eq!(
            sweep[0].report.as_ref().unwrap().without_timing(),
            base.without_timing()
        );
        assert_eq!(sweep[0].final_loss, Some(base.final_loss));
    }

    #[test]
    fn tiny_fraction_is_skipped() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        let sweep = data_efficiency_sweep(&p, &[0.001, 0.5], &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
        assert!(sweep[0].final_loss.is_none() && sweep[0].note.is_some());
        assert!(sweep[1].final_loss.is_some());
        assert!(data_efficiency_sweep(&p, &[0.0], &DEFAULT_X0, &LbfgsOptions::default()).is_err());
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let p = synthetic(MU_STAR, two_phase_schedule());
        assert!(p.clone().with_bounds([0.5; 4], [0.5; 4]).is_err());
        assert!(p.clone().with_bounds([0.0; 4], [2.5; 4]).is_err());
        assert!(p.with_bounds([0.1; 4], [1.9; 4]).is_ok());
    }
}
