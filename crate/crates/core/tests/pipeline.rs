use mecanum_core::control::{plan_controls, rollout, PlanOptions, ReferenceCurve};
use mecanum_core::optimize::{identify_quasi_newton, IdentificationProblem, LbfgsOptions, DEFAULT_X0};
use mecanum_core::{
    simulate, ControlSchedule, FrictionCoeffs, GroundTruthTrack, LossWeights, Pose, RobotParams, WheelVec,
};
use proptest::prelude::*;

fn recorded(params: &RobotParams, mu: &FrictionCoeffs, phases: &[(f64, WheelVec)]) -> IdentificationProblem {
    let schedule = ControlSchedule::piecewise(0.0, 240.0, phases).unwrap();
    let traj = simulate(params, mu, &schedule, Pose::default());
    let track = GroundTruthTrack::from_trajectory(&traj, 4);
    IdentificationProblem::single(*params, schedule, track, LossWeights::default()).unwrap()
}

#[test]
fn identified_friction_plans_as_well_as_the_truth() {
    let params = RobotParams {
        omega_max: 100.0,
        ..RobotParams::default()
    };
    let mu = FrictionCoeffs::new([0.8, 0.2, 1.1, 0.6]).unwrap();
    let phases = [
        (1.0, [9.0, -5.0, 7.0, 4.0]),
        (1.0, [-6.0, 8.0, 5.0, -9.0]),
        (1.0, [4.0, 4.0, -8.0, 7.0]),
    ];
    let problem = recorded(&params, &mu, &phases);
    let report = identify_quasi_newton(&problem, &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
    assert!(report.converged);

    let curve = ReferenceCurve::circle(1.0, 8.0, 4.0);
    let start = Pose::new(0.0, -1.0, 0.0);
    let opts = PlanOptions::default();
    let (from_fit, _) = plan_controls(&params, &report.mu_hat, &curve, start, &opts).unwrap();
    let (_, fitted) = rollout(&params, &mu, &from_fit, start).unwrap();
    assert!(fitted.mean_deviation < 0.02, "{fitted:?}");

    // A planner that ignores friction misses by a wide margin.
    let (blind, _) = plan_controls(&params, &FrictionCoeffs::zero(), &curve, start, &opts).unwrap();
    let (_, missed) = rollout(&params, &mu, &blind, start).unwrap();
    assert!(
        missed.mean_deviation > 5.0 * fitted.mean_deviation,
        "{missed:?} vs {fitted:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn noiseless_runs_identify_their_friction(
        mu in proptest::array::uniform4(0.1f64..1.5),
        a in proptest::array::uniform4(3.0f64..10.0),
        b in proptest::array::uniform4(-10.0f64..-3.0),
    ) {
        let params = RobotParams::default();
        let truth = FrictionCoeffs::new(mu).unwrap();
        let mixed: WheelVec = [a[0], b[1], a[2], b[3]];
        let problem = recorded(&params, &truth, &[(1.0, a), (1.0, b), (1.0, mixed)]);
        let report = identify_quasi_newton(&problem, &DEFAULT_X0, &LbfgsOptions::default()).unwrap();
        for (got, want) in report.mu_hat.as_array().iter().zip(mu) {
            prop_assert!((got - want).abs() < 1e-3, "{:?} vs {:?}", report.mu_hat, mu);
        }
    }
}
