//! Python module `mecanum`: simulation, loss and gradient evaluation,
//! friction identification and path planning over plain Python lists.

use mecanum_core::control::{discretize, plan_for_waypoints, rollout, LobeDirection, PlanOptions, ReferenceCurve};
use mecanum_core::loss::LossWeights;
use mecanum_core::model::{
    self, kinematic_matrix, ControlSchedule, FrictionCoeffs, GroundTruthTrack, Pose, TrackSample, WheelVec,
};
use mecanum_core::optimize::{
    self as opt, CmaesOptions, IdentificationProblem, LbfgsOptions, NelderMeadOptions, SolveReport, DEFAULT_X0,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn friction(mu: WheelVec) -> PyResult<FrictionCoeffs> {
    FrictionCoeffs::new(mu).map_err(value_err)
}

/// Robot constants. Keyword arguments override the defaults.
#[pyclass(name = "RobotParams", from_py_object)]
#[derive(Clone)]
pub struct PyRobotParams {
    inner: model::RobotParams,
}

#[pymethods]
impl PyRobotParams {
    #[new]
    #[pyo3(signature = (*, mass=None, gravity=None, wheel_radius=None, stall_torque=None, half_length=None, half_width=None, wheel_inertia=None, omega_max=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        mass: Option<f64>,
        gravity: Option<f64>,
        wheel_radius: Option<f64>,
        stall_torque: Option<f64>,
        half_length: Option<f64>,
        half_width: Option<f64>,
        wheel_inertia: Option<f64>,
        omega_max: Option<f64>,
    ) -> PyResult<Self> {
        let d = model::RobotParams::default();
        let inner = model::RobotParams {
            mass: mass.unwrap_or(d.mass),
            gravity: gravity.unwrap_or(d.gravity),
            wheel_radius: wheel_radius.unwrap_or(d.wheel_radius),
            stall_torque: stall_torque.unwrap_or(d.stall_torque),
            half_length: half_length.unwrap_or(d.half_length),
            half_width: half_width.unwrap_or(d.half_width),
            wheel_inertia: wheel_inertia.unwrap_or(d.wheel_inertia),
            omega_max: omega_max.unwrap_or(d.omega_max),
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn wheel_radius(&self) -> f64 {
        self.inner.wheel_radius
    }

    #[getter]
    fn omega_max(&self) -> f64 {
        self.inner.omega_max
    }

    /// `μ·M·g·R / (4·Ts)` per unit friction.
    #[getter]
    fn friction_gain(&self) -> f64 {
        self.inner.friction_gain()
    }

    /// The 3×4 matrix mapping wheel speeds to body velocity.
    fn kinematic_matrix(&self) -> Vec<Vec<f64>> {
        kinematic_matrix(&self.inner).0.iter().map(|r| r.to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

fn params_or_default(params: Option<PyRobotParams>) -> model::RobotParams {
    params.map(|p| p.inner).unwrap_or_default()
}

/// Steady-state wheel speeds for commanded speeds `omega_s`.
#[pyfunction]
#[pyo3(signature = (mu, omega_s, params=None))]
fn steady_state_omega(mu: WheelVec, omega_s: WheelVec, params: Option<PyRobotParams>) -> PyResult<WheelVec> {
    Ok(model::steady_state_omega(
        &params_or_default(params),
        &friction(mu)?,
        &omega_s,
    ))
}

/// Body velocity `(vx, vy, omega_z)` for actual wheel speeds.
#[pyfunction]
#[pyo3(signature = (omega, params=None))]
fn body_velocity(omega: WheelVec, params: Option<PyRobotParams>) -> (f64, f64, f64) {
    let v = model::body_velocity(&kinematic_matrix(&params_or_default(params)), &omega);
    (v.vx, v.vy, v.omega_z)
}

/// Integrate commands held over `times[i]..times[i+1]`; `controls` has one
/// row fewer than `times`. Returns `len(times)` poses `(x, y, theta)`.
#[pyfunction]
#[pyo3(signature = (times, controls, mu, start=(0.0, 0.0, 0.0), params=None))]
fn simulate(
    times: Vec<f64>,
    controls: Vec<WheelVec>,
    mu: WheelVec,
    start: (f64, f64, f64),
    params: Option<PyRobotParams>,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let schedule = ControlSchedule::new(times, controls).map_err(value_err)?;
    let traj = model::simulate(
        &params_or_default(params),
        &friction(mu)?,
        &schedule,
        Pose::new(start.0, start.1, start.2),
    );
    Ok(traj.poses.iter().map(|p| (p.x, p.y, p.theta)).collect())
}

fn track_from_rows(rows: Vec<Vec<f64>>) -> PyResult<GroundTruthTrack> {
    let samples = rows
        .into_iter()
        .map(|r| match r.as_slice() {
            [t, x, y] => Ok(TrackSample {
                t: *t,
                x: *x,
                y: *y,
                theta: None,
            }),
            [t, x, y, th] => Ok(TrackSample {
                t: *t,
                x: *x,
                y: *y,
                theta: Some(*th),
            }),
            _ => Err(PyValueError::new_err(format!(
                "track rows need 3 or 4 values, got {}",
                r.len()
            ))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    GroundTruthTrack::new(samples).map_err(value_err)
}

fn report_dict<'py>(py: Python<'py>, r: &SolveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mu_hat", r.mu_hat.to_array())?;
    d.set_item("final_loss", r.final_loss)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("function_evals", r.function_evals)?;
    d.set_item("gradient_evals", r.gradient_evals)?;
    d.set_item("converged", r.converged)?;
    d.set_item("loss_curve", r.loss_curve.clone())?;
    d.set_item("wall_time", r.wall_time)?;
    Ok(d)
}

/// Friction identification from one recorded run.
#[pyclass(name = "Problem", skip_from_py_object)]
pub struct PyProblem {
    inner: IdentificationProblem,
}

#[pymethods]
impl PyProblem {
    /// `track` rows are `(t, x, y)` or `(t, x, y, theta)`.
    #[new]
    #[pyo3(signature = (times, controls, track, params=None, w1=0.8, w2=0.2))]
    fn new(
        times: Vec<f64>,
        controls: Vec<WheelVec>,
        track: Vec<Vec<f64>>,
        params: Option<PyRobotParams>,
        w1: f64,
        w2: f64,
    ) -> PyResult<Self> {
        let schedule = ControlSchedule::new(times, controls).map_err(value_err)?;
        let inner = IdentificationProblem::single(
            params_or_default(params),
            schedule,
            track_from_rows(track)?,
            LossWeights { w1, w2 },
        )
        .map_err(value_err)?;
        Ok(Self { inner })
    }

    fn loss(&self, mu: WheelVec) -> PyResult<f64> {
        friction(mu)?;
        Ok(self.inner.loss(&mu))
    }

    fn loss_and_gradient(&self, mu: WheelVec) -> PyResult<(f64, WheelVec)> {
        friction(mu)?;
        Ok(self.inner.loss_and_gradient(&mu))
    }

    /// Run `"qn"`, `"nm"` or `"cmaes"` from `x0` and return the report.
    /// `max_iterations` caps quasi-Newton; `max_evals` caps the others.
    #[pyo3(signature = (solver="qn", x0=None, seed=42, max_iterations=None, max_evals=None))]
    fn identify<'py>(
        &self,
        py: Python<'py>,
        solver: &str,
        x0: Option<WheelVec>,
        seed: u64,
        max_iterations: Option<usize>,
        max_evals: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let x0 = x0.unwrap_or(DEFAULT_X0);
        let report = match solver {
            "qn" => {
                let mut o = LbfgsOptions::default();
                if let Some(m) = max_iterations {
                    o.max_iterations = m;
                }
                opt::identify_quasi_newton(&self.inner, &x0, &o)
            }
            "nm" => {
                let mut o = NelderMeadOptions::default();
                if let Some(m) = max_evals {
                    o.max_evals = m;
                }
                opt::identify_nelder_mead(&self.inner, &x0, &o)
            }
            "cmaes" => {
                let mut o = CmaesOptions {
                    seed,
                    ..CmaesOptions::default()
                };
                if let Some(m) = max_evals {
                    o.max_evals = m;
                }
                opt::identify_cmaes(&self.inner, &x0, &o)
            }
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown solver `{other}`; use qn, nm or cmaes"
                )))
            }
        }
        .map_err(value_err)?;
        report_dict(py, &report)
    }

    /// Per-component `(analytic, numeric, rel_err)` from central differences.
    #[pyo3(signature = (mu, h=1e-6))]
    fn gradient_check(&self, mu: WheelVec, h: f64) -> PyResult<Vec<(f64, f64, f64)>> {
        let check = opt::gradient_check(&self.inner, &mu, h).map_err(value_err)?;
        Ok(check
            .components
            .iter()
            .map(|c| (c.analytic, c.numeric, c.rel_err))
            .collect())
    }

    /// `(fraction, full-data loss)` for friction identified on each prefix;
    /// the loss is `None` where the prefix is too short to fit.
    #[pyo3(signature = (fractions, x0=None))]
    fn sweep(&self, fractions: Vec<f64>, x0: Option<WheelVec>) -> PyResult<Vec<(f64, Option<f64>)>> {
        let points = opt::data_efficiency_sweep(
            &self.inner,
            &fractions,
            &x0.unwrap_or(DEFAULT_X0),
            &LbfgsOptions::default(),
        )
        .map_err(value_err)?;
        Ok(points.iter().map(|p| (p.fraction, p.final_loss)).collect())
    }
}

/// Plan commands along `"circle"` (radius `scale`) or `"eight"` (left lobe
/// forwards, right lobe backwards) with friction `mu_plan`, then roll them
/// out with `mu_true` (defaults to `mu_plan`).
#[pyfunction]
#[pyo3(signature = (curve, mu_plan, mu_true=None, params=None, scale=1.0, duration=None, rate=4.0))]
#[allow(clippy::too_many_arguments)]
fn follow<'py>(
    py: Python<'py>,
    curve: &str,
    mu_plan: WheelVec,
    mu_true: Option<WheelVec>,
    params: Option<PyRobotParams>,
    scale: f64,
    duration: Option<f64>,
    rate: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let reference = match curve {
        "circle" => ReferenceCurve::circle(scale, duration.unwrap_or(8.0), rate),
        "eight" => ReferenceCurve::eight(
            scale,
            LobeDirection::Forward,
            LobeDirection::Backward,
            duration.unwrap_or(12.0),
            rate,
        ),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown curve `{other}`; use circle or eight"
            )))
        }
    };
    let params = params_or_default(params);
    let waypoints = discretize(&reference).map_err(value_err)?;
    let first = waypoints.samples()[0];
    let start = Pose::new(first.x, first.y, 0.0);
    let mu_plan = friction(mu_plan)?;
    let mu_true = match mu_true {
        Some(m) => friction(m)?,
        None => mu_plan,
    };
    let (plan, report) = py
        .detach(|| plan_for_waypoints(&params, &mu_plan, &waypoints, start, &PlanOptions::default()))
        .map_err(value_err)?;
    let (traj, tracking) = rollout(&params, &mu_true, &plan, start).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("times", plan.times())?;
    d.set_item("omega_s", plan.omega_s.clone())?;
    d.set_item("plan_loss", report.final_loss)?;
    d.set_item("converged", report.converged)?;
    d.set_item("mean_deviation", tracking.mean_deviation)?;
    d.set_item("max_deviation", tracking.max_deviation)?;
    d.set_item("endpoint_error", tracking.endpoint_error)?;
    d.set_item(
        "rollout",
        traj.poses.iter().map(|p| (p.x, p.y, p.theta)).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

#[pymodule]
pub fn mecanum(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRobotParams>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(steady_state_omega, m)?)?;
    m.add_function(wrap_pyfunction!(body_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(follow, m)?)?;
    Ok(())
}
