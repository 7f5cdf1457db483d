//! Differentiable simulator of a four-wheel mecanum robot, with friction
//! identification from recorded trajectories and path-following control
//! synthesis through the same model.

pub mod control;
pub mod error;
pub mod frictionnet;
pub mod grad;
pub mod loss;
pub mod model;
pub mod optimize;
pub mod spline;

pub use error::{Error, Result};
pub use loss::{compute_loss, LossReport, LossWeights};
pub use model::{
    simulate, ControlSchedule, FrictionCoeffs, GroundTruthTrack, Pose, RobotParams, TrackSample, Trajectory, WheelVec,
};
