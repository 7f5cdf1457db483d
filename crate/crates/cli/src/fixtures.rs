//! Synthetic identification fixtures: noiseless tracks produced by forward
//! simulation with known friction, standing in for recorded robot runs.
//!
//! Fixture `k` (1-based) uses seed `base_seed + k`. It runs four one-second
//! phases of constant commands at 240 Hz, each wheel command drawn with a
//! random sign and magnitude in `[3, omega_max]`, and observes the pose every
//! fourth step (60 Hz), heading included. Fixture 1 uses friction
//! `(0.3, 0.5, 0.7, 0.9)`; the others draw each coefficient from `[0.1, 1.5]`.

use std::path::{Path, PathBuf};

use mecanum_core::model::{simulate, ControlSchedule, FrictionCoeffs, GroundTruthTrack, Pose, RobotParams, WheelVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::csvio::{write_controls, write_text, write_track};
use crate::error::CliResult;

pub const FIXTURE_COUNT: usize = 8;
pub const MU_STAR: WheelVec = [0.3, 0.5, 0.7, 0.9];
pub const CONTROL_RATE: f64 = 240.0;
pub const CAMERA_STRIDE: usize = 4;
pub const PHASES: usize = 4;
pub const PHASE_SECONDS: f64 = 1.0;
pub const MIN_SPEED: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub index: usize,
    pub seed: u64,
    pub mu: FrictionCoeffs,
    pub schedule: ControlSchedule,
    pub track: GroundTruthTrack,
}

impl Fixture {
    pub fn name(&self) -> String {
        format!("fixture_{:02}", self.index)
    }
}

/// Build fixture `index` (1-based) deterministically.
pub fn generate(params: &RobotParams, base_seed: u64, index: usize) -> CliResult<Fixture> {
    let seed = base_seed + index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = params.omega_max.max(MIN_SPEED);
    let phases: Vec<(f64, WheelVec)> = (0..PHASES)
        .map(|_| {
            let w = std::array::from_fn(|_| {
                let magnitude = rng.random_range(MIN_SPEED..=hi);
                if rng.random_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            });
            (PHASE_SECONDS, w)
        })
        .collect();
    let mu = if index == 1 {
        MU_STAR
    } else {
        std::array::from_fn(|_| rng.random_range(0.1..=1.5))
    };
    let mu = FrictionCoeffs::new(mu)?;
    let schedule = ControlSchedule::piecewise(0.0, CONTROL_RATE, &phases)?;
    let traj = simulate(params, &mu, &schedule, Pose::default());
    let track = GroundTruthTrack::from_trajectory(&traj, CAMERA_STRIDE);
    Ok(Fixture {
        index,
        seed,
        mu,
        schedule,
        track,
    })
}

pub fn generate_all(params: &RobotParams, base_seed: u64, count: usize) -> CliResult<Vec<Fixture>> {
    (1..=count).map(|k| generate(params, base_seed, k)).collect()
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    name: String,
    seed: u64,
    mu: FrictionCoeffs,
    controls: String,
    track: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    description: &'static str,
    base_seed: u64,
    robot: &'a RobotParams,
    fixtures: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
struct TrajectoryEntry {
    name: String,
    controls: String,
    track: String,
}

#[derive(Debug, Serialize)]
struct FixtureConfig<'a> {
    robot: &'a RobotParams,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<FrictionCoeffs>,
    trajectories: Vec<TrajectoryEntry>,
    output_dir: String,
}

/// Write the CSVs, a manifest, one config per fixture and one config
/// covering all of them. Returns the written file paths.
pub fn write_all(dir: &Path, params: &RobotParams, base_seed: u64, count: usize) -> CliResult<Vec<PathBuf>> {
    let fixtures = generate_all(params, base_seed, count)?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for f in &fixtures {
        let name = f.name();
        let controls = format!("{name}_controls.csv");
        let track = format!("{name}_track.csv");
        write_controls(&dir.join(&controls), f.schedule.times(), f.schedule.controls())?;
        write_track(&dir.join(&track), &f.track)?;
        let cfg = FixtureConfig {
            robot: params,
            seed: base_seed,
            mu: Some(f.mu),
            trajectories: vec![TrajectoryEntry {
                name: name.clone(),
                controls: controls.clone(),
                track: track.clone(),
            }],
            output_dir: format!("out/{name}"),
        };
        let cfg_path = dir.join(format!("{name}.json"));
        write_text(
            &cfg_path,
            &(serde_json::to_string_pretty(&cfg).expect("plain data") + "\n"),
        )?;
        written.extend([dir.join(&controls), dir.join(&track), cfg_path]);
        entries.push(ManifestEntry {
            name,
            seed: f.seed,
            mu: f.mu,
            controls,
            track,
        });
    }
    let all = FixtureConfig {
        robot: params,
        seed: base_seed,
        mu: None,
        trajectories: entries
            .iter()
            .map(|e| TrajectoryEntry {
                name: e.name.clone(),
                controls: e.controls.clone(),
                track: e.track.clone(),
            })
            .collect(),
        output_dir: "out/all".into(),
    };
    let all_path = dir.join("all.json");
    write_text(
        &all_path,
        &(serde_json::to_string_pretty(&all).expect("plain data") + "\n"),
    )?;
    let manifest = Manifest {
        description: "Synthetic noiseless stand-ins for recorded runs, produced by forward simulation with the listed friction. Not real robot data.",
        base_seed,
        robot: params,
        fixtures: entries,
    };
    let manifest_path = dir.join("manifest.json");
    write_text(
        &manifest_path,
        &(serde_json::to_string_pretty(&manifest).expect("plain data") + "\n"),
    )?;
    written.extend([all_path, manifest_path]);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seeded_and_well_formed() {
        let params = RobotParams::default();
        let a = generate(&params, 42, 3).unwrap();
        assert_eq!(a, generate(&params, 42, 3).unwrap());
        assert_ne!(a.schedule, generate(&params, 43, 3).unwrap().schedule);
        assert_eq!(a.schedule.len(), 960);
        assert_eq!(a.track.len(), 241);
        assert!(a
            .schedule
            .controls()
            .iter()
            .flatten()
            .all(|w| w.abs() >= MIN_SPEED && w.abs() <= params.omega_max));
        let distinct: std::collections::BTreeSet<_> =
            a.schedule.controls().iter().map(|w| w.map(f64::to_bits)).collect();
        assert_eq!(distinct.len(), PHASES);
    }

    #[test]
    fn first_fixture_uses_reference_friction() {
        let f = generate(&RobotParams::default(), 42, 1).unwrap();
        assert_eq!(f.mu.to_array(), MU_STAR);
    }
}
