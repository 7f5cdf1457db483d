//! Trajectory and control CSV files.
//!
//! Ground truth: header `t,x,y` or `t,x,y,theta`; an empty `theta` cell
//! means the heading was not observed. Controls: header `t,w1,w2,w3,w4`
//! (rad/s) or `t,d1,d2,d3,d4` (duty in `[-1, 1]`). Control row `i` applies
//! from its `t` until the next row's `t`; the last row only closes the final
//! interval, so its values are checked but not used. Writers repeat the last
//! command there. Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use mecanum_core::model::{ControlSchedule, GroundTruthTrack, RobotParams, TrackSample, Trajectory, WheelVec};

use crate::error::{CliError, CliResult};

const TRACK_HEADER: [&str; 4] = ["t", "x", "y", "theta"];
const SPEED_HEADER: [&str; 5] = ["t", "w1", "w2", "w3", "w4"];
const DUTY_HEADER: [&str; 5] = ["t", "d1", "d2", "d3", "d4"];

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn header(path: &Path, rdr: &mut csv::Reader<File>) -> CliResult<Vec<String>> {
    let h = rdr.headers().map_err(|e| CliError::parse(path, 1, e.to_string()))?;
    Ok(h.iter().map(str::to_string).collect())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn number(path: &Path, line: u64, column: &str, token: &str) -> CliResult<f64> {
    let v: f64 = token.parse().map_err(|_| {
        CliError::parse(
            path,
            line,
            format!("column `{column}`: cannot parse `{token}` as a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(CliError::parse(
            path,
            line,
            format!("column `{column}`: non-finite value `{token}`"),
        ));
    }
    Ok(v)
}

/// Parse rows, checking field count, finiteness and increasing `t`.
fn rows<const N: usize>(path: &Path, rdr: &mut csv::Reader<File>, names: &[&str]) -> CliResult<Vec<[Option<f64>; N]>> {
    let mut out = Vec::new();
    let mut prev: Option<f64> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::parse(path, line, e.to_string())
        })?;
        let line = line_of(&record);
        if record.len() != names.len() {
            return Err(CliError::parse(
                path,
                line,
                format!("expected {} fields, found {}", names.len(), record.len()),
            ));
        }
        let mut row = [None; N];
        for (k, token) in record.iter().enumerate() {
            if !token.is_empty() {
                row[k] = Some(number(path, line, names[k], token)?);
            } else if k == 0 || names[k] != "theta" {
                return Err(CliError::parse(path, line, format!("column `{}` is empty", names[k])));
            }
        }
        let t = row[0].expect("t is required");
        if let Some(p) = prev {
            if t <= p {
                return Err(CliError::parse(
                    path,
                    line,
                    format!("t = {t} does not increase (previous row has t = {p})"),
                ));
            }
        }
        prev = Some(t);
        out.push(row);
    }
    Ok(out)
}

pub fn read_track(path: &Path) -> CliResult<GroundTruthTrack> {
    let mut rdr = reader(path)?;
    let h = header(path, &mut rdr)?;
    let names: Vec<&str> = h.iter().map(String::as_str).collect();
    if names != TRACK_HEADER[..3] && names != TRACK_HEADER {
        return Err(CliError::parse(
            path,
            1,
            format!("header must be `t,x,y` or `t,x,y,theta`, found `{}`", h.join(",")),
        ));
    }
    let samples: Vec<TrackSample> = rows::<4>(path, &mut rdr, &names)?
        .into_iter()
        .map(|r| TrackSample {
            t: r[0].unwrap_or_default(),
            x: r[1].unwrap_or_default(),
            y: r[2].unwrap_or_default(),
            theta: r[3],
        })
        .collect();
    if samples.is_empty() {
        return Err(CliError::parse(path, 2, "no data rows"));
    }
    Ok(GroundTruthTrack::new(samples)?)
}

pub fn read_controls(path: &Path, params: &RobotParams) -> CliResult<ControlSchedule> {
    let mut rdr = reader(path)?;
    let h = header(path, &mut rdr)?;
    let names: Vec<&str> = h.iter().map(String::as_str).collect();
    let duty = if names == DUTY_HEADER {
        true
    } else if names == SPEED_HEADER {
        false
    } else {
        return Err(CliError::parse(
            path,
            1,
            format!(
                "header must be `t,w1,w2,w3,w4` or `t,d1,d2,d3,d4`, found `{}`",
                h.join(",")
            ),
        ));
    };
    let parsed = rows::<5>(path, &mut rdr, &names)?;
    if parsed.len() < 2 {
        return Err(CliError::parse(
            path,
            parsed.len() as u64 + 2,
            "need at least two rows (the last one closes the final interval)",
        ));
    }
    let times: Vec<f64> = parsed.iter().map(|r| r[0].unwrap_or_default()).collect();
    let values: Vec<WheelVec> = parsed
        .iter()
        .map(|r| std::array::from_fn(|j| r[j + 1].unwrap_or_default()))
        .collect();
    if duty {
        if let Some(i) = values.iter().position(|d| d.iter().any(|v| !(-1.0..=1.0).contains(v))) {
            return Err(CliError::parse(path, i as u64 + 2, "duty outside [-1, 1]"));
        }
    }
    let used = values[..values.len() - 1].to_vec();
    let schedule = if duty {
        ControlSchedule::from_duty(times, &used, params)?
    } else {
        ControlSchedule::new(times, used)?
    };
    Ok(schedule)
}

fn create(path: &Path) -> CliResult<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// Write any table of numbers with a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let rows: Vec<Vec<String>> = traj
        .times
        .iter()
        .zip(&traj.poses)
        .map(|(t, p)| vec![t.to_string(), p.x.to_string(), p.y.to_string(), p.theta.to_string()])
        .collect();
    write_table(path, &TRACK_HEADER, &rows)
}

pub fn write_track(path: &Path, track: &GroundTruthTrack) -> CliResult<()> {
    let rows: Vec<Vec<String>> = track
        .samples()
        .iter()
        .map(|s| {
            vec![
                s.t.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                s.theta.map_or(String::new(), |th| th.to_string()),
            ]
        })
        .collect();
    write_table(path, &TRACK_HEADER, &rows)
}

/// Desired wheel speeds in rad/s.
pub fn write_controls(path: &Path, times: &[f64], omega_s: &[WheelVec]) -> CliResult<()> {
    let last = *omega_s.last().expect("a schedule has at least one interval");
    let rows: Vec<Vec<String>> = times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let w = omega_s.get(i).copied().unwrap_or(last);
            std::iter::once(t.to_string())
                .chain(w.iter().map(f64::to_string))
                .collect()
        })
        .collect();
    write_table(path, &SPEED_HEADER, &rows)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mecanum_core::model::{simulate, FrictionCoeffs, Pose};

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn trajectory_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let params = RobotParams::default();
        let schedule = ControlSchedule::constant(1.0, 60.0, [3.3, -1.7, 2.9, 8.1]).unwrap();
        let traj = simulate(
            &params,
            &FrictionCoeffs::new([0.3, 0.5, 0.7, 0.9]).unwrap(),
            &schedule,
            Pose::new(0.1, 0.2, 0.3),
        );
        let p = dir.path().join("traj.csv");
        write_trajectory(&p, &traj).unwrap();
        let back = read_track(&p).unwrap();
        for ((t, pose), s) in traj.times.iter().zip(&traj.poses).zip(back.samples()) {
            assert_eq!(t.to_bits(), s.t.to_bits());
            assert_eq!(pose.x.to_bits(), s.x.to_bits());
            assert_eq!(pose.y.to_bits(), s.y.to_bits());
            assert_eq!(pose.theta.to_bits(), s.theta.unwrap().to_bits());
        }
    }

    #[test]
    fn controls_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let schedule =
            ControlSchedule::piecewise(0.0, 10.0, &[(0.5, [1.0, 2.0, 3.0, 4.0]), (0.5, [-4.0, 0.5, 0.0, 9.0])])
                .unwrap();
        let p = dir.path().join("c.csv");
        write_controls(&p, schedule.times(), schedule.controls()).unwrap();
        let back = read_controls(&p, &RobotParams::default()).unwrap();
        assert_eq!(back, schedule);
    }

    #[test]
    fn duty_is_scaled_by_omega_max() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "t,d1,d2,d3,d4\n0,0.5,-1,0,1\n1,0,0,0,0\n");
        let s = read_controls(&p, &RobotParams::default()).unwrap();
        assert_eq!(s.controls(), &[[5.0, -10.0, 0.0, 10.0]]);
        let bad = write(dir.path(), "e.csv", "t,d1,d2,d3,d4\n0,0.5,-1,0,1\n1,0,1.5,0,0\n");
        let err = read_controls(&bad, &RobotParams::default()).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn non_monotone_time_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gt.csv", "t,x,y,theta\n0,0,0,0\n0.5,1,0,0\n0.4,2,0,0\n");
        let err = read_track(&p).unwrap_err().to_string();
        assert!(err.contains("gt.csv:4:"), "{err}");
        assert!(err.contains("does not increase"), "{err}");
    }

    #[test]
    fn bad_tokens_are_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        for (body, line) in [
            ("t,x,y\n0,0,0\n1,NaN,0\n", 3),
            ("t,x,y\n0,0,0\n1,inf,0\n", 3),
            ("t,x,y\n0,zero,0\n", 2),
            ("t,x,y\n0,0\n", 2),
        ] {
            let p = write(dir.path(), "gt.csv", body);
            let err = read_track(&p).unwrap_err().to_string();
            assert!(err.contains(&format!("gt.csv:{line}:")), "{body:?}: {err}");
        }
    }

    #[test]
    fn headings_are_optional() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gt.csv", "t,x,y\n0,0,0\n1,0,1\n");
        assert!(read_track(&p).unwrap().samples().iter().all(|s| s.theta.is_none()));
        let q = write(dir.path(), "gt2.csv", "t,x,y,theta\n0,0,0,\n1,0,1,0.5\n");
        let t = read_track(&q).unwrap();
        assert_eq!(t.samples()[0].theta, None);
        assert_eq!(t.samples()[1].theta, Some(0.5));
    }

    #[test]
    fn wrong_header_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gt.csv", "time,x,y\n0,0,0\n");
        assert!(read_track(&p).unwrap_err().to_string().contains(":1:"));
        let c = write(dir.path(), "c.csv", "t,a,b,c,d\n0,0,0,0,0\n1,0,0,0,0\n");
        assert!(read_controls(&c, &RobotParams::default()).is_err());
    }
}
