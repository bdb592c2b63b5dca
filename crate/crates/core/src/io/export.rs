//! Trajectory export: GeoJSON for map tools, CSV for everything else.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use crate::dynamics::DroneState;
use crate::frames::{FrameError, GeoPoint, InertialFrame, Orientation, Vec3};
use crate::swarm::{DroneTrack, Trajectory};

pub const CSV_HEADER: [&str; 15] = [
    "drone_id", "t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz",
];

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("geo projection failed: {0}")]
    Projection(#[from] FrameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed CSV at line {line}: {message}")]
    Format { line: u64, message: String },
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExportError> {
    fs::write(path, contents).map_err(|source| ExportError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn position(g: &GeoPoint) -> Value {
    json!([g.longitude, g.latitude, g.altitude])
}

/// Builds the FeatureCollection in memory.
pub fn geojson_value(tr: &Trajectory, frame: &InertialFrame) -> Result<Value, ExportError> {
    if tr.is_empty() {
        return Err(ExportError::EmptyTrajectory);
    }
    let mut features = Vec::new();
    for track in tr.tracks.iter().filter(|t| !t.samples.is_empty()) {
        let mut coords = track
            .samples
            .iter()
            .map(|s| frame.geo_project(&s.position).map(|g| position(&g)))
            .collect::<Result<Vec<_>, _>>()?;
        // a LineString needs two positions
        if coords.len() == 1 {
            coords.push(coords[0].clone());
        }
        let times: Vec<f64> = track.samples.iter().map(|s| s.t).collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"kind": "trajectory", "drone_id": track.id, "times": times},
        }));
    }
    for e in &tr.events {
        let g = frame.geo_project(&e.location)?;
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": position(&g)},
            "properties": {
                "kind": "event",
                "event": e.kind.as_str(),
                "t": e.t,
                "drone_ids": e.drone_ids,
                "detail": e.detail,
            },
        }));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

/// Writes one LineString per drone (`[lon, lat, alt]`) plus one Point per
/// event. Nothing is written when the trajectory is empty.
pub fn export_geojson(
    tr: &Trajectory,
    frame: &InertialFrame,
    path: impl AsRef<Path>,
) -> Result<(), ExportError> {
    let v = geojson_value(tr, frame)?;
    let text = serde_json::to_string_pretty(&v).expect("json value serializes");
    write_file(path.as_ref(), text.as_bytes())
}

fn fmt(x: f64) -> String {
    format!("{x:.8e}")
}

/// CSV text, rows grouped by drone id then time.
pub fn csv_string(tr: &Trajectory) -> Result<String, ExportError> {
    if tr.is_empty() {
        return Err(ExportError::EmptyTrajectory);
    }
    let mut tracks: Vec<&DroneTrack> = tr.tracks.iter().collect();
    tracks.sort_by(|a, b| a.id.cmp(&b.id));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for track in tracks {
        let mut samples: Vec<&DroneState> = track.samples.iter().collect();
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        for s in samples {
            let [qw, qx, qy, qz] = s.orientation.wxyz();
            let mut row = vec![track.id.clone(), fmt(s.t)];
            for v in [s.position, s.velocity] {
                row.extend(v.iter().map(|c| fmt(*c)));
            }
            row.extend([qw, qx, qy, qz].into_iter().map(fmt));
            row.extend(s.angular_velocity.iter().map(|c| fmt(*c)));
            w.write_record(&row)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ExportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn export_csv(tr: &Trajectory, path: impl AsRef<Path>) -> Result<(), ExportError> {
    let text = csv_string(tr)?;
    write_file(path.as_ref(), text.as_bytes())
}

/// Reads CSV produced by [`export_csv`]. Events are not part of the format.
pub fn parse_csv(text: &str) -> Result<Trajectory, ExportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ExportError::Format {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut tr = Trajectory::default();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut vals = [0.0; 14];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k + 1].trim().parse().map_err(|_| ExportError::Format {
                line,
                message: format!("column `{}` is not a number", CSV_HEADER[k + 1]),
            })?;
        }
        let orientation =
            Orientation::from_wxyz(vals[7], vals[8], vals[9], vals[10]).map_err(|_| {
                ExportError::Format {
                    line,
                    message: "invalid quaternion".into(),
                }
            })?;
        let state = DroneState {
            t: vals[0],
            position: Vec3::new(vals[1], vals[2], vals[3]),
            velocity: Vec3::new(vals[4], vals[5], vals[6]),
            orientation,
            angular_velocity: Vec3::new(vals[11], vals[12], vals[13]),
        };
        let id = &rec[0];
        match tr.tracks.iter_mut().find(|t| t.id == id) {
            Some(t) => t.samples.push(state),
            None => tr.tracks.push(DroneTrack {
                id: id.to_string(),
                samples: vec![state],
            }),
        }
    }
    Ok(tr)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Trajectory, ExportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ExportError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::EARTH_RADIUS_M;
    use crate::swarm::{EventKind, SimEvent};

    fn frame(lat: f64, lon: f64) -> InertialFrame {
        InertialFrame::new(GeoPoint {
            latitude: lat,
            longitude: lon,
            altitude: 0.0,
        })
        .unwrap()
    }

    fn track(id: &str, pts: &[(f64, Vec3)]) -> DroneTrack {
        DroneTrack {
            id: id.into(),
            samples: pts
                .iter()
                .map(|(t, p)| DroneState {
                    t: *t,
                    ..DroneState::at_rest(*p)
                })
                .collect(),
        }
    }

    #[test]
    fn stationary_drone_sits_on_origin() {
        let tr = Trajectory {
            tracks: vec![track(
                "a",
                &[
                    (0.0, Vec3::zeros()),
                    (0.1, Vec3::zeros()),
                    (0.2, Vec3::zeros()),
                ],
            )],
            events: vec![],
        };
        let v = geojson_value(&tr, &frame(45.0, 7.0)).unwrap();
        let coords = v["features"][0]["geometry"]["coordinates"]
            .as_array()
            .unwrap();
        assert_eq!(coords.len(), 3);
        for c in coords {
            assert_eq!(c, &json!([7.0, 45.0, 0.0]));
        }
        assert_eq!(v["features"][0]["properties"]["drone_id"], "a");
        assert_eq!(
            v["features"][0]["properties"]["times"],
            json!([0.0, 0.1, 0.2])
        );
    }

    #[test]
    fn one_degree_north() {
        // one degree of meridian arc on the export sphere
        let north = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((north - 111_194.9).abs() < 0.05);
        let tr = Trajectory {
            tracks: vec![track(
                "a",
                &[(0.0, Vec3::zeros()), (1.0, Vec3::new(0.0, north, 0.0))],
            )],
            events: vec![],
        };
        let v = geojson_value(&tr, &frame(0.0, 0.0)).unwrap();
        let last = &v["features"][0]["geometry"]["coordinates"][1];
        assert!((last[1].as_f64().unwrap() - 1.0).abs() < 1e-9);
        assert!(last[0].as_f64().unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_sample_still_valid_linestring() {
        let tr = Trajectory {
            tracks: vec![track("a", &[(0.0, Vec3::new(1.0, 2.0, 3.0))])],
            events: vec![],
        };
        let v = geojson_value(&tr, &frame(10.0, 10.0)).unwrap();
        assert_eq!(
            v["features"][0]["geometry"]["coordinates"]
                .as_array()
                .unwrap()
                .len(),
            2
        );
    }

    #[test]
    fn events_become_points() {
        let tr = Trajectory {
            tracks: vec![track(
                "a",
                &[(0.0, Vec3::zeros()), (1.0, Vec3::new(1.0, 0.0, 0.0))],
            )],
            events: vec![SimEvent {
                t: 0.5,
                drone_ids: vec!["a".into()],
                kind: EventKind::WaypointReached,
                detail: "w1".into(),
                location: Vec3::new(0.5, 0.0, 0.0),
            }],
        };
        let v = geojson_value(&tr, &frame(0.0, 0.0)).unwrap();
        let f = &v["features"][1];
        assert_eq!(f["geometry"]["type"], "Point");
        assert_eq!(f["properties"]["event"], "waypoint_reached");
    }

    #[test]
    fn empty_trajectory_creates_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.geojson");
        let r = export_geojson(&Trajectory::default(), &frame(0.0, 0.0), &p);
        assert!(matches!(r, Err(ExportError::EmptyTrajectory)));
        assert!(!p.exists());
        let p = dir.path().join("out.csv");
        assert!(matches!(
            export_csv(&Trajectory::default(), &p),
            Err(ExportError::EmptyTrajectory)
        ));
        assert!(!p.exists());
    }

    #[test]
    fn unwritable_path() {
        let tr = Trajectory {
            tracks: vec![track("a", &[(0.0, Vec3::zeros())])],
            events: vec![],
        };
        let r = export_csv(&tr, "/nonexistent-dir/x/out.csv");
        assert!(matches!(r, Err(ExportError::Write { .. })));
    }

    #[test]
    fn csv_counts_and_grouping() {
        let tr = Trajectory {
            tracks: vec![
                track("b", &[(0.0, Vec3::zeros()), (0.1, Vec3::zeros())]),
                track(
                    "a",
                    &[
                        (0.0, Vec3::zeros()),
                        (0.1, Vec3::zeros()),
                        (0.2, Vec3::zeros()),
                    ],
                ),
            ],
            events: vec![],
        };
        let text = csv_string(&tr).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        let ids: Vec<&str> = lines[1..]
            .iter()
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(ids, ["a", "a", "a", "b", "b"]);
        assert!(lines[1].contains("0.00000000e0"));
    }

    #[test]
    fn csv_round_trip() {
        let mut s = DroneState::at_rest(Vec3::new(1.234567891234, -2.5e-3, 10.0));
        s.t = 0.3;
        s.velocity = Vec3::new(0.1, -0.2, 0.3);
        s.orientation = Orientation::from_euler(0.1, -0.2, 0.3);
        s.angular_velocity = Vec3::new(1e-5, 2.0, -3.0);
        let tr = Trajectory {
            tracks: vec![DroneTrack {
                id: "x".into(),
                samples: vec![s],
            }],
            events: vec![],
        };
        let back = parse_csv(&csv_string(&tr).unwrap()).unwrap();
        let b = &back.tracks[0].samples[0];
        let close = |a: f64, b: f64| (a - b).abs() <= 5e-9 * a.abs().max(1e-300);
        assert!(close(s.t, b.t));
        for k in 0..3 {
            assert!(close(s.position[k], b.position[k]));
            assert!(close(s.velocity[k], b.velocity[k]));
            assert!(close(s.angular_velocity[k], b.angular_velocity[k]));
        }
        assert!(s.orientation.angle_to(&b.orientation) < 1e-8);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            parse_csv("a,b\n1,2\n"),
            Err(ExportError::Format { line: 1, .. })
        ));
    }
}
