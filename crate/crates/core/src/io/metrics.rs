//! Tracking-error metrics against the planned reference polyline.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::control::Setpoint;
use crate::frames::Vec3;
use crate::swarm::{EventKind, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptureTime {
    pub waypoint_id: String,
    /// s
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroneMetrics {
    pub drone_id: String,
    /// m
    pub rmse: f64,
    /// m, along the recorded samples
    pub flown_length: f64,
    pub samples: usize,
    pub capture_times: Vec<CaptureTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedDrone {
    pub drone_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MetricsReport {
    pub drones: Vec<DroneMetrics>,
    pub event_counts: BTreeMap<EventKind, usize>,
    pub skipped: Vec<SkippedDrone>,
}

impl MetricsReport {
    pub fn drone(&self, id: &str) -> Option<&DroneMetrics> {
        self.drones.iter().find(|d| d.drone_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let u = (p - a).dot(&ab) / len2;
    if u <= 0.0 {
        (p - a).norm()
    } else if u >= 1.0 {
        (p - b).norm()
    } else {
        (p - (a + ab * u)).norm()
    }
}

/// Distance from `p` to the nearest point of the polyline through `vertices`.
pub fn point_polyline_distance(p: &Vec3, vertices: &[Vec3]) -> f64 {
    match vertices {
        [] => f64::INFINITY,
        [v] => (p - v).norm(),
        _ => vertices
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Per-drone RMSE of sample positions to the reference polyline, flown
/// length and capture times. Drones without a usable reference are listed
/// under `skipped`.
pub fn compute_rmse(tr: &Trajectory, reference: &BTreeMap<String, Vec<Setpoint>>) -> MetricsReport {
    let mut report = MetricsReport {
        event_counts: tr.event_counts(),
        ..Default::default()
    };
    for track in &tr.tracks {
        let vertices: Vec<Vec3> = match reference.get(&track.id) {
            None => {
                log::warn!("drone `{}` has no reference; skipped", track.id);
                report.skipped.push(SkippedDrone {
                    drone_id: track.id.clone(),
                    reason: "missing from reference".into(),
                });
                continue;
            }
            Some(r) if r.is_empty() => {
                report.skipped.push(SkippedDrone {
                    drone_id: track.id.clone(),
                    reason: "empty reference".into(),
                });
                continue;
            }
            Some(r) => r.iter().map(|s| s.target_position).collect(),
        };
        if track.samples.is_empty() {
            report.skipped.push(SkippedDrone {
                drone_id: track.id.clone(),
                reason: "no samples".into(),
            });
            continue;
        }
        let sum_sq: f64 = track
            .samples
            .iter()
            .map(|s| point_polyline_distance(&s.position, &vertices).powi(2))
            .sum();
        let rmse = (sum_sq / track.samples.len() as f64).sqrt();
        let flown_length = track
            .samples
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum();
        let capture_times = tr
            .events_of(EventKind::WaypointReached)
            .filter(|e| e.drone_ids.first() == Some(&track.id))
            .map(|e| CaptureTime {
                waypoint_id: e.detail.clone(),
                t: e.t,
            })
            .collect();
        report.drones.push(DroneMetrics {
            drone_id: track.id.clone(),
            rmse,
            flown_length,
            samples: track.samples.len(),
            capture_times,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DroneState;
    use crate::swarm::DroneTrack;
    use proptest::prelude::*;

    fn tr(id: &str, pts: &[Vec3]) -> Trajectory {
        Trajectory {
            tracks: vec![DroneTrack {
                id: id.into(),
                samples: pts
                    .iter()
                    .enumerate()
                    .map(|(k, p)| DroneState {
                        t: k as f64 * 0.1,
                        ..DroneState::at_rest(*p)
                    })
                    .collect(),
            }],
            events: vec![],
        }
    }

    fn reference(id: &str, pts: &[Vec3]) -> BTreeMap<String, Vec<Setpoint>> {
        BTreeMap::from([(
            id.to_string(),
            pts.iter().map(|p| Setpoint::at(*p)).collect(),
        )])
    }

    #[test]
    fn identical_is_zero() {
        let pts = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(3.0, 0.0, 1.0),
            Vec3::new(3.0, 4.0, 1.0),
        ];
        let r = compute_rmse(&tr("a", &pts), &reference("a", &pts));
        assert_eq!(r.drone("a").unwrap().rmse, 0.0);
        assert_eq!(r.drone("a").unwrap().flown_length, 7.0);
    }

    #[test]
    fn random_vertex_sequence_is_exactly_zero() {
        let pts: Vec<Vec3> = (0..50)
            .map(|k| {
                let k = k as f64;
                Vec3::new(
                    (k * 1.37).sin() * 40.0,
                    (k * 0.73).cos() * 25.0,
                    3.0 + k * 0.11,
                )
            })
            .collect();
        assert_eq!(
            compute_rmse(&tr("a", &pts), &reference("a", &pts)).drones[0].rmse,
            0.0
        );
    }

    #[test]
    fn constant_offset() {
        let line = [Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)];
        let samples: Vec<Vec3> = (0..=10).map(|k| Vec3::new(k as f64, 1.0, 0.0)).collect();
        let r = compute_rmse(&tr("a", &samples), &reference("a", &line));
        assert!((r.drone("a").unwrap().rmse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alternating_offset() {
        let line = [Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)];
        let samples: Vec<Vec3> = (0..=10)
            .map(|k| Vec3::new(k as f64, if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
            .collect();
        let r = compute_rmse(&tr("a", &samples), &reference("a", &line));
        assert!((r.drone("a").unwrap().rmse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_drone_is_skipped() {
        let r = compute_rmse(
            &tr("a", &[Vec3::zeros()]),
            &reference("b", &[Vec3::zeros()]),
        );
        assert!(r.drones.is_empty());
        assert_eq!(r.skipped[0].drone_id, "a");
    }

    #[test]
    fn single_vertex_reference() {
        let r = compute_rmse(
            &tr("a", &[Vec3::new(3.0, 4.0, 0.0)]),
            &reference("a", &[Vec3::zeros()]),
        );
        assert_eq!(r.drone("a").unwrap().rmse, 5.0);
    }

    #[test]
    fn segment_distance_clamps_to_ends() {
        let a = Vec3::zeros();
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(
            point_segment_distance(&Vec3::new(-3.0, 4.0, 0.0), &a, &b),
            5.0
        );
        assert_eq!(
            point_segment_distance(&Vec3::new(0.5, 2.0, 0.0), &a, &b),
            2.0
        );
        assert_eq!(
            point_segment_distance(&Vec3::new(0.0, 2.0, 0.0), &a, &a),
            2.0
        );
    }

    fn v3() -> impl Strategy<Value = Vec3> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.0..50.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn densifying_reference_is_invariant(
            verts in prop::collection::vec(v3(), 2..6),
            samples in prop::collection::vec(v3(), 1..20),
            splits in 1usize..5,
        ) {
            let mut dense = vec![verts[0]];
            for w in verts.windows(2) {
                for k in 1..=splits {
                    dense.push(w[0] + (w[1] - w[0]) * (k as f64 / splits as f64));
                }
            }
            let a = compute_rmse(&tr("a", &samples), &reference("a", &verts)).drones[0].rmse;
            let b = compute_rmse(&tr("a", &samples), &reference("a", &dense)).drones[0].rmse;
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
