use std::path::{Path, PathBuf};

use swarmsim::io::config::{load_scenario_str, ScenarioFile};
use swarmsim::io::export::{export_csv, export_geojson, load_csv};
use swarmsim::io::load_scenario;
use swarmsim::pipeline::run_mission;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

const FIXTURES: [&str; 3] = ["hover.json", "square_route.json", "two_drone_cross.json"];

#[test]
fn hover_fixture_shape() {
    let l = load_scenario(fixture("hover.json")).unwrap();
    assert_eq!(l.swarm.drones().len(), 1);
    assert!(l.mission.waypoints.is_empty());
    let a = &l.swarm.drones()[0].airframe;
    assert_eq!(a.mass(), 1.0);
    assert_eq!(a.rotors().len(), 4);
    // lumped k = c_T rho A of the reference craft
    let r = &a.rotors()[0];
    assert!((r.thrust_coefficient * 1.225 * r.disk_area - 1e-5).abs() < 1e-20);
    assert!((r.torque_coefficient / r.thrust_coefficient - 0.016).abs() < 1e-15);
}

#[test]
fn reload_of_serialized_fixture_is_idempotent() {
    for name in FIXTURES {
        let l1 = load_scenario(fixture(name)).unwrap();
        let f1 = ScenarioFile::from_loaded(&l1);
        let l2 = load_scenario_str(&f1.to_json()).unwrap();
        let f2 = ScenarioFile::from_loaded(&l2);
        assert_eq!(l1, l2, "{name}");
        assert_eq!(f1, f2, "{name}");
        assert_eq!(f1.to_json(), f2.to_json(), "{name}");
    }
}

#[test]
fn shipped_schema_covers_top_level_sections() {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/scenario.schema.json"),
        )
        .unwrap(),
    )
    .unwrap();
    let props = schema["properties"].as_object().unwrap();
    for key in [
        "version",
        "physics",
        "flying_conditions",
        "inertial_frame",
        "simulation",
        "drones",
        "mission",
    ] {
        assert!(props.contains_key(key), "{key}");
    }
    assert_eq!(schema["additionalProperties"], false);
    for name in FIXTURES {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        for k in v.as_object().unwrap().keys() {
            assert!(props.contains_key(k), "{name}: {k}");
        }
    }
}

#[test]
fn square_route_exports_round_trip_through_files() {
    let l = load_scenario(fixture("square_route.json")).unwrap();
    let run = run_mission(&l).unwrap();
    assert!(run.plan.feasible);
    let dir = tempfile::tempdir().unwrap();

    let gj = dir.path().join("square.geojson");
    export_geojson(&run.trajectory, &l.scenario.inertial_frame, &gj).unwrap();
    let parsed: geojson::GeoJson = std::fs::read_to_string(&gj).unwrap().parse().unwrap();
    let geojson::GeoJson::FeatureCollection(fc) = parsed else {
        panic!("not a FeatureCollection");
    };
    let lines = fc
        .features
        .iter()
        .filter(|f| {
            matches!(
                f.geometry.as_ref().map(|g| &g.value),
                Some(geojson::Value::LineString(_))
            )
        })
        .count();
    assert_eq!(lines, 1);
    assert_eq!(fc.features.len(), 1 + run.trajectory.events.len());

    let csv = dir.path().join("square.csv");
    export_csv(&run.trajectory, &csv).unwrap();
    let back = load_csv(&csv).unwrap();
    let (a, b) = (&run.trajectory.tracks[0], &back.tracks[0]);
    assert_eq!(a.samples.len(), b.samples.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((x.position - y.position).norm() <= 1e-8 * x.position.norm().max(1.0));
    }
}

#[test]
fn square_route_visits_every_corner() {
    let l = load_scenario(fixture("square_route.json")).unwrap();
    let run = run_mission(&l).unwrap();
    let m = &run.metrics.drones[0];
    let mut ids: Vec<&str> = m
        .capture_times
        .iter()
        .map(|c| c.waypoint_id.as_str())
        .collect();
    assert_eq!(
        ids,
        run.plan.routes[0]
            .waypoint_ids
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
    );
    ids.sort();
    assert_eq!(ids, ["c1", "c2", "c3", "c4"]);
    assert!(m.capture_times.windows(2).all(|w| w[0].t < w[1].t));
    assert!(m.rmse >= 0.0 && m.rmse < 2.0, "{}", m.rmse);
}
