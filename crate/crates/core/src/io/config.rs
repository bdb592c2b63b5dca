//! Scenario files: one strict JSON document describing the world, the swarm
//! and the mission.
//!
//! Every invariant is re-checked on load; failures name the offending field
//! path (for example `drones[0].body.mass`).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::airframe::{Airframe, AirframeError, Body, Rotor, SpinDirection};
use crate::control::{ControllerGains, Setpoint};
use crate::dynamics::{DroneState, DEFAULT_DT};
use crate::frames::{GeoPoint, InertialFrame, Orientation, Vec3};
use crate::routing::{Mission, Waypoint};
use crate::scenario::{Aabb, FlyingConditions, Physics, Scenario};
use crate::swarm::{
    Drone, RouteTarget, SimOptions, Swarm, DEFAULT_MIN_SEPARATION, DEFAULT_RECORDING_INTERVAL,
};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid value at `{path}`: {message}")]
    Invariant { path: String, message: String },
}

impl ConfigError {
    /// Stable machine-readable category.
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "io",
            ConfigError::Parse { .. } => "parse",
            ConfigError::Schema { .. } => "schema",
            ConfigError::Invariant { .. } => "invariant",
        }
    }

    /// Offending field path for schema and invariant errors.
    pub fn field_path(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { path, .. } | ConfigError::Invariant { path, .. } => Some(path),
            _ => None,
        }
    }
}

fn invariant(path: impl fmt::Display, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invariant {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn default_gravity() -> f64 {
    9.81
}
fn default_air_density() -> f64 {
    1.225
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_max_duration() -> f64 {
    60.0
}
fn default_recording_interval() -> f64 {
    DEFAULT_RECORDING_INTERVAL
}
fn default_min_separation() -> f64 {
    DEFAULT_MIN_SEPARATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub flying_conditions: ConditionsSection,
    pub inertial_frame: FrameSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    pub drones: Vec<DroneSection>,
    pub mission: MissionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_air_density")]
    pub air_density: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            gravity: default_gravity(),
            air_density: default_air_density(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsSection {
    #[serde(default)]
    pub wind: [f64; 3],
    #[serde(default)]
    pub obstacles: Vec<ObstacleSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default)]
    pub altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_time_step: Option<f64>,
    #[serde(default = "default_max_duration")]
    pub max_duration: f64,
    #[serde(default = "default_recording_interval")]
    pub recording_interval: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            reference_time_step: None,
            max_duration: default_max_duration(),
            recording_interval: default_recording_interval(),
            min_separation: default_min_separation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSection {
    pub id: String,
    pub body: BodySection,
    pub rotors: Vec<RotorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSection>,
    pub start: StartSection,
    /// Fixed visiting order (waypoint ids); bypasses the route planner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySection {
    pub mass: f64,
    pub inertia: [f64; 3],
    #[serde(default)]
    pub linear_drag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorSection {
    pub position: [f64; 3],
    pub spin: SpinDirection,
    pub disk_area: f64,
    pub thrust_coefficient: f64,
    pub torque_coefficient: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub position_kp: f64,
    pub position_kd: f64,
    pub attitude_kp: f64,
    pub attitude_kd: f64,
    pub max_tilt: f64,
    pub capture_radius: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        ControllerGains::default().into()
    }
}

impl From<ControllerGains> for GainsSection {
    fn from(g: ControllerGains) -> Self {
        Self {
            position_kp: g.position_kp,
            position_kd: g.position_kd,
            attitude_kp: g.attitude_kp,
            attitude_kd: g.attitude_kd,
            max_tilt: g.max_tilt,
            capture_radius: g.capture_radius,
        }
    }
}

impl From<&GainsSection> for ControllerGains {
    fn from(g: &GainsSection) -> Self {
        Self {
            position_kp: g.position_kp,
            position_kd: g.position_kd,
            attitude_kp: g.attitude_kp,
            attitude_kd: g.attitude_kd,
            max_tilt: g.max_tilt,
            capture_radius: g.capture_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// rad
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSection {
    pub waypoints: Vec<WaypointSection>,
    pub max_route_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSection {
    pub id: String,
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Fully validated objects built from a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    /// Drones carry their fixed routes when the file pins them, else none.
    pub swarm: Swarm,
    pub scenario: Scenario,
    pub mission: Mission,
    pub options: SimOptions,
    /// Every drone listed an explicit `route`.
    pub pinned_routes: bool,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn finite3(path: &str, a: &[f64; 3]) -> Result<(), ConfigError> {
    if a.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(invariant(path, "components must be finite"))
    }
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invariant(path, format!("must be > 0, got {x}")))
    }
}

fn airframe_error(prefix: &str, e: AirframeError) -> ConfigError {
    match e {
        AirframeError::Invalid { field, reason } => invariant(format!("{prefix}.{field}"), reason),
        other => invariant(prefix, other),
    }
}

/// Parses JSON text into the file model. Malformed JSON is a parse error;
/// well-formed JSON that does not fit the schema is a schema error.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => ConfigError::Schema {
                path,
                message: inner.to_string(),
            },
            _ => ConfigError::Parse {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            },
        }
    })?;
    if file.version != SCENARIO_VERSION {
        return Err(ConfigError::Schema {
            path: "version".into(),
            message: format!(
                "unsupported version {}, expected {SCENARIO_VERSION}",
                file.version
            ),
        });
    }
    Ok(file)
}

impl ScenarioFile {
    /// Checks every invariant and builds the domain objects.
    pub fn build(&self) -> Result<LoadedScenario, ConfigError> {
        let physics =
            Physics::new(self.physics.gravity, self.physics.air_density).map_err(|_| {
                if !(self.physics.gravity > 0.0 && self.physics.gravity.is_finite()) {
                    invariant("physics.gravity", "must be > 0")
                } else {
                    invariant("physics.air_density", "must be > 0")
                }
            })?;

        let fc = &self.flying_conditions;
        finite3("flying_conditions.wind", &fc.wind)?;
        let mut obstacles = Vec::with_capacity(fc.obstacles.len());
        for (i, o) in fc.obstacles.iter().enumerate() {
            let path = format!("flying_conditions.obstacles[{i}]");
            finite3(&format!("{path}.min"), &o.min)?;
            finite3(&format!("{path}.max"), &o.max)?;
            let b = Aabb::new(v3(o.min), v3(o.max))
                .map_err(|_| invariant(format!("{path}.min"), "must be <= max componentwise"))?;
            obstacles.push(b);
        }
        let conditions = FlyingConditions {
            wind_velocity: v3(fc.wind),
            obstacles,
        };

        let f = &self.inertial_frame;
        if !(f.latitude.is_finite() && (-90.0..=90.0).contains(&f.latitude)) {
            return Err(invariant(
                "inertial_frame.latitude",
                "must lie in [-90, 90]",
            ));
        }
        if !(f.longitude.is_finite() && (-180.0..=180.0).contains(&f.longitude)) {
            return Err(invariant(
                "inertial_frame.longitude",
                "must lie in [-180, 180]",
            ));
        }
        if !f.altitude.is_finite() {
            return Err(invariant("inertial_frame.altitude", "must be finite"));
        }
        let inertial_frame = InertialFrame::new(GeoPoint {
            latitude: f.latitude,
            longitude: f.longitude,
            altitude: f.altitude,
        })
        .map_err(|e| invariant("inertial_frame", e))?;

        let sim = &self.simulation;
        positive("simulation.dt", sim.dt)?;
        let tick = sim.reference_time_step.unwrap_or(sim.dt);
        positive("simulation.reference_time_step", tick)?;
        positive("simulation.max_duration", sim.max_duration)?;
        positive("simulation.recording_interval", sim.recording_interval)?;
        if sim.recording_interval < tick {
            return Err(invariant(
                "simulation.recording_interval",
                format!("must be >= reference_time_step ({tick})"),
            ));
        }
        if !(sim.min_separation >= 0.0 && sim.min_separation.is_finite()) {
            return Err(invariant("simulation.min_separation", "must be >= 0"));
        }
        let scenario = Scenario::with_integration_step(
            physics,
            conditions,
            inertial_frame,
            tick,
            sim.dt,
            sim.max_duration,
        )
        .map_err(|e| invariant("simulation.reference_time_step", e))?;

        let m = &self.mission;
        positive("mission.max_route_length", m.max_route_length)?;
        let mut waypoints = Vec::with_capacity(m.waypoints.len());
        let mut by_id: HashMap<&str, usize> = HashMap::new();
        for (j, w) in m.waypoints.iter().enumerate() {
            if by_id.insert(w.id.as_str(), j).is_some() {
                return Err(invariant(
                    format!("mission.waypoints[{j}].id"),
                    format!("duplicate id `{}`", w.id),
                ));
            }
            finite3(&format!("mission.waypoints[{j}].position"), &w.position)?;
            waypoints.push(Waypoint {
                id: w.id.clone(),
                position: v3(w.position),
                label: w.label.clone(),
            });
        }

        if self.drones.is_empty() {
            return Err(invariant("drones", "at least one drone is required"));
        }
        let pinned_count = self.drones.iter().filter(|d| d.route.is_some()).count();
        if pinned_count != 0 && pinned_count != self.drones.len() {
            return Err(invariant(
                "drones",
                "either every drone lists a `route` or none does",
            ));
        }
        let mut seen = HashSet::new();
        let mut drones = Vec::with_capacity(self.drones.len());
        for (i, d) in self.drones.iter().enumerate() {
            let p = format!("drones[{i}]");
            if d.id.is_empty() {
                return Err(invariant(format!("{p}.id"), "must not be empty"));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(invariant(
                    format!("{p}.id"),
                    format!("duplicate id `{}`", d.id),
                ));
            }
            finite3(&format!("{p}.body.inertia"), &d.body.inertia)?;
            let body = Body::new(d.body.mass, v3(d.body.inertia), d.body.linear_drag)
                .map_err(|e| airframe_error(&format!("{p}.body"), e))?;
            let mut rotors = Vec::with_capacity(d.rotors.len());
            for (k, r) in d.rotors.iter().enumerate() {
                let rp = format!("{p}.rotors[{k}]");
                let rotor = Rotor::new(
                    v3(r.position),
                    r.spin,
                    r.disk_area,
                    r.thrust_coefficient,
                    r.torque_coefficient,
                    r.max_speed,
                )
                .map_err(|e| airframe_error(&rp, e))?;
                rotors.push(rotor);
            }
            let airframe =
                Airframe::new(body, rotors).map_err(|e| invariant(format!("{p}.rotors"), e))?;
            // A layout the mixer cannot invert is a configuration error.
            crate::airframe::allocate(&airframe, 0.0, &Vec3::zeros(), scenario.physics.air_density)
                .map_err(|e| invariant(format!("{p}.rotors"), e))?;

            let gains_section = d.gains.clone().unwrap_or_default();
            let gains = ControllerGains::from(&gains_section);
            gains.validate().map_err(|e| match e {
                crate::control::ControlError::Invalid { field, reason } => {
                    invariant(format!("{p}.gains.{field}"), reason)
                }
                other => invariant(format!("{p}.gains"), other),
            })?;

            finite3(&format!("{p}.start.position"), &d.start.position)?;
            finite3(&format!("{p}.start.velocity"), &d.start.velocity)?;
            if d.start.position[2] < 0.0 {
                return Err(invariant(
                    format!("{p}.start.position"),
                    "must not be below ground (z < 0)",
                ));
            }
            if !d.start.yaw.is_finite() {
                return Err(invariant(format!("{p}.start.yaw"), "must be finite"));
            }
            let state = DroneState {
                t: 0.0,
                position: v3(d.start.position),
                velocity: v3(d.start.velocity),
                orientation: Orientation::from_euler(0.0, 0.0, d.start.yaw),
                angular_velocity: Vec3::zeros(),
            };

            let mut route = Vec::new();
            if let Some(ids) = &d.route {
                for (j, id) in ids.iter().enumerate() {
                    let w = by_id.get(id.as_str()).ok_or_else(|| {
                        invariant(
                            format!("{p}.route[{j}]"),
                            format!("unknown waypoint `{id}`"),
                        )
                    })?;
                    route.push(RouteTarget {
                        waypoint_id: id.clone(),
                        setpoint: Setpoint::at(waypoints[*w].position),
                    });
                }
            }
            drones.push(Drone {
                id: d.id.clone(),
                airframe,
                state,
                gains,
                route,
            });
        }

        let mission = Mission {
            starts: drones.iter().map(|d| d.state.position).collect(),
            waypoints,
            max_route_length: m.max_route_length,
            obstacles: scenario.conditions.obstacles.clone(),
        };
        let swarm = Swarm::new(drones, sim.min_separation).map_err(|e| invariant("drones", e))?;
        Ok(LoadedScenario {
            swarm,
            scenario,
            mission,
            options: SimOptions {
                recording_interval: sim.recording_interval,
                parallel: true,
            },
            pinned_routes: pinned_count > 0,
        })
    }

    /// Inverse of [`ScenarioFile::build`] for everything a file can express.
    pub fn from_loaded(l: &LoadedScenario) -> Self {
        let sc = &l.scenario;
        let drones = l
            .swarm
            .drones()
            .iter()
            .map(|d| {
                let body = d.airframe.body();
                let (_, _, yaw) = d.state.orientation.euler();
                DroneSection {
                    id: d.id.clone(),
                    body: BodySection {
                        mass: body.mass,
                        inertia: arr(&body.inertia_diagonal),
                        linear_drag: body.linear_drag,
                    },
                    rotors: d
                        .airframe
                        .rotors()
                        .iter()
                        .map(|r| RotorSection {
                            position: arr(&r.position_body),
                            spin: r.spin_direction,
                            disk_area: r.disk_area,
                            thrust_coefficient: r.thrust_coefficient,
                            torque_coefficient: r.torque_coefficient,
                            max_speed: r.max_speed,
                        })
                        .collect(),
                    gains: Some(d.gains.into()),
                    start: StartSection {
                        position: arr(&d.state.position),
                        velocity: arr(&d.state.velocity),
                        yaw,
                    },
                    route: l
                        .pinned_routes
                        .then(|| d.route.iter().map(|r| r.waypoint_id.clone()).collect()),
                }
            })
            .collect();
        Self {
            version: SCENARIO_VERSION,
            physics: PhysicsSection {
                gravity: sc.physics.gravity,
                air_density: sc.physics.air_density,
            },
            flying_conditions: ConditionsSection {
                wind: arr(&sc.conditions.wind_velocity),
                obstacles: sc
                    .conditions
                    .obstacles
                    .iter()
                    .map(|b| ObstacleSection {
                        min: arr(&b.min),
                        max: arr(&b.max),
                    })
                    .collect(),
            },
            inertial_frame: FrameSection {
                latitude: sc.inertial_frame.origin.latitude,
                longitude: sc.inertial_frame.origin.longitude,
                altitude: sc.inertial_frame.origin.altitude,
            },
            simulation: SimulationSection {
                dt: sc.integration_step,
                reference_time_step: Some(sc.reference_time_step),
                max_duration: sc.max_duration,
                recording_interval: l.options.recording_interval,
                min_separation: l.swarm.min_separation,
            },
            drones,
            mission: MissionSection {
                waypoints: l
                    .mission
                    .waypoints
                    .iter()
                    .map(|w| WaypointSection {
                        id: w.id.clone(),
                        position: arr(&w.position),
                        label: w.label.clone(),
                    })
                    .collect(),
                max_route_length: l.mission.max_route_length,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario file serializes")
    }
}

pub fn load_scenario_str(text: &str) -> Result<LoadedScenario, ConfigError> {
    parse_scenario(text)?.build()
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_scenario_str(&text)
}
