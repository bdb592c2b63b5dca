//! Lock-step simulation of a whole swarm on the scenario clock.
//!
//! Each tick: every flying drone samples the environment, runs its
//! controller toward the current setpoint and integrates its dynamics; once
//! all drones have moved, interactions (separation, obstacles) are checked on
//! the post-step snapshot. Interactions are observed and reported, they do
//! not feed back into motion.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::airframe::Airframe;
use crate::control::{compute_commands, waypoint_reached, ControllerGains, Setpoint};
use crate::dynamics::{step, DroneState};
use crate::frames::Vec3;
use crate::scenario::{point_in_obstacle, sample_environment, FlyingConditions, Scenario};

pub const DEFAULT_MIN_SEPARATION: f64 = 2.0;
pub const DEFAULT_RECORDING_INTERVAL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwarmError {
    #[error("a swarm needs at least one drone")]
    Empty,
    #[error("duplicate drone id `{0}`")]
    DuplicateId(String),
    #[error("min_separation must be >= 0, got {0}")]
    BadSeparation(f64),
    #[error("recording interval {interval} s is shorter than the tick {tick} s")]
    RecordingInterval { interval: f64, tick: f64 },
    #[error("drone `{0}`: route setpoints must be finite")]
    BadRoute(String),
    #[error("drone `{0}`: initial state is not finite")]
    BadState(String),
}

/// One target on a drone's route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTarget {
    pub waypoint_id: String,
    pub setpoint: Setpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drone {
    pub id: String,
    pub airframe: Airframe,
    pub state: DroneState,
    pub gains: ControllerGains,
    pub route: Vec<RouteTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    drones: Vec<Drone>,
    pub min_separation: f64,
}

impl Swarm {
    pub fn new(drones: Vec<Drone>, min_separation: f64) -> Result<Self, SwarmError> {
        if drones.is_empty() {
            return Err(SwarmError::Empty);
        }
        if !(min_separation >= 0.0 && min_separation.is_finite()) {
            return Err(SwarmError::BadSeparation(min_separation));
        }
        let mut seen = HashSet::new();
        for d in &drones {
            if !seen.insert(d.id.as_str()) {
                return Err(SwarmError::DuplicateId(d.id.clone()));
            }
            if !d.state.is_finite() {
                return Err(SwarmError::BadState(d.id.clone()));
            }
            if !d.route.iter().all(|r| r.setpoint.is_finite()) {
                return Err(SwarmError::BadRoute(d.id.clone()));
            }
        }
        Ok(Self {
            drones,
            min_separation,
        })
    }

    pub fn drones(&self) -> &[Drone] {
        &self.drones
    }

    pub fn drones_mut(&mut self) -> &mut [Drone] {
        &mut self.drones
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    WaypointReached,
    SeparationViolation,
    ObstacleCollision,
    GroundContact,
    MissionComplete,
    Divergence,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::WaypointReached => "waypoint_reached",
            EventKind::SeparationViolation => "separation_violation",
            EventKind::ObstacleCollision => "obstacle_collision",
            EventKind::GroundContact => "ground_contact",
            EventKind::MissionComplete => "mission_complete",
            EventKind::Divergence => "divergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    pub drone_ids: Vec<String>,
    pub kind: EventKind,
    pub detail: String,
    /// Where it happened: the drone's position, or the midpoint of a pair.
    pub location: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneTrack {
    pub id: String,
    pub samples: Vec<DroneState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// In swarm order.
    pub tracks: Vec<DroneTrack>,
    pub events: Vec<SimEvent>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.tracks.iter().all(|t| t.samples.is_empty())
    }

    pub fn track(&self, id: &str) -> Option<&DroneTrack> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &SimEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn event_counts(&self) -> BTreeMap<EventKind, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.events {
            *counts.entry(e.kind).or_insert(0) += 1;
        }
        counts
    }
}

/// Tracks ongoing violation episodes so each produces a single event.
#[derive(Debug, Clone, Default)]
pub struct InteractionMonitor {
    close_pairs: BTreeSet<(usize, usize)>,
    inside: BTreeSet<usize>,
}

impl InteractionMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// `drones` holds `(index, id, position)` of every drone taking part this
    /// tick. Emits events only for episodes that start now.
    pub fn check(
        &mut self,
        drones: &[(usize, &str, Vec3)],
        min_separation: f64,
        fc: &FlyingConditions,
        t: f64,
    ) -> Vec<SimEvent> {
        let mut events = Vec::new();
        let mut close_now = BTreeSet::new();
        for (a, &(i, id_i, p_i)) in drones.iter().enumerate() {
            for &(j, id_j, p_j) in &drones[a + 1..] {
                let d = (p_i - p_j).norm();
                if d < min_separation {
                    let key = (i.min(j), i.max(j));
                    close_now.insert(key);
                    if !self.close_pairs.contains(&key) {
                        events.push(SimEvent {
                            t,
                            drone_ids: vec![id_i.to_string(), id_j.to_string()],
                            kind: EventKind::SeparationViolation,
                            detail: format!(
                                "distance {d:.4} m < min_separation {min_separation} m"
                            ),
                            location: (p_i + p_j) * 0.5,
                        });
                    }
                }
            }
        }
        self.close_pairs = close_now;

        let mut inside_now = BTreeSet::new();
        for &(i, id, p) in drones {
            if point_in_obstacle(fc, &p) {
                inside_now.insert(i);
                if !self.inside.contains(&i) {
                    let k = fc
                        .obstacles
                        .iter()
                        .position(|b| b.contains(&p))
                        .unwrap_or(0);
                    events.push(SimEvent {
                        t,
                        drone_ids: vec![id.to_string()],
                        kind: EventKind::ObstacleCollision,
                        detail: format!("inside obstacle {k}"),
                        location: p,
                    });
                }
            }
        }
        self.inside = inside_now;
        events
    }
}

/// Every pair currently closer than `min_separation` and every drone inside
/// an obstacle, as of time `t`.
pub fn check_interactions(sw: &Swarm, fc: &FlyingConditions, t: f64) -> Vec<SimEvent> {
    let drones: Vec<(usize, &str, Vec3)> = sw
        .drones
        .iter()
        .enumerate()
        .map(|(i, d)| (i, d.id.as_str(), d.state.position))
        .collect();
    InteractionMonitor::new().check(&drones, sw.min_separation, fc, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// s; rounded to a whole number of ticks.
    pub recording_interval: f64,
    /// Step drones on the rayon pool within each tick.
    pub parallel: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            recording_interval: DEFAULT_RECORDING_INTERVAL,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Flying,
    /// Route finished; hovering at the last target.
    Holding,
    /// Grounded or diverged; frozen at its last state.
    Inactive,
}

struct Runner {
    drone: Drone,
    next: usize,
    status: Status,
    hold: Setpoint,
    saturating: bool,
}

impl Runner {
    fn target(&self) -> Setpoint {
        match self.status {
            Status::Flying => self.drone.route[self.next].setpoint,
            _ => self.hold,
        }
    }

    fn active(&self) -> bool {
        self.status != Status::Inactive
    }

    /// Advances the route past every target captured at the current state.
    fn update_route(&mut self, t: f64, events: &mut Vec<SimEvent>) {
        if self.status != Status::Flying {
            return;
        }
        while self.next < self.drone.route.len()
            && waypoint_reached(
                &self.drone.state,
                &self.drone.route[self.next].setpoint,
                &self.drone.gains,
            )
        {
            let target = &self.drone.route[self.next];
            events.push(SimEvent {
                t,
                drone_ids: vec![self.drone.id.clone()],
                kind: EventKind::WaypointReached,
                detail: target.waypoint_id.clone(),
                location: self.drone.state.position,
            });
            self.hold = target.setpoint;
            self.next += 1;
        }
        if self.next == self.drone.route.len() {
            self.status = Status::Holding;
            events.push(SimEvent {
                t,
                drone_ids: vec![self.drone.id.clone()],
                kind: EventKind::MissionComplete,
                detail: format!("{} waypoints", self.drone.route.len()),
                location: self.drone.state.position,
            });
        }
    }

    /// One tick: control once, then `substeps` dynamics steps. Returns a
    /// deactivation event if the drone hit the ground or diverged.
    fn advance(&mut self, sc: &Scenario, tick_end: f64) -> Option<SimEvent> {
        if !self.active() {
            return None;
        }
        let start = self.drone.state;
        let env = sample_environment(sc, &start.position, start.t);
        let sp = self.target();
        let commands = compute_commands(
            &start,
            &sp,
            &self.drone.airframe,
            &self.drone.gains,
            env.gravity,
            env.air_density,
        );
        let diverged = |detail: String, runner: &mut Runner| {
            runner.status = Status::Inactive;
            Some(SimEvent {
                t: tick_end,
                drone_ids: vec![runner.drone.id.clone()],
                kind: EventKind::Divergence,
                detail,
                location: runner.drone.state.position,
            })
        };
        let alloc = match commands {
            Ok(a) => a,
            Err(e) => return diverged(format!("controller failed: {e}"), self),
        };
        if alloc.saturated && !self.saturating {
            log::warn!(
                "drone `{}`: rotor command saturated at t = {} s",
                self.drone.id,
                start.t
            );
        }
        self.saturating = alloc.saturated;
        if let Err(e) = self.drone.airframe.set_speeds(&alloc.speeds) {
            return diverged(e.to_string(), self);
        }

        let mut s = start;
        for _ in 0..sc.substeps() {
            let env = sample_environment(sc, &s.position, s.t);
            match step(&s, &self.drone.airframe, &env, sc.integration_step) {
                Ok(next) => s = next,
                Err(e) => return diverged(e.to_string(), self),
            }
        }
        s.t = tick_end;
        self.drone.state = s;
        if s.position.z < 0.0 {
            self.status = Status::Inactive;
            return Some(SimEvent {
                t: tick_end,
                drone_ids: vec![self.drone.id.clone()],
                kind: EventKind::GroundContact,
                detail: format!("z = {:.4} m", s.position.z),
                location: s.position,
            });
        }
        None
    }
}

/// Flies every drone along its route until all are done or the scenario's
/// `max_duration` elapses.
pub fn simulate(sw: &Swarm, sc: &Scenario, opts: &SimOptions) -> Result<Trajectory, SwarmError> {
    let tick = sc.reference_time_step;
    if opts.recording_interval.is_nan() || opts.recording_interval < tick * (1.0 - 1e-9) {
        return Err(SwarmError::RecordingInterval {
            interval: opts.recording_interval,
            tick,
        });
    }
    let stride = ((opts.recording_interval / tick).round() as u64).max(1);
    let last_tick = (sc.max_duration / tick + 1e-9).floor() as u64;

    let mut runners: Vec<Runner> = sw
        .drones
        .iter()
        .map(|d| {
            let mut drone = d.clone();
            drone.state.t = 0.0;
            let (_, _, yaw) = drone.state.orientation.euler();
            Runner {
                hold: Setpoint {
                    target_position: drone.state.position,
                    target_yaw: yaw,
                },
                drone,
                next: 0,
                status: Status::Flying,
                saturating: false,
            }
        })
        .collect();

    let mut traj = Trajectory {
        tracks: runners
            .iter()
            .map(|r| DroneTrack {
                id: r.drone.id.clone(),
                samples: vec![r.drone.state],
            })
            .collect(),
        events: Vec::new(),
    };
    let mut monitor = InteractionMonitor::new();
    let mut last_recorded = 0u64;
    let mut k = 0u64;

    // interactions already present at t = 0
    let snapshot = positions(&runners);
    traj.events
        .extend(monitor.check(&snapshot, sw.min_separation, &sc.conditions, 0.0));

    loop {
        let t = k as f64 * tick;
        for r in runners.iter_mut() {
            r.update_route(t, &mut traj.events);
        }
        if runners.iter().all(|r| r.status != Status::Flying) || k >= last_tick {
            break;
        }

        let tick_end = (k + 1) as f64 * tick;
        let step_events: Vec<Option<SimEvent>> = if opts.parallel {
            runners
                .par_iter_mut()
                .map(|r| r.advance(sc, tick_end))
                .collect()
        } else {
            runners
                .iter_mut()
                .map(|r| r.advance(sc, tick_end))
                .collect()
        };
        traj.events.extend(step_events.into_iter().flatten());

        let snapshot = positions(&runners);
        traj.events
            .extend(monitor.check(&snapshot, sw.min_separation, &sc.conditions, tick_end));

        k += 1;
        if k.is_multiple_of(stride) {
            record(&mut traj, &runners);
            last_recorded = k;
        }
    }
    if last_recorded != k {
        record(&mut traj, &runners);
    }
    Ok(traj)
}

fn positions(runners: &[Runner]) -> Vec<(usize, &str, Vec3)> {
    runners
        .iter()
        .enumerate()
        .filter(|(_, r)| r.active())
        .map(|(i, r)| (i, r.drone.id.as_str(), r.drone.state.position))
        .collect()
}

// Inactive drones keep their last state and are not sampled again.
fn record(traj: &mut Trajectory, runners: &[Runner]) {
    for (track, r) in traj.tracks.iter_mut().zip(runners) {
        let s = r.drone.state;
        if track.samples.last().is_none_or(|last| last.t < s.t) {
            track.samples.push(s);
        }
    }
}
