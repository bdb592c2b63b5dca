//! Deterministic multi-drone flight simulation.
//!
//! Drones are rigid bodies lifted by individually spinning rotors. A swarm
//! shares one [`scenario::Scenario`] (physics, wind, obstacles, inertial
//! frame, clock), gets waypoint routes from [`routing`], follows them with
//! the cascaded controller in [`control`], and is advanced in lock-step by
//! [`swarm::simulate`]. Results export to GeoJSON and CSV through [`io`].

pub mod airframe;
pub mod control;
pub mod dynamics;
pub mod frames;
pub mod io;
pub mod pipeline;
pub mod routing;
pub mod scenario;
pub mod swarm;
