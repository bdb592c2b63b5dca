//! Cascaded PD waypoint follower: position loop → thrust vector → attitude
//! loop → body torques → rotor speeds.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

use crate::airframe::{allocate, Airframe, AirframeError, Allocation};
use crate::dynamics::DroneState;
use crate::frames::{is_finite, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Allocation(#[from] AirframeError),
}

fn invalid(field: &str, reason: &str) -> ControlError {
    ControlError::Invalid {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// 1/s²
    pub position_kp: f64,
    /// 1/s
    pub position_kd: f64,
    /// 1/s²
    pub attitude_kp: f64,
    /// 1/s
    pub attitude_kd: f64,
    /// rad
    pub max_tilt: f64,
    /// m
    pub capture_radius: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            position_kp: 2.0,
            position_kd: 2.8,
            attitude_kp: 60.0,
            attitude_kd: 15.0,
            max_tilt: 0.5,
            capture_radius: 0.5,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let gains = [
            ("position_kp", self.position_kp),
            ("position_kd", self.position_kd),
            ("attitude_kp", self.attitude_kp),
            ("attitude_kd", self.attitude_kd),
        ];
        for (name, g) in gains {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(invalid(name, "must be >= 0"));
            }
        }
        if !(self.max_tilt > 0.0 && self.max_tilt < FRAC_PI_2) {
            return Err(invalid("max_tilt", "must lie in (0, pi/2)"));
        }
        if !(self.capture_radius > 0.0 && self.capture_radius.is_finite()) {
            return Err(invalid("capture_radius", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub target_position: Vec3,
    /// rad
    pub target_yaw: f64,
}

impl Setpoint {
    pub fn at(target_position: Vec3) -> Self {
        Self {
            target_position,
            target_yaw: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        is_finite(&self.target_position) && self.target_yaw.is_finite()
    }
}

/// Output of the outer (position) loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    /// N
    pub thrust: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl AttitudeCommand {
    pub fn tilt(&self) -> f64 {
        self.roll.hypot(self.pitch)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Position loop: desired acceleration, collective thrust along the current
/// body z axis, and small-angle roll/pitch targets with the tilt magnitude
/// limited to `max_tilt`.
pub fn attitude_command(
    s: &DroneState,
    sp: &Setpoint,
    mass: f64,
    g: &ControllerGains,
    gravity: f64,
) -> AttitudeCommand {
    let accel = (sp.target_position - s.position) * g.position_kp - s.velocity * g.position_kd
        + Vec3::new(0.0, 0.0, gravity);
    let thrust = (mass * accel.dot(&s.orientation.body_z())).max(0.0);

    let (sin_yaw, cos_yaw) = sp.target_yaw.sin_cos();
    let mut roll = (accel.x * sin_yaw - accel.y * cos_yaw) / gravity;
    let mut pitch = (accel.x * cos_yaw + accel.y * sin_yaw) / gravity;
    let tilt = roll.hypot(pitch);
    if tilt > g.max_tilt {
        let k = g.max_tilt / tilt;
        roll *= k;
        pitch *= k;
    }
    AttitudeCommand {
        thrust,
        roll,
        pitch,
        yaw: sp.target_yaw,
    }
}

/// Body torque demand from the attitude PD loop.
pub fn attitude_torque(
    s: &DroneState,
    cmd: &AttitudeCommand,
    inertia: &Vec3,
    g: &ControllerGains,
) -> Vec3 {
    let (roll, pitch, yaw) = s.orientation.euler();
    let error = Vec3::new(
        cmd.roll - roll,
        cmd.pitch - pitch,
        wrap_angle(cmd.yaw - yaw),
    );
    let alpha = error * g.attitude_kp - s.angular_velocity * g.attitude_kd;
    inertia.component_mul(&alpha)
}

/// Rotor speeds steering the drone toward `sp`.
pub fn compute_commands(
    s: &DroneState,
    sp: &Setpoint,
    a: &Airframe,
    g: &ControllerGains,
    gravity: f64,
    air_density: f64,
) -> Result<Allocation, ControlError> {
    let cmd = attitude_command(s, sp, a.mass(), g, gravity);
    let torque = attitude_torque(s, &cmd, &a.body().inertia_diagonal, g);
    Ok(allocate(a, cmd.thrust, &torque, air_density)?)
}

/// Inclusive capture test.
pub fn waypoint_reached(s: &DroneState, sp: &Setpoint, g: &ControllerGains) -> bool {
    (s.position - sp.target_position).norm() <= g.capture_radius
}
