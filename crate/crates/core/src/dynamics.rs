//! 6-DOF rigid-body motion under rotor wrench, gravity and linear drag,
//! advanced with fixed-step classical Runge-Kutta.

use nalgebra::Quaternion;
use thiserror::Error;

use crate::airframe::{net_wrench, Airframe, AirframeError, Body, Wrench};
use crate::frames::{is_finite, Orientation, Vec3};
use crate::scenario::EnvironmentSample;

pub const DEFAULT_DT: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("state diverged (non-finite component) at t = {t} s")]
    Divergence { t: f64 },
    #[error(transparent)]
    Airframe(#[from] AirframeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneState {
    /// s
    pub t: f64,
    /// inertial, m
    pub position: Vec3,
    /// inertial, m/s
    pub velocity: Vec3,
    pub orientation: Orientation,
    /// body, rad/s
    pub angular_velocity: Vec3,
}

impl DroneState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            t: 0.0,
            position,
            velocity: Vec3::zeros(),
            orientation: Orientation::identity(),
            angular_velocity: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && is_finite(&self.position)
            && is_finite(&self.velocity)
            && is_finite(&self.angular_velocity)
            && self
                .orientation
                .quaternion()
                .coords
                .iter()
                .all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub d_position: Vec3,
    pub d_velocity: Vec3,
    pub d_orientation: Quaternion<f64>,
    pub d_angular_velocity: Vec3,
}

// Integrator state; the quaternion is left unnormalized between stages.
#[derive(Clone, Copy)]
struct Raw {
    position: Vec3,
    velocity: Vec3,
    orientation: Quaternion<f64>,
    angular_velocity: Vec3,
}

impl Raw {
    fn from_state(s: &DroneState) -> Self {
        Self {
            position: s.position,
            velocity: s.velocity,
            orientation: *s.orientation.quaternion(),
            angular_velocity: s.angular_velocity,
        }
    }

    fn advanced(&self, d: &Derivative, h: f64) -> Self {
        Self {
            position: self.position + d.d_position * h,
            velocity: self.velocity + d.d_velocity * h,
            orientation: self.orientation + d.d_orientation * h,
            angular_velocity: self.angular_velocity + d.d_angular_velocity * h,
        }
    }
}

fn raw_derivative(x: &Raw, body: &Body, wrench: &Wrench, env: &EnvironmentSample) -> Derivative {
    let m = body.mass;
    let inertia = &body.inertia_diagonal;
    let q_unit = Orientation::from_quaternion_normalized(x.orientation);
    let thrust_inertial = q_unit.rotate(&wrench.force);
    let drag = (x.velocity - env.wind_velocity) * body.linear_drag;
    let d_velocity = (thrust_inertial - drag) / m - Vec3::new(0.0, 0.0, env.gravity);

    let w = &x.angular_velocity;
    let iw = inertia.component_mul(w);
    let d_angular_velocity = (wrench.torque - w.cross(&iw)).component_div(inertia);

    let d_orientation = x.orientation * Quaternion::new(0.0, w.x, w.y, w.z) * 0.5;
    Derivative {
        d_position: x.velocity,
        d_velocity,
        d_orientation,
        d_angular_velocity,
    }
}

/// Time derivative of a state under an explicit body-frame wrench.
pub fn rigid_body_derivative(
    s: &DroneState,
    body: &Body,
    wrench: &Wrench,
    env: &EnvironmentSample,
) -> Derivative {
    raw_derivative(&Raw::from_state(s), body, wrench, env)
}

/// Time derivative with the wrench produced by the airframe's current rotor
/// speeds.
pub fn state_derivative(
    s: &DroneState,
    a: &Airframe,
    env: &EnvironmentSample,
) -> Result<Derivative, DynamicsError> {
    let wrench = net_wrench(a, env.air_density)?;
    Ok(rigid_body_derivative(s, a.body(), &wrench, env))
}

/// One RK4 step with the wrench held constant across the step.
pub fn step_with_wrench(
    s: &DroneState,
    body: &Body,
    wrench: &Wrench,
    env: &EnvironmentSample,
    dt: f64,
) -> Result<DroneState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    let x0 = Raw::from_state(s);
    let k1 = raw_derivative(&x0, body, wrench, env);
    let k2 = raw_derivative(&x0.advanced(&k1, 0.5 * dt), body, wrench, env);
    let k3 = raw_derivative(&x0.advanced(&k2, 0.5 * dt), body, wrench, env);
    let k4 = raw_derivative(&x0.advanced(&k3, dt), body, wrench, env);
    let sixth = dt / 6.0;
    let next = Raw {
        position: x0.position
            + (k1.d_position + (k2.d_position + k3.d_position) * 2.0 + k4.d_position) * sixth,
        velocity: x0.velocity
            + (k1.d_velocity + (k2.d_velocity + k3.d_velocity) * 2.0 + k4.d_velocity) * sixth,
        orientation: x0.orientation
            + (k1.d_orientation + (k2.d_orientation + k3.d_orientation) * 2.0 + k4.d_orientation)
                * sixth,
        angular_velocity: x0.angular_velocity
            + (k1.d_angular_velocity
                + (k2.d_angular_velocity + k3.d_angular_velocity) * 2.0
                + k4.d_angular_velocity)
                * sixth,
    };
    let t = s.t + dt;
    let q_ok =
        next.orientation.coords.iter().all(|c| c.is_finite()) && next.orientation.norm() > 0.0;
    if !q_ok
        || !is_finite(&next.position)
        || !is_finite(&next.velocity)
        || !is_finite(&next.angular_velocity)
    {
        return Err(DynamicsError::Divergence { t });
    }
    Ok(DroneState {
        t,
        position: next.position,
        velocity: next.velocity,
        orientation: Orientation::from_quaternion_normalized(next.orientation),
        angular_velocity: next.angular_velocity,
    })
}

/// Advances the state by `dt` at the airframe's current rotor speeds.
pub fn step(
    s: &DroneState,
    a: &Airframe,
    env: &EnvironmentSample,
    dt: f64,
) -> Result<DroneState, DynamicsError> {
    let wrench = net_wrench(a, env.air_density)?;
    step_with_wrench(s, a.body(), &wrench, env, dt)
}
