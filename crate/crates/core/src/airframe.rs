//! Physical definition of a drone: its body and rotors, and the linear map
//! between squared rotor speeds and the body wrench.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{is_finite, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AirframeError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("an airframe needs at least two rotors, got {0}")]
    TooFewRotors(usize),
    #[error("air density must be positive, got {0}")]
    BadDensity(f64),
    #[error("desired thrust must be non-negative and finite, got {0}")]
    BadDemand(f64),
    #[error("allocation matrix is rank-deficient (rank {rank} < 4); rotor layout cannot control thrust, roll, pitch and yaw independently")]
    RankDeficient { rank: usize },
    #[error("expected {expected} rotor speeds, got {got}")]
    SpeedCount { expected: usize, got: usize },
}

fn invalid(field: &str, reason: impl Into<String>) -> AirframeError {
    AirframeError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Sign of the rotor's reaction torque about body z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpinDirection {
    #[serde(rename = "cw")]
    Clockwise,
    #[serde(rename = "ccw")]
    CounterClockwise,
}

impl SpinDirection {
    pub fn sign(self) -> f64 {
        match self {
            SpinDirection::Clockwise => -1.0,
            SpinDirection::CounterClockwise => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rotor {
    pub position_body: Vec3,
    pub spin_direction: SpinDirection,
    /// m²
    pub disk_area: f64,
    pub thrust_coefficient: f64,
    pub torque_coefficient: f64,
    /// rad/s
    pub max_speed: f64,
    current_speed: f64,
}

impl Rotor {
    pub fn new(
        position_body: Vec3,
        spin_direction: SpinDirection,
        disk_area: f64,
        thrust_coefficient: f64,
        torque_coefficient: f64,
        max_speed: f64,
    ) -> Result<Self, AirframeError> {
        if !is_finite(&position_body) {
            return Err(invalid("position", "must be finite"));
        }
        if !(disk_area > 0.0 && disk_area.is_finite()) {
            return Err(invalid("disk_area", "must be > 0"));
        }
        if !(thrust_coefficient > 0.0 && thrust_coefficient.is_finite()) {
            return Err(invalid("thrust_coefficient", "must be > 0"));
        }
        if !(torque_coefficient >= 0.0 && torque_coefficient.is_finite()) {
            return Err(invalid("torque_coefficient", "must be >= 0"));
        }
        if !(max_speed > 0.0 && max_speed.is_finite()) {
            return Err(invalid("max_speed", "must be > 0"));
        }
        Ok(Self {
            position_body,
            spin_direction,
            disk_area,
            thrust_coefficient,
            torque_coefficient,
            max_speed,
            current_speed: 0.0,
        })
    }

    pub fn current_speed(&self) -> f64 {
        self.current_speed
    }

    /// Sets the spin speed, clamped into `[0, max_speed]`.
    pub fn set_speed(&mut self, speed: f64) {
        self.current_speed = if speed.is_nan() {
            0.0
        } else {
            speed.clamp(0.0, self.max_speed)
        };
    }

    /// Thrust per squared speed, N·s².
    fn thrust_gain(&self, air_density: f64) -> f64 {
        self.thrust_coefficient * air_density * self.disk_area
    }

    /// Signed reaction torque per squared speed, N·m·s².
    fn yaw_gain(&self, air_density: f64) -> f64 {
        self.spin_direction.sign() * self.torque_coefficient * air_density * self.disk_area
    }
}

fn check_density(air_density: f64) -> Result<(), AirframeError> {
    if air_density > 0.0 && air_density.is_finite() {
        Ok(())
    } else {
        Err(AirframeError::BadDensity(air_density))
    }
}

/// `c_T · ρ · A · s²`, along body +z.
pub fn rotor_thrust(r: &Rotor, air_density: f64) -> Result<f64, AirframeError> {
    check_density(air_density)?;
    Ok(r.thrust_gain(air_density) * r.current_speed * r.current_speed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    /// kg
    pub mass: f64,
    /// (Ixx, Iyy, Izz), kg·m²
    pub inertia_diagonal: Vec3,
    /// N·s/m
    pub linear_drag: f64,
}

impl Body {
    pub fn new(mass: f64, inertia_diagonal: Vec3, linear_drag: f64) -> Result<Self, AirframeError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("mass", "must be > 0"));
        }
        if !inertia_diagonal.iter().all(|i| *i > 0.0 && i.is_finite()) {
            return Err(invalid("inertia", "all components must be > 0"));
        }
        if !(linear_drag >= 0.0 && linear_drag.is_finite()) {
            return Err(invalid("linear_drag", "must be >= 0"));
        }
        Ok(Self {
            mass,
            inertia_diagonal,
            linear_drag,
        })
    }
}

/// Force and torque in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn zero() -> Self {
        Self {
            force: Vec3::zeros(),
            torque: Vec3::zeros(),
        }
    }
}

/// Rotor speeds produced by [`allocate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub speeds: Vec<f64>,
    /// At least one rotor was clamped to `0` or `max_speed`.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Airframe {
    body: Body,
    rotors: Vec<Rotor>,
    // Pseudo-inverse of the allocation matrix at unit air density (n × 4);
    // `None` when the layout is rank-deficient.
    mixer: Option<DMatrix<f64>>,
    rank: usize,
}

impl Airframe {
    pub fn new(body: Body, rotors: Vec<Rotor>) -> Result<Self, AirframeError> {
        if rotors.len() < 2 {
            return Err(AirframeError::TooFewRotors(rotors.len()));
        }
        let matrix = allocation_matrix(&rotors, 1.0);
        let svd = matrix.clone().svd(true, true);
        let max_sv = svd.singular_values.max();
        let tol = max_sv * 1e-10;
        let rank = svd.rank(tol);
        let mixer = if rank == 4 {
            Some(
                svd.pseudo_inverse(tol)
                    .expect("svd computed with u and v_t"),
            )
        } else {
            None
        };
        Ok(Self {
            body,
            rotors,
            mixer,
            rank,
        })
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn rotors(&self) -> &[Rotor] {
        &self.rotors
    }

    pub fn mass(&self) -> f64 {
        self.body.mass
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.rotors.iter().map(Rotor::current_speed).collect()
    }

    /// Applies commanded speeds; each is clamped into the rotor's range.
    pub fn set_speeds(&mut self, speeds: &[f64]) -> Result<(), AirframeError> {
        if speeds.len() != self.rotors.len() {
            return Err(AirframeError::SpeedCount {
                expected: self.rotors.len(),
                got: speeds.len(),
            });
        }
        for (r, s) in self.rotors.iter_mut().zip(speeds) {
            r.set_speed(*s);
        }
        Ok(())
    }
}

/// Rows: total thrust, roll, pitch, yaw torque. Columns: one per rotor, acting
/// on the squared speed.
pub fn allocation_matrix(rotors: &[Rotor], air_density: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, rotors.len());
    for (i, r) in rotors.iter().enumerate() {
        let k = r.thrust_gain(air_density);
        // p × (0, 0, f) = (p_y f, -p_x f, 0)
        m[(0, i)] = k;
        m[(1, i)] = r.position_body.y * k;
        m[(2, i)] = -r.position_body.x * k;
        m[(3, i)] = r.yaw_gain(air_density);
    }
    m
}

/// Sum of rotor thrusts and torques at the rotors' current speeds.
pub fn net_wrench(a: &Airframe, air_density: f64) -> Result<Wrench, AirframeError> {
    check_density(air_density)?;
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for r in &a.rotors {
        let s2 = r.current_speed * r.current_speed;
        let f = Vec3::new(0.0, 0.0, r.thrust_gain(air_density) * s2);
        force += f;
        torque += r.position_body.cross(&f);
        torque.z += r.yaw_gain(air_density) * s2;
    }
    Ok(Wrench { force, torque })
}

/// Least-squares rotor speeds for a thrust/torque demand.
///
/// Solves for squared speeds through the pseudo-inverse, drops negative
/// squares to zero and clamps to each rotor's `max_speed`.
pub fn allocate(
    a: &Airframe,
    desired_thrust: f64,
    desired_torque: &Vec3,
    air_density: f64,
) -> Result<Allocation, AirframeError> {
    check_density(air_density)?;
    if !(desired_thrust >= 0.0 && desired_thrust.is_finite()) {
        return Err(AirframeError::BadDemand(desired_thrust));
    }
    let mixer = a
        .mixer
        .as_ref()
        .ok_or(AirframeError::RankDeficient { rank: a.rank })?;
    let demand = DVector::from_column_slice(&[
        desired_thrust,
        desired_torque.x,
        desired_torque.y,
        desired_torque.z,
    ]);
    let squared = (mixer * demand) / air_density;
    let mut saturated = false;
    let speeds = squared
        .iter()
        .zip(&a.rotors)
        .map(|(s2, r)| {
            let s = s2.max(0.0).sqrt();
            if *s2 < 0.0 || s > r.max_speed {
                saturated = true;
            }
            s.min(r.max_speed)
        })
        .collect();
    Ok(Allocation { speeds, saturated })
}
