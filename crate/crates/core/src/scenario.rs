//! The world every drone flies in: physical constants, wind and obstacles,
//! the shared inertial frame, and the global clock.

use thiserror::Error;

use crate::dynamics::DEFAULT_DT;
use crate::frames::{is_finite, InertialFrame, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    /// m/s²
    pub gravity: f64,
    /// kg/m³
    pub air_density: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            air_density: 1.225,
        }
    }
}

impl Physics {
    pub fn new(gravity: f64, air_density: f64) -> Result<Self, ScenarioError> {
        if !(gravity > 0.0 && gravity.is_finite()) {
            return Err(invalid("gravity", "must be > 0"));
        }
        if !(air_density > 0.0 && air_density.is_finite()) {
            return Err(invalid("air_density", "must be > 0"));
        }
        Ok(Self {
            gravity,
            air_density,
        })
    }
}

/// Axis-aligned box with inclusive faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, ScenarioError> {
        if !is_finite(&min) || !is_finite(&max) {
            return Err(invalid("min/max", "must be finite"));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(invalid("min", "must be <= max componentwise"));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    /// Parameter interval `[t_enter, t_exit] ⊆ [0, 1]` over which the segment
    /// `a → b` lies inside the box, if any.
    pub fn segment_overlap(&self, a: &Vec3, b: &Vec3) -> Option<(f64, f64)> {
        let d = b - a;
        let mut t_enter = 0.0_f64;
        let mut t_exit = 1.0_f64;
        for i in 0..3 {
            if d[i] == 0.0 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let t1 = (self.min[i] - a[i]) * inv;
            let t2 = (self.max[i] - a[i]) * inv;
            t_enter = t_enter.max(t1.min(t2));
            t_exit = t_exit.min(t1.max(t2));
            if t_enter > t_exit {
                return None;
            }
        }
        Some((t_enter, t_exit))
    }

    pub fn intersects_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        self.segment_overlap(a, b).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlyingConditions {
    /// Uniform, constant wind, m/s.
    pub wind_velocity: Vec3,
    pub obstacles: Vec<Aabb>,
}

pub fn point_in_obstacle(fc: &FlyingConditions, p: &Vec3) -> bool {
    fc.obstacles.iter().any(|b| b.contains(p))
}

pub fn segment_hits_obstacle(fc: &FlyingConditions, a: &Vec3, b: &Vec3) -> bool {
    first_obstacle_on_segment(&fc.obstacles, a, b).is_some()
}

/// Index of the first obstacle the segment touches.
pub fn first_obstacle_on_segment(obstacles: &[Aabb], a: &Vec3, b: &Vec3) -> Option<usize> {
    obstacles.iter().position(|o| o.intersects_segment(a, b))
}

/// Per-step snapshot of the environment at a drone's location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentSample {
    pub gravity: f64,
    pub air_density: f64,
    pub wind_velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub physics: Physics,
    pub conditions: FlyingConditions,
    pub inertial_frame: InertialFrame,
    /// Global tick, s. Every drone advances in lock-step on this clock.
    pub reference_time_step: f64,
    /// Dynamics integration step; the tick is an integer multiple of it.
    pub integration_step: f64,
    pub max_duration: f64,
}

impl Scenario {
    pub fn new(
        physics: Physics,
        conditions: FlyingConditions,
        inertial_frame: InertialFrame,
        reference_time_step: f64,
        max_duration: f64,
    ) -> Result<Self, ScenarioError> {
        Self::with_integration_step(
            physics,
            conditions,
            inertial_frame,
            reference_time_step,
            reference_time_step.min(DEFAULT_DT),
            max_duration,
        )
    }

    pub fn with_integration_step(
        physics: Physics,
        conditions: FlyingConditions,
        inertial_frame: InertialFrame,
        reference_time_step: f64,
        integration_step: f64,
        max_duration: f64,
    ) -> Result<Self, ScenarioError> {
        let sc = Self {
            physics,
            conditions,
            inertial_frame,
            reference_time_step,
            integration_step,
            max_duration,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        Physics::new(self.physics.gravity, self.physics.air_density)?;
        if !is_finite(&self.conditions.wind_velocity) {
            return Err(invalid("wind", "must be finite"));
        }
        for b in &self.conditions.obstacles {
            Aabb::new(b.min, b.max)?;
        }
        self.inertial_frame
            .validate()
            .map_err(|e| invalid("inertial_frame", e.to_string()))?;
        if !(self.reference_time_step > 0.0 && self.reference_time_step.is_finite()) {
            return Err(invalid("reference_time_step", "must be > 0"));
        }
        if !(self.integration_step > 0.0 && self.integration_step.is_finite()) {
            return Err(invalid("dt", "must be > 0"));
        }
        if !(self.max_duration > 0.0 && self.max_duration.is_finite()) {
            return Err(invalid("max_duration", "must be > 0"));
        }
        let ratio = self.reference_time_step / self.integration_step;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(
                "reference_time_step",
                format!(
                    "must be an integer multiple of dt ({} / {} = {ratio})",
                    self.reference_time_step, self.integration_step
                ),
            ));
        }
        Ok(())
    }

    /// Dynamics sub-steps per tick.
    pub fn substeps(&self) -> usize {
        (self.reference_time_step / self.integration_step).round() as usize
    }

    pub fn calm(inertial_frame: InertialFrame) -> Self {
        Self {
            physics: Physics::default(),
            conditions: FlyingConditions::default(),
            inertial_frame,
            reference_time_step: DEFAULT_DT,
            integration_step: DEFAULT_DT,
            max_duration: 60.0,
        }
    }
}

/// Constants and wind at `position` and time `t`. Uniform in this release.
pub fn sample_environment(sc: &Scenario, _position: &Vec3, _t: f64) -> EnvironmentSample {
    EnvironmentSample {
        gravity: sc.physics.gravity,
        air_density: sc.physics.air_density,
        wind_velocity: sc.conditions.wind_velocity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::GeoPoint;
    use proptest::prelude::*;

    fn frame() -> InertialFrame {
        InertialFrame::new(GeoPoint {
            latitude: 0.0,
            longitude: 0.0,
            altitude: 0.0,
        })
        .unwrap()
    }

    fn unit_box() -> FlyingConditions {
        FlyingConditions {
            wind_velocity: Vec3::zeros(),
            obstacles: vec![Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0)).unwrap()],
        }
    }

    #[test]
    fn calm_defaults() {
        let sc = Scenario::calm(frame());
        let e = sample_environment(&sc, &Vec3::zeros(), 0.0);
        assert_eq!(e.wind_velocity, Vec3::zeros());
        assert_eq!(e.gravity, 9.81);
        assert_eq!(e.air_density, 1.225);
    }

    #[test]
    fn uniform_wind() {
        let mut sc = Scenario::calm(frame());
        sc.conditions.wind_velocity = Vec3::new(3.0, 0.0, 0.0);
        let a = sample_environment(&sc, &Vec3::new(-100.0, 4.0, 2.0), 1.5);
        let b = sample_environment(&sc, &Vec3::new(50.0, 0.0, 80.0), 1.5);
        assert_eq!(a.wind_velocity, Vec3::new(3.0, 0.0, 0.0));
        assert_eq!(a, b);
    }

    #[test]
    fn point_tests() {
        let fc = unit_box();
        assert!(point_in_obstacle(&fc, &Vec3::new(0.5, 0.5, 0.5)));
        assert!(!point_in_obstacle(&fc, &Vec3::new(2.0, 0.0, 0.0)));
        assert!(point_in_obstacle(&fc, &Vec3::new(1.0, 1.0, 1.0)));
    }

    #[test]
    fn segment_tests() {
        let fc = unit_box();
        assert!(segment_hits_obstacle(
            &fc,
            &Vec3::new(-1.0, 0.5, 0.5),
            &Vec3::new(2.0, 0.5, 0.5)
        ));
        assert!(!segment_hits_obstacle(
            &fc,
            &Vec3::new(-1.0, 5.0, 5.0),
            &Vec3::new(2.0, 5.0, 5.0)
        ));
        let p = Vec3::new(0.2, 0.3, 0.4);
        assert!(segment_hits_obstacle(&fc, &p, &p));
        let q = Vec3::new(3.0, 0.3, 0.4);
        assert!(!segment_hits_obstacle(&fc, &q, &q));
        // grazing a face counts
        assert!(segment_hits_obstacle(
            &fc,
            &Vec3::new(-1.0, 1.0, 0.5),
            &Vec3::new(2.0, 1.0, 0.5)
        ));
        // stops short
        assert!(!segment_hits_obstacle(
            &fc,
            &Vec3::new(-2.0, 0.5, 0.5),
            &Vec3::new(-0.5, 0.5, 0.5)
        ));
    }

    #[test]
    fn rejects_inverted_box() {
        assert!(Aabb::new(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()).is_err());
    }

    #[test]
    fn tick_must_be_multiple_of_dt() {
        let r = Scenario::with_integration_step(
            Physics::default(),
            FlyingConditions::default(),
            frame(),
            0.0015,
            0.001,
            10.0,
        );
        assert!(r.is_err());
        let sc = Scenario::with_integration_step(
            Physics::default(),
            FlyingConditions::default(),
            frame(),
            0.01,
            0.001,
            10.0,
        )
        .unwrap();
        assert_eq!(sc.substeps(), 10);
    }

    fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn environment_is_position_and_time_invariant(p in vec3(1e4), q in vec3(1e4), t1 in 0.0..1e3f64, t2 in 0.0..1e3f64) {
            let mut sc = Scenario::calm(frame());
            sc.conditions.wind_velocity = Vec3::new(1.0, -2.0, 0.5);
            prop_assert_eq!(sample_environment(&sc, &p, t1), sample_environment(&sc, &q, t2));
        }

        #[test]
        fn slab_agrees_with_dense_sampling(
            lo in vec3(5.0),
            ext in (0.1..4.0f64, 0.1..4.0f64, 0.1..4.0f64),
            a in vec3(8.0),
            b in vec3(8.0),
        ) {
            let bx = Aabb::new(lo, lo + Vec3::new(ext.0, ext.1, ext.2)).unwrap();
            let n = 1000;
            let sampled = (0..=n).any(|k| bx.contains(&(a + (b - a) * (k as f64 / n as f64))));
            let overlap = bx.segment_overlap(&a, &b);
            if sampled {
                prop_assert!(overlap.is_some());
            }
            // sampling can only miss an overlap shorter than its spacing
            if let Some((t0, t1)) = overlap {
                if t1 - t0 > 2.0 / n as f64 {
                    prop_assert!(sampled);
                }
            }
        }
    }
}
