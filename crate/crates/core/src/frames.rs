//! Rotation and reference-frame algebra.
//!
//! The inertial frame is East-North-Up. Body axes are x-forward, y-left,
//! z-up; an [`Orientation`] maps body-frame vectors into the inertial frame.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Mean Earth radius used by the local equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("non-finite input component")]
    NonFinite,
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid geographic origin (lat {latitude}, lon {longitude})")]
    InvalidOrigin { latitude: f64, longitude: f64 },
    #[error("projected latitude {0} leaves [-90, 90]")]
    OutOfRange(f64),
}

pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Body-to-inertial rotation stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation(UnitQuaternion<f64>);

impl Default for Orientation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Orientation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Normalizes the raw components `(w, x, y, z)`.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self, FrameError> {
        let q = Quaternion::new(w, x, y, z);
        if !q.coords.iter().all(|c| c.is_finite()) || q.norm() == 0.0 {
            return Err(FrameError::NonFinite);
        }
        Ok(Self(UnitQuaternion::new_normalize(q)))
    }

    pub(crate) fn from_quaternion_normalized(q: Quaternion<f64>) -> Self {
        Self(UnitQuaternion::new_normalize(q))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match Unit::try_new(*axis, 1e-300) {
            Some(axis) => Self(UnitQuaternion::from_axis_angle(&axis, angle)),
            None => Self::identity(),
        }
    }

    /// Z-Y-X (yaw, pitch, roll) Euler construction.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Returns `(roll, pitch, yaw)` in radians.
    pub fn euler(&self) -> (f64, f64, f64) {
        self.0.euler_angles()
    }

    pub fn quaternion(&self) -> &Quaternion<f64> {
        self.0.quaternion()
    }

    /// `(w, x, y, z)`
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `self ⊗ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_quaternion_normalized(self.0.quaternion() * other.0.quaternion())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    /// Inertial → body.
    pub fn rotate_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.inverse_transform_vector(v)
    }

    /// Body z axis expressed in the inertial frame.
    pub fn body_z(&self) -> Vec3 {
        self.rotate(&Vec3::z())
    }

    /// Advances the orientation under a body rate held constant over `dt`.
    ///
    /// Uses the exact exponential of `q̇ = ½ q ⊗ (0, ω)`, followed by
    /// renormalization.
    pub fn integrated(&self, omega_body: &Vec3, dt: f64) -> Self {
        let rate = omega_body.norm();
        let half = 0.5 * rate * dt;
        let delta = if rate > 0.0 {
            let s = half.sin() / rate;
            Quaternion::new(
                half.cos(),
                omega_body.x * s,
                omega_body.y * s,
                omega_body.z * s,
            )
        } else {
            Quaternion::identity()
        };
        Self::from_quaternion_normalized(self.0.quaternion() * delta)
    }

    pub fn angle_to(&self, other: &Self) -> f64 {
        self.0.angle_to(&other.0)
    }
}

/// Expresses the body-frame vector `v` in the inertial frame.
pub fn rotate(q: &Orientation, v: &Vec3) -> Result<Vec3, FrameError> {
    if !is_finite(v) || !q.quaternion().coords.iter().all(|c| c.is_finite()) {
        return Err(FrameError::NonFinite);
    }
    Ok(q.rotate(v))
}

pub fn integrate_orientation(
    q: &Orientation,
    omega_body: &Vec3,
    dt: f64,
) -> Result<Orientation, FrameError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FrameError::NonPositiveStep(dt));
    }
    if !is_finite(omega_body) || !dt.is_finite() {
        return Err(FrameError::NonFinite);
    }
    Ok(q.integrated(omega_body, dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// degrees
    pub latitude: f64,
    /// degrees
    pub longitude: f64,
    /// metres
    pub altitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AxesConvention {
    #[default]
    EastNorthUp,
}

/// Scenario-wide fixed frame anchored at a geographic origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialFrame {
    pub origin: GeoPoint,
    pub axes: AxesConvention,
}

impl InertialFrame {
    pub fn new(origin: GeoPoint) -> Result<Self, FrameError> {
        let frame = Self {
            origin,
            axes: AxesConvention::EastNorthUp,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let GeoPoint {
            latitude,
            longitude,
            altitude,
        } = self.origin;
        let ok = latitude.is_finite()
            && longitude.is_finite()
            && altitude.is_finite()
            && (-90.0..=90.0).contains(&latitude)
            && (-180.0..=180.0).contains(&longitude);
        if ok {
            Ok(())
        } else {
            Err(FrameError::InvalidOrigin {
                latitude,
                longitude,
            })
        }
    }

    // The local east scale collapses at the poles.
    fn east_scale(&self) -> Result<f64, FrameError> {
        self.validate()?;
        let c = self.origin.latitude.to_radians().cos();
        if c < 1e-9 {
            return Err(FrameError::InvalidOrigin {
                latitude: self.origin.latitude,
                longitude: self.origin.longitude,
            });
        }
        Ok(c)
    }

    pub fn geo_project(&self, p: &Vec3) -> Result<GeoPoint, FrameError> {
        geo_project(self, p)
    }

    pub fn geo_unproject(&self, g: &GeoPoint) -> Result<Vec3, FrameError> {
        geo_unproject(self, g)
    }
}

fn wrap_degrees(mut lon: f64) -> f64 {
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    lon
}

/// Local equirectangular projection of an ENU offset about the frame origin.
pub fn geo_project(frame: &InertialFrame, p: &Vec3) -> Result<GeoPoint, FrameError> {
    let cos_lat = frame.east_scale()?;
    if !is_finite(p) {
        return Err(FrameError::NonFinite);
    }
    let o = frame.origin;
    let latitude = o.latitude + (p.y / EARTH_RADIUS_M).to_degrees();
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(FrameError::OutOfRange(latitude));
    }
    let longitude = wrap_degrees(o.longitude + (p.x / (EARTH_RADIUS_M * cos_lat)).to_degrees());
    Ok(GeoPoint {
        latitude,
        longitude,
        altitude: o.altitude + p.z,
    })
}

pub fn geo_unproject(frame: &InertialFrame, g: &GeoPoint) -> Result<Vec3, FrameError> {
    let cos_lat = frame.east_scale()?;
    if !(g.latitude.is_finite() && g.longitude.is_finite() && g.altitude.is_finite()) {
        return Err(FrameError::NonFinite);
    }
    let o = frame.origin;
    let d_lon = wrap_degrees(g.longitude - o.longitude);
    Ok(Vec3::new(
        d_lon.to_radians() * EARTH_RADIUS_M * cos_lat,
        (g.latitude - o.latitude).to_radians() * EARTH_RADIUS_M,
        g.altitude - o.altitude,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn identity_rotation() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(rotate(&Orientation::identity(), &v).unwrap(), v);
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = Orientation::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        let r = rotate(&q, &Vec3::x()).unwrap();
        assert!(close(&r, &Vec3::y(), 1e-15));
    }

    #[test]
    fn rotate_rejects_nan() {
        let v = Vec3::new(f64::NAN, 0.0, 0.0);
        assert_eq!(
            rotate(&Orientation::identity(), &v),
            Err(FrameError::NonFinite)
        );
    }

    #[test]
    fn zero_rate_leaves_orientation() {
        let q = Orientation::from_euler(0.3, -0.2, 1.1);
        let q2 = integrate_orientation(&q, &Vec3::zeros(), 0.01).unwrap();
        assert!(q.angle_to(&q2) < 1e-15);
    }

    #[test]
    fn non_positive_step_rejected() {
        let q = Orientation::identity();
        assert!(matches!(
            integrate_orientation(&q, &Vec3::z(), 0.0),
            Err(FrameError::NonPositiveStep(_))
        ));
        assert!(integrate_orientation(&q, &Vec3::z(), -1e-3).is_err());
    }

    #[test]
    fn half_turn_from_constant_yaw_rate() {
        let mut q = Orientation::identity();
        let omega = Vec3::new(0.0, 0.0, PI);
        for _ in 0..10_000 {
            q = integrate_orientation(&q, &omega, 1e-4).unwrap();
        }
        let expected = Orientation::from_axis_angle(&Vec3::z(), PI);
        assert!(q.angle_to(&expected) < 1e-6);
        let x = q.rotate(&Vec3::x());
        assert!(close(&x, &-Vec3::x(), 1e-6));
    }

    #[test]
    fn origin_maps_to_itself() {
        let origin = GeoPoint {
            latitude: 45.2,
            longitude: 7.6,
            altitude: 230.0,
        };
        let frame = InertialFrame::new(origin).unwrap();
        assert_eq!(geo_project(&frame, &Vec3::zeros()).unwrap(), origin);
    }

    #[test]
    fn one_degree_of_meridian() {
        let frame = InertialFrame::new(GeoPoint {
            latitude: 0.0,
            longitude: 0.0,
            altitude: 0.0,
        })
        .unwrap();
        // 2πR/360 = 111 194.926 644 558 7 m
        let g = geo_project(&frame, &Vec3::new(0.0, 111_194.9, 0.0)).unwrap();
        assert!((g.latitude - 1.0).abs() < 1e-6, "{}", g.latitude);
        assert_eq!(g.longitude, 0.0);
    }

    #[test]
    fn invalid_origin() {
        let frame = InertialFrame {
            origin: GeoPoint {
                latitude: 91.0,
                longitude: 0.0,
                altitude: 0.0,
            },
            axes: AxesConvention::EastNorthUp,
        };
        assert!(matches!(
            geo_project(&frame, &Vec3::zeros()),
            Err(FrameError::InvalidOrigin { .. })
        ));
        assert!(InertialFrame::new(GeoPoint {
            latitude: 0.0,
            longitude: -181.0,
            altitude: 0.0
        })
        .is_err());
    }

    #[test]
    fn antimeridian_wraps() {
        let frame = InertialFrame::new(GeoPoint {
            latitude: 0.0,
            longitude: 179.9999,
            altitude: 0.0,
        })
        .unwrap();
        let p = Vec3::new(1000.0, 0.0, 0.0);
        let g = geo_project(&frame, &p).unwrap();
        assert!(g.longitude < -179.0);
        assert!(close(&geo_unproject(&frame, &g).unwrap(), &p, 1e-6));
    }

    fn unit_quat() -> impl Strategy<Value = Orientation> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| {
                w * w + x * x + y * y + z * z > 1e-3
            })
            .prop_map(|(w, x, y, z)| Orientation::from_wxyz(w, x, y, z).unwrap())
    }

    fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn inverse_round_trip(q in unit_quat(), v in vec3(100.0)) {
            let back = q.rotate(&q.inverse().rotate(&v));
            prop_assert!(close(&back, &v, 1e-12 * v.norm().max(1.0)));
        }

        #[test]
        fn integration_stays_normalized(q in unit_quat(), w in vec3(50.0), dt in 1e-5..0.5f64) {
            let q2 = integrate_orientation(&q, &w, dt).unwrap();
            prop_assert!((q2.quaternion().norm() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn geo_round_trip(
            lat in -80.0..80.0f64,
            lon in -180.0..180.0f64,
            p in vec3(50_000.0),
        ) {
            let frame = InertialFrame::new(GeoPoint { latitude: lat, longitude: lon, altitude: 10.0 }).unwrap();
            let g = geo_project(&frame, &p).unwrap();
            let back = geo_unproject(&frame, &g).unwrap();
            let g2 = geo_project(&frame, &back).unwrap();
            prop_assert!((g.latitude - g2.latitude).abs() < 1e-9);
            prop_assert!((g.longitude - g2.longitude).abs() < 1e-9);
            prop_assert!((-180.0..=180.0).contains(&g.longitude));
        }
    }
}
