//! Planar pose and angle helpers shared by the field, camera and belief code.

use std::f64::consts::PI;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Robot base pose on the field: position in meters, heading in radians.
///
/// The field frame is centered at the kick-off point with +x toward the
/// opponent goal; heading 0 looks along +x and is wrapped to `(-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2d {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2d {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    /// Euclidean ground distance from the robot base to a field point.
    pub fn distance_to(&self, p: &Point2<f64>) -> f64 {
        (p.x - self.x).hypot(p.y - self.y)
    }

    /// Bearing of a field point in the robot frame, wrapped to `(-pi, pi]`.
    pub fn bearing_to(&self, p: &Point2<f64>) -> f64 {
        wrap_angle((p.y - self.y).atan2(p.x - self.x) - self.theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_angle_boundaries() {
        assert_abs_diff_eq!(wrap_angle(PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI + 0.25), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn bearing_of_point_straight_ahead_is_zero() {
        let pose = Pose2d::new(1.0, -2.0, 0.7);
        let p = Point2::new(1.0 + 3.0 * 0.7f64.cos(), -2.0 + 3.0 * 0.7f64.sin());
        assert_abs_diff_eq!(pose.bearing_to(&p), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pose.distance_to(&p), 3.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn wrap_angle_is_in_half_open_interval(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            // Wrapped angle differs from the input by a multiple of 2*pi.
            let k = (a - w) / (2.0 * PI);
            prop_assert!((k - k.round()).abs() < 1e-9);
        }
    }
}
