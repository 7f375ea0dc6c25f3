//! Rigid poses and flat surface patches shared by the seal check and the
//! scene. Orientation is roll/pitch/yaw applied as Rz(yaw)·Ry(pitch)·Rx(roll).

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    /// roll, pitch, yaw in radians.
    pub rpy: [f64; 3],
}

impl Pose {
    pub fn new(position: [f64; 3], rpy: [f64; 3]) -> Self {
        Self { position, rpy }
    }

    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self::new([x, y, z], [0.0; 3])
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        let [r, p, y] = self.rpy;
        Rotation3::from_euler_angles(r, p, y)
    }

    /// Maps a point from this pose's local frame to the world frame.
    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.translation() + self.rotation() * local
    }

    pub fn transform_vector(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local
    }

    pub fn set_translation(&mut self, t: &Vec3) {
        self.position = [t.x, t.y, t.z];
    }
}

/// A bounded planar patch with an outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePatch {
    pub center: Vec3,
    pub normal: Vec3,
    /// First in-plane axis; the second is `normal × u_axis`.
    pub u_axis: Vec3,
    pub half_u: f64,
    pub half_v: f64,
}

impl SurfacePatch {
    pub fn v_axis(&self) -> Vec3 {
        self.normal.cross(&self.u_axis)
    }

    /// Signed distance of `p` above the plane along the normal.
    pub fn height_of(&self, p: &Vec3) -> f64 {
        (p - self.center).dot(&self.normal)
    }

    /// In-plane coordinates of `p` relative to the patch center.
    pub fn plane_coords(&self, p: &Vec3) -> (f64, f64) {
        let d = p - self.center;
        (d.dot(&self.u_axis), d.dot(&self.v_axis()))
    }

    pub fn contains_projection(&self, p: &Vec3) -> bool {
        let (u, v) = self.plane_coords(p);
        u.abs() <= self.half_u + 1e-12 && v.abs() <= self.half_v + 1e-12
    }
}

/// Angle between two vectors in radians, robust near parallel.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let cross = a.cross(b).norm();
    let dot = a.dot(b);
    cross.atan2(dot)
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn roll_quarter_turn_points_tool_forward() {
        let pose = Pose::new([0.0; 3], [FRAC_PI_2, 0.0, 0.0]);
        let axis = pose.transform_vector(&Vec3::new(0.0, 0.0, -1.0));
        assert_relative_eq!(axis, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn patch_projection() {
        let patch = SurfacePatch {
            center: Vec3::new(0.0, 0.0, 0.1),
            normal: Vec3::z(),
            u_axis: Vec3::x(),
            half_u: 0.1,
            half_v: 0.05,
        };
        assert!(patch.contains_projection(&Vec3::new(0.09, -0.04, 0.3)));
        assert!(!patch.contains_projection(&Vec3::new(0.0, 0.06, 0.1)));
        assert_relative_eq!(patch.height_of(&Vec3::new(5.0, 5.0, 0.103)), 0.003, epsilon = 1e-12);
    }

    #[test]
    fn angles() {
        assert_relative_eq!(angle_between(&Vec3::x(), &Vec3::y()), FRAC_PI_2);
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-0.5), -0.5);
    }
}
