use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

/// Linear stand-in for arm kinematics: joints 0..3 scale to a tool-tip
/// position around `origin`, joints 3..6 are roll/pitch/yaw directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMap {
    pub origin: [f64; 3],
    /// Meters of tip travel per radian of joint travel.
    pub scale: f64,
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
}

impl JointMap {
    pub fn with_origin(origin: [f64; 3]) -> Self {
        Self {
            origin,
            scale: 0.5,
            workspace_min: [-0.7, 0.0, 0.0],
            workspace_max: [0.7, 0.9, 0.6],
        }
    }

    pub fn pose(&self, joints: &[f64; 6]) -> Pose {
        let mut position = [0.0; 3];
        for (i, p) in position.iter_mut().enumerate() {
            *p = self.origin[i] + self.scale * joints[i];
        }
        Pose::new(position, [joints[3], joints[4], joints[5]])
    }

    pub fn joints(&self, pose: &Pose) -> [f64; 6] {
        let mut j = [0.0; 6];
        for i in 0..3 {
            j[i] = (pose.position[i] - self.origin[i]) / self.scale;
        }
        j[3..].copy_from_slice(&pose.rpy);
        j
    }

    /// Joint-space bounds equivalent to the workspace box (angles in ±π).
    pub fn joint_bounds(&self) -> ([f64; 6], [f64; 6]) {
        let pi = std::f64::consts::PI;
        let mut lo = [-pi; 6];
        let mut hi = [pi; 6];
        for i in 0..3 {
            lo[i] = (self.workspace_min[i] - self.origin[i]) / self.scale;
            hi[i] = (self.workspace_max[i] - self.origin[i]) / self.scale;
        }
        (lo, hi)
    }

    /// Clamps joints into the workspace; returns whether anything moved.
    pub fn clamp(&self, joints: &mut [f64; 6]) -> bool {
        let (lo, hi) = self.joint_bounds();
        let mut clamped = false;
        for i in 0..6 {
            let c = joints[i].clamp(lo[i], hi[i]);
            clamped |= c != joints[i];
            joints[i] = c;
        }
        clamped
    }

    pub fn in_workspace(&self, pose: &Pose) -> bool {
        (0..3).all(|i| {
            (self.workspace_min[i]..=self.workspace_max[i]).contains(&pose.position[i])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn inverse_recovers_joints(j in proptest::array::uniform6(-1.0f64..1.0)) {
            let map = JointMap::with_origin([0.25, 0.45, 0.25]);
            let back = map.joints(&map.pose(&j));
            for i in 0..6 {
                prop_assert!((back[i] - j[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamp_flags_violation() {
        let map = JointMap::with_origin([0.0, 0.45, 0.25]);
        let mut j = [0.0, 0.0, -5.0, 0.0, 0.0, 0.0];
        assert!(map.clamp(&mut j));
        assert!((map.pose(&j).position[2]).abs() < 1e-12);
        let mut ok = [0.1, 0.1, 0.1, 0.2, 0.0, 0.0];
        assert!(!map.clamp(&mut ok));
    }
}
