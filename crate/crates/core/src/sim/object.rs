use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, SurfacePatch, Vec3};

/// A flat patch on an object, in the object's local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceSpec {
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub u_axis: [f64; 3],
    pub half_u: f64,
    pub half_v: f64,
}

impl FaceSpec {
    /// Top face of a box with the given full extents.
    pub fn top(extents: [f64; 3]) -> Self {
        Self {
            center: [0.0, 0.0, extents[2] / 2.0],
            normal: [0.0, 0.0, 1.0],
            u_axis: [1.0, 0.0, 0.0],
            half_u: extents[0] / 2.0,
            half_v: extents[1] / 2.0,
        }
    }

    /// Face pointing toward -y (toward the robot).
    pub fn front(extents: [f64; 3]) -> Self {
        Self {
            center: [0.0, -extents[1] / 2.0, 0.0],
            normal: [0.0, -1.0, 0.0],
            u_axis: [1.0, 0.0, 0.0],
            half_u: extents[0] / 2.0,
            half_v: extents[2] / 2.0,
        }
    }

    pub fn world(&self, pose: &Pose) -> SurfacePatch {
        SurfacePatch {
            center: pose.transform_point(&Vec3::from(self.center)),
            normal: pose.transform_vector(&Vec3::from(self.normal)),
            u_axis: pose.transform_vector(&Vec3::from(self.u_axis)),
            half_u: self.half_u,
            half_v: self.half_v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Articulation {
    /// Slides along `axis` (world frame); pose = closed + axis · displacement.
    Prismatic {
        axis: [f64; 3],
        range: [f64; 2],
        displacement: f64,
        closed: Pose,
    },
    /// Rotates about a world-frame hinge line; pose = closed rotated by angle.
    Revolute {
        hinge: [f64; 3],
        axis: [f64; 3],
        range: [f64; 2],
        angle: f64,
        closed: Pose,
    },
}

impl Articulation {
    pub fn value(&self) -> f64 {
        match self {
            Articulation::Prismatic { displacement, .. } => *displacement,
            Articulation::Revolute { angle, .. } => *angle,
        }
    }

    pub fn range(&self) -> [f64; 2] {
        match self {
            Articulation::Prismatic { range, .. } | Articulation::Revolute { range, .. } => *range,
        }
    }

    /// Sets the joint value (clamped to range) and returns the resulting pose.
    pub fn set(&mut self, v: f64) -> Pose {
        let [lo, hi] = self.range();
        let v = v.clamp(lo, hi);
        match self {
            Articulation::Prismatic { displacement, .. } => *displacement = v,
            Articulation::Revolute { angle, .. } => *angle = v,
        }
        self.pose()
    }

    pub fn pose(&self) -> Pose {
        match *self {
            Articulation::Prismatic {
                axis,
                displacement,
                closed,
                ..
            } => {
                let t = closed.translation() + Vec3::from(axis) * displacement;
                Pose::new([t.x, t.y, t.z], closed.rpy)
            }
            Articulation::Revolute {
                hinge,
                axis,
                angle,
                closed,
                ..
            } => {
                let rot = hinge_rotation(axis, angle);
                let h = Vec3::from(hinge);
                let t = h + rot * (closed.translation() - h);
                let (r, p, y) = (rot * closed.rotation()).euler_angles();
                Pose::new([t.x, t.y, t.z], [r, p, y])
            }
        }
    }
}

pub fn hinge_rotation(axis: [f64; 3], angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::from(axis)), angle)
}

/// Support surface for contents: objects released with their center over
/// the inner footprint come to rest on the floor and count as inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receptacle {
    /// Half extents of the inner footprint, local x/y.
    pub inner_half: [f64; 2],
    /// Floor height relative to the object center.
    pub floor_z: f64,
    /// Rim height relative to the object center (where a lid sits).
    pub rim_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidState {
    /// Receptacle this lid closes.
    pub container: String,
    pub sealed: bool,
    /// Extra pull needed to break the seal, newtons.
    pub seal_break_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    /// Movable objects can be picked and fall when released; fixtures
    /// stay put (articulated fixtures move only along their joint).
    pub movable: bool,
    /// Full box extents, meters.
    pub extents: [f64; 3],
    pub pose: Pose,
    /// For articulated parts, the effective mass that must be lifted/pulled.
    pub mass_kg: f64,
    pub material: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graspable_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suction_faces: Vec<FaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<Articulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receptacle: Option<Receptacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid: Option<LidState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resting_on: Option<String>,
}

impl SceneObject {
    pub fn movable(id: &str, extents: [f64; 3], xy: [f64; 2], mass_kg: f64, material: &str) -> Self {
        Self {
            id: id.to_owned(),
            movable: true,
            extents,
            pose: Pose::at(xy[0], xy[1], extents[2] / 2.0),
            mass_kg,
            material: material.to_owned(),
            graspable_width: None,
            suction_faces: Vec::new(),
            articulation: None,
            receptacle: None,
            lid: None,
            resting_on: None,
        }
    }

    pub fn fixture(id: &str, extents: [f64; 3], xy: [f64; 2], material: &str) -> Self {
        Self {
            movable: false,
            ..Self::movable(id, extents, xy, 0.0, material)
        }
    }

    pub fn with_top_suction(mut self) -> Self {
        self.suction_faces.push(FaceSpec::top(self.extents));
        self
    }

    pub fn with_grasp_width(mut self, w: f64) -> Self {
        self.graspable_width = Some(w);
        self
    }

    pub fn with_yaw(mut self, yaw: f64) -> Self {
        self.pose.rpy[2] = yaw;
        self
    }

    pub fn half_height(&self) -> f64 {
        self.extents[2] / 2.0
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation()
    }

    pub fn top_z(&self) -> f64 {
        self.pose.position[2] + self.half_height()
    }

    pub fn faces_world(&self) -> impl Iterator<Item = SurfacePatch> + '_ {
        self.suction_faces.iter().map(|f| f.world(&self.pose))
    }

    /// Whether world point `p` projects inside the local footprint
    /// `half` (x, y) of this object.
    pub fn footprint_contains(&self, p: &Vec3, half: [f64; 2]) -> bool {
        let local = self.pose.rotation().inverse() * (p - self.pose.translation());
        local.x.abs() <= half[0] && local.y.abs() <= half[1]
    }

    pub fn outer_half(&self) -> [f64; 2] {
        [self.extents[0] / 2.0, self.extents[1] / 2.0]
    }
}
