//! Scene description files: TOML with `[[object]]` tables, optional extra
//! `[[material]]` entries, per-arm setup and simulation parameters.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::joints::JointMap;
use super::layouts::{task_scene_file, TASK_IDS};
use super::object::SceneObject;
use super::scene::{ArmState, Scene, SimParams};
use super::{Articulation, SimError};
use crate::pneumatics::{MaterialProfile, MaterialTable};
use crate::protocol::Channel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    /// Tool-tip position at all-zero joints.
    pub origin: [f64; 3],
    #[serde(default)]
    pub joints: [f64; 6],
    #[serde(default)]
    pub width: f64,
}

impl ArmSpec {
    pub fn at(origin: [f64; 3]) -> Self {
        Self {
            origin,
            joints: [0.0; 6],
            width: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<u8>,
    #[serde(default)]
    pub params: SimParams,
    pub left: ArmSpec,
    pub right: ArmSpec,
    /// Added to (or overriding) the built-in material table.
    #[serde(default, rename = "material", skip_serializing_if = "Vec::is_empty")]
    pub materials: Vec<MaterialProfile>,
    #[serde(rename = "object")]
    pub objects: Vec<SceneObject>,
}

impl SceneFile {
    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene description serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    fn material_table(&self) -> Result<MaterialTable, SimError> {
        let mut all: Vec<MaterialProfile> = MaterialTable::default()
            .iter()
            .filter(|m| !self.materials.iter().any(|x| x.name == m.name))
            .cloned()
            .collect();
        all.extend(self.materials.iter().cloned());
        Ok(MaterialTable::new(all)?)
    }

    /// Validates the description and builds the initial scene.
    pub fn into_scene(self) -> Result<Scene, SimError> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        self.params.pneumatic.validate()?;
        if !(self.params.rate_hz.is_finite() && self.params.rate_hz > 0.0) {
            return bad("rate_hz must be > 0".into());
        }
        if !(self.params.max_stroke > 0.0 && self.params.cup_base_spacing >= 0.0) {
            return bad("max_stroke must be > 0 and cup_base_spacing >= 0".into());
        }
        let materials = self.material_table()?;
        let ids: BTreeSet<&str> = self.objects.iter().map(|o| o.id.as_str()).collect();
        if ids.len() != self.objects.len() {
            return bad("object ids must be unique".into());
        }
        let mut objects = self.objects.clone();
        for o in &mut objects {
            if materials.get(&o.material).is_none() {
                return Err(SimError::UnknownMaterial(o.material.clone()));
            }
            if o.extents.iter().any(|e| !(e.is_finite() && *e > 0.0)) || !(o.mass_kg >= 0.0) {
                return bad(format!("{}: extents must be > 0 and mass >= 0", o.id));
            }
            for f in &o.suction_faces {
                let n = nalgebra::Vector3::from(f.normal);
                let u = nalgebra::Vector3::from(f.u_axis);
                if (n.norm() - 1.0).abs() > 1e-6 || (u.norm() - 1.0).abs() > 1e-6 || n.dot(&u).abs() > 1e-6 {
                    return bad(format!("{}: face normal and u axis must be orthonormal", o.id));
                }
            }
            if let Some(parent) = &o.resting_on {
                if !ids.contains(parent.as_str()) {
                    return bad(format!("{} rests on unknown {parent}", o.id));
                }
            }
            if let Some(lid) = &o.lid {
                let container = self.objects.iter().find(|c| c.id == lid.container);
                if container.and_then(|c| c.receptacle).is_none() {
                    return bad(format!("{}: lid container {} is not a receptacle", o.id, lid.container));
                }
            }
            if let Some(art) = &mut o.articulation {
                let [lo, hi] = art.range();
                let axis = match art {
                    Articulation::Prismatic { axis, .. } | Articulation::Revolute { axis, .. } => *axis,
                };
                if !(lo <= hi) || !(lo..=hi).contains(&art.value()) {
                    return bad(format!("{}: joint value outside range [{lo}, {hi}]", o.id));
                }
                if (nalgebra::Vector3::from(axis).norm() - 1.0).abs() > 1e-6 {
                    return bad(format!("{}: joint axis must be a unit vector", o.id));
                }
                o.pose = art.pose();
            }
        }
        let arm = |ch: Channel, spec: &ArmSpec| -> Result<ArmState, SimError> {
            let mut st = ArmState::new(ch, JointMap::with_origin(spec.origin));
            st.joints = spec.joints;
            if st.map.clamp(&mut st.joints) {
                return Err(SimError::InvalidScene(format!("{ch} arm starts outside the workspace")));
            }
            st.width = spec.width.clamp(0.0, self.params.max_stroke);
            Ok(st)
        };
        let arms = [arm(Channel::Left, &self.left)?, arm(Channel::Right, &self.right)?];
        let mut scene = Scene::new(self.params, materials, arms, objects);
        scene.task = self.task;
        Ok(scene)
    }

    /// Describes the current state of a scene at rest (attachments and line
    /// pressure are not captured).
    pub fn from_scene(scene: &Scene, name: Option<String>) -> Self {
        let defaults = MaterialTable::default();
        let spec = |a: &ArmState| ArmSpec {
            origin: a.map.origin,
            joints: a.joints,
            width: a.width,
        };
        Self {
            name,
            task: scene.task,
            params: scene.params,
            left: spec(&scene.arms[0]),
            right: spec(&scene.arms[1]),
            materials: scene
                .materials
                .iter()
                .filter(|m| defaults.get(&m.name) != Some(m))
                .cloned()
                .collect(),
            objects: scene.objects.clone(),
        }
    }
}

/// Resolves `task1`..`task4` to a built-in layout, anything else to a file.
pub fn resolve_scene_file(spec: &str) -> Result<SceneFile, SimError> {
    if let Some(id) = spec.strip_prefix("task").and_then(|n| n.parse::<u8>().ok()) {
        if TASK_IDS.contains(&id) {
            return task_scene_file(id);
        }
    }
    SceneFile::load(Path::new(spec))
}

/// [`resolve_scene_file`], validated into a scene.
pub fn load_scene(spec: &str) -> Result<Scene, SimError> {
    resolve_scene_file(spec)?.into_scene()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_layouts_round_trip_through_toml() {
        for id in TASK_IDS {
            let file = task_scene_file(id).unwrap();
            let text = file.to_toml_string();
            let back = SceneFile::from_toml_str(&text).unwrap();
            assert_eq!(back, file, "task {id}");
            let scene = back.into_scene().unwrap();
            assert_eq!(scene.task, Some(id));
            let again = SceneFile::from_scene(&scene, file.name.clone());
            assert_eq!(again, file);
        }
    }

    #[test]
    fn rejects_unknown_material_and_duplicates() {
        let mut file = task_scene_file(1).unwrap();
        file.objects[0].material = "unobtainium".into();
        assert!(matches!(file.into_scene(), Err(SimError::UnknownMaterial(_))));
        let mut file = task_scene_file(1).unwrap();
        let dup = file.objects[0].clone();
        file.objects.push(dup);
        assert!(matches!(file.into_scene(), Err(SimError::InvalidScene(_))));
    }

    #[test]
    fn resolves_builtin_names() {
        assert_eq!(load_scene("task3").unwrap().task, Some(3));
        assert!(load_scene("task9").is_err());
    }

    #[test]
    fn extra_material_overrides_default() {
        let mut file = task_scene_file(1).unwrap();
        file.materials.push(MaterialProfile::new("glass", 2.0, true));
        let scene = file.into_scene().unwrap();
        assert_eq!(scene.materials.get("glass").unwrap().leak_coeff, 2.0);
    }
}
