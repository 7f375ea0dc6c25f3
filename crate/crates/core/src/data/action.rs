//! Fixed-layout action and proprioception vectors.
//!
//! Actions are 16-wide: both arms' six joints, both gripper widths, then both
//! suction bits at the tail. Proprioception is 14-wide and has no suction
//! slots at all, so a policy conditioned on it cannot learn to copy the
//! current suction bit into its output.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;

pub const ACTION_DIM: usize = 16;
pub const PROPRIO_DIM: usize = 14;
pub const JOINTS_PER_ARM: usize = 6;

pub const LEFT_JOINTS: std::ops::Range<usize> = 0..6;
pub const RIGHT_JOINTS: std::ops::Range<usize> = 6..12;
pub const LEFT_WIDTH: usize = 12;
pub const RIGHT_WIDTH: usize = 13;
pub const LEFT_SUCTION: usize = 14;
pub const RIGHT_SUCTION: usize = 15;

pub const ACTION_LAYOUT: [&str; ACTION_DIM] = [
    "left_joint_0",
    "left_joint_1",
    "left_joint_2",
    "left_joint_3",
    "left_joint_4",
    "left_joint_5",
    "right_joint_0",
    "right_joint_1",
    "right_joint_2",
    "right_joint_3",
    "right_joint_4",
    "right_joint_5",
    "left_gripper_width",
    "right_gripper_width",
    "left_suction",
    "right_suction",
];

pub const PROPRIO_LAYOUT: [&str; PROPRIO_DIM] = [
    "left_joint_0",
    "left_joint_1",
    "left_joint_2",
    "left_joint_3",
    "left_joint_4",
    "left_joint_5",
    "right_joint_0",
    "right_joint_1",
    "right_joint_2",
    "right_joint_3",
    "right_joint_4",
    "right_joint_5",
    "left_gripper_width",
    "right_gripper_width",
];

fn check_finite(values: &[f64]) -> Result<(), DataError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DataError::Domain(format!("non-finite value at index {i}"))),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionVector([f64; ACTION_DIM]);

impl fmt::Debug for ActionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ActionVector").field(&self.0.as_slice()).finish()
    }
}

/// Components of one action, per arm in [left, right] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionParts {
    pub left_joints: [f64; JOINTS_PER_ARM],
    pub right_joints: [f64; JOINTS_PER_ARM],
    pub widths: [f64; 2],
    pub suction: [bool; 2],
}

impl ActionVector {
    pub fn zeros() -> Self {
        Self([0.0; ACTION_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        self.0
    }

    pub fn suction(&self) -> [bool; 2] {
        [self.0[LEFT_SUCTION] == 1.0, self.0[RIGHT_SUCTION] == 1.0]
    }

    pub fn widths(&self) -> [f64; 2] {
        [self.0[LEFT_WIDTH], self.0[RIGHT_WIDTH]]
    }

    /// Joints, width and suction for one arm: the 8-wide per-arm command.
    pub fn arm(&self, arm: usize) -> [f64; 8] {
        let joints = if arm == 0 { LEFT_JOINTS } else { RIGHT_JOINTS };
        let mut out = [0.0; 8];
        out[..6].copy_from_slice(&self.0[joints]);
        out[6] = self.0[LEFT_WIDTH + arm];
        out[7] = self.0[LEFT_SUCTION + arm];
        out
    }

    pub fn from_arms(left: [f64; 8], right: [f64; 8]) -> Result<Self, DataError> {
        assemble_action(&left[..6], &right[..6], &[left[6], right[6]], &[left[7], right[7]])
    }

    pub fn parts(&self) -> ActionParts {
        split_action(self)
    }
}

impl TryFrom<&[f64]> for ActionVector {
    type Error = DataError;

    fn try_from(values: &[f64]) -> Result<Self, DataError> {
        if values.len() != ACTION_DIM {
            return Err(DataError::Dimension {
                what: "action",
                expected: ACTION_DIM,
                found: values.len(),
            });
        }
        assemble_action(
            &values[LEFT_JOINTS],
            &values[RIGHT_JOINTS],
            &values[LEFT_WIDTH..=RIGHT_WIDTH],
            &values[LEFT_SUCTION..=RIGHT_SUCTION],
        )
    }
}

impl TryFrom<Vec<f64>> for ActionVector {
    type Error = DataError;

    fn try_from(values: Vec<f64>) -> Result<Self, DataError> {
        Self::try_from(values.as_slice())
    }
}

impl From<ActionVector> for Vec<f64> {
    fn from(a: ActionVector) -> Self {
        a.0.to_vec()
    }
}

pub fn assemble_action(
    left_joints: &[f64],
    right_joints: &[f64],
    widths: &[f64],
    suction: &[f64],
) -> Result<ActionVector, DataError> {
    for (what, part, expected) in [
        ("left joints", left_joints, JOINTS_PER_ARM),
        ("right joints", right_joints, JOINTS_PER_ARM),
        ("gripper widths", widths, 2),
        ("suction flags", suction, 2),
    ] {
        if part.len() != expected {
            return Err(DataError::Dimension {
                what,
                expected,
                found: part.len(),
            });
        }
        check_finite(part)?;
    }
    if let Some(w) = widths.iter().find(|w| **w < 0.0) {
        return Err(DataError::Domain(format!("gripper width {w} is negative")));
    }
    if let Some(s) = suction.iter().find(|s| **s != 0.0 && **s != 1.0) {
        return Err(DataError::Domain(format!("suction flag {s} is not 0 or 1")));
    }
    let mut v = [0.0; ACTION_DIM];
    v[LEFT_JOINTS].copy_from_slice(left_joints);
    v[RIGHT_JOINTS].copy_from_slice(right_joints);
    v[LEFT_WIDTH] = widths[0];
    v[RIGHT_WIDTH] = widths[1];
    v[LEFT_SUCTION] = suction[0];
    v[RIGHT_SUCTION] = suction[1];
    Ok(ActionVector(v))
}

pub fn split_action(a: &ActionVector) -> ActionParts {
    let mut left_joints = [0.0; 6];
    let mut right_joints = [0.0; 6];
    left_joints.copy_from_slice(&a.0[LEFT_JOINTS]);
    right_joints.copy_from_slice(&a.0[RIGHT_JOINTS]);
    ActionParts {
        left_joints,
        right_joints,
        widths: a.widths(),
        suction: a.suction(),
    }
}

/// Joints and gripper widths of both arms. There is deliberately no place
/// to put suction state.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProprioState([f64; PROPRIO_DIM]);

impl fmt::Debug for ProprioState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ProprioState").field(&self.0.as_slice()).finish()
    }
}

impl ProprioState {
    pub fn new(joints: [[f64; JOINTS_PER_ARM]; 2], widths: [f64; 2]) -> Self {
        let mut v = [0.0; PROPRIO_DIM];
        v[LEFT_JOINTS].copy_from_slice(&joints[0]);
        v[RIGHT_JOINTS].copy_from_slice(&joints[1]);
        v[12] = widths[0];
        v[13] = widths[1];
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn joints(&self, arm: usize) -> [f64; JOINTS_PER_ARM] {
        let range = if arm == 0 { LEFT_JOINTS } else { RIGHT_JOINTS };
        let mut out = [0.0; 6];
        out.copy_from_slice(&self.0[range]);
        out
    }

    pub fn widths(&self) -> [f64; 2] {
        [self.0[12], self.0[13]]
    }
}

impl TryFrom<&[f64]> for ProprioState {
    type Error = DataError;

    fn try_from(values: &[f64]) -> Result<Self, DataError> {
        if values.len() != PROPRIO_DIM {
            return Err(DataError::Dimension {
                what: "proprio",
                expected: PROPRIO_DIM,
                found: values.len(),
            });
        }
        check_finite(values)?;
        if values[12] < 0.0 || values[13] < 0.0 {
            return Err(DataError::Domain("gripper width is negative".into()));
        }
        let mut v = [0.0; PROPRIO_DIM];
        v.copy_from_slice(values);
        Ok(Self(v))
    }
}

impl TryFrom<Vec<f64>> for ProprioState {
    type Error = DataError;

    fn try_from(values: Vec<f64>) -> Result<Self, DataError> {
        Self::try_from(values.as_slice())
    }
}

impl From<ProprioState> for Vec<f64> {
    fn from(p: ProprioState) -> Self {
        p.0.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_round_trip() {
        let a = assemble_action(&[0.0; 6], &[0.0; 6], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(a, ActionVector::zeros());
        let p = split_action(&a);
        assert_eq!(p.left_joints, [0.0; 6]);
        assert_eq!(p.suction, [false, false]);
    }

    #[test]
    fn fractional_suction_rejected() {
        let err = assemble_action(&[0.0; 6], &[0.0; 6], &[0.0; 2], &[0.5, 0.0]).unwrap_err();
        assert!(matches!(err, DataError::Domain(_)));
    }

    #[test]
    fn wrong_component_dims_rejected() {
        let err = assemble_action(&[0.0; 5], &[0.0; 6], &[0.0; 2], &[0.0; 2]).unwrap_err();
        assert!(matches!(err, DataError::Dimension { expected: 6, found: 5, .. }));
    }

    #[test]
    fn proprio_rejects_fifteen_dims() {
        let err = ProprioState::try_from(&[0.0; 15][..]).unwrap_err();
        assert!(matches!(err, DataError::Dimension { expected: 14, found: 15, .. }));
        let err = serde_json::from_str::<ProprioState>(&serde_json::to_string(&vec![0.0; 15]).unwrap());
        assert!(err.is_err());
    }

    #[test]
    fn per_arm_view() {
        let a = assemble_action(
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0],
            &[0.03, 0.07],
            &[1.0, 0.0],
        )
        .unwrap();
        assert_eq!(a.arm(0), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.03, 1.0]);
        assert_eq!(a.arm(1), [7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 0.07, 0.0]);
        assert_eq!(ActionVector::from_arms(a.arm(0), a.arm(1)).unwrap(), a);
    }

    #[test]
    fn layout_names_line_up() {
        assert_eq!(ACTION_LAYOUT[LEFT_SUCTION], "left_suction");
        assert_eq!(ACTION_LAYOUT[RIGHT_WIDTH], "right_gripper_width");
        assert_eq!(&ACTION_LAYOUT[..PROPRIO_DIM], &PROPRIO_LAYOUT[..]);
    }
}
