//! Proprioceptive state and delta-action encodings.

use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::pose::Pose;

/// `[x, y, z, roll, pitch, yaw, pad, g]`; `pad` is always 0, `g` is 1 when the gripper is closed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub [f64; 8]);

/// `[dx, dy, dz, droll, dpitch, dyaw, g]`; `g` is the commanded gripper state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionVector(pub [f64; 7]);

impl StateVector {
    pub const DIM: usize = 8;

    pub fn position(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn rpy(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn gripper(&self) -> f64 {
        self.0[7]
    }

    pub fn gripper_closed(&self) -> bool {
        self.0[7] >= 0.5
    }

    pub fn pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.position(), self.rpy())
    }

    /// Checks the pad, gripper and angle-domain invariants.
    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
            && self.0[6] == 0.0
            && (self.0[7] == 0.0 || self.0[7] == 1.0)
            && self.rpy().iter().all(|a| (-std::f64::consts::PI..std::f64::consts::PI).contains(a))
    }
}

impl ActionVector {
    pub const DIM: usize = 7;

    pub fn zero(gripper: f64) -> Self {
        let mut a = [0.0; 7];
        a[6] = gripper;
        Self(a)
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn rotation(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn gripper(&self) -> f64 {
        self.0[6]
    }

    pub fn gripper_closed(&self) -> bool {
        self.0[6] >= 0.5
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_rotation(&self) -> f64 {
        self.rotation().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_valid(&self) -> bool {
        self.is_finite()
            && (self.0[6] == 0.0 || self.0[6] == 1.0)
            && self.rotation().iter().all(|a| (-std::f64::consts::PI..std::f64::consts::PI).contains(a))
    }
}

pub fn encode_state(pose: &Pose, gripper_closed: bool) -> StateVector {
    StateVector([
        pose.position.x,
        pose.position.y,
        pose.position.z,
        pose.roll,
        pose.pitch,
        pose.yaw,
        0.0,
        if gripper_closed { 1.0 } else { 0.0 },
    ])
}

/// Delta from `prev` to `cur`; angular deltas go the short way round.
pub fn encode_action(prev: &StateVector, cur: &StateVector) -> ActionVector {
    let mut a = [0.0; 7];
    for i in 0..3 {
        a[i] = cur.0[i] - prev.0[i];
    }
    for i in 3..6 {
        a[i] = wrap(cur.0[i] - prev.0[i]);
    }
    a[6] = cur.0[7];
    ActionVector(a)
}

/// Applies a delta action to a state: the inverse of [`encode_action`].
pub fn apply_action(state: &StateVector, a: &ActionVector) -> StateVector {
    let mut s = state.0;
    for i in 0..3 {
        s[i] += a.0[i];
    }
    for i in 3..6 {
        s[i] = wrap(s[i] + a.0[i]);
    }
    s[6] = 0.0;
    s[7] = a.0[6];
    StateVector(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn identity_pose_open() {
        assert_eq!(encode_state(&Pose::identity(), false).0, [0.0; 8]);
    }

    #[test]
    fn field_copy() {
        let pose = Pose::from_xyz_rpy([0.1, -0.2, 0.9], [0.1, 0.0, FRAC_PI_2]);
        let s = encode_state(&pose, true);
        assert_eq!(s.0, [0.1, -0.2, 0.9, 0.1, 0.0, FRAC_PI_2, 0.0, 1.0]);
        assert!(s.is_valid());
    }

    #[test]
    fn same_state_gives_zero_delta() {
        let s = StateVector([0.3, 0.2, 0.1, 0.5, -0.4, 3.0, 0.0, 1.0]);
        assert_eq!(encode_action(&s, &s).0, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(apply_action(&s, &ActionVector::zero(1.0)), s);
    }

    #[test]
    fn yaw_across_the_boundary() {
        let mut prev = StateVector::default();
        let mut cur = StateVector::default();
        prev.0[5] = PI - 0.1;
        cur.0[5] = -PI + 0.1;
        let a = encode_action(&prev, &cur);
        assert!((a.0[5] - 0.2).abs() < 1e-12);

        let next = apply_action(&prev, &a);
        assert!((next.0[5] - (-PI + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn translations_are_not_wrapped() {
        let prev = StateVector([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let cur = StateVector([5.0, -7.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(encode_action(&prev, &cur).translation(), [5.0, -7.0, 4.0]);
    }
}
