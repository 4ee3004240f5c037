//! End-effector poses and rigid transforms.
//!
//! Orientation uses intrinsic X-Y-Z roll/pitch/yaw: `R = Rx(roll) * Ry(pitch) * Rz(yaw)`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::angle::wrap;

/// Below this value of `|cos(pitch)|` roll and yaw are not separable.
const GIMBAL_EPS: f64 = 1e-9;

/// Position plus roll/pitch/yaw, angles each in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), 0.0, 0.0, 0.0)
    }

    /// Builds a pose, wrapping the angles into `[-pi, pi)`.
    pub fn new(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position,
            roll: wrap(roll),
            pitch: wrap(pitch),
            yaw: wrap(yaw),
        }
    }

    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(Vector3::from(xyz), rpy[0], rpy[1], rpy[2])
    }

    pub fn rpy(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rpy_to_matrix(self.roll, self.pitch, self.yaw)
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation(),
            translation: self.position,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.roll.is_finite()
            && self.pitch.is_finite()
            && self.yaw.is_finite()
    }
}

/// Result of converting a rotation matrix back to roll/pitch/yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpyExtraction {
    pub rpy: [f64; 3],
    /// Set when `|pitch| = pi/2`; yaw is then reported as 0 and roll absorbs it.
    pub gimbal_lock: bool,
}

pub fn rpy_to_matrix(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), roll);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), pitch);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    (rx * ry * rz).into_inner()
}

pub fn matrix_to_rpy(r: &Matrix3<f64>) -> RpyExtraction {
    let sin_pitch = r[(0, 2)].clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    let cos_pitch = (r[(0, 0)].powi(2) + r[(0, 1)].powi(2)).sqrt();
    if cos_pitch > GIMBAL_EPS {
        let roll = (-r[(1, 2)]).atan2(r[(2, 2)]);
        let yaw = (-r[(0, 1)]).atan2(r[(0, 0)]);
        RpyExtraction {
            rpy: [wrap(roll), wrap(pitch), wrap(yaw)],
            gimbal_lock: false,
        }
    } else {
        // row 1 is [sin(roll ± yaw), cos(roll ± yaw), 0]; fold everything into roll
        let roll = if sin_pitch > 0.0 {
            r[(1, 0)].atan2(r[(1, 1)])
        } else {
            (-r[(1, 0)]).atan2(r[(1, 1)])
        };
        RpyExtraction {
            rpy: [wrap(roll), wrap(pitch), 0.0],
            gimbal_lock: true,
        }
    }
}

/// Rotation plus translation; composition carrier for the arc chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self {
            rotation: Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner(),
            translation: Vector3::zeros(),
        }
    }

    /// `self * other`: apply `other` first, expressed in `self`'s frame.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_pose(&self) -> Pose {
        self.to_pose_checked().0
    }

    /// Converts to a pose and reports whether the orientation sits at gimbal lock.
    pub fn to_pose_checked(&self) -> (Pose, bool) {
        let ex = matrix_to_rpy(&self.rotation);
        (
            Pose {
                position: self.translation,
                roll: ex.rpy[0],
                pitch: ex.rpy[1],
                yaw: ex.rpy[2],
            },
            ex.gimbal_lock,
        )
    }

    /// Largest deviation of the rotation block from orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max()
    }
}

/// Axis-angle vector of `a * b^T`, i.e. the rotation taking `b` to `a` in the world frame.
pub fn rotation_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(a * b.transpose()).scaled_axis()
}
