//! Piecewise-constant-curvature kinematics.
//!
//! Every section contributes `Rz(phi) * Arc(theta, L)`: the revolute joint
//! turns the bending plane (and everything downstream of it) about the local
//! backbone tangent, then the segment bends as a circular arc about the local
//! y-axis.

mod ik;
mod tendon;

pub use ik::{ik_solve, IkOptions, IkResult};
pub use tendon::{config_from_tendons, tendon_lengths, TendonLengths, TendonPair};

use nalgebra::{DMatrix, Rotation3, Vector3};

use crate::arm::{check_dimensions, ArmSpec, Configuration};
use crate::error::{domain, Result};
use crate::pose::{rotation_error, Pose, RigidTransform};

/// Bends smaller than this use the straight-segment expansion.
pub const STRAIGHT_EPS: f64 = 1e-7;

/// Default central-difference step for [`jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Constant-curvature arc of bend `theta` and length `length`.
pub fn segment_transform(theta: f64, length: f64) -> Result<RigidTransform> {
    if !(length > 0.0) {
        return Err(domain(format!("segment length must be positive, got {length}")));
    }
    if !(theta >= 0.0) {
        return Err(domain(format!("bend angle must be non-negative, got {theta}")));
    }
    Ok(arc(theta, length))
}

/// Arc transform defined for any sign of `theta` (negative bends the other way).
pub(crate) fn arc(theta: f64, length: f64) -> RigidTransform {
    let translation = if theta.abs() < STRAIGHT_EPS {
        // first-order expansion of L(1 - cos t)/t and L sin(t)/t
        Vector3::new(0.5 * length * theta, 0.0, length)
    } else {
        let radius = length / theta;
        Vector3::new(radius * (1.0 - theta.cos()), 0.0, radius * theta.sin())
    };
    RigidTransform {
        rotation: Rotation3::from_axis_angle(&Vector3::y_axis(), theta).into_inner(),
        translation,
    }
}

/// Walks the section chain from the base, reporting each segment tip.
fn chain(spec: &ArmSpec, q: &Configuration, mut visit: impl FnMut(usize, &RigidTransform)) -> RigidTransform {
    let mut t = spec.base_pose.to_transform();
    for (i, (a, s)) in q.sections.iter().zip(&spec.sections).enumerate() {
        t = t
            .compose(&RigidTransform::rotation_z(a.phi))
            .compose(&arc(a.theta, s.arc_length));
        visit(i, &t);
    }
    t
}

/// World transform of the gripper point, without dimension checks.
pub(crate) fn tool_transform_unchecked(spec: &ArmSpec, q: &Configuration) -> RigidTransform {
    chain(spec, q, |_, _| {}).compose(&spec.tool_offset)
}

/// World transform of the gripper point.
pub fn tool_transform(spec: &ArmSpec, q: &Configuration) -> Result<RigidTransform> {
    check_dimensions(spec, q)?;
    Ok(tool_transform_unchecked(spec, q))
}

/// End-effector pose for configuration `q`.
pub fn forward_kinematics(spec: &ArmSpec, q: &Configuration) -> Result<Pose> {
    Ok(tool_transform(spec, q)?.to_pose())
}

/// Samples the backbone: the base point, then `backbone_samples` points along
/// each segment (ending at the segment tip), then the tool point if the tool
/// offset moves it.
pub fn backbone_points(spec: &ArmSpec, q: &Configuration) -> Result<Vec<Vector3<f64>>> {
    check_dimensions(spec, q)?;
    let mut t = spec.base_pose.to_transform();
    let mut points = vec![t.translation];
    for (a, s) in q.sections.iter().zip(&spec.sections) {
        let joint = t.compose(&RigidTransform::rotation_z(a.phi));
        let n = s.backbone_samples;
        for k in 1..=n {
            let frac = k as f64 / n as f64;
            let sub = arc(a.theta * frac, s.arc_length * frac);
            points.push(joint.compose(&sub).translation);
        }
        t = joint.compose(&arc(a.theta, s.arc_length));
    }
    let tool = t.compose(&spec.tool_offset).translation;
    if (tool - t.translation).norm() > 0.0 {
        points.push(tool);
    }
    Ok(points)
}

/// 6 x 2N numeric Jacobian of the tool pose. Rows are `(dx, dy, dz)` followed by
/// the world-frame rotation rate; columns are `(dphi_i, dtheta_i)` per section.
pub fn jacobian(spec: &ArmSpec, q: &Configuration) -> Result<DMatrix<f64>> {
    jacobian_with_step(spec, q, JACOBIAN_STEP)
}

pub fn jacobian_with_step(spec: &ArmSpec, q: &Configuration, h: f64) -> Result<DMatrix<f64>> {
    check_dimensions(spec, q)?;
    if !(h > 0.0) {
        return Err(domain(format!("finite-difference step must be positive, got {h}")));
    }
    let flat = q.to_flat();
    let mut jac = DMatrix::zeros(6, flat.len());
    let mut probe = flat.clone();
    for col in 0..flat.len() {
        probe[col] = flat[col] + h;
        let plus = tool_transform_unchecked(spec, &Configuration::from_flat(&probe)?);
        probe[col] = flat[col] - h;
        let minus = tool_transform_unchecked(spec, &Configuration::from_flat(&probe)?);
        probe[col] = flat[col];

        let dp = (plus.translation - minus.translation) / (2.0 * h);
        let dr = rotation_error(&plus.rotation, &minus.rotation) / (2.0 * h);
        for r in 0..3 {
            jac[(r, col)] = dp[r];
            jac[(r + 3, col)] = dr[r];
        }
    }
    Ok(jac)
}

/// Six-vector pose difference `target - current`: position difference, then the
/// axis-angle of `R_target * R_current^T`.
pub fn pose_error(target: &RigidTransform, current: &RigidTransform) -> [f64; 6] {
    let dp = target.translation - current.translation;
    let dr = rotation_error(&target.rotation, &current.rotation);
    [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::{default_embuddy_spec, Configuration};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn straight_segment_is_pure_translation() {
        let t = segment_transform(0.0, 0.3).unwrap();
        assert_eq!(t.translation, Vector3::new(0.0, 0.0, 0.3));
        assert_eq!(t.rotation, nalgebra::Matrix3::identity());
    }

    #[test]
    fn quarter_arc_closed_form() {
        let t = segment_transform(FRAC_PI_2, 0.3).unwrap();
        let r = 0.3 / FRAC_PI_2;
        assert!((t.translation - Vector3::new(r, 0.0, r)).norm() < 1e-12);
        assert!((t.translation.x - 0.190986).abs() < 1e-6);
        // 90 degrees about y takes local z onto x
        assert!((t.rotation * Vector3::z() - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn continuity_at_straight_limit() {
        let t0 = segment_transform(0.0, 0.3).unwrap();
        for eps in [1e-9, 1e-8, 5e-8, 2e-7, 1e-6] {
            let t = segment_transform(eps, 0.3).unwrap();
            let dr = (t.rotation - t0.rotation).abs().max();
            let dt = (t.translation - t0.translation).abs().max();
            assert!(dr.max(dt) <= 10.0 * eps, "eps {eps}: {dr} {dt}");
        }
        let t = segment_transform(1e-9, 0.3).unwrap();
        assert!((t.translation - t0.translation).abs().max() < 1e-9);
    }

    #[test]
    fn segment_domain_errors() {
        assert!(segment_transform(0.1, 0.0).is_err());
        assert!(segment_transform(-0.1, 0.3).is_err());
        assert!(segment_transform(f64::NAN, 0.3).is_err());
    }

    #[test]
    fn straight_arm_tip_at_total_length() {
        let spec = default_embuddy_spec();
        let p = forward_kinematics(&spec, &spec.straight()).unwrap();
        assert!((p.position - Vector3::new(0.0, 0.0, 1.0)).norm() <= 1e-12);
        assert_eq!(p.rpy(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_bend_matches_hand_composition() {
        let spec = default_embuddy_spec();
        let q = Configuration::from_pairs(&[(0.0, FRAC_PI_2), (0.0, 0.0), (0.0, 0.0)]);
        let p = forward_kinematics(&spec, &q).unwrap();
        // arc of radius 0.4/(pi/2) ends pointing along +x; 0.6 m of straight backbone follows
        let r = 0.4 / FRAC_PI_2;
        let expected = Vector3::new(r + 0.6, 0.0, r);
        assert!((p.position - expected).norm() < 1e-12);
    }

    #[test]
    fn plane_rotation_by_pi_mirrors_tip() {
        let spec = default_embuddy_spec();
        let a = Configuration::from_pairs(&[(0.0, 0.5), (0.0, 0.0), (0.0, 0.0)]);
        let b = Configuration::from_pairs(&[(PI, 0.5), (0.0, 0.0), (0.0, 0.0)]);
        let pa = forward_kinematics(&spec, &a).unwrap().position;
        let pb = forward_kinematics(&spec, &b).unwrap().position;
        assert!((pa.x + pb.x).abs() < 1e-12);
        assert!((pa.y + pb.y).abs() < 1e-12);
        assert!((pa.z - pb.z).abs() < 1e-12);
    }

    #[test]
    fn fk_rejects_wrong_dimension() {
        let spec = default_embuddy_spec();
        assert!(forward_kinematics(&spec, &Configuration::straight(4)).is_err());
    }

    #[test]
    fn backbone_of_straight_arm_is_vertical() {
        let spec = default_embuddy_spec();
        let pts = backbone_points(&spec, &spec.straight()).unwrap();
        assert_eq!(pts.len(), 1 + 3 * 16);
        assert_eq!(pts[0], Vector3::zeros());
        for w in pts.windows(2) {
            assert!(w[1].z > w[0].z);
            assert!(w[1].x.abs() < 1e-15 && w[1].y.abs() < 1e-15);
        }
    }

    #[test]
    fn bent_backbone_lies_on_circle() {
        let spec = default_embuddy_spec();
        let theta = FRAC_PI_2;
        let q = Configuration::from_pairs(&[(0.0, theta), (0.0, 0.0), (0.0, 0.0)]);
        let pts = backbone_points(&spec, &q).unwrap();
        // first segment occupies points 0..=16; circle centered at (R, 0, 0)
        let radius = 0.4 / theta;
        let center = Vector3::new(radius, 0.0, 0.0);
        for p in &pts[..=16] {
            assert!(((p - center).norm() - radius).abs() < 1e-9);
            assert!(p.y.abs() < 1e-15);
        }
    }

    #[test]
    fn backbone_ends_at_tool() {
        let mut spec = default_embuddy_spec();
        spec.tool_offset.translation = Vector3::new(0.0, 0.0, 0.05);
        let q = Configuration::from_pairs(&[(0.3, 0.7), (-1.0, 0.4), (2.0, 0.2)]);
        let pts = backbone_points(&spec, &q).unwrap();
        let tip = forward_kinematics(&spec, &q).unwrap().position;
        assert!((pts.last().unwrap() - tip).norm() < 1e-9);
    }

    #[test]
    fn unbent_section_phi_duplicates_next_joint() {
        let spec = default_embuddy_spec();
        let q = Configuration::from_pairs(&[(0.4, 0.0), (0.9, 0.6), (-0.3, 0.0)]);
        let j = jacobian(&spec, &q).unwrap();
        for r in 0..6 {
            assert!((j[(r, 0)] - j[(r, 2)]).abs() < 1e-6);
        }
        // last section unbent: its joint only spins the tool about its own axis
        for r in 0..3 {
            assert!(j[(r, 4)].abs() < 1e-9);
        }
        let straight = jacobian(&spec, &spec.straight()).unwrap();
        for c in [0, 2, 4] {
            for r in 0..3 {
                assert!(straight[(r, c)].abs() < 1e-9);
            }
        }
    }
}
