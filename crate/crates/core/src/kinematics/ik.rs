use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{jacobian, pose_error, tool_transform_unchecked};
use crate::arm::{check_dimensions, clamp_configuration, ArmSpec, Configuration, SectionAngles};
use crate::error::{domain, Result};
use crate::pose::{Pose, RigidTransform};

/// Below this bend the section's plane rotation is frozen for the step.
const PHI_FREEZE_THETA: f64 = 1e-4;

/// Meters of position error considered equivalent to one radian of orientation
/// error when ranking best-effort iterates.
const ROT_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    pub tol_pos: f64,
    pub tol_rot: f64,
    pub max_iters: usize,
    /// Damping factor lambda of the least-squares step.
    pub damping: f64,
    pub step_scale: f64,
    /// Cap on the joint-space norm of a single update, radians.
    pub max_step: f64,
    /// Scale applied to the position rows of the least-squares system.
    pub position_weight: f64,
    /// Scale applied to the orientation rows. Zero solves for position only
    /// and ignores `tol_rot`.
    pub orientation_weight: f64,
    /// Fall back to the built-in seed configurations when the run from `q0` fails.
    pub restarts: bool,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tol_pos: 1e-4,
            tol_rot: 1e-3,
            max_iters: 200,
            damping: 0.05,
            step_scale: 1.0,
            max_step: 0.2,
            position_weight: 3.0,
            orientation_weight: 1.0,
            restarts: true,
        }
    }
}

impl IkOptions {
    /// Local tracking from the current configuration: no restarts, and
    /// iterates down to round-off so that replayed deltas land exactly.
    pub fn tracking() -> Self {
        Self {
            tol_pos: 1e-11,
            tol_rot: 1e-10,
            max_iters: 100,
            restarts: false,
            ..Self::default()
        }
    }

    /// Reach a point with any orientation.
    pub fn position_only() -> Self {
        Self {
            orientation_weight: 0.0,
            ..Self::default()
        }
    }

    fn ignores_orientation(&self) -> bool {
        self.orientation_weight == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub configuration: Configuration,
    /// Iterations summed over every attempt.
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
    pub converged: bool,
}

impl IkResult {
    fn score(&self, opts: &IkOptions) -> f64 {
        if opts.ignores_orientation() {
            self.position_error
        } else {
            self.position_error + ROT_WEIGHT * self.orientation_error
        }
    }
}

/// Damped least-squares IK with the bend limits enforced after every step.
///
/// Each update is `dq = J^T (J J^T + lambda^2 I)^-1 e` on the weighted system.
/// A bend pushed below zero on any section but the last is reflected into the
/// opposite plane (`phi + pi`, next joint `- pi`), which leaves the pose
/// unchanged; the last section is clamped at zero.
///
/// Never fails on unreachable targets: the closest iterate found is returned
/// with `converged = false`.
pub fn ik_solve(spec: &ArmSpec, q0: &Configuration, target: &Pose, opts: &IkOptions) -> Result<IkResult> {
    check_dimensions(spec, q0)?;
    if !q0.is_finite() || !target.is_finite() {
        return Err(domain("NaN or infinite value in IK input"));
    }
    let goal = target.to_transform();
    let mut best = descend(spec, &clamp_configuration(spec, q0)?, &goal, opts)?;
    if best.converged || !opts.restarts {
        return Ok(best);
    }
    let mut total = best.iterations;
    for seed in seed_configurations(spec) {
        let res = descend(spec, &seed, &goal, opts)?;
        total += res.iterations;
        if res.converged || res.score(opts) < best.score(opts) {
            best = res;
        }
        if best.converged {
            break;
        }
    }
    best.iterations = total;
    Ok(best)
}

/// Restart seeds: every section bent to roughly half its limit, joint angles
/// on a {0, +120, -120} degree grid.
fn seed_configurations(spec: &ArmSpec) -> Vec<Configuration> {
    const PHIS: [f64; 3] = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];
    let n = spec.section_count();
    let count = 3usize.pow(n.min(3) as u32);
    (0..count)
        .map(|mut k| Configuration {
            sections: spec
                .sections
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let phi = if i < 3 {
                        let p = PHIS[k % 3];
                        k /= 3;
                        p
                    } else {
                        0.0
                    };
                    SectionAngles {
                        phi,
                        theta: (0.5 * s.max_bend).min(0.7),
                    }
                })
                .collect(),
        })
        .collect()
}

fn descend(spec: &ArmSpec, q0: &Configuration, goal: &RigidTransform, opts: &IkOptions) -> Result<IkResult> {
    let lambda2 = opts.damping * opts.damping;
    let w = opts.position_weight;
    let last = q0.len() - 1;

    let mut q = q0.clone();
    let mut best: Option<IkResult> = None;
    let mut ran = 0;

    for iter in 0..=opts.max_iters {
        ran = iter;
        let e = pose_error(goal, &tool_transform_unchecked(spec, &q));
        let pos_err = Vector3::new(e[0], e[1], e[2]).norm();
        let rot_err = Vector3::new(e[3], e[4], e[5]).norm();
        let current = IkResult {
            configuration: q.clone(),
            iterations: iter,
            position_error: pos_err,
            orientation_error: rot_err,
            converged: pos_err <= opts.tol_pos && (opts.ignores_orientation() || rot_err <= opts.tol_rot),
        };
        let done = current.converged || iter == opts.max_iters;
        if current.converged || best.as_ref().map_or(true, |b| current.score(opts) < b.score(opts)) {
            best = Some(current);
        }
        if done {
            break;
        }

        let mut jac = jacobian(spec, &q)?;
        for (i, a) in q.sections.iter().enumerate() {
            if a.theta < PHI_FREEZE_THETA {
                jac.column_mut(2 * i).fill(0.0);
            }
        }
        let mut err = DVector::from_row_slice(&e);
        for r in 0..6 {
            let scale = if r < 3 { w } else { opts.orientation_weight };
            err[r] *= scale;
            jac.row_mut(r).scale_mut(scale);
        }
        let jjt = &jac * jac.transpose() + DMatrix::identity(6, 6) * lambda2;
        let Some(chol) = jjt.cholesky() else {
            break;
        };
        let mut dq = jac.transpose() * chol.solve(&err) * opts.step_scale;
        let norm = dq.norm();
        if norm > opts.max_step {
            dq *= opts.max_step / norm;
        }

        let mut flat = q.to_flat();
        for (v, d) in flat.iter_mut().zip(dq.iter()) {
            *v += d;
        }
        for i in 0..last {
            if flat[2 * i + 1] < 0.0 {
                flat[2 * i + 1] = -flat[2 * i + 1];
                flat[2 * i] += PI;
                flat[2 * i + 2] -= PI;
            }
        }
        q = clamp_configuration(spec, &Configuration::from_flat(&flat)?)?;
    }

    let mut best = best.expect("at least one iterate is scored");
    best.iterations = ran;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::default_embuddy_spec;
    use crate::kinematics::forward_kinematics;
    use rand::{Rng, SeedableRng};

    fn random_config(spec: &ArmSpec, rng: &mut impl Rng) -> Configuration {
        Configuration {
            sections: spec
                .sections
                .iter()
                .map(|s| crate::arm::SectionAngles {
                    phi: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    theta: rng.gen_range(0.0..s.max_bend),
                })
                .collect(),
        }
    }

    #[test]
    fn recovers_pose_from_nearby_start() {
        let spec = default_embuddy_spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let truth = random_config(&spec, &mut rng);
            let target = forward_kinematics(&spec, &truth).unwrap();
            let mut start = truth.clone();
            for s in &mut start.sections {
                s.phi += 0.05;
                s.theta = (s.theta - 0.05).max(0.0);
            }
            let res = ik_solve(&spec, &start, &target, &IkOptions::default()).unwrap();
            assert!(res.converged, "{res:?}");
            assert!(res.position_error <= 1e-4);
            assert!(res.configuration.within_limits(&spec));
        }
    }

    #[test]
    fn unreachable_target_reports_non_convergence() {
        let spec = default_embuddy_spec();
        let target = Pose::from_xyz_rpy([0.0, 0.0, 2.0], [0.0; 3]);
        let res = ik_solve(&spec, &spec.straight(), &target, &IkOptions::default()).unwrap();
        assert!(!res.converged);
        assert!(res.configuration.within_limits(&spec));
        assert!((res.position_error - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nan_input_is_domain_error() {
        let spec = default_embuddy_spec();
        let target = Pose::from_xyz_rpy([f64::NAN, 0.0, 0.5], [0.0; 3]);
        assert!(ik_solve(&spec, &spec.straight(), &target, &IkOptions::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let spec = default_embuddy_spec();
        let target = Pose::from_xyz_rpy([0.3, 0.1, 0.8], [0.2, 0.4, 0.0]);
        let a = ik_solve(&spec, &spec.straight(), &target, &IkOptions::default()).unwrap();
        let b = ik_solve(&spec, &spec.straight(), &target, &IkOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
