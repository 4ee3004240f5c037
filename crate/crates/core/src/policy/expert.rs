//! Scripted pick-and-place policies driven by privileged simulator state.

use nalgebra::{Matrix3, Vector3};

use super::{ActionChunk, Observation, Policy};
use crate::angle::wrap;
use crate::arm::{clamp_configuration, ArmSpec, Configuration, SectionAngles};
use crate::dataset::{ActionVector, DEFAULT_CAPTURE_HZ};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, ik_solve, tool_transform, IkOptions};
use crate::pose::{matrix_to_rpy, rotation_error, Pose};
use crate::sim::{step, ObjectClass, TaskSpec, WorldState};

/// Per-action translation limit, meters.
pub const MAX_STEP_TRANSLATION: f64 = 0.02;
/// Per-action limit on each angle increment, radians.
pub const MAX_STEP_ROTATION: f64 = 0.05;
pub const PREGRASP_HEIGHT: f64 = 0.10;
pub const LIFT_HEIGHT: f64 = 0.15;

/// A move counts as done once the gripper is this close to its waypoint.
const REACH_TOL: f64 = 2e-3;
/// Orientation error, radians, below which the locked gripper counts as aligned.
const RIGID_ORIENTATION_TOL: f64 = 0.02;
/// Steps after which a move is abandoned and the plan goes on.
const MOVE_BUDGET: usize = 120;
/// Keeps interpolated steps a hair inside the limits.
const LIMIT_MARGIN: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    /// Interpolate between IK solutions in configuration space.
    Configuration,
    /// Straight Cartesian lines with the gripper orientation locked.
    RigidCartesian,
}

#[derive(Debug, Clone)]
enum Phase {
    Move {
        target: Vector3<f64>,
        closed: bool,
        goal: Option<(Configuration, Vector3<f64>)>,
        steps: usize,
    },
    Gripper {
        closed: bool,
    },
    Hold,
}

impl Phase {
    fn to(target: Vector3<f64>, closed: bool) -> Self {
        Phase::Move {
            target,
            closed,
            goal: None,
            steps: 0,
        }
    }
}

/// Waypoint policy: above the target, down, close, lift, over the goal,
/// open (feeding keeps holding at the mouth). Each chunk is produced by
/// stepping a private copy of the observed world, so it matches what the
/// robot side will execute.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    task: TaskSpec,
    style: Style,
    phases: Vec<Phase>,
    current: usize,
    gripper_closed: bool,
    held_rotation: Matrix3<f64>,
}

pub fn scripted_expert_policy(task: TaskSpec) -> ScriptedPolicy {
    ScriptedPolicy::new(task, Style::Configuration)
}

/// Moves like a rigid arm with a locked wrist: straight Cartesian lines with
/// the gripper held at its starting orientation. Keeping that orientation
/// far from the start needs bends past the soft arm's limits, so parts of
/// the path stall.
pub fn rigid_style_policy(task: TaskSpec) -> ScriptedPolicy {
    ScriptedPolicy::new(task, Style::RigidCartesian)
}

impl ScriptedPolicy {
    fn new(task: TaskSpec, style: Style) -> Self {
        Self {
            task,
            style,
            phases: Vec::new(),
            current: 0,
            gripper_closed: false,
            held_rotation: Matrix3::identity(),
        }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    fn plan(&mut self, world: &WorldState, arm: &ArmSpec) -> Result<()> {
        let class = self.task.target_object_class;
        let target = world
            .objects
            .iter()
            .find(|o| o.class_label == class && o.graspable)
            .ok_or_else(|| Error::Policy(format!("no {class} in the scene")))?;
        let goal = world
            .first_of_class(self.task.goal_class)
            .ok_or_else(|| Error::Policy(format!("no {} in the scene", self.task.goal_class)))?;
        let p = target.position;
        let up = |h: f64| Vector3::new(0.0, 0.0, h);
        let mut phases = vec![
            Phase::to(p + up(PREGRASP_HEIGHT), false),
            Phase::to(p, false),
            Phase::Gripper { closed: true },
            Phase::to(p + up(LIFT_HEIGHT), true),
        ];
        if self.task.goal_class == ObjectClass::MouthZone {
            phases.push(Phase::to(goal.position, true));
        } else {
            phases.push(Phase::to(Vector3::new(goal.position.x, goal.position.y, p.z + LIFT_HEIGHT), true));
            phases.push(Phase::Gripper { closed: false });
        }
        phases.push(Phase::Hold);
        self.phases = phases;
        self.current = 0;
        self.gripper_closed = !world.gripper_open;
        self.held_rotation = tool_transform(arm, &world.arm_config)?.rotation;
        Ok(())
    }

    fn next_action(&mut self, world: &WorldState, arm: &ArmSpec) -> Result<ActionVector> {
        let g = |closed: bool| if closed { 1.0 } else { 0.0 };
        loop {
            let style = self.style;
            let Some(phase) = self.phases.get_mut(self.current) else {
                return Ok(ActionVector::zero(g(self.gripper_closed)));
            };
            match phase {
                Phase::Hold => return Ok(ActionVector::zero(g(self.gripper_closed))),
                Phase::Gripper { closed } => {
                    self.gripper_closed = *closed;
                    self.current += 1;
                    return Ok(ActionVector::zero(g(self.gripper_closed)));
                }
                Phase::Move {
                    target,
                    closed,
                    goal,
                    steps,
                } => {
                    self.gripper_closed = *closed;
                    let action = match style {
                        Style::Configuration => configuration_step(world, arm, target, goal, *steps)?,
                        Style::RigidCartesian => rigid_step(world, arm, target, &self.held_rotation, *steps)?,
                    };
                    match action {
                        Some(mut a) => {
                            *steps += 1;
                            a.0[6] = g(*closed);
                            return Ok(clip(a));
                        }
                        None => self.current += 1,
                    }
                }
            }
        }
    }
}

fn clip(mut a: ActionVector) -> ActionVector {
    let n = a.translation_norm();
    if n > MAX_STEP_TRANSLATION {
        for v in &mut a.0[..3] {
            *v *= MAX_STEP_TRANSLATION / n;
        }
    }
    for v in &mut a.0[3..6] {
        *v = v.clamp(-MAX_STEP_ROTATION, MAX_STEP_ROTATION);
    }
    a
}

fn pose_delta(from: &Pose, to: &Pose) -> ActionVector {
    let d = to.position - from.position;
    ActionVector([
        d.x,
        d.y,
        d.z,
        wrap(to.roll - from.roll),
        wrap(to.pitch - from.pitch),
        wrap(to.yaw - from.yaw),
        0.0,
    ])
}

fn within_limits(a: &ActionVector) -> bool {
    a.translation_norm() <= MAX_STEP_TRANSLATION * LIMIT_MARGIN && a.max_rotation() <= MAX_STEP_ROTATION * LIMIT_MARGIN
}

/// Next action toward `target` along the straight line in configuration
/// space, or `None` once the waypoint is reached.
fn configuration_step(
    world: &WorldState,
    arm: &ArmSpec,
    target: &Vector3<f64>,
    goal: &mut Option<(Configuration, Vector3<f64>)>,
    steps: usize,
) -> Result<Option<ActionVector>> {
    let q = &world.arm_config;
    if goal.is_none() {
        let target_pose = Pose::from_xyz_rpy([target.x, target.y, target.z], [0.0, 0.0, 0.0]);
        let ik = ik_solve(arm, q, &target_pose, &IkOptions::position_only())?;
        if !ik.converged {
            log::debug!("waypoint {:?} unreachable, best effort {:.4} m off", target.as_slice(), ik.position_error);
        }
        let reached_at = forward_kinematics(arm, &ik.configuration)?.position;
        *goal = Some((ik.configuration, reached_at));
    }
    let (q_goal, goal_pos) = goal.as_ref().expect("goal set above");
    let here = forward_kinematics(arm, q)?;
    if (here.position - goal_pos).norm() < REACH_TOL || steps >= MOVE_BUDGET {
        return Ok(None);
    }
    let delta: Vec<(f64, f64)> = q
        .sections
        .iter()
        .zip(&q_goal.sections)
        .map(|(a, b)| (wrap(b.phi - a.phi), b.theta - a.theta))
        .collect();
    let at = |s: f64| -> Result<ActionVector> {
        let qs = Configuration {
            sections: q
                .sections
                .iter()
                .zip(&delta)
                .map(|(a, (dphi, dtheta))| SectionAngles {
                    phi: a.phi + s * dphi,
                    theta: a.theta + s * dtheta,
                })
                .collect(),
        };
        let qs = clamp_configuration(arm, &qs)?;
        Ok(pose_delta(&here, &forward_kinematics(arm, &qs)?))
    };
    let full = at(1.0)?;
    if within_limits(&full) {
        return Ok(Some(full));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if within_limits(&at(mid)?) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(at(lo)?))
}

/// Straight-line step toward `target` while turning the gripper back to `fixed`, or `None` once both are reached.
fn rigid_step(
    world: &WorldState,
    arm: &ArmSpec,
    target: &Vector3<f64>,
    fixed: &Matrix3<f64>,
    steps: usize,
) -> Result<Option<ActionVector>> {
    let current = tool_transform(arm, &world.arm_config)?;
    let to_target = target - current.translation;
    let turned = rotation_error(fixed, &current.rotation).norm() < RIGID_ORIENTATION_TOL;
    if (to_target.norm() < REACH_TOL && turned) || steps >= MOVE_BUDGET {
        return Ok(None);
    }
    let here = current.to_pose();
    let want = matrix_to_rpy(fixed).rpy;
    Ok(Some(ActionVector([
        to_target.x,
        to_target.y,
        to_target.z,
        wrap(want[0] - here.roll),
        wrap(want[1] - here.pitch),
        wrap(want[2] - here.yaw),
        0.0,
    ])))
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        match self.style {
            Style::Configuration => "scripted_expert",
            Style::RigidCartesian => "rigid_style",
        }
    }

    fn reset(&mut self, _instruction: &str) -> Result<()> {
        self.phases.clear();
        self.current = 0;
        Ok(())
    }

    fn predict(&mut self, obs: &Observation, chunk_size: usize) -> Result<ActionChunk> {
        let privileged = obs
            .privileged
            .as_ref()
            .ok_or_else(|| Error::Policy(format!("{} needs the privileged world state", self.name())))?;
        if self.phases.is_empty() {
            self.plan(&privileged.world, &privileged.arm)?;
        }
        let arm = &privileged.arm;
        let mut world = privileged.world.clone();
        let dt = 1.0 / DEFAULT_CAPTURE_HZ;
        let mut actions = Vec::with_capacity(chunk_size);
        for _ in 0..chunk_size {
            let a = self.next_action(&world, arm)?;
            world = step(&world, arm, &a, dt)?;
            actions.push(a);
        }
        Ok(ActionChunk { actions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::testing::{observation, task1};
    use crate::sim::{check_success, step_with_report};

    fn run(policy: &mut ScriptedPolicy, task: &TaskSpec, arm: &ArmSpec, mut world: WorldState) -> (bool, Vec<ActionVector>) {
        let mut emitted = Vec::new();
        policy.reset(&task.instruction).unwrap();
        while emitted.len() < 400 {
            let chunk = policy.predict(&observation(&world, arm, &task.instruction), 8).unwrap();
            for a in chunk.actions {
                world = step_with_report(&world, arm, &a, 0.2).unwrap().0;
                emitted.push(a);
                if check_success(&world, task) {
                    return (true, emitted);
                }
            }
        }
        (false, emitted)
    }

    #[test]
    fn expert_succeeds_within_limits() {
        let (task, arm, world) = task1();
        let (ok, actions) = run(&mut scripted_expert_policy(task.clone()), &task, &arm, world);
        assert!(ok);
        for a in &actions {
            assert!(a.translation_norm() <= MAX_STEP_TRANSLATION + 1e-12);
            assert!(a.max_rotation() <= MAX_STEP_ROTATION + 1e-12);
        }
        // closed exactly once, opened exactly once
        let g: Vec<bool> = actions.iter().map(|a| a.gripper_closed()).collect();
        let flips = g.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(!g[0]);
        assert_eq!(flips, 2);
    }

    #[test]
    fn missing_target_is_policy_error() {
        let (task, arm, mut world) = task1();
        world.objects.retain(|o| o.class_label != task.target_object_class);
        let err = scripted_expert_policy(task.clone())
            .predict(&observation(&world, &arm, &task.instruction), 8)
            .unwrap_err();
        assert!(matches!(err, Error::Policy(_)), "{err}");
    }

    #[test]
    fn chunks_match_execution() {
        // a chunk of 1 and a chunk of 8 plan the same motion
        let (task, arm, world) = task1();
        let mut a = scripted_expert_policy(task.clone());
        let mut b = scripted_expert_policy(task.clone());
        let long = a.predict(&observation(&world, &arm, &task.instruction), 8).unwrap();
        let mut w = world;
        for expected in &long.actions {
            let got = b.predict(&observation(&w, &arm, &task.instruction), 1).unwrap().actions[0];
            assert_eq!(&got, expected);
            w = step(&w, &arm, &got, 0.2).unwrap();
        }
    }

    #[test]
    fn rigid_style_stalls_on_the_soft_arm() {
        let (task, arm, _) = task1();
        let stuck = (0..10).any(|seed| {
            let mut world = crate::sim::reset_task(&arm, &task, seed).unwrap();
            let mut policy = rigid_style_policy(task.clone());
            (0..40).any(|_| {
                let a = policy.predict(&observation(&world, &arm, &task.instruction), 1).unwrap().actions[0];
                let (next, report) = step_with_report(&world, &arm, &a, 0.2).unwrap();
                world = next;
                !report.ik_converged
            })
        });
        assert!(stuck);
    }
}
