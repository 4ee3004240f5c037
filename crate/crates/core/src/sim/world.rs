use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{ObjectClass, SceneObject, WorldState};
use super::task::{Placement, TaskSpec, PLATE_HEIGHT};
use crate::angle::wrap;
use crate::arm::{clamp_configuration, ArmSpec};
use crate::dataset::ActionVector;
use crate::error::{domain, Error, Result};
use crate::kinematics::{forward_kinematics, ik_solve, IkOptions};
use crate::pose::Pose;

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Success tolerance for delivering a marshmallow to the mouth zone, meters.
pub const MOUTH_TOLERANCE: f64 = 0.05;

/// What the arm tracking did during one [`step_with_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Whether the commanded pose was reached within the default IK tolerances.
    pub ik_converged: bool,
    pub position_error: f64,
    pub orientation_error: f64,
}

/// Lays out a fresh episode. Identical seeds give identical worlds.
pub fn reset_task(spec: &ArmSpec, task: &TaskSpec, seed: u64) -> Result<WorldState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects: Vec<SceneObject> = Vec::new();

    // fixture first so region objects avoid it
    let jitter = task.fixture_jitter;
    let mut fixture_pos = task.goal_region.center;
    if jitter > 0.0 {
        fixture_pos.x += rng.gen_range(-jitter..=jitter);
        fixture_pos.y += rng.gen_range(-jitter..=jitter);
    }
    objects.push(SceneObject::new(
        format!("{}_0", task.goal_class),
        task.goal_class,
        fixture_pos,
        task.goal_region.radius,
    ));

    let mut carrier: Option<usize> = None;
    for template in &task.objects {
        for k in 0..template.count {
            let id = format!("{}_{}", template.class, k + usize::from(template.class == task.goal_class));
            let position = match template.placement {
                Placement::Region => place_in_region(&mut rng, task, &objects, template.radius, &id)?,
                Placement::OnCarrier => {
                    let c = carrier.ok_or_else(|| Error::Placement(id.clone()))?;
                    place_on_carrier(&mut rng, &objects, c, template.radius, &id)?
                }
            };
            let mut obj = SceneObject::new(id, template.class, position, template.radius);
            obj.color = template.color;
            objects.push(obj);
            if !template.class.graspable() {
                carrier = Some(objects.len() - 1);
            }
        }
    }

    Ok(WorldState {
        arm_config: clamp_configuration(spec, &task.start_configuration)?,
        gripper_open: true,
        attached_object: None,
        objects,
        time_s: 0.0,
        rng_seed: seed,
        grasp_radius: task.grasp_radius,
    })
}

fn horizontal_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

fn overlaps(objects: &[SceneObject], p: &Vector3<f64>, radius: f64) -> bool {
    objects
        .iter()
        .filter(|o| o.class_label != ObjectClass::MouthZone)
        .any(|o| horizontal_distance(&o.position, p) < o.radius + radius)
}

fn place_in_region(
    rng: &mut ChaCha8Rng,
    task: &TaskSpec,
    objects: &[SceneObject],
    radius: f64,
    id: &str,
) -> Result<Vector3<f64>> {
    let b = &task.placement_region;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut p = Vector3::zeros();
        for i in 0..3 {
            p[i] = if b.max[i] > b.min[i] {
                rng.gen_range(b.min[i]..=b.max[i])
            } else {
                b.min[i]
            };
        }
        if !overlaps(objects, &p, radius) {
            return Ok(p);
        }
    }
    Err(Error::Placement(id.to_string()))
}

fn place_on_carrier(
    rng: &mut ChaCha8Rng,
    objects: &[SceneObject],
    carrier: usize,
    radius: f64,
    id: &str,
) -> Result<Vector3<f64>> {
    let c = &objects[carrier];
    let reach = (c.radius - radius).max(0.0) * 0.6;
    let riders: Vec<&SceneObject> = objects[carrier + 1..].iter().collect();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let r = reach * rng.gen_range(0.0f64..=1.0).sqrt();
        let a = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let p = Vector3::new(c.position.x + r * a.cos(), c.position.y + r * a.sin(), c.position.z + PLATE_HEIGHT);
        if riders
            .iter()
            .all(|o| horizontal_distance(&o.position, &p) >= o.radius + radius)
        {
            return Ok(p);
        }
    }
    Err(Error::Placement(id.to_string()))
}

/// Gripper pose of the arm in `world`.
pub fn end_effector_pose(world: &WorldState, spec: &ArmSpec) -> Result<Pose> {
    forward_kinematics(spec, &world.arm_config)
}

/// Advances the world by one action.
pub fn step(world: &WorldState, spec: &ArmSpec, action: &ActionVector, dt: f64) -> Result<WorldState> {
    Ok(step_with_report(world, spec, action, dt)?.0)
}

/// Like [`step`], also reporting how well the arm tracked the commanded pose.
///
/// The target pose is the current gripper pose plus the action's deltas
/// (angles wrapped). The arm takes whatever configuration tracking reaches,
/// even when the target is out of reach.
pub fn step_with_report(
    world: &WorldState,
    spec: &ArmSpec,
    action: &ActionVector,
    dt: f64,
) -> Result<(WorldState, StepReport)> {
    if !action.is_finite() {
        return Err(domain("action contains NaN or infinite values"));
    }
    if !(dt > 0.0) {
        return Err(domain(format!("time step must be positive, got {dt}")));
    }
    let current = end_effector_pose(world, spec)?;
    let [dx, dy, dz] = action.translation();
    let [dr, dp, dyaw] = action.rotation();
    let target = Pose {
        position: current.position + Vector3::new(dx, dy, dz),
        roll: wrap(current.roll + dr),
        pitch: wrap(current.pitch + dp),
        yaw: wrap(current.yaw + dyaw),
    };
    let ik = ik_solve(spec, &world.arm_config, &target, &IkOptions::tracking())?;
    let standard = IkOptions::default();

    let mut next = world.clone();
    next.arm_config = ik.configuration;
    next.time_s += dt;
    let ee = end_effector_pose(&next, spec)?.position;

    let want_closed = action.gripper_closed();
    if want_closed && world.gripper_open {
        next.gripper_open = false;
        next.attached_object = nearest_graspable(&next, &ee).map(|o| o.id.clone());
    } else if !want_closed && !world.gripper_open {
        next.gripper_open = true;
        if let Some(id) = next.attached_object.take() {
            let support = support_height(&next, &id, &ee);
            if let Some(o) = next.objects.iter_mut().find(|o| o.id == id) {
                o.position = Vector3::new(ee.x, ee.y, support);
            }
        }
    }
    if let Some(id) = next.attached_object.clone() {
        if let Some(o) = next.objects.iter_mut().find(|o| o.id == id) {
            o.position = ee;
        }
    }

    Ok((
        next,
        StepReport {
            ik_converged: ik.position_error <= standard.tol_pos && ik.orientation_error <= standard.tol_rot,
            position_error: ik.position_error,
            orientation_error: ik.orientation_error,
        },
    ))
}

fn nearest_graspable<'a>(world: &'a WorldState, ee: &Vector3<f64>) -> Option<&'a SceneObject> {
    world
        .objects
        .iter()
        .filter(|o| o.graspable)
        .map(|o| ((o.position - ee).norm(), o))
        .filter(|(d, _)| *d <= world.grasp_radius)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, o)| o)
}

/// Height an object released at `ee` comes to rest at: a plate top if above one, else the table.
fn support_height(world: &WorldState, released: &str, ee: &Vector3<f64>) -> f64 {
    world
        .objects
        .iter()
        .filter(|o| o.id != released && o.class_label == ObjectClass::Plate)
        .filter(|o| horizontal_distance(&o.position, ee) <= o.radius)
        .map(|o| o.position.z + PLATE_HEIGHT)
        .fold(0.0, f64::max)
}

/// Task-specific success predicate.
///
/// Place tasks: the target rests inside the plate's footprint, released, gripper open.
/// Feeding: a held marshmallow is within [`MOUTH_TOLERANCE`] of the mouth zone center.
pub fn check_success(world: &WorldState, task: &TaskSpec) -> bool {
    let Some(goal) = world.first_of_class(task.goal_class) else {
        return false;
    };
    match task.goal_class {
        ObjectClass::MouthZone => world.attached().is_some_and(|o| {
            o.class_label == task.target_object_class && (o.position - goal.position).norm() <= MOUTH_TOLERANCE
        }),
        _ => {
            world.gripper_open
                && world
                    .objects
                    .iter()
                    .filter(|o| o.class_label == task.target_object_class)
                    .any(|o| {
                        world.attached_object.as_deref() != Some(o.id.as_str())
                            && horizontal_distance(&o.position, &goal.position) <= goal.radius
                    })
        }
    }
}
