//! Task definitions: what is on the table, where the arm is mounted, and what
//! counts as done.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::scene::ObjectClass;
use super::workspace::Workspace;
use crate::arm::{ArmSpec, Configuration};
use crate::error::{Error, Result};
use crate::pose::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Axis-aligned box, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Corner points plus a regular interior grid (`n` per axis, flat axes collapsed).
    pub fn sample_grid(&self, n: usize) -> Vec<Vector3<f64>> {
        let axis = |i: usize| -> Vec<f64> {
            if self.max[i] - self.min[i] <= 0.0 || n < 2 {
                vec![self.min[i]]
            } else {
                (0..n)
                    .map(|k| self.min[i] + (self.max[i] - self.min[i]) * k as f64 / (n - 1) as f64)
                    .collect()
            }
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &x in &xs {
            for &y in &ys {
                for &z in &zs {
                    out.push(Vector3::new(x, y, z));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Uniform in the task's placement region.
    Region,
    /// On top of the most recently placed non-graspable object.
    OnCarrier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub class: ObjectClass,
    pub radius: f64,
    pub color: [u8; 3],
    #[serde(default = "one")]
    pub count: usize,
    pub placement: Placement,
}

fn one() -> usize {
    1
}

impl ObjectTemplate {
    pub fn new(class: ObjectClass, placement: Placement) -> Self {
        Self {
            class,
            radius: class.default_radius(),
            color: class.default_color(),
            count: 1,
            placement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: u8,
    pub instruction: String,
    pub target_object_class: ObjectClass,
    /// Fixture the target must reach: a plate (place tasks) or the mouth zone (feeding).
    pub goal_class: ObjectClass,
    /// Nominal fixture position and its success radius.
    pub goal_region: GoalRegion,
    pub placement_region: Aabb,
    pub max_steps: usize,
    /// Where the arm base sits relative to the table.
    pub arm_mount: Pose,
    /// Fixed start configuration of every episode.
    pub start_configuration: Configuration,
    pub grasp_radius: f64,
    /// Uniform jitter applied to the fixture's horizontal position, meters.
    pub fixture_jitter: f64,
    pub objects: Vec<ObjectTemplate>,
}

pub const PLATE_HEIGHT: f64 = 0.02;
pub const DEFAULT_GRASP_RADIUS: f64 = 0.04;

fn desk_mount() -> Pose {
    Pose::from_xyz_rpy([0.0, 0.0, 0.10], [-std::f64::consts::FRAC_PI_2, 0.0, 0.0])
}

fn desk_start() -> Configuration {
    Configuration::from_pairs(&[(0.0, 0.15), (0.0, 0.35), (0.0, 0.35)])
}

impl TaskSpec {
    /// Built-in task by id. Task 2 defaults to the milk variant; see [`TaskSpec::place_in_plate`].
    pub fn builtin(task_id: u8) -> Option<TaskSpec> {
        match task_id {
            1 => Some(Self::place_in_plate(1, ObjectClass::Orange)),
            2 => Some(Self::place_in_plate(2, ObjectClass::Milk)),
            3 => Some(Self::feed()),
            _ => None,
        }
    }

    /// Tasks 1 and 2: four food items in the region, plate off to the side.
    pub fn place_in_plate(task_id: u8, target: ObjectClass) -> TaskSpec {
        TaskSpec {
            task_id,
            instruction: format!("Put the {} in the plate", target.name()),
            target_object_class: target,
            goal_class: ObjectClass::Plate,
            goal_region: GoalRegion {
                center: Vector3::new(0.26, 0.90, 0.0),
                radius: ObjectClass::Plate.default_radius(),
            },
            placement_region: Aabb {
                min: Vector3::new(-0.30, 0.91, 0.0),
                max: Vector3::new(0.08, 0.94, 0.0),
            },
            max_steps: 400,
            arm_mount: desk_mount(),
            start_configuration: desk_start(),
            grasp_radius: DEFAULT_GRASP_RADIUS,
            fixture_jitter: 0.02,
            objects: [
                ObjectClass::Orange,
                ObjectClass::Milk,
                ObjectClass::Yogurt,
                ObjectClass::Baguette,
            ]
            .into_iter()
            .map(|c| ObjectTemplate::new(c, Placement::Region))
            .collect(),
        }
    }

    /// Task 3: a plate of marshmallows somewhere in the region, the person's mouth fixed.
    pub fn feed() -> TaskSpec {
        TaskSpec {
            task_id: 3,
            instruction: "Feed the person with marshmallow".into(),
            target_object_class: ObjectClass::Marshmallow,
            goal_class: ObjectClass::MouthZone,
            goal_region: GoalRegion {
                center: Vector3::new(-0.25, 0.90, 0.20),
                radius: ObjectClass::MouthZone.default_radius(),
            },
            placement_region: Aabb {
                min: Vector3::new(-0.05, 0.885, 0.0),
                max: Vector3::new(0.20, 0.915, 0.0),
            },
            max_steps: 400,
            arm_mount: desk_mount(),
            start_configuration: desk_start(),
            grasp_radius: DEFAULT_GRASP_RADIUS,
            fixture_jitter: 0.02,
            objects: vec![
                ObjectTemplate::new(ObjectClass::Plate, Placement::Region),
                ObjectTemplate {
                    count: 3,
                    ..ObjectTemplate::new(ObjectClass::Marshmallow, Placement::OnCarrier)
                },
            ],
        }
    }

    /// The arm as mounted in this task's scene.
    pub fn scene_arm(&self, arm: &ArmSpec) -> ArmSpec {
        arm.mounted_at(&self.arm_mount)
    }

    /// Checks that the placement region (and the column above it that a grasp
    /// needs) and the goal fixture are reachable by `scene_arm`.
    pub fn verify_reachable(&self, scene_arm: &ArmSpec, workspace: &Workspace) -> std::result::Result<(), String> {
        for p in self.placement_region.sample_grid(5) {
            if !workspace.contains(&p) {
                return Err(format!("placement point {:?} is outside the workspace", p.as_slice()));
            }
        }
        if !workspace.contains(&self.goal_region.center) {
            return Err(format!(
                "goal center {:?} is outside the workspace",
                self.goal_region.center.as_slice()
            ));
        }
        if self.start_configuration.len() != scene_arm.section_count() {
            return Err("start configuration does not match the arm".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TaskSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|reason| Error::SpecFile {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<TaskSpec, String> {
        let file: TaskFile = toml::from_str(text).map_err(|e| e.to_string())?;
        file.into_task()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&TaskFile::from_task(self)).expect("task serializes")
    }
}

/// On-disk task schema: lengths in meters, angles in degrees.
#[derive(Debug, Serialize, Deserialize)]
struct TaskFile {
    task_id: u8,
    instruction: String,
    target: ObjectClass,
    goal_class: ObjectClass,
    max_steps: usize,
    #[serde(default = "default_grasp")]
    grasp_radius: f64,
    #[serde(default)]
    fixture_jitter: f64,
    /// `[phi_deg, theta_deg]` per section.
    start_configuration_deg: Vec<[f64; 2]>,
    mount: MountEntry,
    goal: GoalEntry,
    placement: BoxEntry,
    #[serde(rename = "object")]
    objects: Vec<ObjectTemplate>,
}

fn default_grasp() -> f64 {
    DEFAULT_GRASP_RADIUS
}

#[derive(Debug, Serialize, Deserialize)]
struct MountEntry {
    position: [f64; 3],
    rpy_deg: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct GoalEntry {
    center: [f64; 3],
    radius: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxEntry {
    min: [f64; 3],
    max: [f64; 3],
}

impl TaskFile {
    fn into_task(self) -> std::result::Result<TaskSpec, String> {
        if !(1..=3).contains(&self.task_id) {
            return Err(format!("task_id must be 1, 2 or 3, got {}", self.task_id));
        }
        if !matches!(self.goal_class, ObjectClass::Plate | ObjectClass::MouthZone) {
            return Err("goal_class must be plate or mouth_zone".into());
        }
        if !self.target.graspable() {
            return Err(format!("target class {} is not graspable", self.target));
        }
        if !(self.goal.radius > 0.0) || self.objects.iter().any(|o| !(o.radius > 0.0)) {
            return Err("radii must be positive".into());
        }
        if (0..3).any(|i| self.placement.min[i] > self.placement.max[i]) {
            return Err("placement box min exceeds max".into());
        }
        let [r, p, y] = self.mount.rpy_deg.map(f64::to_radians);
        Ok(TaskSpec {
            task_id: self.task_id,
            instruction: self.instruction,
            target_object_class: self.target,
            goal_class: self.goal_class,
            goal_region: GoalRegion {
                center: Vector3::from(self.goal.center),
                radius: self.goal.radius,
            },
            placement_region: Aabb {
                min: Vector3::from(self.placement.min),
                max: Vector3::from(self.placement.max),
            },
            max_steps: self.max_steps,
            arm_mount: Pose::from_xyz_rpy(self.mount.position, [r, p, y]),
            start_configuration: Configuration::from_pairs(
                &self
                    .start_configuration_deg
                    .iter()
                    .map(|[phi, theta]| (phi.to_radians(), theta.to_radians()))
                    .collect::<Vec<_>>(),
            ),
            grasp_radius: self.grasp_radius,
            fixture_jitter: self.fixture_jitter,
            objects: self.objects,
        })
    }

    fn from_task(t: &TaskSpec) -> Self {
        Self {
            task_id: t.task_id,
            instruction: t.instruction.clone(),
            target: t.target_object_class,
            goal_class: t.goal_class,
            max_steps: t.max_steps,
            grasp_radius: t.grasp_radius,
            fixture_jitter: t.fixture_jitter,
            start_configuration_deg: t
                .start_configuration
                .sections
                .iter()
                .map(|s| [s.phi.to_degrees(), s.theta.to_degrees()])
                .collect(),
            mount: MountEntry {
                position: t.arm_mount.position.into(),
                rpy_deg: t.arm_mount.rpy().map(f64::to_degrees),
            },
            goal: GoalEntry {
                center: t.goal_region.center.into(),
                radius: t.goal_region.radius,
            },
            placement: BoxEntry {
                min: t.placement_region.min.into(),
                max: t.placement_region.max.into(),
            },
            objects: t.objects.clone(),
        }
    }
}
