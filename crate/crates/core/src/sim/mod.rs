//! Kinematic tabletop world: tasks, stepping, success checks, reachability
//! and synthetic camera views.

mod camera;
mod scene;
mod task;
mod workspace;
mod world;

pub use camera::{
    render_background, render_view, render_view_over, render_view_styled, CameraAttachment, CameraSpec, Intrinsics, RenderStyle, IMAGE_HEIGHT,
    IMAGE_WIDTH,
};
pub use scene::{ObjectClass, SceneObject, WorldState};
pub use task::{Aabb, GoalRegion, ObjectTemplate, Placement, TaskSpec, DEFAULT_GRASP_RADIUS, PLATE_HEIGHT};
pub use workspace::{random_configuration, workspace_contains, Workspace, DEFAULT_SAMPLES, VOXEL_SIZE};
pub use world::{check_success, end_effector_pose, reset_task, step, step_with_report, StepReport, MOUTH_TOLERANCE};
