//! Observation to action-chunk serving: wire protocol, server, client,
//! control loop, built-in policies and frequency reporting.

mod builtin;
mod client;
mod control;
mod expert;
pub mod protocol;
mod server;

use serde::{Deserialize, Serialize};

use crate::arm::ArmSpec;
use crate::dataset::{ActionVector, StateVector};
use crate::error::Result;
use crate::image::RgbImage;
use crate::sim::WorldState;

pub use builtin::{policy_by_name, EchoPolicy, ReplayPolicy, ZeroPolicy, POLICY_NAMES};
pub use client::{PolicyClient, PreparedObservation, DEFAULT_TIMEOUT};
pub use control::{
    measure_frequency, observe, run_control_loop, ControlConfig, ControlOutcome, FrameImages, FrequencyRow,
    LatencyReport,
};
pub use expert::{rigid_style_policy, scripted_expert_policy, ScriptedPolicy};
pub use server::{serve_policy, serve_policy_with, LatencyInjection, PolicyServer, ServerConfig};

/// What the robot side sends per request.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub third_image: RgbImage,
    /// Already mirrored horizontally.
    pub wrist_image: RgbImage,
    pub state: StateVector,
    pub instruction: String,
    /// Full simulator state for scripted policies. Real deployments leave it empty.
    pub privileged: Option<Privileged>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Privileged {
    pub world: WorldState,
    /// The arm as mounted in the scene.
    pub arm: ArmSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionChunk {
    pub actions: Vec<ActionVector>,
}

impl ActionChunk {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A policy served behind the protocol.
pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Starts a new episode with `instruction`.
    fn reset(&mut self, instruction: &str) -> Result<()>;

    /// Returns exactly `chunk_size` actions.
    fn predict(&mut self, obs: &Observation, chunk_size: usize) -> Result<ActionChunk>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn reset(&mut self, instruction: &str) -> Result<()> {
        (**self).reset(instruction)
    }

    fn predict(&mut self, obs: &Observation, chunk_size: usize) -> Result<ActionChunk> {
        (**self).predict(obs, chunk_size)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::arm::default_embuddy_spec;
    use crate::dataset::encode_state;
    use crate::sim::{end_effector_pose, reset_task, TaskSpec};

    pub fn task1() -> (TaskSpec, ArmSpec, WorldState) {
        let task = TaskSpec::builtin(1).unwrap();
        let arm = task.scene_arm(&default_embuddy_spec());
        let world = reset_task(&arm, &task, 3).unwrap();
        (task, arm, world)
    }

    /// Blank images, real state, privileged data attached.
    pub fn observation(world: &WorldState, arm: &ArmSpec, instruction: &str) -> Observation {
        let img = RgbImage::new(256, 256);
        Observation {
            third_image: img.clone(),
            wrist_image: img,
            state: encode_state(&end_effector_pose(world, arm).unwrap(), !world.gripper_open),
            instruction: instruction.into(),
            privileged: Some(Privileged {
                world: world.clone(),
                arm: arm.clone(),
            }),
        }
    }
}
