use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::client::{PolicyClient, PreparedObservation};
use super::{Observation, Privileged};
use crate::arm::ArmSpec;
use crate::capture::CameraRig;
use crate::dataset::{encode_state, Demonstration, StateVector, DEFAULT_CAPTURE_HZ};
use crate::error::{domain, Error, Result};
use crate::sim::{check_success, end_effector_pose, step_with_report, TaskSpec, WorldState};

/// Which images go into the frames of the executed demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameImages {
    /// Render both views after every step.
    EveryStep,
    /// Reuse the most recent observation's images; much cheaper.
    LastObservation,
}

#[derive(Debug, Clone)]
pub struct ControlConfig {
    pub max_steps: usize,
    /// Wall-clock time each action takes to execute, seconds. Zero runs flat out.
    pub step_period_s: f64,
    /// Simulated seconds per action.
    pub dt: f64,
    /// Attach the full world state to every observation.
    pub send_privileged: bool,
    pub rig: CameraRig,
    pub frame_images: FrameImages,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            max_steps: 400,
            step_period_s: 0.0,
            dt: 1.0 / DEFAULT_CAPTURE_HZ,
            send_privileged: true,
            rig: CameraRig::default(),
            frame_images: FrameImages::EveryStep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub total_steps: usize,
    /// From the first request to the end of the last executed action.
    pub wall_time_s: f64,
    /// `total_steps / wall_time_s`; zero when nothing ran.
    pub effective_hz: f64,
    pub per_request_latency_s: Vec<f64>,
    pub chunk_size: usize,
    /// False when a transport or protocol failure cut the run short.
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LatencyReport {
    pub fn new(chunk_size: usize) -> Self {
        Self {
            total_steps: 0,
            wall_time_s: 0.0,
            effective_hz: 0.0,
            per_request_latency_s: Vec::new(),
            chunk_size,
            complete: true,
            error: None,
        }
    }

    pub fn mean_latency_s(&self) -> Option<f64> {
        if self.per_request_latency_s.is_empty() {
            None
        } else {
            Some(self.per_request_latency_s.iter().sum::<f64>() / self.per_request_latency_s.len() as f64)
        }
    }

    fn finish(&mut self, wall: Duration) {
        self.wall_time_s = wall.as_secs_f64();
        self.effective_hz = if self.total_steps > 0 && self.wall_time_s > 0.0 {
            self.total_steps as f64 / self.wall_time_s
        } else {
            0.0
        };
    }
}

#[derive(Debug, Clone)]
pub struct ControlOutcome {
    pub success: bool,
    pub report: LatencyReport,
    /// Executed trajectory, first frame at the initial state.
    pub demonstration: Demonstration,
    /// Steps where the arm could not reach the commanded pose.
    pub stuck_steps: usize,
    pub final_world: WorldState,
}

/// Renders and encodes the observation of `world`.
pub fn observe(
    world: &WorldState,
    arm: &ArmSpec,
    rig: &CameraRig,
    instruction: &str,
    send_privileged: bool,
) -> Result<Observation> {
    let (third_image, wrist_image) = rig.capture(world, arm)?;
    Ok(Observation {
        third_image,
        wrist_image,
        state: state_of(world, arm)?,
        instruction: instruction.to_string(),
        privileged: send_privileged.then(|| Privileged {
            world: world.clone(),
            arm: arm.clone(),
        }),
    })
}

fn state_of(world: &WorldState, arm: &ArmSpec) -> Result<StateVector> {
    Ok(encode_state(&end_effector_pose(world, arm)?, !world.gripper_open))
}

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        std::thread::sleep(deadline - now);
    }
}

/// Observe, request a chunk, execute it open-loop, repeat until the task
/// succeeds or `max_steps` actions ran.
///
/// With a nonzero step period each action occupies exactly one period of
/// wall time. The next observation is captured and encoded inside the last
/// period of a chunk, so a cycle lasts one round trip plus `K` periods.
/// Transport and protocol failures end the run early with an incomplete report.
pub fn run_control_loop(
    world0: &WorldState,
    arm: &ArmSpec,
    task: &TaskSpec,
    client: &mut PolicyClient,
    config: &ControlConfig,
) -> Result<ControlOutcome> {
    if config.max_steps == 0 {
        return Err(domain("max_steps must be positive"));
    }
    if !(config.dt > 0.0) || !(config.step_period_s >= 0.0) {
        return Err(domain("dt must be positive and the step period non-negative"));
    }
    let instruction = task.instruction.as_str();
    let mut report = LatencyReport::new(client.chunk_size());
    let mut world = world0.clone();
    let mut demo = Demonstration::new(format!("task{}_seed{}", task.task_id, world0.rng_seed), task.task_id);
    demo.capture_hz = 1.0 / config.dt;
    let mut stuck_steps = 0;

    if let Err(e) = client.reset(instruction) {
        report.complete = false;
        report.error = Some(e.to_string());
        return Ok(ControlOutcome {
            success: false,
            report,
            demonstration: demo,
            stuck_steps,
            final_world: world,
        });
    }

    let mut obs = observe(&world, arm, &config.rig, instruction, config.send_privileged)?;
    let mut prepared = PreparedObservation::new(&obs)?;
    demo.push_state(world.time_s, obs.third_image.clone(), obs.wrist_image.clone(), obs.state, instruction);
    let mut success = check_success(&world, task);
    // the clock starts with the first request
    let start = Instant::now();

    while !success && report.total_steps < config.max_steps {
        let chunk = match client.request_prepared(&prepared) {
            Ok((chunk, latency)) => {
                report.per_request_latency_s.push(latency);
                chunk
            }
            Err(e @ (Error::Transport(_) | Error::Protocol(_) | Error::Policy(_))) => {
                report.complete = false;
                report.error = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let chunk_start = Instant::now();
        let period = Duration::from_secs_f64(config.step_period_s);
        let n = chunk.len();
        for (k, action) in chunk.actions.iter().enumerate() {
            let (next, step) = step_with_report(&world, arm, action, config.dt)?;
            world = next;
            report.total_steps += 1;
            if !step.ik_converged {
                stuck_steps += 1;
            }
            success = check_success(&world, task);
            let last = k + 1 == n || success || report.total_steps >= config.max_steps;
            let state = state_of(&world, arm)?;
            if last {
                obs = observe(&world, arm, &config.rig, instruction, config.send_privileged)?;
                prepared = PreparedObservation::new(&obs)?;
            }
            let (third, wrist) = match (config.frame_images, last) {
                (FrameImages::EveryStep, false) => config.rig.capture(&world, arm)?,
                _ => (obs.third_image.clone(), obs.wrist_image.clone()),
            };
            demo.push_state(world.time_s, third, wrist, state, instruction);
            sleep_until(chunk_start + period * (k as u32 + 1));
            if last {
                break;
            }
        }
    }
    report.finish(start.elapsed());
    Ok(ControlOutcome {
        success,
        report,
        demonstration: demo,
        stuck_steps,
        final_world: world,
    })
}

/// One row in the style of an inference-frequency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub platform: String,
    pub model: String,
    pub device: String,
    pub chunk_size: usize,
    /// `None` when the run executed no steps.
    pub frequency_hz: Option<f64>,
}

impl FrequencyRow {
    pub fn header() -> &'static str {
        "| Platform | Model | Device | Chunk | Frequency (Hz) |"
    }

    pub fn frequency_text(&self) -> String {
        match self.frequency_hz {
            Some(hz) => format!("{hz:.1}"),
            None => "empty".into(),
        }
    }
}

impl fmt::Display for FrequencyRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "| {} | {} | {} | {} | {} |",
            self.platform,
            self.model,
            self.device,
            self.chunk_size,
            self.frequency_text()
        )
    }
}

/// Summarizes a report as a table row, rounded to one decimal on display.
pub fn measure_frequency(report: &LatencyReport, platform: &str, model: &str, device: &str) -> FrequencyRow {
    FrequencyRow {
        platform: platform.into(),
        model: model.into(),
        device: device.into(),
        chunk_size: report.chunk_size,
        frequency_hz: (report.total_steps > 0 && report.wall_time_s > 0.0)
            .then(|| report.total_steps as f64 / report.wall_time_s),
    }
}
