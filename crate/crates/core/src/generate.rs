//! Demonstration generation with the scripted expert.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::arm::ArmSpec;
use crate::capture::CameraRig;
use crate::dataset::{
    encode_state, export_demos, filter_noop_frames, DatasetFormat, DatasetWriter, Demonstration, ExportSummary,
    FilterTolerance, DEFAULT_CAPTURE_HZ,
};
use crate::error::{domain, Result};
use crate::par::parallel_for;
use crate::policy::{scripted_expert_policy, Observation, Policy, Privileged};
use crate::sim::{check_success, end_effector_pose, reset_task, step, TaskSpec};

/// Demonstrations recorded per task in the reference collection.
pub fn default_demo_count(task_id: u8) -> Option<usize> {
    match task_id {
        1 => Some(50),
        2 => Some(100),
        3 => Some(20),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub count: usize,
    /// Attempt `k` resets the scene with seed `seed + k`.
    pub seed: u64,
    pub chunk_size: usize,
    pub max_steps: usize,
    /// Attempts allowed before giving up, counting failures.
    pub max_attempts: usize,
    pub rig: CameraRig,
}

impl GenerateConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            chunk_size: 8,
            max_steps: 400,
            max_attempts: 2 * count + 10,
            rig: CameraRig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub demos: Vec<Demonstration>,
    /// Seeds on which the expert failed.
    pub skipped_seeds: Vec<u64>,
}

/// Runs the expert on one seeded scene, recording every executed step.
/// Returns `None` when the task is not solved within `max_steps`.
pub fn record_expert_demo(
    arm: &ArmSpec,
    task: &TaskSpec,
    seed: u64,
    chunk_size: usize,
    max_steps: usize,
    rig: &CameraRig,
) -> Result<Option<Demonstration>> {
    if chunk_size == 0 {
        return Err(domain("chunk size must be at least 1"));
    }
    let dt = 1.0 / DEFAULT_CAPTURE_HZ;
    let instruction = task.instruction.as_str();
    let mut world = reset_task(arm, task, seed)?;
    let mut policy = scripted_expert_policy(task.clone());
    policy.reset(instruction)?;
    let mut demo = Demonstration::new(format!("task{}_seed{seed}", task.task_id), task.task_id);
    demo.capture_hz = DEFAULT_CAPTURE_HZ;

    let state_now = |w: &crate::sim::WorldState| -> Result<_> { Ok(encode_state(&end_effector_pose(w, arm)?, !w.gripper_open)) };
    let (third, wrist) = rig.capture(&world, arm)?;
    demo.push_state(world.time_s, third, wrist, state_now(&world)?, instruction);
    let mut steps = 0;
    while steps < max_steps {
        let last = demo.frames.last().expect("first frame pushed");
        let obs = Observation {
            third_image: last.third_image.clone(),
            wrist_image: last.wrist_image.clone(),
            state: last.state,
            instruction: instruction.to_string(),
            privileged: Some(Privileged {
                world: world.clone(),
                arm: arm.clone(),
            }),
        };
        for action in policy.predict(&obs, chunk_size)?.actions {
            world = step(&world, arm, &action, dt)?;
            steps += 1;
            let (third, wrist) = rig.capture(&world, arm)?;
            demo.push_state(world.time_s, third, wrist, state_now(&world)?, instruction);
            if check_success(&world, task) {
                return Ok(Some(filter_noop_frames(&demo, FilterTolerance::default())));
            }
            if steps >= max_steps {
                break;
            }
        }
    }
    log::info!("expert failed on task {} seed {seed}", task.task_id);
    Ok(None)
}

/// Records `config.count` successful expert demonstrations, skipping seeds
/// where the expert fails, and hands each to `sink` in seed order. Attempts
/// run in parallel batches; the output depends only on the configuration.
/// Returns the skipped seeds.
pub fn generate_demos_with(
    arm: &ArmSpec,
    task: &TaskSpec,
    config: &GenerateConfig,
    mut sink: impl FnMut(Demonstration) -> Result<()>,
) -> Result<Vec<u64>> {
    if config.count == 0 {
        return Err(domain("demo count must be positive"));
    }
    // one unfiltered demonstration per worker is held at a time
    let batch = std::thread::available_parallelism().map_or(1, |p| p.get()).max(1);
    let mut accepted = 0;
    let mut skipped = Vec::new();
    let mut attempt = 0usize;
    while accepted < config.count {
        if attempt >= config.max_attempts {
            return Err(domain(format!(
                "only {accepted} of {} demonstrations after {attempt} attempts",
                config.count
            )));
        }
        let n = (config.count - accepted).min(batch).min(config.max_attempts - attempt);
        let results: Vec<Mutex<Option<Demonstration>>> = (0..n).map(|_| Mutex::new(None)).collect();
        parallel_for(n, |i| {
            let seed = config.seed.wrapping_add((attempt + i) as u64);
            let demo = record_expert_demo(arm, task, seed, config.chunk_size, config.max_steps, &config.rig)?;
            *results[i].lock().unwrap_or_else(|p| p.into_inner()) = demo;
            Ok(())
        })?;
        for (i, slot) in results.into_iter().enumerate() {
            let seed = config.seed.wrapping_add((attempt + i) as u64);
            match slot.into_inner().unwrap_or_else(|p| p.into_inner()) {
                Some(d) => {
                    sink(d)?;
                    accepted += 1;
                }
                None => {
                    log::warn!("skipping seed {seed}: expert did not finish task {}", task.task_id);
                    skipped.push(seed);
                }
            }
        }
        attempt += n;
    }
    Ok(skipped)
}

/// [`generate_demos_with`] collected in memory. Every frame holds two raw
/// images, so large counts belong in [`generate_dataset`].
pub fn generate_demos(arm: &ArmSpec, task: &TaskSpec, config: &GenerateConfig) -> Result<Generated> {
    let mut demos = Vec::with_capacity(config.count);
    let skipped_seeds = generate_demos_with(arm, task, config, |d| {
        demos.push(d);
        Ok(())
    })?;
    Ok(Generated { demos, skipped_seeds })
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub demos: usize,
    pub frames: usize,
    pub skipped_seeds: Vec<u64>,
    /// One per format, in the order episodic, frame table.
    pub exports: Vec<ExportSummary>,
}

/// Records demonstrations straight to disk in both formats under `root`
/// (see [`format_dir`]), keeping one demonstration in memory at a time.
/// `inspect` sees every demonstration before it is written.
pub fn generate_dataset(
    arm: &ArmSpec,
    task: &TaskSpec,
    config: &GenerateConfig,
    root: &Path,
    mut inspect: impl FnMut(&Demonstration),
) -> Result<GeneratedDataset> {
    if config.count == 0 {
        return Err(domain("demo count must be positive"));
    }
    let mut writers = [DatasetFormat::Episodic, DatasetFormat::FrameTable]
        .into_iter()
        .map(|f| DatasetWriter::create(format_dir(root, f), f))
        .collect::<Result<Vec<_>>>()?;
    let mut frames = 0;
    let skipped_seeds = generate_demos_with(arm, task, config, |d| {
        inspect(&d);
        frames += d.len();
        writers.iter_mut().try_for_each(|w| w.append(&d))
    })?;
    let exports = writers.into_iter().map(DatasetWriter::finish).collect::<Result<Vec<_>>>()?;
    Ok(GeneratedDataset {
        demos: config.count,
        frames,
        skipped_seeds,
        exports,
    })
}

/// Subdirectory of a generated dataset root holding one format.
pub fn format_dir(root: &Path, format: DatasetFormat) -> PathBuf {
    root.join(format.name())
}

/// Writes `demos` under `root` once per format, each in [`format_dir`].
pub fn export_both(demos: &[Demonstration], root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for format in [DatasetFormat::Episodic, DatasetFormat::FrameTable] {
        let dir = format_dir(root, format);
        export_demos(demos, format, &dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}
