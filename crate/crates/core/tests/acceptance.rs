//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero if any failed.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softarm::dataset::{
    convert_dataset, encode_action, encode_state, filter_noop_frames, DatasetFormat, DatasetReader, Demonstration,
    FilterTolerance,
};
use softarm::generate::{default_demo_count, format_dir, generate_dataset, GenerateConfig};
use softarm::image::RgbImage;
use softarm::kinematics::{forward_kinematics, ik_solve, IkOptions};
use softarm::policy::{
    measure_frequency, rigid_style_policy, run_control_loop, scripted_expert_policy, serve_policy_with,
    ControlConfig, FrameImages, LatencyInjection, Policy, PolicyClient, ServerConfig, ZeroPolicy,
};
use softarm::sim::{random_configuration, reset_task, TaskSpec, WorldState, Workspace, DEFAULT_SAMPLES};
use softarm::{default_embuddy_spec, wrap_angle, ArmSpec, Pose};

type Check = (bool, String);

fn task_arm(id: u8, max_bend: Option<f64>) -> (TaskSpec, ArmSpec) {
    let task = TaskSpec::builtin(id).unwrap();
    let base = default_embuddy_spec();
    let base = match max_bend {
        Some(b) => base.with_uniform_limit(b),
        None => base,
    };
    let arm = task.scene_arm(&base);
    (task, arm)
}

struct Trials {
    successes: usize,
    stuck: usize,
    outcomes: Vec<(bool, usize, usize, Demonstration)>,
}

/// Serves `policy` on loopback and runs one episode per world.
fn run_trials(policy: Box<dyn Policy>, arm: &ArmSpec, task: &TaskSpec, worlds: &[WorldState]) -> Trials {
    let server = serve_policy_with(policy, "127.0.0.1:0", ServerConfig::default()).unwrap();
    let config = ControlConfig {
        max_steps: task.max_steps,
        frame_images: FrameImages::LastObservation,
        ..ControlConfig::default()
    };
    let mut out = Trials {
        successes: 0,
        stuck: 0,
        outcomes: Vec::new(),
    };
    for world in worlds {
        let mut client = PolicyClient::connect(server.local_addr(), 8).unwrap();
        let o = run_control_loop(world, arm, task, &mut client, &config).unwrap();
        client.close();
        assert!(o.report.complete, "{:?}", o.report.error);
        out.successes += o.success as usize;
        out.stuck += o.stuck_steps;
        out.outcomes.push((o.success, o.report.total_steps, o.stuck_steps, o.demonstration));
    }
    server.shutdown();
    out
}

fn seeded_worlds(arm: &ArmSpec, task: &TaskSpec, n: u64) -> Vec<WorldState> {
    (0..n).map(|s| reset_task(arm, task, s).unwrap()).collect()
}

fn kinematics_roundtrip() -> Check {
    let start = Instant::now();
    let arm = default_embuddy_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut ok, mut outside) = (0, 0);
    for _ in 0..1000 {
        let q = random_configuration(&arm, &mut rng);
        let target = forward_kinematics(&arm, &q).unwrap();
        let r = ik_solve(&arm, &arm.straight(), &target, &IkOptions::default()).unwrap();
        if r.converged && r.position_error <= 1e-4 && r.orientation_error <= 1e-3 {
            ok += 1;
        }
        if !r.configuration.within_limits(&arm) {
            outside += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        ok >= 950 && outside == 0 && secs < 30.0,
        format!("{ok}/1000 converged, {outside} outside limits, {secs:.1} s"),
    )
}

fn straight_arm() -> Check {
    let arm = default_embuddy_spec();
    let p = forward_kinematics(&arm, &arm.straight()).unwrap().position;
    let err = (p - Vector3::new(0.0, 0.0, 1.0)).abs().max();
    (err <= 1e-12, format!("tip ({:.3e}, {:.3e}, {:.15}), max error {err:.1e}", p.x, p.y, p.z))
}

fn wrap_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut out_of_range, mut periodic_misses) = (0, 0);
    for _ in 0..1_000_000 {
        let x: f64 = rng.gen_range(-100.0..=100.0);
        let w = wrap_angle(x).unwrap();
        if !(-PI..PI).contains(&w) {
            out_of_range += 1;
        }
        for k in -3..=3 {
            let wk = wrap_angle(x + 2.0 * PI * k as f64).unwrap();
            if (wk - w).abs() > 1e-12 {
                periodic_misses += 1;
            }
        }
    }
    let prev = encode_state(&Pose::from_xyz_rpy([0.0; 3], [0.0, 0.0, PI - 0.1]), false);
    let cur = encode_state(&Pose::from_xyz_rpy([0.0; 3], [0.0, 0.0, -PI + 0.1]), false);
    let dyaw = encode_action(&prev, &cur).0[5];
    (
        out_of_range == 0 && periodic_misses == 0 && (dyaw - 0.2).abs() < 1e-12,
        format!("{out_of_range} out of range, {periodic_misses} periodicity misses, boundary yaw delta {dyaw:+.12}"),
    )
}

fn trajectory_reconstruction(errors: &[f64]) -> Check {
    let worst = errors.iter().copied().fold(0.0, f64::max);
    (errors.len() == 20 && worst <= 1e-9, format!("{} demos, worst field error {worst:.2e}", errors.len()))
}

fn filter_oracle() -> Check {
    let blank = RgbImage::new(256, 256);
    let mut demo = Demonstration::new("synthetic", 1);
    let injected = [10, 30, 50, 70, 90];
    let mut x = 0.0;
    let mut closed = false;
    for i in 0..100 {
        let stationary = injected.contains(&i);
        // gripper flips in place: stationary but kept
        let flip = i == 40 || i == 60;
        if flip {
            closed = !closed;
        } else if !stationary {
            x += 0.01;
        }
        let state = encode_state(&Pose::from_xyz_rpy([x, 0.8, 0.2], [0.0, 0.0, 0.0]), closed);
        demo.push_state(i as f64 * 0.2, blank.clone(), blank.clone(), state, "pick");
    }
    let once = filter_noop_frames(&demo, FilterTolerance::default());
    let twice = filter_noop_frames(&once, FilterTolerance::default());
    let kept: Vec<f64> = once.frames.iter().map(|f| f.timestamp_s).collect();
    let removed: Vec<usize> = (0..100).filter(|i| !kept.contains(&(*i as f64 * 0.2))).collect();
    let ok = removed == injected && twice == once && once.reconstruction_error() <= 1e-12;
    (ok, format!("removed frames {removed:?}, gripper flips kept, idempotent {}", twice == once))
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Same relative paths with the same bytes; returns the file count when equal.
fn trees_equal(a: &Path, b: &Path) -> Option<usize> {
    let files = files_under(a);
    if files != files_under(b) {
        return None;
    }
    files
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap())
        .then_some(files.len())
}

/// Hash of every scalar bit pattern, string and pixel of a demonstration.
fn digest(d: &Demonstration) -> u64 {
    let mut h = DefaultHasher::new();
    (&d.demo_id, d.task_id, d.capture_hz.to_bits()).hash(&mut h);
    for f in &d.frames {
        (f.step_index, f.timestamp_s.to_bits(), &f.instruction).hash(&mut h);
        f.state.0.map(f64::to_bits).hash(&mut h);
        f.action.0.map(f64::to_bits).hash(&mut h);
        for img in [&f.third_image, &f.wrist_image] {
            (img.width(), img.height(), img.as_raw()).hash(&mut h);
        }
    }
    h.finish()
}

/// What the generator handed to the writers, kept small.
struct GeneratedTask {
    task_id: u8,
    root: PathBuf,
    digests: Vec<u64>,
    /// Reconstruction error of the first 20 demonstrations.
    replay_errors: Vec<f64>,
}

fn generate_task(task_id: u8, tmp: &Path) -> GeneratedTask {
    let (task, arm) = task_arm(task_id, None);
    let count = default_demo_count(task_id).unwrap();
    let root = tmp.join(format!("task{task_id}"));
    let mut digests = Vec::new();
    let mut replay_errors = Vec::new();
    generate_dataset(&arm, &task, &GenerateConfig::new(count, 0), &root, |d| {
        digests.push(digest(d));
        if replay_errors.len() < 20 {
            replay_errors.push(d.reconstruction_error());
        }
    })
    .unwrap();
    GeneratedTask {
        task_id,
        root,
        digests,
        replay_errors,
    }
}

fn dataset_roundtrip(generated: &[GeneratedTask], tmp: &Path) -> Check {
    let mut notes = Vec::new();
    let mut ok = generated.len() == 3;
    for g in generated {
        let expected = default_demo_count(g.task_id).unwrap();
        let mut exact = g.digests.len() == expected;
        for format in [DatasetFormat::Episodic, DatasetFormat::FrameTable] {
            let reader = DatasetReader::open(format_dir(&g.root, format)).unwrap();
            exact &= reader.len() == expected;
            for (i, want) in g.digests.iter().enumerate() {
                exact &= digest(&reader.read(i).unwrap()) == *want;
            }
        }
        ok &= exact;
        notes.push(format!("task {}: {}/{expected}", g.task_id, g.digests.len()));
    }

    // conversion against direct export, on the smallest set
    let root = tmp.join("task3");
    let a_to_b = tmp.join("a_to_b");
    let b_to_a = tmp.join("b_to_a");
    convert_dataset(format_dir(&root, DatasetFormat::Episodic), &a_to_b, DatasetFormat::FrameTable).unwrap();
    convert_dataset(format_dir(&root, DatasetFormat::FrameTable), &b_to_a, DatasetFormat::Episodic).unwrap();
    let stable = trees_equal(&a_to_b, &format_dir(&root, DatasetFormat::FrameTable)).is_some()
        && trees_equal(&b_to_a, &format_dir(&root, DatasetFormat::Episodic)).is_some();
    ok &= stable;
    (ok, format!("{}; A and B imports exact; A<->B conversion byte-stable {stable}", notes.join(", ")))
}

const PERIOD_S: f64 = 0.02;
const CHUNK: usize = 8;
const CYCLES: usize = 20;

/// Zero policy behind injected latency, `CYCLES` full chunks at a fixed
/// step period. Returns the measured Hz and its table row.
fn frequency_run(latency_s: f64) -> (f64, String) {
    let (task, arm) = task_arm(1, None);
    let config = ServerConfig {
        latency: LatencyInjection::fixed(latency_s),
    };
    let server = serve_policy_with(Box::new(ZeroPolicy), "127.0.0.1:0", config).unwrap();
    let mut client = PolicyClient::connect(server.local_addr(), CHUNK).unwrap();
    let control = ControlConfig {
        max_steps: CYCLES * CHUNK,
        step_period_s: PERIOD_S,
        frame_images: FrameImages::LastObservation,
        ..ControlConfig::default()
    };
    let world = reset_task(&arm, &task, 0).unwrap();
    let o = run_control_loop(&world, &arm, &task, &mut client, &control).unwrap();
    client.close();
    server.shutdown();
    let row = measure_frequency(&o.report, "Embuddy", "OpenVLA-OFT (simulated latency)", "CPU");
    (row.frequency_hz.unwrap_or(0.0), row.to_string())
}

/// Injected latency set so one cycle takes `cycle_s`: start from
/// `cycle_s - K * period`, then correct once by the measured excess.
fn tuned_frequency_run(cycle_s: f64) -> (f64, f64, String) {
    let nominal = cycle_s - CHUNK as f64 * PERIOD_S;
    let (hz, _) = frequency_run(nominal);
    let excess = CHUNK as f64 / hz - cycle_s;
    let latency = (nominal - excess).max(0.0);
    let (hz, row) = frequency_run(latency);
    (hz, latency, row)
}

fn protocol_and_loop(expert: &Trials, expert_secs: f64) -> Check {
    let start = Instant::now();
    let (hz_a, _) = frequency_run(0.2);
    let (hz_b, latency_b, row) = tuned_frequency_run(0.3186);
    let secs = expert_secs + start.elapsed().as_secs_f64();
    let ok = expert.successes == 10 && (hz_a - 22.2).abs() <= 0.5 && (hz_b - 25.1).abs() <= 0.2 && secs < 120.0;
    (
        ok,
        format!(
            "expert {}/10; latency 0.2 s -> {hz_a:.2} Hz; latency {latency_b:.4} s (cycle 0.3186 s) -> {hz_b:.2} Hz {row}; {secs:.1} s",
            expert.successes
        ),
    )
}

fn embodiment_gap(expert: &Trials) -> Check {
    let (task, arm) = task_arm(1, None);
    let rigid = run_trials(Box::new(rigid_style_policy(task.clone())), &arm, &task, &seeded_worlds(&arm, &task, 10));
    let (task_pi, arm_pi) = task_arm(1, Some(PI));
    let rigid_pi = run_trials(
        Box::new(rigid_style_policy(task_pi.clone())),
        &arm_pi,
        &task_pi,
        &seeded_worlds(&arm_pi, &task_pi, 10),
    );
    let ok = rigid.successes < expert.successes && rigid.stuck >= 1 && rigid_pi.successes == 10;
    (
        ok,
        format!(
            "rigid {}/10 ({} stuck steps) vs expert {}/10; rigid on pi arm {}/10",
            rigid.successes, rigid.stuck, expert.successes, rigid_pi.successes
        ),
    )
}

fn workspace_failure() -> Check {
    let (task, arm) = task_arm(1, None);
    let ws = Workspace::build(&arm, DEFAULT_SAMPLES);
    let mut placed = Vec::new();
    let worlds: Vec<WorldState> = (0..10)
        .map(|seed| {
            let mut w = reset_task(&arm, &task, seed).unwrap();
            let target = w.objects.iter_mut().find(|o| o.class_label == task.target_object_class).unwrap();
            let origin = Vector3::new(target.position.x, 0.5, target.position.z);
            let edge = ws.farthest_along(&origin, &Vector3::y(), 2.0).unwrap();
            target.position = edge + Vector3::new(0.0, 0.10, 0.0);
            placed.push(target.position.y);
            w
        })
        .collect();
    let r = run_trials(Box::new(scripted_expert_policy(task.clone())), &arm, &task, &worlds);
    let (lo, hi) = placed.iter().fold((f64::MAX, f64::MIN), |(a, b), y| (a.min(*y), b.max(*y)));
    (
        r.successes == 0,
        format!("{}/10 with the target at y in [{lo:.3}, {hi:.3}] m, 10 cm past the hull edge", r.successes),
    )
}

fn determinism(tmp: &Path) -> Check {
    let (task, arm) = task_arm(1, None);
    let roots: Vec<PathBuf> = (0..2).map(|run| tmp.join(format!("det{run}"))).collect();
    for root in &roots {
        generate_dataset(&arm, &task, &GenerateConfig::new(3, 11), root, |_| {}).unwrap();
    }
    let files = trees_equal(&roots[0], &roots[1]);
    let worlds = seeded_worlds(&arm, &task, 3);
    let summary = |t: &Trials| {
        t.outcomes
            .iter()
            .map(|(s, n, k, d)| (*s, *n, *k, d.frames.iter().map(|f| f.state).collect::<Vec<_>>()))
            .collect::<Vec<_>>()
    };
    let a = run_trials(Box::new(scripted_expert_policy(task.clone())), &arm, &task, &worlds);
    let b = run_trials(Box::new(scripted_expert_policy(task.clone())), &arm, &task, &worlds);
    let evals_equal = summary(&a) == summary(&b);
    (
        files.is_some() && evals_equal,
        format!(
            "datasets byte-identical {} ({} files); eval outcomes identical {evals_equal}",
            files.is_some(),
            files.unwrap_or(0)
        ),
    )
}

fn report(name: &str, f: impl FnOnce() -> Check, failures: &mut usize) {
    let start = Instant::now();
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(c) => c,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    if !ok {
        *failures += 1;
    }
    println!(
        "{} {name}: {detail} [{:.1} s]",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = 0;

    report("kinematics roundtrip", kinematics_roundtrip, &mut failures);
    report("straight-arm pose", straight_arm, &mut failures);
    report("angle wrap", wrap_suite, &mut failures);
    report("filter oracle", filter_oracle, &mut failures);

    let (task, arm) = task_arm(1, None);
    let start = Instant::now();
    let expert = run_trials(Box::new(scripted_expert_policy(task.clone())), &arm, &task, &seeded_worlds(&arm, &task, 10));
    let expert_secs = start.elapsed().as_secs_f64();
    report("protocol and control loop", || protocol_and_loop(&expert, expert_secs), &mut failures);
    report("embodiment gap", || embodiment_gap(&expert), &mut failures);
    report("workspace failure mode", workspace_failure, &mut failures);
    report("determinism", || determinism(tmp.path()), &mut failures);

    let start = Instant::now();
    let generated: Vec<GeneratedTask> = [1u8, 2, 3]
        .into_iter()
        .filter_map(|id| catch_unwind(|| generate_task(id, tmp.path())).ok())
        .collect();
    println!("generated and exported tasks 1-3 in {:.1} s", start.elapsed().as_secs_f64());
    let replay_errors = generated.first().map(|g| g.replay_errors.clone()).unwrap_or_default();
    report("trajectory reconstruction", || trajectory_reconstruction(&replay_errors), &mut failures);
    report("dataset roundtrip", || dataset_roundtrip(&generated, tmp.path()), &mut failures);

    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
