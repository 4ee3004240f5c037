use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde_json::{json, Value};
use softarm::dataset::{convert_dataset, import_demos, DatasetFormat};
use softarm::generate::{default_demo_count, generate_dataset, GenerateConfig};
use softarm::kinematics::{backbone_points, forward_kinematics, ik_solve, IkOptions};
use softarm::policy::{
    measure_frequency, policy_by_name, run_control_loop, serve_policy_with, ControlConfig, FrameImages,
    LatencyInjection, LatencyReport, PolicyClient, ServerConfig,
};
use softarm::sim::{reset_task, TaskSpec};
use softarm::teleop::{teleop_session, TeleopConfig};
use softarm::{default_embuddy_spec, ArmSpec, Configuration, Pose};

use crate::{ArmArgs, CmdResult, ConvertArgs, EvalArgs, Failure, FkArgs, GenArgs, IkArgs, ServeArgs, TeleopArgs};

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{} does not exist", path.display())))
    }
}

fn load_arm(args: &ArmArgs) -> Result<ArmSpec, Failure> {
    let arm = match &args.arm {
        Some(path) => {
            require_file(path)?;
            ArmSpec::load(path)?
        }
        None => default_embuddy_spec(),
    };
    match args.max_bend_deg {
        Some(deg) if !(deg > 0.0 && deg <= 180.0) => Err(usage(format!("--max-bend-deg must be in (0, 180], got {deg}"))),
        Some(deg) => Ok(arm.with_uniform_limit(deg.to_radians())),
        None => Ok(arm),
    }
}

/// A built-in id or the path of a task file.
fn load_task(spec: &str) -> Result<TaskSpec, Failure> {
    if let Ok(id) = spec.parse::<u8>() {
        return TaskSpec::builtin(id).ok_or_else(|| usage(format!("no built-in task {id} (expected 1, 2 or 3)")));
    }
    let path = Path::new(spec);
    require_file(path)?;
    Ok(TaskSpec::load(path)?)
}

/// One JSON document per line; a closed stdout is not an error.
fn print_json(value: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{value}");
}

fn pose_json(p: &Pose) -> Value {
    json!({ "position": [p.position.x, p.position.y, p.position.z], "rpy": p.rpy() })
}

fn pairs_json(q: &Configuration) -> Value {
    json!(q.sections.iter().map(|s| json!({ "phi": s.phi, "theta": s.theta })).collect::<Vec<_>>())
}

fn fmt3(v: [f64; 3]) -> String {
    // + 0.0 turns -0.0 into 0.0
    format!("{:.6} {:.6} {:.6}", v[0] + 0.0, v[1] + 0.0, v[2] + 0.0)
}

pub fn fk(args: FkArgs, json: bool) -> CmdResult {
    let arm = load_arm(&args.arm)?;
    let n = arm.section_count();
    if args.theta.len() != n {
        return Err(usage(format!("--theta needs {n} values, got {}", args.theta.len())));
    }
    let phi = if args.phi.is_empty() { vec![0.0; n] } else { args.phi.clone() };
    if phi.len() != n {
        return Err(usage(format!("--phi needs {n} values, got {}", phi.len())));
    }
    let pairs: Vec<(f64, f64)> = phi.into_iter().zip(args.theta.iter().copied()).collect();
    let q = Configuration::from_pairs(&pairs);
    let pose = forward_kinematics(&arm, &q)?;
    let within = q.within_limits(&arm);
    if json {
        let backbone: Vec<[f64; 3]> = backbone_points(&arm, &q)?.iter().map(|p| [p.x, p.y, p.z]).collect();
        print_json(&json!({
            "pose": pose_json(&pose),
            "within_limits": within,
            "configuration": pairs_json(&q),
            "backbone": backbone,
        }));
    } else {
        println!("position {}", fmt3(pose.position.into()));
        println!("rpy      {}", fmt3(pose.rpy()));
        if !within {
            println!("note: configuration exceeds the bend limits");
        }
    }
    Ok(())
}

pub fn ik(args: IkArgs, json: bool) -> CmdResult {
    let arm = load_arm(&args.arm)?;
    let n = arm.section_count();
    let q0 = if args.start.is_empty() {
        arm.straight()
    } else if args.start.len() == 2 * n {
        Configuration::from_flat(&args.start)?
    } else {
        return Err(usage(format!("--start needs {} values (phi theta per section)", 2 * n)));
    };
    let position_only = args.rpy.is_empty();
    let rpy = if position_only { [0.0; 3] } else { [args.rpy[0], args.rpy[1], args.rpy[2]] };
    let target = Pose::from_xyz_rpy([args.target[0], args.target[1], args.target[2]], rpy);
    let opts = IkOptions {
        max_iters: args.max_iters,
        ..if position_only { IkOptions::position_only() } else { IkOptions::default() }
    };
    let result = ik_solve(&arm, &q0, &target, &opts)?;
    let reached = forward_kinematics(&arm, &result.configuration)?;
    if json {
        print_json(&json!({
            "converged": result.converged,
            "position_only": position_only,
            "position_error": result.position_error,
            "orientation_error": result.orientation_error,
            "iterations": result.iterations,
            "configuration": pairs_json(&result.configuration),
            "pose": pose_json(&reached),
        }));
    } else {
        for (i, s) in result.configuration.sections.iter().enumerate() {
            println!("section {i}: phi {:.6} theta {:.6}", s.phi, s.theta);
        }
        println!("position {}", fmt3(reached.position.into()));
        println!("rpy      {}", fmt3(reached.rpy()));
        println!(
            "position error {:.3e} m, orientation error {:.3e} rad, {} iterations",
            result.position_error, result.orientation_error, result.iterations
        );
    }
    if result.converged {
        Ok(())
    } else {
        Err(Failure::Domain(format!(
            "IK did not converge (position error {:.4} m, orientation error {:.4} rad)",
            result.position_error, result.orientation_error
        )))
    }
}

pub fn gen_demos(args: GenArgs, json: bool) -> CmdResult {
    let task = load_task(&args.task.task)?;
    let arm = task.scene_arm(&load_arm(&args.arm)?);
    let count = match args.count.or_else(|| default_demo_count(task.task_id)) {
        Some(c) => c,
        None => return Err(usage(format!("task {} has no default demo count; pass --count", task.task_id))),
    };
    if count == 0 {
        return Err(usage("--count must be positive"));
    }
    if args.chunk == 0 {
        return Err(usage("--chunk must be positive"));
    }
    let config = GenerateConfig {
        chunk_size: args.chunk,
        max_steps: task.max_steps,
        ..GenerateConfig::new(count, args.task.seed)
    };
    let generated = generate_dataset(&arm, &task, &config, &args.out, |d| {
        log::info!("recorded {} ({} frames)", d.demo_id, d.len());
    })?;
    let dirs: Vec<_> = generated.exports.iter().map(|e| e.root.clone()).collect();
    if json {
        print_json(&json!({
            "task_id": task.task_id,
            "demos": generated.demos,
            "frames": generated.frames,
            "skipped_seeds": generated.skipped_seeds,
            "datasets": dirs,
        }));
    } else {
        println!(
            "recorded {} demos ({} frames) for task {}; skipped seeds {:?}",
            generated.demos, generated.frames, task.task_id, generated.skipped_seeds
        );
        for d in &dirs {
            println!("wrote {}", d.display());
        }
    }
    Ok(())
}

pub fn serve(args: ServeArgs, json: bool) -> CmdResult {
    if !(args.latency >= 0.0 && args.jitter >= 0.0) {
        return Err(usage("--latency and --jitter must be non-negative"));
    }
    let task = load_task(&args.task)?;
    let replay = match &args.replay {
        Some(path) => {
            require_file(path)?;
            let demos = import_demos(path)?;
            let n = demos.len();
            Some(
                demos
                    .into_iter()
                    .nth(args.replay_index)
                    .ok_or_else(|| usage(format!("--replay-index {} out of range ({n} demos)", args.replay_index)))?,
            )
        }
        None => None,
    };
    let policy = policy_by_name(&args.policy, Some(&task), replay.as_ref())?;
    let config = ServerConfig {
        latency: LatencyInjection {
            fixed_s: args.latency,
            jitter_s: args.jitter,
            seed: args.seed,
        },
    };
    let server = serve_policy_with(policy, (args.bind.as_str(), args.port), config)?;
    let addr = server.local_addr();
    if json {
        print_json(&json!({ "listening": addr.to_string(), "policy": args.policy }));
    } else {
        println!("serving {} on {addr}", args.policy);
    }
    std::io::stdout().flush()?;
    server.wait();
    Ok(())
}

/// Merges per-trial reports into one run.
fn merge_reports(reports: &[LatencyReport], chunk_size: usize) -> LatencyReport {
    let mut total = LatencyReport::new(chunk_size);
    for r in reports {
        total.total_steps += r.total_steps;
        total.wall_time_s += r.wall_time_s;
        total.per_request_latency_s.extend(&r.per_request_latency_s);
        total.complete &= r.complete;
        if total.error.is_none() {
            total.error = r.error.clone();
        }
    }
    if total.total_steps > 0 && total.wall_time_s > 0.0 {
        total.effective_hz = total.total_steps as f64 / total.wall_time_s;
    }
    total
}

pub fn eval(args: EvalArgs, json: bool) -> CmdResult {
    if args.trials == 0 || args.chunk == 0 {
        return Err(usage("--trials and --chunk must be positive"));
    }
    if !(args.step_period >= 0.0) || !(args.timeout > 0.0) {
        return Err(usage("--step-period must be non-negative and --timeout positive"));
    }
    let task = load_task(&args.task.task)?;
    let arm = task.scene_arm(&load_arm(&args.arm)?);
    let config = ControlConfig {
        max_steps: args.max_steps.unwrap_or(task.max_steps),
        step_period_s: args.step_period,
        send_privileged: !args.no_privileged,
        frame_images: FrameImages::LastObservation,
        ..ControlConfig::default()
    };
    let timeout = Duration::from_secs_f64(args.timeout);

    let mut trials = Vec::new();
    let mut reports = Vec::new();
    let mut model = args.model.clone();
    let mut aborted = None;
    for k in 0..args.trials {
        let seed = args.task.seed + k as u64;
        let mut client = match PolicyClient::connect_with_timeout(args.endpoint.as_str(), args.chunk, timeout) {
            Ok(c) => c,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        model.get_or_insert_with(|| client.policy_name().to_string());
        let world = reset_task(&arm, &task, seed)?;
        let outcome = run_control_loop(&world, &arm, &task, &mut client, &config)?;
        client.close();
        if outcome.stuck_steps > 0 {
            log::warn!("seed {seed}: arm could not follow {} commanded steps", outcome.stuck_steps);
        }
        if !json {
            println!(
                "trial {k} seed {seed}: {} in {} steps, stuck {}",
                if outcome.success { "success" } else { "failure" },
                outcome.report.total_steps,
                outcome.stuck_steps
            );
        }
        trials.push(json!({
            "seed": seed,
            "success": outcome.success,
            "steps": outcome.report.total_steps,
            "stuck_steps": outcome.stuck_steps,
            "complete": outcome.report.complete,
        }));
        let incomplete = outcome.report.error.clone();
        reports.push(outcome.report);
        if let Some(e) = incomplete {
            aborted = Some(e);
            break;
        }
    }

    let successes = trials.iter().filter(|t| t["success"] == true).count();
    let stuck_events: usize = trials.iter().map(|t| t["stuck_steps"].as_u64().unwrap_or(0) as usize).sum();
    let report = merge_reports(&reports, args.chunk);
    let row = measure_frequency(&report, &args.platform, model.as_deref().unwrap_or("unknown"), &args.device);
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, text)?;
    }
    if json {
        print_json(&json!({
            "task_id": task.task_id,
            "successes": successes,
            "trials": trials.len(),
            "requested_trials": args.trials,
            "partial": aborted.is_some(),
            "stuck_events": stuck_events,
            "mean_latency_s": report.mean_latency_s(),
            "frequency": row,
            "per_trial": trials,
        }));
    } else {
        println!("{successes}/{}", trials.len());
        println!("stuck events: {stuck_events}");
        println!("{}", row);
    }
    match aborted {
        Some(e) => Err(Failure::Domain(format!(
            "evaluation stopped after {} of {} trials: {e}",
            trials.len(),
            args.trials
        ))),
        None => Ok(()),
    }
}

pub fn convert(args: ConvertArgs, json: bool) -> CmdResult {
    require_file(&args.input)?;
    let format: DatasetFormat = args.format.parse().map_err(usage)?;
    let summary = convert_dataset(&args.input, &args.output, format)?;
    if json {
        print_json(&serde_json::to_value(&summary).expect("summary serializes"));
    } else {
        println!(
            "wrote {} demos ({} frames) as {} to {}",
            summary.demos,
            summary.frames,
            summary.format,
            summary.root.display()
        );
    }
    Ok(())
}

pub fn teleop(args: TeleopArgs, json: bool) -> CmdResult {
    if !(args.hz > 0.0) {
        return Err(usage("--hz must be positive"));
    }
    if let Some(d) = args.duration {
        if !(d > 0.0) {
            return Err(usage("--duration must be positive"));
        }
    }
    let task = load_task(&args.task.task)?;
    let arm = task.scene_arm(&load_arm(&args.arm)?);
    let config = TeleopConfig {
        hz: args.hz,
        images: !args.no_images,
        max_duration_s: args.duration,
        out: args.out.clone(),
        ..TeleopConfig::default()
    };
    if !json {
        println!("teleop on ws://{}/ at {} Hz", args.bind, args.hz);
        std::io::stdout().flush()?;
    }
    let summary = teleop_session(&arm, &task, args.task.seed, args.bind.as_str(), config)?;
    if json {
        print_json(&json!({
            "ticks": summary.ticks,
            "demos": summary.demos.iter().map(|d| json!({ "demo_id": d.demo_id, "frames": d.len() })).collect::<Vec<_>>(),
            "malformed_commands": summary.malformed_commands,
            "held_ticks": summary.held_ticks,
            "mean_tick_interval_s": summary.mean_tick_interval_s,
            "datasets": summary.exported,
        }));
    } else {
        println!(
            "{} ticks, {} demos, {} malformed commands",
            summary.ticks,
            summary.demos.len(),
            summary.malformed_commands
        );
        for d in &summary.exported {
            println!("wrote {}", d.display());
        }
    }
    Ok(())
}
