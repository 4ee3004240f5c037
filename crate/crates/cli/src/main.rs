//! `softarm`: kinematics, demo generation, policy serving and evaluation,
//! dataset conversion and teleoperation from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 domain failure (including IK
//! non-convergence and failed evaluations).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "softarm", version, about = "Soft continuum arm toolkit")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward kinematics of a configuration.
    Fk(FkArgs),
    /// Inverse kinematics for a target pose.
    Ik(IkArgs),
    /// Record scripted-expert demonstrations and export them in both formats.
    GenDemos(GenArgs),
    /// Serve a built-in policy over the chunk protocol.
    Serve(ServeArgs),
    /// Run seeded episodes against a policy server.
    Eval(EvalArgs),
    /// Convert a dataset between formats.
    Convert(ConvertArgs),
    /// Run a teleoperation session over WebSocket.
    Teleop(TeleopArgs),
}

#[derive(Args, Debug, Clone)]
struct ArmArgs {
    /// Arm spec file (TOML); the built-in three-section arm otherwise.
    #[arg(long)]
    arm: Option<PathBuf>,
    /// Override every section's bend limit, degrees.
    #[arg(long, value_name = "DEG")]
    max_bend_deg: Option<f64>,
}

#[derive(Args, Debug)]
struct FkArgs {
    #[command(flatten)]
    arm: ArmArgs,
    /// Bend angle per section, radians.
    #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
    theta: Vec<f64>,
    /// Joint angle per section, radians (zeros if omitted).
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    phi: Vec<f64>,
}

#[derive(Args, Debug)]
struct IkArgs {
    #[command(flatten)]
    arm: ArmArgs,
    /// Target position x y z, meters.
    #[arg(long, num_args = 3, required = true, allow_negative_numbers = true)]
    target: Vec<f64>,
    /// Target roll pitch yaw, radians. Without it only the position is solved.
    #[arg(long, num_args = 3, allow_negative_numbers = true)]
    rpy: Vec<f64>,
    /// Start configuration as phi theta pairs (straight arm if omitted).
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    start: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

#[derive(Args, Debug)]
struct TaskArgs {
    /// Built-in task id (1, 2 or 3) or a task spec file.
    #[arg(long, default_value = "1")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    arm: ArmArgs,
    /// Demonstrations to record (50, 100 or 20 for the built-in tasks).
    #[arg(long)]
    count: Option<usize>,
    /// Dataset root; gets one subdirectory per format.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    chunk: usize,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// zero, echo, replay, scripted_expert or rigid_style.
    #[arg(long, default_value = "scripted_expert")]
    policy: String,
    /// Task for the scripted policies.
    #[arg(long, default_value = "1")]
    task: String,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, default_value_t = 8765)]
    port: u16,
    /// Fixed inference delay added to every reply, seconds.
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    /// Extra uniform delay in [0, jitter), seconds.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset whose demonstration the replay policy plays.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Index of that demonstration.
    #[arg(long, default_value_t = 0)]
    replay_index: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    arm: ArmArgs,
    /// Policy server address, host:port.
    #[arg(long, default_value = "127.0.0.1:8765")]
    endpoint: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    chunk: usize,
    /// Defaults to the task's limit.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Wall-clock seconds per executed action.
    #[arg(long, default_value_t = 0.0)]
    step_period: f64,
    /// Request timeout, seconds.
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
    /// Do not attach simulator state to observations.
    #[arg(long)]
    no_privileged: bool,
    #[arg(long, default_value = "Embuddy (sim)")]
    platform: String,
    /// Model column of the frequency row; the served policy's name by default.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "CPU")]
    device: String,
    /// Write the latency report here as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    /// Target format: a (episodic) or b (frame_table).
    #[arg(long)]
    format: String,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct TeleopArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    arm: ArmArgs,
    #[arg(long, default_value = "127.0.0.1:8766")]
    bind: String,
    #[arg(long, default_value_t = 5.0)]
    hz: f64,
    /// Send backbone-only packets.
    #[arg(long)]
    no_images: bool,
    /// Dataset root for the recorded demonstrations.
    #[arg(long)]
    out: Option<PathBuf>,
    /// End the session after this many seconds.
    #[arg(long)]
    duration: Option<f64>,
}

/// Why a command failed, mapped to the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(String),
}

impl From<softarm::Error> for Failure {
    fn from(e: softarm::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let json = cli.json;
    let result = match cli.command {
        Command::Fk(a) => commands::fk(a, json),
        Command::Ik(a) => commands::ik(a, json),
        Command::GenDemos(a) => commands::gen_demos(a, json),
        Command::Serve(a) => commands::serve(a, json),
        Command::Eval(a) => commands::eval(a, json),
        Command::Convert(a) => commands::convert(a, json),
        Command::Teleop(a) => commands::teleop(a, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
