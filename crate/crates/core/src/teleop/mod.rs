//! Simulated teleoperation: twist commands in, frame packets out, over a
//! WebSocket. Demonstrations are recorded between start and stop marks.
//!
//! Client to server, JSON text messages tagged by `type`:
//! - `twist`: `linear` [m/s; 3], `angular` [rad/s; 3], `gripper_toggle`,
//!   `record_mark` (`none`, `start`, `stop` or `discard`)
//! - `configure`: `images` (false asks for backbone-only packets)
//! - `end`: finish the session
//!
//! Server to client: `frame` packets every tick and one `session_end`.

mod client;
mod session;

use serde::{Deserialize, Deserializer, Serialize};

use crate::angle::wrap;
use crate::error::{domain, Result};
use crate::pose::Pose;
use crate::sim::ObjectClass;

pub use client::{run_scripted_client, ClientLog};
pub use session::{teleop_session, TeleopConfig, TeleopServer, TeleopSummary};

pub const TELEOP_PROTOCOL_VERSION: u32 = 1;
/// Seconds of client silence after which the arm holds still.
pub const COMMAND_HOLD_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistCaps {
    /// m/s per component.
    pub linear: f64,
    /// rad/s per component.
    pub angular: f64,
}

impl Default for TwistCaps {
    fn default() -> Self {
        Self {
            linear: 0.05,
            angular: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMark {
    #[default]
    None,
    Start,
    Stop,
    Discard,
}

fn mark_or_none<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<RecordMark, D::Error> {
    Ok(Option::<RecordMark>::deserialize(d)?.unwrap_or_default())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TwistCommand {
    #[serde(default)]
    pub linear: [f64; 3],
    #[serde(default)]
    pub angular: [f64; 3],
    #[serde(default)]
    pub gripper_toggle: bool,
    #[serde(default, deserialize_with = "mark_or_none")]
    pub record_mark: RecordMark,
}

impl TwistCommand {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn linear(vx: f64, vy: f64, vz: f64) -> Self {
        Self {
            linear: [vx, vy, vz],
            ..Self::default()
        }
    }

    pub fn mark(record_mark: RecordMark) -> Self {
        Self {
            record_mark,
            ..Self::default()
        }
    }

    pub fn toggle() -> Self {
        Self {
            gripper_toggle: true,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(&self.angular).all(|v| v.is_finite())
    }

    /// Clamps every component to its cap.
    pub fn capped(&self, caps: &TwistCaps) -> Self {
        Self {
            linear: self.linear.map(|v| v.clamp(-caps.linear, caps.linear)),
            angular: self.angular.map(|v| v.clamp(-caps.angular, caps.angular)),
            ..*self
        }
    }
}

/// Target pose after applying `cmd` for `dt` seconds with the default caps.
pub fn integrate_twist(pose: &Pose, cmd: &TwistCommand, dt: f64) -> Result<Pose> {
    integrate_twist_with(pose, cmd, dt, &TwistCaps::default())
}

pub fn integrate_twist_with(pose: &Pose, cmd: &TwistCommand, dt: f64, caps: &TwistCaps) -> Result<Pose> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(domain(format!("dt must be positive, got {dt}")));
    }
    if !cmd.is_finite() || !pose.is_finite() {
        return Err(domain("NaN or infinite value in twist integration"));
    }
    let c = cmd.capped(caps);
    let mut out = *pose;
    for i in 0..3 {
        out.position[i] += c.linear[i] * dt;
    }
    out.roll = wrap(pose.roll + c.angular[0] * dt);
    out.pitch = wrap(pose.pitch + c.angular[1] * dt);
    out.yaw = wrap(pose.yaw + c.angular[2] * dt);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Twist(TwistCommand),
    Configure { images: bool },
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosePacket {
    pub position: [f64; 3],
    pub rpy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPacket {
    pub id: String,
    pub class: ObjectClass,
    pub position: [f64; 3],
    pub radius: f64,
    pub color: [u8; 3],
}

/// Snapshot streamed to clients after every tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopFramePacket {
    pub protocol_version: u32,
    pub tick: u64,
    pub time_s: f64,
    /// Base to gripper point; the last point is `ee_pose.position`.
    pub backbone: Vec<[f64; 3]>,
    pub ee_pose: PosePacket,
    pub gripper_open: bool,
    pub attached_object: Option<String>,
    pub objects: Vec<ObjectPacket>,
    pub recording: bool,
    /// Frames in the demonstration being recorded.
    pub frame_count: usize,
    pub demos_recorded: usize,
    pub malformed_commands: usize,
    /// True while the arm holds because the client went quiet.
    pub holding: bool,
    /// Base64 PNG, 256x256.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub third_image: Option<String>,
    /// Base64 PNG, 256x256, mirrored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrist_image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub demo_id: String,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(Box<TeleopFramePacket>),
    SessionEnd {
        ticks: u64,
        demos: Vec<DemoSummary>,
        malformed_commands: usize,
    },
}
