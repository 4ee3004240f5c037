use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use tungstenite::{Message as WsMessage, WebSocket};

use super::{
    integrate_twist_with, ClientMessage, DemoSummary, ObjectPacket, PosePacket, RecordMark, ServerMessage,
    TeleopFramePacket, TwistCaps, TwistCommand, COMMAND_HOLD_S, TELEOP_PROTOCOL_VERSION,
};
use crate::arm::ArmSpec;
use crate::capture::CameraRig;
use crate::dataset::{encode_action, encode_state, filter_noop_frames, Demonstration, FilterTolerance, DEFAULT_CAPTURE_HZ};
use crate::error::{domain, Error, Result};
use crate::generate::export_both;
use crate::image::RgbImage;
use crate::kinematics::backbone_points;
use crate::sim::{end_effector_pose, reset_task, step, TaskSpec, WorldState};

const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone)]
pub struct TeleopConfig {
    pub hz: f64,
    /// Stream camera images in the packets.
    pub images: bool,
    pub caps: TwistCaps,
    pub hold_after_s: f64,
    /// Ends the session after this long even without an `end` message.
    pub max_duration_s: Option<f64>,
    /// Dataset root; recorded demonstrations are exported in both formats.
    pub out: Option<PathBuf>,
    pub rig: CameraRig,
    pub filter: FilterTolerance,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self {
            hz: DEFAULT_CAPTURE_HZ,
            images: true,
            caps: TwistCaps::default(),
            hold_after_s: COMMAND_HOLD_S,
            max_duration_s: None,
            out: None,
            rig: CameraRig::default(),
            filter: FilterTolerance::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TeleopSummary {
    pub ticks: u64,
    pub demos: Vec<Demonstration>,
    pub malformed_commands: usize,
    /// Ticks spent holding because no command arrived in time.
    pub held_ticks: u64,
    pub mean_tick_interval_s: f64,
    pub exported: Vec<PathBuf>,
}

/// Commands waiting for the next tick. The twist is latest-wins; toggles and
/// record marks accumulate so quick presses are not lost.
#[derive(Debug, Default)]
struct Mailbox {
    twist: TwistCommand,
    last_command: Option<Instant>,
    toggles: usize,
    marks: Vec<RecordMark>,
    end: bool,
}

#[derive(Default)]
struct Outbox {
    latest: Option<Arc<TeleopFramePacket>>,
    end: Option<Arc<String>>,
}

struct Shared {
    mailbox: Mutex<Mailbox>,
    outbox: Mutex<Outbox>,
    malformed: AtomicUsize,
    stop: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// A running session. The simulator ticks from the moment it starts,
/// whether or not a client is connected.
pub struct TeleopServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    ticker: Option<JoinHandle<Result<TeleopSummary>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl TeleopServer {
    pub fn start(arm: &ArmSpec, task: &TaskSpec, seed: u64, bind: impl ToSocketAddrs, config: TeleopConfig) -> Result<Self> {
        if !(config.hz > 0.0) || !config.hz.is_finite() {
            return Err(domain("tick rate must be positive"));
        }
        if let Some(out) = &config.out {
            if out.exists() && out.read_dir()?.next().is_some() {
                return Err(domain(format!("output directory {} is not empty", out.display())));
            }
        }
        let world = reset_task(arm, task, seed)?;
        let listener = TcpListener::bind(bind).map_err(|e| Error::Transport(format!("bind: {e}")))?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            mailbox: Mutex::new(Mailbox::default()),
            outbox: Mutex::new(Outbox::default()),
            malformed: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });

        let acceptor = {
            let shared = shared.clone();
            let images = config.images;
            std::thread::spawn(move || accept_loop(listener, shared, images))
        };
        let ticker = {
            let shared = shared.clone();
            let arm = arm.clone();
            let task = task.clone();
            std::thread::spawn(move || {
                let out = tick_loop(world, &arm, &task, seed, &config, &shared);
                shared.stop.store(true, Ordering::SeqCst);
                out
            })
        };
        Ok(Self {
            addr,
            shared,
            ticker: Some(ticker),
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}/", self.addr)
    }

    /// Ends the session as if a client had sent `end`.
    pub fn request_end(&self) {
        lock(&self.shared.mailbox).end = true;
    }

    /// Blocks until the session ends and returns its summary.
    pub fn wait(mut self) -> Result<TeleopSummary> {
        let out = match self.ticker.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(domain("teleop tick loop panicked"))),
            None => Err(domain("session already collected")),
        };
        self.finish();
        out
    }

    fn finish(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
    }
}

impl Drop for TeleopServer {
    fn drop(&mut self) {
        self.request_end();
        if let Some(t) = self.ticker.take() {
            let _ = t.join();
        }
        self.finish();
    }
}

/// Runs a whole session on `bind` and returns when a client ends it (or
/// the configured duration passes).
pub fn teleop_session(
    arm: &ArmSpec,
    task: &TaskSpec,
    seed: u64,
    bind: impl ToSocketAddrs,
    config: TeleopConfig,
) -> Result<TeleopSummary> {
    let server = TeleopServer::start(arm, task, seed, bind, config)?;
    log::info!("teleop session listening on {}", server.url());
    server.wait()
}

fn state_of(world: &WorldState, arm: &ArmSpec) -> Result<crate::dataset::StateVector> {
    Ok(encode_state(&end_effector_pose(world, arm)?, !world.gripper_open))
}

fn tick_loop(
    mut world: WorldState,
    arm: &ArmSpec,
    task: &TaskSpec,
    seed: u64,
    config: &TeleopConfig,
    shared: &Shared,
) -> Result<TeleopSummary> {
    let period = Duration::from_secs_f64(1.0 / config.hz);
    let dt = 1.0 / config.hz;
    let hold = Duration::from_secs_f64(config.hold_after_s);
    let instruction = task.instruction.as_str();
    let start = Instant::now();
    let mut demos: Vec<Demonstration> = Vec::new();
    let mut recording: Option<Demonstration> = None;
    let mut gripper_closed = !world.gripper_open;
    let mut held_ticks = 0;
    let mut tick_starts: Vec<Instant> = Vec::new();
    let mut tick: u64 = 0;

    let finalize = |demo: Demonstration, demos: &mut Vec<Demonstration>| {
        let filtered = filter_noop_frames(&demo, config.filter);
        log::info!("demonstration {} kept {} of {} frames", filtered.demo_id, filtered.len(), demo.len());
        demos.push(filtered);
    };

    loop {
        let now = Instant::now();
        let timed_out = config.max_duration_s.is_some_and(|d| now.duration_since(start).as_secs_f64() >= d);
        let (cmd, toggles, marks, end, holding) = {
            let mut m = lock(&shared.mailbox);
            let fresh = m.last_command.is_some_and(|t| now.duration_since(t) < hold);
            let cmd = if fresh { m.twist } else { TwistCommand::zero() };
            (cmd, std::mem::take(&mut m.toggles), std::mem::take(&mut m.marks), m.end, !fresh)
        };
        if end || timed_out || shared.stop.load(Ordering::SeqCst) {
            break;
        }
        tick_starts.push(now);
        if holding {
            held_ticks += 1;
        }

        for mark in marks {
            match mark {
                RecordMark::Start if recording.is_none() => {
                    let mut d = Demonstration::new(
                        format!("teleop_task{}_seed{seed}_{}", task.task_id, demos.len()),
                        task.task_id,
                    );
                    d.capture_hz = config.hz;
                    recording = Some(d);
                }
                RecordMark::Stop => {
                    if let Some(d) = recording.take().filter(|d| !d.is_empty()) {
                        finalize(d, &mut demos);
                    }
                }
                RecordMark::Discard => recording = None,
                _ => {}
            }
        }
        if toggles % 2 == 1 {
            gripper_closed = !gripper_closed;
        }

        let current = end_effector_pose(&world, arm)?;
        let target = integrate_twist_with(&current, &cmd, dt, &config.caps)?;
        let action = encode_action(&state_of(&world, arm)?, &encode_state(&target, gripper_closed));
        world = step(&world, arm, &action, dt)?;

        let state = state_of(&world, arm)?;
        let images = if recording.is_some() || config.images {
            Some(config.rig.capture(&world, arm)?)
        } else {
            None
        };
        if let (Some(demo), Some((third, wrist))) = (recording.as_mut(), images.as_ref()) {
            demo.push_state(world.time_s, third.clone(), wrist.clone(), state, instruction);
        }

        let packet = frame_packet(
            &world,
            arm,
            tick,
            recording.as_ref().map_or(0, |d| d.len()),
            recording.is_some(),
            demos.len(),
            shared.malformed.load(Ordering::Relaxed),
            holding,
            images.as_ref().filter(|_| config.images),
        )?;
        lock(&shared.outbox).latest = Some(Arc::new(packet));
    
        tick += 1;
        let next = start + period * tick as u32;
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
        }
    }

    if let Some(d) = recording.take().filter(|d| !d.is_empty()) {
        finalize(d, &mut demos);
    }
    let malformed_commands = shared.malformed.load(Ordering::Relaxed);
    let end = ServerMessage::SessionEnd {
        ticks: tick,
        demos: demos
            .iter()
            .map(|d| DemoSummary {
                demo_id: d.demo_id.clone(),
                frames: d.len(),
            })
            .collect(),
        malformed_commands,
    };
    lock(&shared.outbox).end = Some(Arc::new(serde_json::to_string(&end).expect("summary serializes")));

    let exported = match (&config.out, demos.is_empty()) {
        (Some(root), false) => export_both(&demos, root)?,
        _ => Vec::new(),
    };
    let mean_tick_interval_s = if tick_starts.len() > 1 {
        tick_starts.last().unwrap().duration_since(tick_starts[0]).as_secs_f64() / (tick_starts.len() - 1) as f64
    } else {
        0.0
    };
    Ok(TeleopSummary {
        ticks: tick,
        demos,
        malformed_commands,
        held_ticks,
        mean_tick_interval_s,
        exported,
    })
}

#[allow(clippy::too_many_arguments)]
fn frame_packet(
    world: &WorldState,
    arm: &ArmSpec,
    tick: u64,
    frame_count: usize,
    recording: bool,
    demos_recorded: usize,
    malformed_commands: usize,
    holding: bool,
    images: Option<&(RgbImage, RgbImage)>,
) -> Result<TeleopFramePacket> {
    let ee = end_effector_pose(world, arm)?;
    let mut backbone: Vec<[f64; 3]> = backbone_points(arm, &world.arm_config)?
        .iter()
        .map(|p| [p.x, p.y, p.z])
        .collect();
    let tip = [ee.position.x, ee.position.y, ee.position.z];
    match backbone.last_mut() {
        Some(last) if (0..3).all(|i| (last[i] - tip[i]).abs() <= 1e-9) => *last = tip,
        _ => backbone.push(tip),
    }
    let png = |img: &RgbImage| BASE64.encode(img.to_png());
    Ok(TeleopFramePacket {
        protocol_version: TELEOP_PROTOCOL_VERSION,
        tick,
        time_s: world.time_s,
        backbone,
        ee_pose: PosePacket {
            position: tip,
            rpy: ee.rpy(),
        },
        gripper_open: world.gripper_open,
        attached_object: world.attached_object.clone(),
        objects: world
            .objects
            .iter()
            .map(|o| ObjectPacket {
                id: o.id.clone(),
                class: o.class_label,
                position: [o.position.x, o.position.y, o.position.z],
                radius: o.radius,
                color: o.color,
            })
            .collect(),
        recording,
        frame_count,
        demos_recorded,
        malformed_commands,
        holding,
        third_image: images.map(|(t, _)| png(t)),
        wrist_image: images.map(|(_, w)| png(w)),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, images: bool) {
    let mut handlers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("teleop client {peer}");
                let shared = shared.clone();
                handlers.retain(|h| !h.is_finished());
                handlers.push(std::thread::spawn(move || {
                    if let Err(e) = serve_client(stream, &shared, images) {
                        log::info!("teleop client {peer} left: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(POLL);
            }
        }
    }
    for h in handlers {
        let _ = h.join();
    }
}

fn ws_error(e: tungstenite::Error) -> Error {
    Error::Transport(e.to_string())
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn serve_client(stream: TcpStream, shared: &Shared, images_default: bool) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| Error::Transport(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut images = images_default;
    let mut last_sent: Option<u64> = None;

    loop {
        let (packet, end) = {
            let outbox = lock(&shared.outbox);
            (outbox.latest.clone(), outbox.end.clone())
        };
        if let Some(p) = packet.filter(|p| last_sent.map_or(true, |t| p.tick > t)) {
            last_sent = Some(p.tick);
            let mut p = (*p).clone();
            if !images {
                p.third_image = None;
                p.wrist_image = None;
            }
            let text = serde_json::to_string(&ServerMessage::Frame(Box::new(p))).expect("packet serializes");
            ws.send(WsMessage::text(text)).map_err(ws_error)?;
        }
        if let Some(end) = end {
            ws.send(WsMessage::text(end.as_str())).map_err(ws_error)?;
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        if shared.stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            return Ok(());
        }
        match ws.read() {
            Ok(WsMessage::Text(text)) => handle_command(&text, shared, &mut images),
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(e) => return Err(ws_error(e)),
        }
    }
}

fn handle_command(text: &str, shared: &Shared, images: &mut bool) {
    match serde_json::from_str::<ClientMessage>(text) {
        Ok(ClientMessage::Twist(cmd)) if cmd.is_finite() => {
            let mut m = lock(&shared.mailbox);
            m.twist = cmd;
            m.last_command = Some(Instant::now());
            if cmd.gripper_toggle {
                m.toggles += 1;
            }
            if cmd.record_mark != RecordMark::None {
                m.marks.push(cmd.record_mark);
            }
        }
        Ok(ClientMessage::Configure { images: on }) => *images = on,
        Ok(ClientMessage::End) => lock(&shared.mailbox).end = true,
        _ => {
            let n = shared.malformed.fetch_add(1, Ordering::Relaxed) + 1;
            log::debug!("ignoring malformed command #{n}");
        }
    }
}
