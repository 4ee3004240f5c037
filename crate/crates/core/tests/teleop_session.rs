use std::time::Duration;

use softarm::dataset::{filter_noop_frames, import_demos, DatasetFormat, FilterTolerance};
use softarm::generate::format_dir;
use softarm::sim::TaskSpec;
use softarm::teleop::{
    run_scripted_client, RecordMark, ServerMessage, TeleopConfig, TeleopServer, TwistCommand,
};
use softarm::{default_embuddy_spec, ArmSpec};
use tungstenite::Message;

fn task_arm() -> (TaskSpec, ArmSpec) {
    let task = TaskSpec::builtin(1).unwrap();
    let arm = task.scene_arm(&default_embuddy_spec());
    (task, arm)
}

fn fast(images: bool) -> TeleopConfig {
    TeleopConfig {
        hz: 20.0,
        images,
        max_duration_s: Some(30.0),
        ..TeleopConfig::default()
    }
}

const TIMEOUT: Duration = Duration::from_secs(10);

#[test]
fn zero_twists_while_recording_filter_to_one_frame() {
    let (task, arm) = task_arm();
    let server = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", fast(false)).unwrap();
    let mut script = vec![TwistCommand::mark(RecordMark::Start)];
    script.extend(std::iter::repeat(TwistCommand::zero()).take(9));
    script.push(TwistCommand::mark(RecordMark::Stop));
    run_scripted_client(&server.url(), &script, false, TIMEOUT).unwrap();
    let summary = server.wait().unwrap();
    assert_eq!(summary.demos.len(), 1);
    assert_eq!(summary.demos[0].len(), 1);
}

#[test]
fn one_second_of_constant_twist_at_capture_rate() {
    let (task, arm) = task_arm();
    let config = TeleopConfig {
        max_duration_s: Some(30.0),
        images: false,
        ..TeleopConfig::default()
    };
    let server = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", config).unwrap();
    let mut script = vec![TwistCommand::mark(RecordMark::Start)];
    script.extend(vec![TwistCommand::linear(-0.05, 0.0, 0.0); 5]);
    script.push(TwistCommand::mark(RecordMark::Stop));
    run_scripted_client(&server.url(), &script, false, TIMEOUT).unwrap();
    let summary = server.wait().unwrap();
    let demo = &summary.demos[0];
    let dx = demo.frames.last().unwrap().state.0[0] - demo.frames[0].state.0[0];
    assert!((dx + 0.05).abs() < 0.005, "dx {dx}");
}

#[test]
fn fifty_frame_recording_replays_and_exports() {
    let (task, arm) = task_arm();
    let out = tempfile::tempdir().unwrap();
    let root = out.path().join("teleop");
    let config = TeleopConfig {
        out: Some(root.clone()),
        max_duration_s: Some(60.0),
        ..TeleopConfig::default()
    };
    let server = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", config).unwrap();
    let mut script = vec![TwistCommand::mark(RecordMark::Start)];
    for k in 0..52 {
        let s = if k < 26 { 1.0 } else { -1.0 };
        script.push(TwistCommand {
            linear: [-0.03, 0.0, 0.02 * s],
            angular: [0.0, 0.0, 0.1 * s],
            ..TwistCommand::zero()
        });
    }
    script.push(TwistCommand::mark(RecordMark::Stop));
    let log = run_scripted_client(&server.url(), &script, true, TIMEOUT).unwrap();
    let summary = server.wait().unwrap();

    let demo = &summary.demos[0];
    assert!(demo.len() >= 50, "{}", demo.len());
    assert!(demo.reconstruction_error() <= 1e-9);
    assert_eq!(filter_noop_frames(demo, FilterTolerance::default()), *demo);
    assert!((summary.mean_tick_interval_s - 0.2).abs() <= 0.02);

    for p in &log.packets {
        let tip = p.backbone.last().unwrap();
        for i in 0..3 {
            assert!((tip[i] - p.ee_pose.position[i]).abs() <= 1e-9);
        }
        assert!(p.third_image.is_some() && p.wrist_image.is_some());
    }
    assert!(log.first_packet_s.unwrap() < 1.0);

    for format in [DatasetFormat::Episodic, DatasetFormat::FrameTable] {
        let back = import_demos(format_dir(&root, format)).unwrap();
        assert_eq!(back, summary.demos);
    }
}

#[test]
fn gripper_toggle_grasps_and_shows_in_next_packet() {
    let (task, arm) = task_arm();
    let server = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", fast(false)).unwrap();
    let mut script = vec![TwistCommand::zero(); 2];
    script.push(TwistCommand::toggle());
    script.extend(vec![TwistCommand::zero(); 2]);
    let log = run_scripted_client(&server.url(), &script, false, TIMEOUT).unwrap();
    server.wait().unwrap();
    // the toggle answers packet 2 and is applied on the tick of packet 3
    assert!(log.packets[2].gripper_open);
    assert!(!log.packets[3].gripper_open);
}

#[test]
fn edge_marks_and_discard() {
    let (task, arm) = task_arm();
    let server = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", fast(false)).unwrap();
    let mv = TwistCommand::linear(0.0, 0.0, 0.05);
    let mut script = Vec::new();
    for mark in [RecordMark::Stop, RecordMark::Discard, RecordMark::Stop] {
        script.push(TwistCommand::mark(RecordMark::Start));
        script.extend(vec![mv; 3]);
        script.push(TwistCommand::mark(mark));
    }
    let log = run_scripted_client(&server.url(), &script, false, TIMEOUT).unwrap();
    let summary = server.wait().unwrap();
    assert_eq!(summary.demos.len(), 2);
    match log.session_end.unwrap() {
        ServerMessage::SessionEnd { demos, .. } => assert_eq!(demos.len(), 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_commands_are_counted_and_ignored() {
    let (task, arm) = task_arm();
    let server = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", fast(false)).unwrap();
    let (mut ws, _) = tungstenite::connect(server.url()).unwrap();
    ws.send(Message::text("{not json")).unwrap();
    ws.send(Message::text(r#"{"type":"twist","linear":[1e999,0,0]}"#)).unwrap();
    ws.send(Message::text(r#"{"type":"end"}"#)).unwrap();
    let summary = server.wait().unwrap();
    assert_eq!(summary.malformed_commands, 2);
}

#[test]
fn silent_client_holds_still() {
    let (task, arm) = task_arm();
    let config = TeleopConfig {
        hold_after_s: 0.1,
        ..fast(false)
    };
    let server = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", config).unwrap();
    let (mut ws, _) = tungstenite::connect(server.url()).unwrap();
    let twist = serde_json::json!({"type": "twist", "linear": [0.05, 0, 0]});
    ws.send(Message::text(twist.to_string())).unwrap();
    let mut packets = Vec::new();
    while packets.len() < 20 {
        if let Message::Text(t) = ws.read().unwrap() {
            if let ServerMessage::Frame(p) = serde_json::from_str(t.as_str()).unwrap() {
                packets.push(*p);
            }
        }
    }
    let tail = &packets[packets.len() - 3..];
    assert!(tail.iter().all(|p| p.holding));
    assert_eq!(tail[0].ee_pose, tail[2].ee_pose);
    drop(ws);
    let summary = {
        server.request_end();
        server.wait().unwrap()
    };
    assert!(summary.held_ticks > 0);
}

#[test]
fn session_runs_without_client_and_rejects_bad_rate() {
    let (task, arm) = task_arm();
    let config = TeleopConfig {
        max_duration_s: Some(0.2),
        ..fast(false)
    };
    let summary = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", config).unwrap().wait().unwrap();
    assert!(summary.ticks > 0);
    assert!(summary.demos.is_empty());
    let bad = TeleopConfig { hz: 0.0, ..fast(false) };
    assert!(TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", bad).is_err());
}

#[test]
fn capture_rate_ticks_at_five_hz() {
    let (task, arm) = task_arm();
    let config = TeleopConfig {
        max_duration_s: Some(3.0),
        ..TeleopConfig::default()
    };
    let summary = TeleopServer::start(&arm, &task, 0, "127.0.0.1:0", config).unwrap().wait().unwrap();
    assert!((summary.mean_tick_interval_s - 0.2).abs() <= 0.02, "{}", summary.mean_tick_interval_s);
}
