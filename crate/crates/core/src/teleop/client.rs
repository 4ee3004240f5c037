use std::time::{Duration, Instant};

use tungstenite::Message as WsMessage;

use super::{ClientMessage, ServerMessage, TeleopFramePacket, TwistCommand};
use crate::error::{Error, Result};

/// What a scripted client saw.
#[derive(Debug, Clone, Default)]
pub struct ClientLog {
    pub packets: Vec<TeleopFramePacket>,
    /// Connect to first frame packet, seconds.
    pub first_packet_s: Option<f64>,
    /// The server's closing summary.
    pub session_end: Option<ServerMessage>,
}

fn ws_error(e: tungstenite::Error) -> Error {
    Error::Transport(e.to_string())
}

/// Drives a session without a human: connects to `url`, then answers each
/// frame packet with the next command of `script`, so command `k` is applied
/// on the tick after the `k`-th packet. Sends `end` once the script runs out
/// and collects packets until the session summary arrives.
pub fn run_scripted_client(url: &str, script: &[TwistCommand], images: bool, timeout: Duration) -> Result<ClientLog> {
    let start = Instant::now();
    let (mut ws, _) = tungstenite::connect(url).map_err(ws_error)?;
    if let tungstenite::stream::MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(timeout))?;
    }
    let send = |ws: &mut tungstenite::WebSocket<_>, m: &ClientMessage| {
        ws.send(WsMessage::text(serde_json::to_string(m).expect("command serializes")))
            .map_err(ws_error)
    };
    send(&mut ws, &ClientMessage::Configure { images })?;

    let mut log = ClientLog::default();
    let mut next = 0;
    let mut ended = false;
    loop {
        let text = match ws.read() {
            Ok(WsMessage::Text(t)) => t,
            Ok(WsMessage::Close(_)) => break,
            Ok(_) => continue,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(ws_error(e)),
        };
        let msg: ServerMessage =
            serde_json::from_str(text.as_str()).map_err(|e| Error::Protocol(format!("bad server message: {e}")))?;
        match msg {
            ServerMessage::Frame(p) => {
                log.first_packet_s.get_or_insert_with(|| start.elapsed().as_secs_f64());
                log.packets.push(*p);
                if next < script.len() {
                    send(&mut ws, &ClientMessage::Twist(script[next]))?;
                    next += 1;
                } else if !ended {
                    send(&mut ws, &ClientMessage::End)?;
                    ended = true;
                }
            }
            end @ ServerMessage::SessionEnd { .. } => {
                log.session_end = Some(end);
                let _ = ws.close(None);
                let _ = ws.flush();
                break;
            }
        }
    }
    Ok(log)
}
