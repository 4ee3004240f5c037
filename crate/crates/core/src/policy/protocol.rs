//! Length-prefixed message framing.
//!
//! Every message is `[u32 BE header length][UTF-8 JSON header][u32 BE payload
//! length][payload]`. The header carries a `type` tag. Observation images
//! travel as PNG bytes in the payload, located by `(name, offset, length)`
//! entries in the header.

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ActionChunk, Observation, Privileged};
use crate::dataset::{ActionVector, StateVector, FRAME_IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::image::RgbImage;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_CHUNK_SIZE: usize = 8;
/// Upper bound on either section of a frame, bytes.
pub const MAX_SECTION_LEN: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    Observation(Observation),
    ActionChunk(ActionChunk),
    Reset { instruction: String },
    Error { message: String },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol_version: u32,
    pub chunk_size: usize,
    /// Set by the server in its reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ImageEntry {
    name: String,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Header {
    Hello(Hello),
    Observation {
        state: StateVector,
        instruction: String,
        images: Vec<ImageEntry>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        privileged: Option<Box<Privileged>>,
    },
    ActionChunk {
        actions: Vec<ActionVector>,
    },
    Reset {
        instruction: String,
    },
    Error {
        message: String,
    },
    Bye,
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::Observation(_) => "observation",
            Message::ActionChunk(_) => "action_chunk",
            Message::Reset { .. } => "reset",
            Message::Error { .. } => "error",
            Message::Bye => "bye",
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Message::Error { message: message.into() }
    }
}

fn protocol(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

/// Serializes `msg` into one frame.
pub fn encode_message(msg: &Message) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let header = match msg {
        Message::Hello(h) => Header::Hello(h.clone()),
        Message::Observation(obs) => {
            let mut images = Vec::new();
            for (name, img) in [("third", &obs.third_image), ("wrist", &obs.wrist_image)] {
                let png = img.to_png();
                images.push(ImageEntry {
                    name: name.into(),
                    offset: payload.len(),
                    length: png.len(),
                });
                payload.extend_from_slice(&png);
            }
            Header::Observation {
                state: obs.state,
                instruction: obs.instruction.clone(),
                images,
                privileged: obs.privileged.clone().map(Box::new),
            }
        }
        Message::ActionChunk(c) => Header::ActionChunk {
            actions: c.actions.clone(),
        },
        Message::Reset { instruction } => Header::Reset {
            instruction: instruction.clone(),
        },
        Message::Error { message } => Header::Error {
            message: message.clone(),
        },
        Message::Bye => Header::Bye,
    };
    let header = serde_json::to_vec(&header).map_err(|e| protocol(format!("header encoding: {e}")))?;
    if header.len() > MAX_SECTION_LEN as usize || payload.len() > MAX_SECTION_LEN as usize {
        return Err(protocol("message too large"));
    }
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(&(header.len() as u32).to_be_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses one complete frame.
pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    let (header, rest) = split_section(bytes, "header")?;
    let (payload, rest) = split_section(rest, "payload")?;
    if !rest.is_empty() {
        return Err(protocol(format!("{} trailing bytes after payload", rest.len())));
    }
    decode_parts(header, payload)
}

fn split_section<'a>(bytes: &'a [u8], what: &str) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 4 {
        return Err(protocol(format!("truncated {what} length")));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if len > MAX_SECTION_LEN {
        return Err(protocol(format!("{what} length {len} exceeds limit")));
    }
    let len = len as usize;
    if bytes.len() < 4 + len {
        return Err(protocol(format!("truncated {what}")));
    }
    Ok((&bytes[4..4 + len], &bytes[4 + len..]))
}

pub(crate) fn decode_parts(header: &[u8], payload: &[u8]) -> Result<Message> {
    let text = std::str::from_utf8(header).map_err(|_| protocol("header is not UTF-8"))?;
    let header: Header = serde_json::from_str(text).map_err(|e| protocol(format!("malformed header: {e}")))?;
    Ok(match header {
        Header::Hello(h) => Message::Hello(h),
        Header::Observation {
            state,
            instruction,
            images,
            privileged,
        } => {
            let image = |name: &str| -> Result<RgbImage> {
                let entry = images
                    .iter()
                    .find(|e| e.name == name)
                    .ok_or_else(|| protocol(format!("observation lacks a '{name}' image")))?;
                let end = entry.offset.checked_add(entry.length).filter(|&end| end <= payload.len());
                let end = end.ok_or_else(|| protocol(format!("image '{name}' lies outside the payload")))?;
                let img = RgbImage::from_png(&payload[entry.offset..end])
                    .map_err(|e| protocol(format!("image '{name}': {e}")))?;
                if img.width() != FRAME_IMAGE_SIZE || img.height() != FRAME_IMAGE_SIZE {
                    return Err(protocol(format!("image '{name}' is {}x{}, expected 256x256", img.width(), img.height())));
                }
                Ok(img)
            };
            if !state.is_valid() {
                return Err(protocol("observation state is not a valid state vector"));
            }
            Message::Observation(Observation {
                third_image: image("third")?,
                wrist_image: image("wrist")?,
                state,
                instruction,
                privileged: privileged.map(|p| *p),
            })
        }
        Header::ActionChunk { actions } => Message::ActionChunk(ActionChunk { actions }),
        Header::Reset { instruction } => Message::Reset { instruction },
        Header::Error { message } => Message::Error { message },
        Header::Bye => Message::Bye,
    })
}

fn transport(e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Transport("timed out waiting for peer".into()),
        ErrorKind::UnexpectedEof => Error::Transport("connection closed by peer".into()),
        _ => Error::Transport(e.to_string()),
    }
}

pub fn write_frame(w: &mut impl Write, frame: &[u8]) -> Result<()> {
    w.write_all(frame).map_err(transport)?;
    w.flush().map_err(transport)
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<()> {
    write_frame(w, &encode_message(msg)?)
}

fn read_section(r: &mut impl Read, what: &str) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(transport)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_SECTION_LEN {
        return Err(protocol(format!("{what} length {len} exceeds limit")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(transport)?;
    Ok(buf)
}

/// Reads one frame. I/O failures are transport errors; bad content is a
/// protocol error.
pub fn read_message(r: &mut impl Read) -> Result<Message> {
    let (header, payload) = read_parts(r)?;
    decode_parts(&header, &payload)
}

/// Reads the header and payload of one frame without decoding them.
pub(crate) fn read_parts(r: &mut impl Read) -> Result<(Vec<u8>, Vec<u8>)> {
    let header = read_section(r, "header")?;
    let payload = read_section(r, "payload")?;
    Ok((header, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::testing::{observation, task1};

    fn roundtrip(msg: &Message) -> Message {
        decode_message(&encode_message(msg).unwrap()).unwrap()
    }

    #[test]
    fn every_message_type_roundtrips() {
        let (task, arm, world) = task1();
        let mut obs = observation(&world, &arm, &task.instruction);
        obs.third_image.put(3, 7, [1, 2, 3]);
        let messages = [
            Message::Hello(Hello {
                protocol_version: PROTOCOL_VERSION,
                chunk_size: 8,
                policy: Some("zero".into()),
            }),
            Message::Observation(obs.clone()),
            Message::Observation(Observation { privileged: None, ..obs }),
            Message::ActionChunk(ActionChunk {
                actions: vec![ActionVector([0.01, -0.02, 0.0, 0.1, -0.3, 3.0, 1.0]); 3],
            }),
            Message::Reset {
                instruction: "Put the orange in the plate".into(),
            },
            Message::error("nope"),
            Message::Bye,
        ];
        for m in &messages {
            assert_eq!(&roundtrip(m), m, "{}", m.type_name());
        }
    }

    #[test]
    fn header_carries_type_tag() {
        let frame = encode_message(&Message::Bye).unwrap();
        let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&frame[4..4 + len]).unwrap();
        assert_eq!(header["type"], "bye");
        assert_eq!(&frame[4 + len..], &[0, 0, 0, 0]);
    }

    #[test]
    fn truncated_and_trailing_bytes_are_rejected() {
        let frame = encode_message(&Message::error("x")).unwrap();
        for cut in [0, 3, 6, frame.len() - 1] {
            assert!(matches!(decode_message(&frame[..cut]), Err(Error::Protocol(_))), "cut {cut}");
        }
        let mut long = frame.clone();
        long.push(0);
        assert!(matches!(decode_message(&long), Err(Error::Protocol(_))));
    }

    #[test]
    fn oversized_length_is_rejected_before_allocating() {
        let mut frame = (MAX_SECTION_LEN + 1).to_be_bytes().to_vec();
        frame.extend_from_slice(b"{}");
        assert!(matches!(read_message(&mut frame.as_slice()), Err(Error::Protocol(_))));
    }

    #[test]
    fn malformed_header_is_protocol_error() {
        let mut frame = 5u32.to_be_bytes().to_vec();
        frame.extend_from_slice(b"{bad}");
        frame.extend_from_slice(&0u32.to_be_bytes());
        assert!(matches!(decode_message(&frame), Err(Error::Protocol(_))));
    }

    #[test]
    fn wrong_image_size_is_rejected() {
        let (task, arm, world) = task1();
        let mut obs = observation(&world, &arm, &task.instruction);
        obs.wrist_image = RgbImage::new(128, 128);
        let frame = encode_message(&Message::Observation(obs)).unwrap();
        let err = decode_message(&frame).unwrap_err();
        assert!(err.to_string().contains("wrist"), "{err}");
    }

    #[test]
    fn eof_is_transport_error() {
        let frame = encode_message(&Message::Bye).unwrap();
        let mut short = &frame[..5];
        assert!(matches!(read_message(&mut short), Err(Error::Transport(_))));
    }
}
