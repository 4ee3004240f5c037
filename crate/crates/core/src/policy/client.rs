use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::protocol::{encode_message, read_message, write_frame, write_message, Hello, Message, PROTOCOL_VERSION};
use super::{ActionChunk, Observation};
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// An observation already serialized to a wire frame.
pub struct PreparedObservation(Vec<u8>);

impl PreparedObservation {
    pub fn new(obs: &Observation) -> Result<Self> {
        Ok(Self(encode_message(&Message::Observation(obs.clone()))?))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Client side of one policy session. Requests are strictly sequential.
pub struct PolicyClient {
    stream: TcpStream,
    chunk_size: usize,
    policy_name: String,
}

impl PolicyClient {
    pub fn connect(addr: impl ToSocketAddrs, chunk_size: usize) -> Result<Self> {
        Self::connect_with_timeout(addr, chunk_size, DEFAULT_TIMEOUT)
    }

    /// Connects and performs the hello exchange. `timeout` bounds every later wait for a reply.
    pub fn connect_with_timeout(addr: impl ToSocketAddrs, chunk_size: usize, timeout: Duration) -> Result<Self> {
        let addrs: Vec<_> = addr
            .to_socket_addrs()
            .map_err(|e| Error::Transport(format!("resolve: {e}")))?
            .collect();
        let addr = addrs.first().ok_or_else(|| Error::Transport("no address to connect to".into()))?;
        let mut stream = TcpStream::connect_timeout(addr, timeout).map_err(|e| Error::Transport(format!("connect {addr}: {e}")))?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        write_message(
            &mut stream,
            &Message::Hello(Hello {
                protocol_version: PROTOCOL_VERSION,
                chunk_size,
                policy: None,
            }),
        )?;
        match read_message(&mut stream)? {
            Message::Hello(h) if h.protocol_version == PROTOCOL_VERSION && h.chunk_size == chunk_size => Ok(Self {
                stream,
                chunk_size,
                policy_name: h.policy.unwrap_or_default(),
            }),
            Message::Hello(h) => Err(Error::Protocol(format!(
                "server answered hello with version {} and chunk size {}",
                h.protocol_version, h.chunk_size
            ))),
            Message::Error { message } => Err(Error::Protocol(message)),
            other => Err(Error::Protocol(format!("expected hello, got {}", other.type_name()))),
        }
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn policy_name(&self) -> &str {
        &self.policy_name
    }

    /// Sends `obs` and waits for the chunk, returning it with the round-trip time in seconds.
    pub fn request_chunk(&mut self, obs: &Observation) -> Result<(ActionChunk, f64)> {
        self.request_prepared(&PreparedObservation::new(obs)?)
    }

    pub fn request_prepared(&mut self, obs: &PreparedObservation) -> Result<(ActionChunk, f64)> {
        let start = Instant::now();
        write_frame(&mut self.stream, &obs.0)?;
        let reply = read_message(&mut self.stream)?;
        let latency = start.elapsed().as_secs_f64();
        match reply {
            Message::ActionChunk(chunk) => {
                if chunk.len() != self.chunk_size {
                    return Err(Error::Protocol(format!(
                        "received {} actions, negotiated chunk size is {}",
                        chunk.len(),
                        self.chunk_size
                    )));
                }
                if let Some(i) = chunk.actions.iter().position(|a| !a.is_valid()) {
                    return Err(Error::Protocol(format!("action {i} of the chunk is not a valid action vector")));
                }
                Ok((chunk, latency))
            }
            Message::Error { message } => Err(Error::Policy(message)),
            other => Err(Error::Protocol(format!("expected action_chunk, got {}", other.type_name()))),
        }
    }

    /// Starts a new episode on the server side.
    pub fn reset(&mut self, instruction: &str) -> Result<()> {
        write_message(
            &mut self.stream,
            &Message::Reset {
                instruction: instruction.to_string(),
            },
        )?;
        match read_message(&mut self.stream)? {
            Message::Reset { .. } => Ok(()),
            Message::Error { message } => Err(Error::Policy(message)),
            other => Err(Error::Protocol(format!("expected reset, got {}", other.type_name()))),
        }
    }

    /// Says goodbye and closes the connection.
    pub fn close(mut self) {
        let _ = write_message(&mut self.stream, &Message::Bye);
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}
