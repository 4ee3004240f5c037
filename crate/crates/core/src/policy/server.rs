use std::io::ErrorKind;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::protocol::{decode_parts, read_message, read_parts, write_message, Hello, Message, PROTOCOL_VERSION};
use super::Policy;
use crate::error::{Error, Result};

const ACCEPT_POLL: Duration = Duration::from_millis(2);

/// Artificial inference delay: each reply leaves no earlier than
/// `fixed_s + U(0, jitter_s)` after its request arrived.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyInjection {
    pub fixed_s: f64,
    pub jitter_s: f64,
    pub seed: u64,
}

impl LatencyInjection {
    pub fn fixed(seconds: f64) -> Self {
        Self {
            fixed_s: seconds,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServerConfig {
    pub latency: LatencyInjection,
}

type SharedPolicy = Arc<Mutex<Box<dyn Policy>>>;

/// Handle to a running server. Dropping it stops the server.
pub struct PolicyServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    session: Arc<Mutex<Option<TcpStream>>>,
    accept_thread: Option<JoinHandle<()>>,
}

impl PolicyServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and cuts any live session.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    /// Blocks until the server stops (it only stops through [`PolicyServer::shutdown`] or drop).
    pub fn wait(mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(s) = self.session.lock().unwrap_or_else(|p| p.into_inner()).as_ref() {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for PolicyServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

pub fn serve_policy(policy: Box<dyn Policy>, bind: impl ToSocketAddrs) -> Result<PolicyServer> {
    serve_policy_with(policy, bind, ServerConfig::default())
}

/// Binds and starts serving one session at a time on a background thread.
pub fn serve_policy_with(policy: Box<dyn Policy>, bind: impl ToSocketAddrs, config: ServerConfig) -> Result<PolicyServer> {
    let listener = TcpListener::bind(bind).map_err(|e| Error::Transport(format!("bind: {e}")))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let session: Arc<Mutex<Option<TcpStream>>> = Arc::new(Mutex::new(None));
    let policy: SharedPolicy = Arc::new(Mutex::new(policy));
    let busy = Arc::new(AtomicBool::new(false));

    let accept_thread = {
        let stop = stop.clone();
        let session = session.clone();
        std::thread::spawn(move || {
            let mut workers: Vec<JoinHandle<()>> = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(config.latency.seed);
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let _ = stream.set_nonblocking(false);
                        let _ = stream.set_nodelay(true);
                        if busy.swap(true, Ordering::SeqCst) {
                            log::info!("refusing {peer}: session busy");
                            let mut s = stream;
                            let _ = write_message(&mut s, &Message::error("session busy"));
                            let _ = s.shutdown(Shutdown::Both);
                            continue;
                        }
                        log::info!("session from {peer}");
                        if let Ok(clone) = stream.try_clone() {
                            *session.lock().unwrap_or_else(|p| p.into_inner()) = Some(clone);
                        }
                        let policy = policy.clone();
                        let busy = busy.clone();
                        let session = session.clone();
                        let latency = config.latency;
                        let seed = rng.gen();
                        workers.retain(|w| !w.is_finished());
                        workers.push(std::thread::spawn(move || {
                            run_session(stream, &policy, latency, seed);
                            *session.lock().unwrap_or_else(|p| p.into_inner()) = None;
                            busy.store(false, Ordering::SeqCst);
                        }));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(ACCEPT_POLL),
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        std::thread::sleep(ACCEPT_POLL);
                    }
                }
            }
            for w in workers {
                let _ = w.join();
            }
        })
    };

    Ok(PolicyServer {
        addr,
        stop,
        session,
        accept_thread: Some(accept_thread),
    })
}

fn run_session(mut stream: TcpStream, policy: &SharedPolicy, latency: LatencyInjection, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunk_size = match read_message(&mut stream) {
        Ok(Message::Hello(h)) if h.protocol_version != PROTOCOL_VERSION => {
            let _ = write_message(
                &mut stream,
                &Message::error(format!("unsupported protocol_version {}", h.protocol_version)),
            );
            return;
        }
        Ok(Message::Hello(h)) if h.chunk_size == 0 => {
            let _ = write_message(&mut stream, &Message::error("chunk_size must be at least 1"));
            return;
        }
        Ok(Message::Hello(h)) => h.chunk_size,
        Ok(other) => {
            let _ = write_message(&mut stream, &Message::error(format!("expected hello, got {}", other.type_name())));
            return;
        }
        Err(e) => {
            if let Error::Protocol(m) = &e {
                let _ = write_message(&mut stream, &Message::error(m.clone()));
            }
            return;
        }
    };
    let name = lock(policy).name().to_string();
    let ack = Message::Hello(Hello {
        protocol_version: PROTOCOL_VERSION,
        chunk_size,
        policy: Some(name),
    });
    if write_message(&mut stream, &ack).is_err() {
        return;
    }

    loop {
        // the injected delay counts from receipt, so decoding happens inside it
        let mut arrived = Instant::now();
        let msg = match read_parts(&mut stream).and_then(|(header, payload)| {
            arrived = Instant::now();
            decode_parts(&header, &payload)
        }) {
            Ok(m) => m,
            Err(Error::Protocol(m)) => {
                // framing is lost after a bad frame
                let _ = write_message(&mut stream, &Message::error(m));
                return;
            }
            Err(_) => return,
        };
        let reply = match msg {
            Message::Observation(obs) => match lock(policy).predict(&obs, chunk_size) {
                Ok(chunk) if chunk.len() == chunk_size => Message::ActionChunk(chunk),
                Ok(chunk) => Message::error(format!("policy returned {} actions, expected {chunk_size}", chunk.len())),
                Err(e) => Message::error(e.to_string()),
            },
            Message::Reset { instruction } => match lock(policy).reset(&instruction) {
                Ok(()) => Message::Reset { instruction },
                Err(e) => Message::error(e.to_string()),
            },
            Message::Bye => return,
            other => Message::error(format!("unexpected {} message", other.type_name())),
        };
        if matches!(reply, Message::ActionChunk(_)) {
            let jitter = if latency.jitter_s > 0.0 {
                rng.gen_range(0.0..latency.jitter_s)
            } else {
                0.0
            };
            let hold = latency.fixed_s + jitter;
            if hold > 0.0 {
                let due = arrived + Duration::from_secs_f64(hold);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
            }
        }
        if write_message(&mut stream, &reply).is_err() {
            return;
        }
    }
}

fn lock(policy: &SharedPolicy) -> std::sync::MutexGuard<'_, Box<dyn Policy>> {
    policy.lock().unwrap_or_else(|p| p.into_inner())
}
