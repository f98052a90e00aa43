//! Paced broadcast of a decoded `.cgs` stream over TCP.
//!
//! A client sends SUBSCRIBE and receives HEADER, then INIT (or a lossless
//! SNAPSHOT of the latest broadcast frame when joining late), then every
//! following payload at the configured rate, then CLOSE. SNAPSHOT_QUERY
//! with a `u32` frame is answered with SNAPSHOT: `u32 frame` followed by
//! the snapshot layout. Each connection has a bounded outgoing queue; a
//! client that lets it fill is disconnected.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

use super::{frame_message, payload_message, tag, FrameDecoder, ProtocolError, Role, Session, DEFAULT_MAX_MESSAGE};
use crate::codec::{write_snapshot, Container, PayloadTag};

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub fps: f64,
    /// Outgoing messages buffered per client before it is dropped.
    pub queue: usize,
    pub max_message: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { fps: 30.0, queue: 64, max_message: DEFAULT_MAX_MESSAGE }
    }
}

/// A container decoded once up front: wire messages and per-frame snapshots.
pub struct Prepared {
    header_msg: Arc<Vec<u8>>,
    frames: Vec<Arc<Vec<u8>>>,
    snapshots: Vec<Vec<u8>>,
}

impl Prepared {
    pub fn new(c: &Container) -> Result<Self, ProtocolError> {
        let mut session = Session::new(c.header, Role::Receiver);
        let mut frames = Vec::with_capacity(c.records.len());
        let mut snapshots = Vec::with_capacity(c.records.len());
        for (t, r) in c.records.iter().enumerate() {
            let scene = session.apply_bytes(t as u32, r.tag as u8, &r.body)?;
            snapshots.push(write_snapshot(scene));
            frames.push(Arc::new(payload_message(r.tag, t as u32, &r.body)));
        }
        Ok(Prepared { header_msg: Arc::new(frame_message(tag::HEADER, &c.header.to_bytes())), frames, snapshots })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Snapshot layout of the decoded scene at `frame`.
    pub fn snapshot(&self, frame: usize) -> Option<&[u8]> {
        self.snapshots.get(frame).map(Vec::as_slice)
    }
}

type Outbox = mpsc::Sender<Arc<Vec<u8>>>;

#[derive(Default)]
struct Broadcast {
    /// Last frame sent to subscribers.
    current: Option<usize>,
    done: bool,
    subscribers: Vec<(SocketAddr, Outbox)>,
}

fn close_message(reason: &str) -> Arc<Vec<u8>> {
    Arc::new(frame_message(tag::CLOSE, reason.as_bytes()))
}

/// Queues without waiting; false means the client is too slow or gone.
fn offer(out: &Outbox, msg: Arc<Vec<u8>>) -> bool {
    out.try_send(msg).is_ok()
}

/// Accepts clients on `listener` and plays `prepared` once at `cfg.fps`.
/// Runs until the task is dropped.
pub async fn serve(listener: TcpListener, prepared: Arc<Prepared>, cfg: ServeConfig) -> std::io::Result<()> {
    let state = Arc::new(Mutex::new(Broadcast::default()));
    tokio::spawn(pace(prepared.clone(), state.clone(), cfg.fps));
    loop {
        let (sock, peer) = listener.accept().await?;
        let (prepared, state, cfg) = (prepared.clone(), state.clone(), cfg.clone());
        tokio::spawn(async move {
            if let Err(e) = connection(sock, peer, prepared, state, cfg).await {
                log::info!("client {peer}: {e}");
            }
        });
    }
}

async fn pace(prepared: Arc<Prepared>, state: Arc<Mutex<Broadcast>>, fps: f64) {
    let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / fps.max(1e-3)));
    for (t, msg) in prepared.frames.iter().enumerate() {
        tick.tick().await;
        let mut b = state.lock().unwrap();
        b.current = Some(t);
        b.subscribers.retain(|(peer, out)| {
            let ok = offer(out, msg.clone());
            if !ok {
                log::warn!("client {peer} fell behind at frame {t}; disconnecting");
            }
            ok
        });
    }
    let mut b = state.lock().unwrap();
    b.done = true;
    for (_, out) in b.subscribers.drain(..) {
        offer(&out, close_message("end of stream"));
    }
}

async fn connection(sock: TcpStream, peer: SocketAddr, prepared: Arc<Prepared>, state: Arc<Mutex<Broadcast>>, cfg: ServeConfig) -> Result<(), ProtocolError> {
    let (mut rd, mut wr) = sock.into_split();
    let (out, mut rx) = mpsc::channel::<Arc<Vec<u8>>>(cfg.queue.max(2));
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            if wr.write_all(&msg).await.is_err() {
                break;
            }
        }
        let _ = wr.shutdown().await;
    });

    let mut decoder = FrameDecoder::new(cfg.max_message);
    let mut buf = vec![0u8; 4096];
    let result = 'conn: loop {
        let n = match rd.read(&mut buf).await {
            Ok(0) => break decoder.finish(),
            Ok(n) => n,
            Err(e) => break Err(ProtocolError::Malformed(e.to_string())),
        };
        decoder.push(&buf[..n]);
        loop {
            let (t, body) = match decoder.next_message() {
                Ok(Some(m)) => m,
                Ok(None) => break,
                Err(e) => break 'conn Err(e),
            };
            let handled = match t {
                tag::SUBSCRIBE => subscribe(peer, &out, &prepared, &state),
                tag::SNAPSHOT_QUERY => {
                    let frame = body.get(..4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize);
                    match frame.and_then(|f| prepared.snapshot(f).map(|s| (f, s))) {
                        Some((f, s)) if body.len() == 4 => {
                            let mut reply = (f as u32).to_le_bytes().to_vec();
                            reply.extend_from_slice(s);
                            offer(&out, Arc::new(frame_message(tag::SNAPSHOT, &reply)))
                        }
                        _ => {
                            offer(&out, close_message("snapshot query for an unknown frame"));
                            break 'conn Err(ProtocolError::Malformed("bad snapshot query".into()));
                        }
                    }
                }
                tag::CLOSE => break 'conn Ok(()),
                other => {
                    offer(&out, close_message("unexpected message"));
                    break 'conn Err(ProtocolError::UnexpectedTag(other));
                }
            };
            if !handled {
                log::warn!("client {peer}: outgoing queue full; disconnecting");
                break 'conn Ok(());
            }
        }
    };
    state.lock().unwrap().subscribers.retain(|(p, _)| *p != peer);
    drop(out);
    let _ = writer.await;
    result
}

fn subscribe(peer: SocketAddr, out: &Outbox, prepared: &Prepared, state: &Mutex<Broadcast>) -> bool {
    // holding the lock keeps the join point and the broadcast consistent
    let mut b = state.lock().unwrap();
    if !offer(out, prepared.header_msg.clone()) {
        return false;
    }
    let joined = match b.current {
        None => true,
        Some(0) => offer(out, prepared.frames[0].clone()),
        Some(t) => {
            let snap = prepared.snapshot(t).unwrap();
            offer(out, Arc::new(payload_message(PayloadTag::Snapshot, t as u32, snap)))
        }
    };
    if !joined {
        return false;
    }
    if b.done {
        return offer(out, close_message("end of stream"));
    }
    b.subscribers.push((peer, out.clone()));
    true
}
