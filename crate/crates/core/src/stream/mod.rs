//! Message framing and the sender/receiver sessions that hold decoded state.
//!
//! Wire message: `u32 body length, u8 tag, body`, little-endian. Payload
//! messages prefix the payload body with a `u32` frame index.

pub mod client;
pub mod server;

use thiserror::Error;

use crate::codec::{decode_payload, encode_payload, CodecError, FramePayload, PayloadTag, StreamHeader};
use crate::corrector::apply_masked;
use crate::gaussian::SceneState;
use crate::motion::apply_motion;

pub const DEFAULT_MAX_MESSAGE: usize = 256 << 20;
const PREFIX: usize = 5;

/// Wire tags beyond the payload tags `0x01..=0x04`.
pub mod tag {
    pub const HEADER: u8 = 0x10;
    pub const SUBSCRIBE: u8 = 0x20;
    pub const SNAPSHOT_QUERY: u8 = 0x21;
    pub const SNAPSHOT: u8 = 0x22;
    pub const CLOSE: u8 = 0x7f;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("declared message length {declared} exceeds the {cap}-byte cap")]
    Oversize { declared: usize, cap: usize },
    #[error("stream ended inside a message ({0} bytes buffered)")]
    Truncated(usize),
    #[error("unexpected message tag 0x{0:02x}")]
    UnexpectedTag(u8),
    #[error("frame {got} arrived while frame {expected} was expected")]
    OutOfOrder { expected: u32, got: u32 },
    #[error("INIT after the session started")]
    InitAfterStart,
    #[error("frame {0} arrived before INIT")]
    NotStarted(u32),
    #[error("{tag:?} is not allowed at frame {frame} with a GoF of {gof}")]
    GofMismatch { frame: u32, tag: PayloadTag, gof: u16 },
    #[error("frame {frame} is past the declared {frames} frames")]
    FrameOutOfRange { frame: u32, frames: u32 },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("payload could not be applied: {0}")]
    Apply(String),
}

pub fn frame_message(tag: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREFIX + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.push(tag);
    out.extend_from_slice(body);
    out
}

/// `frame_message` for a payload: the body is `u32 frame, payload body`.
pub fn payload_message(tag: PayloadTag, frame: u32, payload: &[u8]) -> Vec<u8> {
    let mut body = Vec::with_capacity(4 + payload.len());
    body.extend_from_slice(&frame.to_le_bytes());
    body.extend_from_slice(payload);
    frame_message(tag as u8, &body)
}

/// Splits a payload message body into its frame index and payload body.
pub fn split_frame(body: &[u8]) -> Result<(u32, &[u8]), ProtocolError> {
    if body.len() < 4 {
        return Err(ProtocolError::Malformed("payload message without a frame index".into()));
    }
    Ok((u32::from_le_bytes(body[..4].try_into().unwrap()), &body[4..]))
}

/// Incremental parser; feed arbitrary chunks, pull whole messages.
#[derive(Debug)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    cap: usize,
}

impl Default for FrameDecoder {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_MESSAGE)
    }
}

impl FrameDecoder {
    pub fn new(cap: usize) -> Self {
        FrameDecoder { buf: Vec::new(), cap }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn next_message(&mut self) -> Result<Option<(u8, Vec<u8>)>, ProtocolError> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let declared = u32::from_le_bytes(self.buf[..4].try_into().unwrap()) as usize;
        if declared > self.cap {
            return Err(ProtocolError::Oversize { declared, cap: self.cap });
        }
        if self.buf.len() < PREFIX + declared {
            return Ok(None);
        }
        let tag = self.buf[4];
        let body = self.buf[PREFIX..PREFIX + declared].to_vec();
        self.buf.drain(..PREFIX + declared);
        Ok(Some((tag, body)))
    }

    /// Call at end of input: a clean end has nothing buffered.
    pub fn finish(&self) -> Result<(), ProtocolError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(ProtocolError::Truncated(n)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Sender,
    Receiver,
}

/// Decoded stream state. Both ends run the same `apply`, so a sender's
/// scene is exactly what every receiver holds.
#[derive(Clone, Debug)]
pub struct Session {
    pub header: StreamHeader,
    pub role: Role,
    scene: Option<SceneState<f32>>,
    next_expected: u32,
}

impl Session {
    pub fn new(header: StreamHeader, role: Role) -> Self {
        Session { header, role, scene: None, next_expected: 0 }
    }

    pub fn scene(&self) -> Option<&SceneState<f32>> {
        self.scene.as_ref()
    }

    pub fn next_expected(&self) -> u32 {
        self.next_expected
    }

    pub fn is_finished(&self) -> bool {
        self.next_expected >= self.header.frames
    }

    pub fn apply(&mut self, frame: u32, payload: &FramePayload) -> Result<&SceneState<f32>, ProtocolError> {
        let h = self.header;
        if frame >= h.frames {
            return Err(ProtocolError::FrameOutOfRange { frame, frames: h.frames });
        }
        let apply_err = |e: crate::Error| ProtocolError::Apply(e.to_string());
        let next = match (payload, &self.scene) {
            (FramePayload::Snapshot(s), None) => s.clone(),
            (FramePayload::Init(s), None) => {
                if frame != 0 {
                    return Err(ProtocolError::OutOfOrder { expected: 0, got: frame });
                }
                s.clone()
            }
            (FramePayload::Init(_) | FramePayload::Snapshot(_), Some(_)) => return Err(ProtocolError::InitAfterStart),
            (_, None) => return Err(ProtocolError::NotStarted(frame)),
            (p, Some(prev)) => {
                if frame != self.next_expected {
                    return Err(ProtocolError::OutOfOrder { expected: self.next_expected, got: frame });
                }
                if h.is_key_frame(frame) != matches!(p, FramePayload::Keycorr(_)) {
                    return Err(ProtocolError::GofMismatch { frame, tag: p.tag(), gof: h.gof });
                }
                match p {
                    FramePayload::Motion(field) => apply_motion(prev, field).map_err(apply_err)?,
                    FramePayload::Keycorr(m) => apply_masked(prev, m).map_err(apply_err)?,
                    _ => unreachable!(),
                }
            }
        };
        if next.len() != h.n as usize {
            return Err(ProtocolError::Apply(format!("{} Gaussians for a stream of {}", next.len(), h.n)));
        }
        let mut next = next;
        next.timestep = frame;
        self.next_expected = frame + 1;
        Ok(self.scene.insert(next))
    }

    /// Decodes a payload body against this session's header and applies it.
    pub fn apply_bytes(&mut self, frame: u32, tag: u8, body: &[u8]) -> Result<&SceneState<f32>, ProtocolError> {
        let payload = decode_payload(tag, body, &self.header)?;
        self.apply(frame, &payload)
    }

    /// Encoder side: serializes `payload`, then applies what a receiver will
    /// decode from those bytes. Returns the payload body.
    pub fn encode_and_apply(&mut self, frame: u32, payload: &FramePayload) -> Result<Vec<u8>, ProtocolError> {
        let bytes = encode_payload(payload, &self.header)?;
        self.apply_bytes(frame, payload.tag() as u8, &bytes)?;
        Ok(bytes)
    }
}
