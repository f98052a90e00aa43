//! `.cgs` bitstream: quantization, canonical Huffman coding, payload layouts
//! and the record container. Byte layouts are documented in FORMAT.md.

mod container;
pub mod huffman;
mod payload;
pub mod quant;

use thiserror::Error;

pub use container::{read_container, write_container, Container, Record};
pub use huffman::{entropy_decode, entropy_encode};
pub use payload::{decode_payload, encode_payload, read_snapshot, write_snapshot, FramePayload};
pub use quant::{dequantize, quantize, QuantSpec};

pub const MAGIC: [u8; 4] = *b"CGS1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 27;
pub const SH_DEGREE: u8 = 1;
/// Largest point count a header may declare.
pub const MAX_POINTS: u32 = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("truncated input: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("{0} trailing bytes after a complete record")]
    TrailingBytes(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("unknown payload tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("mask has {popcount} bits set but {m} residual records are declared")]
    MaskPopcount { m: usize, popcount: usize },
    #[error("corrupt code table: {0}")]
    CorruptTable(&'static str),
    #[error("corrupt entropy-coded data")]
    CorruptBitstream,
    #[error("invalid quantization range [{min}, {max}]")]
    InvalidRange { min: f32, max: f32 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

/// Payload tags, shared by container records and wire messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PayloadTag {
    Init = 0x01,
    Motion = 0x02,
    Keycorr = 0x03,
    /// Lossless full-scene state, sent to late joiners.
    Snapshot = 0x04,
}

impl TryFrom<u8> for PayloadTag {
    type Error = CodecError;

    fn try_from(v: u8) -> Result<Self, CodecError> {
        match v {
            0x01 => Ok(PayloadTag::Init),
            0x02 => Ok(PayloadTag::Motion),
            0x03 => Ok(PayloadTag::Keycorr),
            0x04 => Ok(PayloadTag::Snapshot),
            other => Err(CodecError::UnknownTag(other)),
        }
    }
}

/// Every constant a decoder needs, written once at the head of a stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamHeader {
    pub version: u16,
    pub n: u32,
    pub sh_degree: u8,
    /// Key frame every `gof` frames.
    pub gof: u16,
    pub k: u16,
    pub tau_adap: f32,
    pub phi_thres: f32,
    pub frames: u32,
}

impl StreamHeader {
    pub fn new(n: u32, gof: u16, k: u16, tau_adap: f32, phi_thres: f32, frames: u32) -> Result<Self, CodecError> {
        let h = StreamHeader { version: FORMAT_VERSION, n, sh_degree: SH_DEGREE, gof, k, tau_adap, phi_thres, frames };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: String| Err(CodecError::InvalidHeader(m));
        if self.version != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(self.version));
        }
        if self.sh_degree != SH_DEGREE {
            return bad(format!("SH degree {} (only {SH_DEGREE} is supported)", self.sh_degree));
        }
        if self.n == 0 || self.n > MAX_POINTS {
            return bad(format!("point count {} outside 1..={MAX_POINTS}", self.n));
        }
        if self.gof == 0 {
            return bad("GoF interval must be at least 1".into());
        }
        if self.k == 0 || u32::from(self.k) > self.n {
            return bad(format!("k = {} outside 1..={}", self.k, self.n));
        }
        if !(self.tau_adap > 0.0 && self.tau_adap < 1.0) {
            return bad(format!("tau_adap = {}", self.tau_adap));
        }
        if !(self.phi_thres > 0.0 && self.phi_thres < 1.0) {
            return bad(format!("phi_thres = {}", self.phi_thres));
        }
        if self.frames == 0 {
            return bad("a stream has at least one frame".into());
        }
        Ok(())
    }

    /// Frame 0 is the INIT; every `gof`-th frame after it is a key frame.
    pub fn is_key_frame(&self, frame: u32) -> bool {
        frame > 0 && frame.is_multiple_of(u32::from(self.gof))
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.n.to_le_bytes());
        b[10] = self.sh_degree;
        b[11..13].copy_from_slice(&self.gof.to_le_bytes());
        b[13..15].copy_from_slice(&self.k.to_le_bytes());
        b[15..19].copy_from_slice(&self.tau_adap.to_le_bytes());
        b[19..23].copy_from_slice(&self.phi_thres.to_le_bytes());
        b[23..27].copy_from_slice(&self.frames.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(CodecError::BadMagic(magic));
        }
        let h = StreamHeader {
            version: r.u16()?,
            n: r.u32()?,
            sh_degree: r.u8()?,
            gof: r.u16()?,
            k: r.u16()?,
            tau_adap: r.f32()?,
            phi_thres: r.f32()?,
            frames: r.u32()?,
        };
        r.finish()?;
        h.validate()?;
        Ok(h)
    }
}

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if n > self.remaining() {
            return Err(CodecError::Truncated { needed: n - self.remaining() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// A `u32` length prefix followed by that many bytes.
    pub(crate) fn chunk(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub(crate) fn finish(&self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

pub(crate) fn put_chunk(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}
