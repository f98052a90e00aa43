//! `.cgs` files: the 27-byte header, then records of `u8 tag, u32 length, body`.

use super::{CodecError, PayloadTag, Reader, StreamHeader, HEADER_LEN};

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub tag: PayloadTag,
    pub body: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub header: StreamHeader,
    pub records: Vec<Record>,
}

impl Container {
    pub fn total_bytes(&self) -> usize {
        HEADER_LEN + self.records.iter().map(|r| 5 + r.body.len()).sum::<usize>()
    }
}

pub fn write_container(c: &Container) -> Vec<u8> {
    let mut out = Vec::with_capacity(c.total_bytes());
    out.extend_from_slice(&c.header.to_bytes());
    for r in &c.records {
        out.push(r.tag as u8);
        out.extend_from_slice(&(r.body.len() as u32).to_le_bytes());
        out.extend_from_slice(&r.body);
    }
    out
}

/// Parses framing only; bodies are decoded separately against the header.
pub fn read_container(bytes: &[u8]) -> Result<Container, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated { needed: HEADER_LEN - bytes.len() });
    }
    let header = StreamHeader::from_bytes(&bytes[..HEADER_LEN])?;
    let mut r = Reader::new(&bytes[HEADER_LEN..]);
    let mut records = Vec::new();
    while r.remaining() > 0 {
        let tag = PayloadTag::try_from(r.u8()?)?;
        let body = r.chunk()?.to_vec();
        records.push(Record { tag, body });
    }
    if records.len() > header.frames as usize {
        return Err(CodecError::InvalidPayload(format!("{} records for {} frames", records.len(), header.frames)));
    }
    Ok(Container { header, records })
}
