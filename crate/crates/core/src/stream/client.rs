//! Minimal subscriber that keeps a receiver session in sync with a server.

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpStream, ToSocketAddrs};

use super::{frame_message, split_frame, tag, FrameDecoder, ProtocolError, Role, Session};
use crate::codec::{read_snapshot, StreamHeader};
use crate::gaussian::SceneState;

pub struct Client {
    sock: TcpStream,
    decoder: FrameDecoder,
    session: Option<Session>,
}

#[derive(Debug)]
pub enum Event {
    Frame { frame: u32, scene: SceneState<f32> },
    /// Reply to a snapshot query.
    Snapshot { frame: u32, bytes: Vec<u8> },
    Closed(String),
}

impl Client {
    pub async fn connect(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        Ok(Client { sock: TcpStream::connect(addr).await?, decoder: FrameDecoder::default(), session: None })
    }

    pub fn header(&self) -> Option<StreamHeader> {
        self.session.as_ref().map(|s| s.header)
    }

    pub async fn subscribe(&mut self) -> std::io::Result<()> {
        self.sock.write_all(&frame_message(tag::SUBSCRIBE, &[])).await
    }

    pub async fn query_snapshot(&mut self, frame: u32) -> std::io::Result<()> {
        self.sock.write_all(&frame_message(tag::SNAPSHOT_QUERY, &frame.to_le_bytes())).await
    }

    /// Next frame, snapshot reply or close; `None` when the server hangs up.
    pub async fn next_event(&mut self) -> Result<Option<Event>, ProtocolError> {
        let mut buf = vec![0u8; 64 << 10];
        loop {
            while let Some((t, body)) = self.decoder.next_message()? {
                if let Some(ev) = self.handle(t, &body)? {
                    return Ok(Some(ev));
                }
            }
            let n = self.sock.read(&mut buf).await.map_err(|e| ProtocolError::Malformed(e.to_string()))?;
            if n == 0 {
                self.decoder.finish()?;
                return Ok(None);
            }
            self.decoder.push(&buf[..n]);
        }
    }

    fn handle(&mut self, t: u8, body: &[u8]) -> Result<Option<Event>, ProtocolError> {
        match t {
            tag::HEADER => {
                self.session = Some(Session::new(StreamHeader::from_bytes(body)?, Role::Receiver));
                Ok(None)
            }
            0x01..=0x04 => {
                let session = self.session.as_mut().ok_or(ProtocolError::UnexpectedTag(t))?;
                let (frame, payload) = split_frame(body)?;
                let scene = session.apply_bytes(frame, t, payload)?.clone();
                Ok(Some(Event::Frame { frame, scene }))
            }
            tag::SNAPSHOT => {
                let (frame, bytes) = split_frame(body)?;
                read_snapshot(bytes)?;
                Ok(Some(Event::Snapshot { frame, bytes: bytes.to_vec() }))
            }
            tag::CLOSE => Ok(Some(Event::Closed(String::from_utf8_lossy(body).into_owned()))),
            other => Err(ProtocolError::UnexpectedTag(other)),
        }
    }
}
