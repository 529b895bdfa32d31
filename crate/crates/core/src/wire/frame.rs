//! Frame envelope and typed payloads.
//!
//! ```text
//! +-------+----------+----------------+-------------------+
//! | 0x4B  | msg_type | payload_len BE | payload           |
//! | 1 B   | 1 B      | 4 B            | payload_len bytes |
//! +-------+----------+----------------+-------------------+
//! ```
//!
//! Integers inside payloads are minimal big-endian byte strings, each behind
//! a 2-byte big-endian length. Zero is the empty string. Exponents are plain
//! 2-byte big-endian fields.

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

pub const MAGIC: u8 = 0x4B;
pub const HEADER_LEN: usize = 6;
pub const MAX_PAYLOAD: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("frame truncated")]
    Truncated,
    #[error("payload of {0} bytes exceeds the cap")]
    Oversize(usize),
    #[error("{0} unexpected bytes after the frame")]
    TrailingBytes(usize),
    #[error("malformed {msg_type:?} payload: {reason}")]
    BadPayload { msg_type: MsgType, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    PubKey = 0x01,
    CipherRanked = 0x02,
    AckRank = 0x03,
    OkxMsg = 0x04,
    Params = 0x05,
    Error = 0x7F,
}

impl MsgType {
    pub const ALL: [MsgType; 6] = [
        MsgType::PubKey,
        MsgType::CipherRanked,
        MsgType::AckRank,
        MsgType::OkxMsg,
        MsgType::Params,
        MsgType::Error,
    ];
}

impl TryFrom<u8> for MsgType {
    type Error = FrameError;

    fn try_from(value: u8) -> Result<Self, FrameError> {
        Ok(match value {
            0x01 => MsgType::PubKey,
            0x02 => MsgType::CipherRanked,
            0x03 => MsgType::AckRank,
            0x04 => MsgType::OkxMsg,
            0x05 => MsgType::Params,
            0x7F => MsgType::Error,
            other => return Err(FrameError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

/// Validates a header and returns the message type and payload length.
pub fn parse_header(header: &[u8; HEADER_LEN]) -> Result<(MsgType, usize), FrameError> {
    if header[0] != MAGIC {
        return Err(FrameError::BadMagic(header[0]));
    }
    let msg_type = MsgType::try_from(header[1])?;
    let len = u32::from_be_bytes([header[2], header[3], header[4], header[5]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len));
    }
    Ok((msg_type, len))
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(FrameError::Oversize(self.payload.len()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(MAGIC);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame, FrameError> {
        let header: &[u8; HEADER_LEN] = bytes
            .get(..HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or(FrameError::Truncated)?;
        let (msg_type, len) = parse_header(header)?;
        let body = &bytes[HEADER_LEN..];
        if body.len() < len {
            return Err(FrameError::Truncated);
        }
        if body.len() > len {
            return Err(FrameError::TrailingBytes(body.len() - len));
        }
        Ok(Frame::new(msg_type, body.to_vec()))
    }
}

/// Typed view of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    PubKey { n: BigUint, alpha: BigUint, a: u16 },
    /// Ciphertext with the rank code appended.
    CipherRanked { framed: BigUint },
    AckRank { rank: u32 },
    OkxMsg { value: BigUint },
    Params { p: BigUint, g: BigUint, c: BigUint, a: u16 },
    Error { text: String },
}

fn put_int(out: &mut Vec<u8>, v: &BigUint) -> Result<(), FrameError> {
    let bytes = if v.is_zero() { Vec::new() } else { v.to_bytes_be() };
    let len = u16::try_from(bytes.len()).map_err(|_| FrameError::Oversize(bytes.len()))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&bytes);
    Ok(())
}

struct PayloadReader<'a> {
    buf: &'a [u8],
    msg_type: MsgType,
}

impl<'a> PayloadReader<'a> {
    fn err(&self, reason: &str) -> FrameError {
        FrameError::BadPayload {
            msg_type: self.msg_type,
            reason: reason.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() < n {
            return Err(self.err("payload ends early"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn int(&mut self) -> Result<BigUint, FrameError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        if bytes.first() == Some(&0) {
            return Err(self.err("integer has a leading zero byte"));
        }
        Ok(BigUint::from_bytes_be(bytes))
    }

    fn finish(self) -> Result<(), FrameError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing bytes"))
        }
    }
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::PubKey { .. } => MsgType::PubKey,
            Message::CipherRanked { .. } => MsgType::CipherRanked,
            Message::AckRank { .. } => MsgType::AckRank,
            Message::OkxMsg { .. } => MsgType::OkxMsg,
            Message::Params { .. } => MsgType::Params,
            Message::Error { .. } => MsgType::Error,
        }
    }

    pub fn to_frame(&self) -> Result<Frame, FrameError> {
        let mut payload = Vec::new();
        match self {
            Message::PubKey { n, alpha, a } => {
                put_int(&mut payload, n)?;
                put_int(&mut payload, alpha)?;
                payload.extend_from_slice(&a.to_be_bytes());
            }
            Message::CipherRanked { framed } => put_int(&mut payload, framed)?,
            Message::AckRank { rank } => put_int(&mut payload, &BigUint::from(*rank))?,
            Message::OkxMsg { value } => put_int(&mut payload, value)?,
            Message::Params { p, g, c, a } => {
                put_int(&mut payload, p)?;
                put_int(&mut payload, g)?;
                put_int(&mut payload, c)?;
                payload.extend_from_slice(&a.to_be_bytes());
            }
            Message::Error { text } => payload.extend_from_slice(text.as_bytes()),
        }
        Ok(Frame::new(self.msg_type(), payload))
    }

    pub fn from_frame(frame: &Frame) -> Result<Message, FrameError> {
        let mut r = PayloadReader {
            buf: &frame.payload,
            msg_type: frame.msg_type,
        };
        let msg = match frame.msg_type {
            MsgType::PubKey => Message::PubKey {
                n: r.int()?,
                alpha: r.int()?,
                a: r.u16()?,
            },
            MsgType::CipherRanked => Message::CipherRanked { framed: r.int()? },
            MsgType::AckRank => {
                let rank = r.int()?;
                let rank = u32::try_from(&rank).map_err(|_| r.err("rank too large"))?;
                Message::AckRank { rank }
            }
            MsgType::OkxMsg => Message::OkxMsg { value: r.int()? },
            MsgType::Params => Message::Params {
                p: r.int()?,
                g: r.int()?,
                c: r.int()?,
                a: r.u16()?,
            },
            MsgType::Error => {
                let text = String::from_utf8(r.take(r.buf.len())?.to_vec())
                    .map_err(|_| r.err("error text is not UTF-8"))?;
                Message::Error { text }
            }
        };
        r.finish()?;
        Ok(msg)
    }
}
