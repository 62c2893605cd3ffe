//! Fixed-layout radio frames.
//!
//! ```text
//! offset  size  field
//!      0     8  node address, big-endian
//!      8     4  sequence number, big-endian
//!     12     8  t_ms, big-endian
//!     20     1  kind: 0x01 DATA, 0x02 ALARM
//!     21    12  DATA: x, y, z as f32 little-endian
//!     21     2  ALARM: code as u16 little-endian
//! ```

use serde::{Deserialize, Serialize};

pub const HEADER_LEN: usize = 21;
pub const DATA_FRAME_LEN: usize = HEADER_LEN + 12;
pub const ALARM_FRAME_LEN: usize = HEADER_LEN + 2;

const KIND_DATA: u8 = 0x01;
const KIND_ALARM: u8 = 0x02;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame of {0} bytes is shorter than the {HEADER_LEN}-byte header")]
    Truncated(usize),
    #[error("unknown frame kind 0x{0:02x}")]
    UnknownKind(u8),
    #[error("{kind} frame must be {expected} bytes, got {got}")]
    Length {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Data { x: f32, y: f32, z: f32 },
    Alarm { code: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioFrame {
    pub node_address: u64,
    pub seq: u32,
    pub t_ms: u64,
    pub payload: Payload,
}

impl RadioFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DATA_FRAME_LEN);
        out.extend_from_slice(&self.node_address.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.t_ms.to_be_bytes());
        match self.payload {
            Payload::Data { x, y, z } => {
                out.push(KIND_DATA);
                for v in [x, y, z] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Payload::Alarm { code } => {
                out.push(KIND_ALARM);
                out.extend_from_slice(&code.to_le_bytes());
            }
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::Truncated(bytes.len()));
        }
        let u64_at = |o: usize| u64::from_be_bytes(bytes[o..o + 8].try_into().unwrap());
        let node_address = u64_at(0);
        let seq = u32::from_be_bytes(bytes[8..12].try_into().unwrap());
        let t_ms = u64_at(12);
        let body = &bytes[HEADER_LEN..];
        let payload = match bytes[20] {
            KIND_DATA => {
                if bytes.len() != DATA_FRAME_LEN {
                    return Err(FrameError::Length {
                        kind: "DATA",
                        expected: DATA_FRAME_LEN,
                        got: bytes.len(),
                    });
                }
                let f = |i: usize| f32::from_le_bytes(body[i * 4..i * 4 + 4].try_into().unwrap());
                Payload::Data {
                    x: f(0),
                    y: f(1),
                    z: f(2),
                }
            }
            KIND_ALARM => {
                if bytes.len() != ALARM_FRAME_LEN {
                    return Err(FrameError::Length {
                        kind: "ALARM",
                        expected: ALARM_FRAME_LEN,
                        got: bytes.len(),
                    });
                }
                Payload::Alarm {
                    code: u16::from_le_bytes([body[0], body[1]]),
                }
            }
            other => return Err(FrameError::UnknownKind(other)),
        };
        Ok(Self {
            node_address,
            seq,
            t_ms,
            payload,
        })
    }
}
