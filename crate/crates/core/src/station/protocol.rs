//! Text line protocol between base station and ingestion endpoint.
//!
//! ```text
//! node=<16 hex> seq=<u32> t_ms=<u64> kind=DATA x=<f> y=<f> z=<f>
//! node=<16 hex> seq=<u32> t_ms=<u64> kind=ALARM code=<u16>
//! ```
//!
//! Reals are written with six decimals. Fields must appear in this order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::frame::{Payload, RadioFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RecordBody {
    Data { x: f64, y: f64, z: f64 },
    Alarm { code: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub node: u64,
    pub seq: u32,
    pub t_ms: u64,
    pub body: RecordBody,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed record: {0}")]
pub struct ProtocolError(pub String);

/// Acknowledgement vocabulary of the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ack {
    Ok,
    OkDuplicate,
    BadRequest,
    UnknownNode,
}

impl Ack {
    pub fn as_str(self) -> &'static str {
        match self {
            Ack::Ok => "OK",
            Ack::OkDuplicate => "OK_DUPLICATE",
            Ack::BadRequest => "BAD_REQUEST",
            Ack::UnknownNode => "UNKNOWN_NODE",
        }
    }
}

impl fmt::Display for Ack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ack {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "OK" => Ok(Ack::Ok),
            "OK_DUPLICATE" => Ok(Ack::OkDuplicate),
            "BAD_REQUEST" => Ok(Ack::BadRequest),
            "UNKNOWN_NODE" => Ok(Ack::UnknownNode),
            other => Err(ProtocolError(format!("unknown ack {other:?}"))),
        }
    }
}

pub fn node_hex(addr: u64) -> String {
    format!("{addr:016x}")
}

fn six(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Base-station conversion from the radio side to the wired side. Axis
/// values are rounded to the protocol's six decimals.
pub fn forward(frame: &RadioFrame) -> IngestRecord {
    let body = match frame.payload {
        Payload::Data { x, y, z } => RecordBody::Data {
            x: six(x as f64),
            y: six(y as f64),
            z: six(z as f64),
        },
        Payload::Alarm { code } => RecordBody::Alarm { code },
    };
    IngestRecord {
        node: frame.node_address,
        seq: frame.seq,
        t_ms: frame.t_ms,
        body,
    }
}

impl IngestRecord {
    pub fn is_alarm(&self) -> bool {
        matches!(self.body, RecordBody::Alarm { .. })
    }

    pub fn to_line(&self) -> String {
        self.to_string()
    }

    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        line.parse()
    }
}

impl fmt::Display for IngestRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node={} seq={} t_ms={} ", node_hex(self.node), self.seq, self.t_ms)?;
        match self.body {
            RecordBody::Data { x, y, z } => write!(f, "kind=DATA x={x:.6} y={y:.6} z={z:.6}"),
            RecordBody::Alarm { code } => write!(f, "kind=ALARM code={code}"),
        }
    }
}

impl FromStr for IngestRecord {
    type Err = ProtocolError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let err = |m: String| ProtocolError(m);
        let mut fields = line.trim_end_matches(['\r', '\n']).split(' ');
        let mut next = |key: &str| -> Result<&str, ProtocolError> {
            let f = fields.next().ok_or_else(|| err(format!("missing {key}=")))?;
            f.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| err(format!("expected {key}=, found {f:?}")))
        };
        let node_s = next("node")?;
        if node_s.len() != 16 || !node_s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(err(format!("node must be 16 hex characters, got {node_s:?}")));
        }
        let node = u64::from_str_radix(node_s, 16).map_err(|e| err(e.to_string()))?;
        let seq = next("seq")?.parse().map_err(|_| err("bad seq".into()))?;
        let t_ms = next("t_ms")?.parse().map_err(|_| err("bad t_ms".into()))?;
        let body = match next("kind")? {
            "DATA" => {
                let mut axis = |k: &str| -> Result<f64, ProtocolError> {
                    next(k)?
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("bad {k}")))
                };
                RecordBody::Data {
                    x: axis("x")?,
                    y: axis("y")?,
                    z: axis("z")?,
                }
            }
            "ALARM" => RecordBody::Alarm {
                code: next("code")?.parse().map_err(|_| err("bad code".into()))?,
            },
            k => return Err(err(format!("unknown kind {k:?}"))),
        };
        if let Some(extra) = fields.next() {
            return Err(err(format!("trailing field {extra:?}")));
        }
        Ok(Self {
            node,
            seq,
            t_ms,
            body,
        })
    }
}
