//! Length-prefixed JSON framing for out-of-process xApps.
//!
//! Each frame is a 4-byte big-endian length followed by that many bytes of
//! JSON: `{"type": "subscription" | "indication" | "control" | "ack" | "error", ...}`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ControlAck, ControlRequest, Indication, Subscription};

pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum E2Message {
    Subscription(Subscription),
    Indication(Indication),
    Control(ControlRequest),
    Ack(ControlAck),
    Error { message: String },
}

pub fn encode(msg: &E2Message) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("E2 messages always serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn write_frame(w: &mut impl Write, msg: &E2Message) -> io::Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream before a new frame starts.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<E2Message>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated frame header")),
            n => got += n,
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
