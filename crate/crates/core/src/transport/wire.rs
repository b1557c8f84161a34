//! Frame layout: `u32` little-endian length of the rest, payload tag byte,
//! sender and receiver as `u32`, then the fixed-width payload fields.

use std::io::Read;

use super::{Body, Message, Phase};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::TransportError;
use crate::signature::SigId;

const IN_EDGE: u8 = 1;
const DONE: u8 = 2;
const UPD: u8 = 3;
const COUNT: u8 = 4;
const SUM_PART: u8 = 5;
const RESULT: u8 = 6;
const ACK: u8 = 7;

/// Largest frame accepted from the network.
const MAX_FRAME: usize = 1 << 30;

pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let mut out = ByteWriter::with_capacity(32);
    out.u32(0);
    let tag = match msg.body {
        Body::InEdge { .. } => IN_EDGE,
        Body::Done { .. } => DONE,
        Body::Upd { .. } => UPD,
        Body::Count { .. } => COUNT,
        Body::SumPart { .. } => SUM_PART,
        Body::Result { .. } => RESULT,
        Body::Ack => ACK,
    };
    out.u8(tag);
    out.u32(msg.from);
    out.u32(msg.to);
    match &msg.body {
        Body::InEdge { state } => out.u32(*state),
        Body::Done { phase, round } => {
            out.u8(match phase {
                Phase::Init => 0,
                Phase::Refine => 1,
            });
            out.u32(*round);
        }
        Body::Upd { state, id } => {
            out.u32(*state);
            out.u128(id.0);
        }
        Body::Count { id } => out.u128(id.0),
        Body::SumPart { round, value } => {
            out.u32(*round);
            out.u64(*value);
        }
        Body::Result {
            peak_bytes,
            fragment,
        } => {
            out.u64(*peak_bytes);
            out.len_prefix(fragment.len());
            for (s, id) in fragment {
                out.u32(*s);
                out.u128(id.0);
            }
        }
        Body::Ack => {}
    }
    let mut bytes = out.into_inner();
    let len = (bytes.len() - 4) as u32;
    bytes[..4].copy_from_slice(&len.to_le_bytes());
    bytes
}

/// Decodes a frame without its length prefix.
pub fn decode_body(bytes: &[u8]) -> Result<Message, TransportError> {
    decode(bytes).map_err(TransportError::Frame)
}

fn decode(bytes: &[u8]) -> Result<Message, String> {
    let mut r = ByteReader::new(bytes);
    let tag = r.u8()?;
    let from = r.u32()?;
    let to = r.u32()?;
    let body = match tag {
        IN_EDGE => Body::InEdge { state: r.u32()? },
        DONE => {
            let phase = match r.u8()? {
                0 => Phase::Init,
                1 => Phase::Refine,
                other => return Err(format!("bad phase {other}")),
            };
            Body::Done {
                phase,
                round: r.u32()?,
            }
        }
        UPD => Body::Upd {
            state: r.u32()?,
            id: SigId(r.u128()?),
        },
        COUNT => Body::Count {
            id: SigId(r.u128()?),
        },
        SUM_PART => Body::SumPart {
            round: r.u32()?,
            value: r.u64()?,
        },
        RESULT => {
            let peak_bytes = r.u64()?;
            let n = r.u32()? as usize;
            if n > bytes.len() / 20 {
                return Err(format!("fragment length {n} exceeds frame"));
            }
            let mut fragment = Vec::with_capacity(n);
            for _ in 0..n {
                fragment.push((r.u32()?, SigId(r.u128()?)));
            }
            Body::Result {
                peak_bytes,
                fragment,
            }
        }
        ACK => Body::Ack,
        other => return Err(format!("unknown payload tag {other}")),
    };
    r.finish()?;
    Ok(Message { from, to, body })
}

/// Reads one frame. `Ok(None)` on a clean end of stream between frames.
pub fn read_frame(stream: &mut impl Read) -> Result<Option<Message>, TransportError> {
    let mut len = [0u8; 4];
    match stream.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(TransportError::Frame(format!("frame of {len} bytes")));
    }
    let mut buf = vec![0u8; len];
    stream.read_exact(&mut buf)?;
    decode_body(&buf).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<Message> {
        let bodies = vec![
            Body::InEdge { state: 7 },
            Body::Done {
                phase: Phase::Init,
                round: 0,
            },
            Body::Done {
                phase: Phase::Refine,
                round: 12,
            },
            Body::Upd {
                state: 3,
                id: SigId(u128::MAX - 5),
            },
            Body::Count { id: SigId(5) },
            Body::SumPart {
                round: 2,
                value: u64::MAX,
            },
            Body::Result {
                peak_bytes: 1 << 40,
                fragment: vec![(0, SigId(1)), (4, SigId(1 << 100))],
            },
            Body::Result {
                peak_bytes: 0,
                fragment: vec![],
            },
            Body::Ack,
        ];
        bodies
            .into_iter()
            .enumerate()
            .map(|(i, body)| Message {
                from: i as u32,
                to: 3,
                body,
            })
            .collect()
    }

    #[test]
    fn frames_round_trip() {
        for msg in samples() {
            let bytes = encode_frame(&msg);
            assert_eq!(
                u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize,
                bytes.len() - 4
            );
            let decoded = decode_body(&bytes[4..]).unwrap();
            assert_eq!(decoded, msg);
            assert_eq!(encode_frame(&decoded), bytes);
        }
    }

    #[test]
    fn stream_of_frames() {
        let mut stream = Vec::new();
        for msg in samples() {
            stream.extend(encode_frame(&msg));
        }
        let mut cursor = std::io::Cursor::new(stream);
        let mut got = Vec::new();
        while let Some(msg) = read_frame(&mut cursor).unwrap() {
            got.push(msg);
        }
        assert_eq!(got, samples());
    }

    #[test]
    fn fixed_layout_of_upd() {
        let bytes = encode_frame(&Message {
            from: 1,
            to: 2,
            body: Body::Upd {
                state: 9,
                id: SigId(0x0102),
            },
        });
        assert_eq!(bytes.len(), 4 + 1 + 4 + 4 + 4 + 16);
        assert_eq!(&bytes[..5], &[29, 0, 0, 0, UPD]);
        assert_eq!(&bytes[17..19], &[0x02, 0x01]);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_body(&[99, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        let mut bytes = encode_frame(&Message {
            from: 0,
            to: 0,
            body: Body::Ack,
        });
        bytes.push(0);
        assert!(decode_body(&bytes[4..]).is_err());
    }
}
