//! Reliable, per-pair FIFO message passing between workers.
//!
//! Sends never block; `recv` blocks until some message is available.
//! Messages between one ordered pair of workers arrive in send order,
//! messages from different senders may interleave arbitrarily.

mod inproc;
mod tcp;
mod wire;

pub use inproc::{InProcEndpoint, InProcNetwork, Scheduler};
pub use tcp::{free_local_roster, parse_roster, Roster, TcpTransport, HANDSHAKE_MAGIC, WIRE_VERSION};
pub use wire::{decode_body, encode_frame, read_frame};

use crate::coalgebra::StateId;
use crate::error::TransportError;
use crate::signature::SigId;

pub type WorkerId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Init,
    Refine,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    /// The sender has an edge into `state`, which the receiver owns.
    InEdge { state: StateId },
    Done { phase: Phase, round: u32 },
    /// New block of `state` for the receiver's remote cache.
    Upd { state: StateId, id: SigId },
    /// Block id to be counted by the receiver.
    Count { id: SigId },
    /// Local counting-set size in the all-to-all sum of a round.
    SumPart { round: u32, value: u64 },
    /// Final block ids of the sender's original states, and its peak
    /// memory in bytes.
    Result {
        peak_bytes: u64,
        fragment: Vec<(StateId, SigId)>,
    },
    /// Sent by worker 0 once every result is in; workers exit after it.
    Ack,
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::InEdge { .. } => "INEDGE",
            Body::Done { .. } => "DONE",
            Body::Upd { .. } => "UPD",
            Body::Count { .. } => "COUNT",
            Body::SumPart { .. } => "SUMPART",
            Body::Result { .. } => "RESULT",
            Body::Ack => "ACK",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub from: WorkerId,
    pub to: WorkerId,
    pub body: Body,
}

/// One worker's endpoint.
pub trait Transport: Send {
    fn id(&self) -> WorkerId;

    /// Number of workers `W`.
    fn workers(&self) -> u32;

    /// Enqueues a message; never waits for delivery.
    fn send(&self, to: WorkerId, body: Body) -> Result<(), TransportError>;

    /// Blocks until a message addressed to this worker is available.
    fn recv(&mut self) -> Result<Message, TransportError>;

    /// Makes blocked and future receives of all workers fail, where the
    /// backend can; used to tear a run down after a protocol error.
    fn abort(&self) {}
}
