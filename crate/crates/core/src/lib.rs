//! Generic partition refinement for coalgebras: a sequential signature
//! refinement loop and a distributed protocol over message-passing workers.

pub mod codec;
pub mod coalgebra;
pub mod dist;
pub mod encode;
pub mod error;
pub mod functor;
pub mod memory;
pub mod oracle;
pub mod refine;
pub mod signature;
pub mod transport;
pub mod weight;
pub mod wta;

pub use coalgebra::{parse_coalgebra, parse_file, write_coalgebra, write_partition, NestedCoalgebra, StateId, Value};
pub use encode::{desort, EncodedCoalgebra, F1Value, Label, Payload};
pub use dist::{run_inproc, split_states, DistRun};
pub use error::{Error, ParseError, ProtocolError, Result, SignatureError, TransportError};
pub use functor::{label_layout, parse_functor, FunctorTerm, LabelLayout, MonoidId};
pub use refine::{refine_sequential, stabilize_check, HashMode, Partition, RefineResult};
pub use signature::{canonical_bytes, compute_signature, hash_id, BlockId, SigId, SigValue};
pub use transport::{Scheduler, Transport, WorkerId};
pub use weight::Weight;
pub use wta::{generate_wta, generate_wta_nested, WtaMonoid, WtaSpec};
