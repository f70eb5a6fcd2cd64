//! Deterministic flowgraph runtime.
//!
//! Blocks are stream/message actors connected by bounded-FIFO stream edges
//! and publish/subscribe message edges. The scheduler is a fixed round-robin
//! in block insertion order: deterministic by construction, with per-block
//! work serialization and per-edge FIFO ordering. Stream edges must be
//! acyclic; message edges may form cycles so that feedback loops (e.g. a
//! burst scheduler listening to its downstream stream source) are expressible.

pub mod block;
pub mod blocks;
pub mod edge;
pub mod graph;
pub mod pdu;

pub use block::{propagate_tags, Block, BlockError, Signature, StreamReader, StreamWriter, WorkIo};
pub use blocks::{
    MessageMap, MessageSink, NullSink, PduSource, PduToTaggedStream, SinkData, StreamProbe,
    TaggedStreamToPdu, VectorSink, VectorSource, PACKET_LEN_KEY,
};
pub use edge::DEFAULT_EDGE_CAPACITY;
pub use graph::{
    BlockId, BlockStats, EdgeStats, Flowgraph, RunStats, RuntimeError, StopReason, Termination,
    MESSAGE_HIGH_WATER,
};
pub use pdu::{ItemKind, Payload, Pdu, Tag, Value};
