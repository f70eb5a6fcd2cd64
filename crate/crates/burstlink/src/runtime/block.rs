//! The block trait and the I/O context handed to block work functions.

use std::cell::{Cell, RefCell};
use std::cmp;
use std::collections::BTreeMap;

use crate::runtime::edge::StreamEdge;
use crate::runtime::pdu::{ItemKind, Pdu, Tag, Value};
use crate::Sample;

/// Error raised by a block's work or message handler. The scheduler attaches
/// the failing block's identity before propagating it.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct BlockError(pub String);

impl BlockError {
    pub fn new(msg: impl Into<String>) -> Self {
        BlockError(msg.into())
    }
}

/// Static port layout of a block.
#[derive(Debug, Clone, Default)]
pub struct Signature {
    pub stream_in: Vec<ItemKind>,
    pub stream_out: Vec<ItemKind>,
    pub msg_in: Vec<&'static str>,
    pub msg_out: Vec<&'static str>,
}

impl Signature {
    pub fn new() -> Self {
        Signature::default()
    }

    pub fn stream_in(mut self, kind: ItemKind) -> Self {
        self.stream_in.push(kind);
        self
    }

    pub fn stream_out(mut self, kind: ItemKind) -> Self {
        self.stream_out.push(kind);
        self
    }

    pub fn msg_in(mut self, name: &'static str) -> Self {
        self.msg_in.push(name);
        self
    }

    pub fn msg_out(mut self, name: &'static str) -> Self {
        self.msg_out.push(name);
        self
    }
}

/// A stream/message processing actor.
///
/// The runtime guarantees that a block's `work` and `handle_message` are never
/// executed concurrently with themselves or each other: one block is one
/// logical execution strand.
pub trait Block: 'static {
    fn type_name(&self) -> &'static str;

    fn signature(&self) -> Signature;

    /// Stream processing step. Consume from inputs, produce to outputs,
    /// optionally post messages. Called repeatedly until the graph terminates.
    fn work(&mut self, _io: &mut WorkIo) -> Result<(), BlockError> {
        Ok(())
    }

    /// Handle one message delivered to the named input port.
    fn handle_message(
        &mut self,
        port: &str,
        _pdu: Pdu,
        _io: &mut WorkIo,
    ) -> Result<(), BlockError> {
        Err(BlockError::new(format!("no message handler for port {port}")))
    }
}

/// I/O context for one block step.
///
/// Stream access goes through [`WorkIo::reader`] / [`WorkIo::writer`]; the
/// per-edge `RefCell`s let a block hold a reader and a writer at the same
/// time. Message posts and counter updates are collected and applied by the
/// scheduler after the step.
pub struct WorkIo<'a> {
    pub(crate) edges: &'a [RefCell<StreamEdge>],
    pub(crate) in_edges: &'a [Option<usize>],
    pub(crate) out_edges: &'a [Vec<usize>],
    pub(crate) posted: RefCell<Vec<(String, Pdu)>>,
    pub(crate) counters: RefCell<BTreeMap<String, u64>>,
    pub(crate) finished: Cell<bool>,
    /// Remaining production budget for capped source blocks.
    pub(crate) produce_budget: Option<u64>,
}

impl<'a> WorkIo<'a> {
    pub(crate) fn new(
        edges: &'a [RefCell<StreamEdge>],
        in_edges: &'a [Option<usize>],
        out_edges: &'a [Vec<usize>],
        produce_budget: Option<u64>,
    ) -> Self {
        WorkIo {
            edges,
            in_edges,
            out_edges,
            posted: RefCell::new(Vec::new()),
            counters: RefCell::new(BTreeMap::new()),
            finished: Cell::new(false),
            produce_budget,
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.in_edges.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.out_edges.len()
    }

    /// Reader for stream input port `port`.
    pub fn reader(&self, port: usize) -> StreamReader<'_> {
        let id = self.in_edges[port].expect("input port not connected");
        let mut edge = self.edges[id].borrow_mut();
        edge.make_contiguous();
        StreamReader { edge }
    }

    /// Writer for stream output port `port`. Covers every fan-out edge of the
    /// port; back-pressure is the minimum free space across them.
    pub fn writer(&self, port: usize) -> StreamWriter<'_> {
        let edges = self.out_edges[port]
            .iter()
            .map(|&id| self.edges[id].borrow_mut())
            .collect();
        StreamWriter {
            edges,
            budget: self.produce_budget,
        }
    }

    /// Publish a message on the named output port.
    pub fn post(&self, port: &str, pdu: Pdu) {
        self.posted.borrow_mut().push((port.to_string(), pdu));
    }

    /// Increment a named per-block counter (visible in `RunStats`). Counters
    /// named by error conditions double as the error accounting.
    pub fn count(&self, name: &str, delta: u64) {
        *self.counters.borrow_mut().entry(name.to_string()).or_insert(0) += delta;
    }

    /// Declare this block finished: a source that has exhausted its input.
    pub fn finish(&self) {
        self.finished.set(true);
    }
}

/// Read side of one stream edge, positioned at the consumer.
pub struct StreamReader<'a> {
    edge: std::cell::RefMut<'a, StreamEdge>,
}

impl StreamReader<'_> {
    pub fn available(&self) -> usize {
        self.edge.len()
    }

    /// True when the producer has finished; once the buffer drains no more
    /// items will arrive.
    pub fn finished(&self) -> bool {
        self.edge.src_finished
    }

    /// Absolute stream offset of the first readable item.
    pub fn abs_offset(&self) -> u64 {
        self.edge.read_abs
    }

    pub fn kind(&self) -> ItemKind {
        self.edge.kind()
    }

    pub fn complex(&self) -> &[Sample] {
        self.edge.complex_slice()
    }

    pub fn real(&self) -> &[f64] {
        self.edge.real_slice()
    }

    pub fn bits(&self) -> &[u8] {
        self.edge.bit_slice()
    }

    pub fn bytes(&self) -> &[u8] {
        self.edge.byte_slice()
    }

    /// Tags attached to currently readable items, in offset order.
    pub fn tags(&self) -> impl Iterator<Item = &Tag> {
        self.edge.tags.iter()
    }

    pub fn consume(&mut self, n: usize) {
        self.edge.consume(n);
    }
}

/// Write side of one stream output port (all fan-out edges).
pub struct StreamWriter<'a> {
    edges: Vec<std::cell::RefMut<'a, StreamEdge>>,
    budget: Option<u64>,
}

impl StreamWriter<'_> {
    /// Free space: minimum across fan-out edges, clamped by any production
    /// budget. Unconnected ports report the budget (or "unlimited").
    pub fn space(&self) -> usize {
        let edge_space = self
            .edges
            .iter()
            .map(|e| e.space())
            .min()
            .unwrap_or(usize::MAX);
        match self.budget {
            Some(b) => cmp::min(edge_space, usize::try_from(b).unwrap_or(usize::MAX)),
            None => edge_space,
        }
    }

    /// Absolute stream offset the next pushed item will occupy.
    pub fn abs_offset(&self) -> u64 {
        self.edges.first().map(|e| e.written_abs).unwrap_or(0)
    }

    pub fn push_complex(&mut self, items: &[Sample]) {
        for e in &mut self.edges {
            e.push_complex(items);
        }
    }

    pub fn push_real(&mut self, items: &[f64]) {
        for e in &mut self.edges {
            e.push_real(items);
        }
    }

    pub fn push_bits(&mut self, items: &[u8]) {
        for e in &mut self.edges {
            e.push_bits(items);
        }
    }

    pub fn push_bytes(&mut self, items: &[u8]) {
        for e in &mut self.edges {
            e.push_bytes(items);
        }
    }

    /// Attach a tag `rel` items ahead of the current write position.
    pub fn add_tag(&mut self, rel: u64, key: &str, value: impl Into<Value> + Clone) {
        for e in &mut self.edges {
            let off = e.written_abs + rel;
            e.tags.push_back(Tag::new(off, key, value.clone()));
        }
    }
}

/// Copy tags from the next `n` readable input items to the writer at the same
/// absolute offsets. For 1:1 blocks this preserves tag offset stability; call
/// before `consume`.
pub fn propagate_tags(reader: &StreamReader, writer: &mut StreamWriter, n: usize) {
    let lo = reader.abs_offset();
    let hi = lo + n as u64;
    for tag in reader.tags() {
        if tag.offset >= lo && tag.offset < hi {
            debug_assert!(writer.abs_offset() <= tag.offset);
            let rel = tag.offset - writer.abs_offset();
            writer.add_tag(rel, &tag.key, tag.value.clone());
        }
    }
}
