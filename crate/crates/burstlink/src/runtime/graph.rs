//! Flowgraph construction, validation, and the deterministic scheduler.

use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

use log::warn;

use crate::runtime::block::{Block, Signature, WorkIo};
use crate::runtime::edge::{StreamEdge, DEFAULT_EDGE_CAPACITY};
use crate::runtime::pdu::Pdu;

/// Message input queues longer than this log a high-water warning once.
pub const MESSAGE_HIGH_WATER: usize = 4096;

/// Handle to a block inside a flowgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub(crate) usize);

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("stream kind mismatch: {src} output {src_port} is {src_kind}, {dst} input {dst_port} is {dst_kind}")]
    KindMismatch {
        src: String,
        src_port: usize,
        src_kind: String,
        dst: String,
        dst_port: usize,
        dst_kind: String,
    },
    #[error("stream input {port} of {block} is already connected")]
    AlreadyConnected { block: String, port: usize },
    #[error("unknown message port {port:?} on {block}")]
    UnknownPort { block: String, port: String },
    #[error("no such stream port {port} on {block}")]
    NoSuchStreamPort { block: String, port: usize },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("block {block} failed: {message}")]
    BlockWork { block: String, message: String },
}

/// Run termination policy.
#[derive(Debug, Clone, Copy)]
pub enum Termination {
    /// Run until every source block has declared itself finished and all
    /// buffered items and messages have drained.
    SourceExhausted,
    /// Clamp every stream source block (a block with stream outputs and no
    /// stream inputs) to at most `N` produced items, then drain as above.
    MaxItems(u64),
    /// Stop at the first scheduling round after the deadline. Inherently
    /// non-deterministic; intended for live I/O bridges only.
    WallClock(Duration),
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    SourceExhausted,
    WallClock,
    /// No block could make progress but at least one source had not finished:
    /// the graph is stalled (e.g. a full buffer with no downstream consumer).
    Stalled,
}

/// Per-block accounting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockStats {
    pub name: String,
    pub items_consumed: u64,
    pub items_produced: u64,
    pub messages_in: u64,
    pub messages_out: u64,
    pub counters: BTreeMap<String, u64>,
}

impl BlockStats {
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }
}

/// Per-edge accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub src: String,
    pub dst: String,
    pub items: u64,
    pub high_water: usize,
    pub capacity: usize,
}

/// Result of a run.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub stop: StopReason,
    pub blocks: Vec<BlockStats>,
    pub edges: Vec<EdgeStats>,
    pub rounds: u64,
    pub elapsed: Duration,
}

impl RunStats {
    pub fn block(&self, name: &str) -> Option<&BlockStats> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Sum of one named counter across all blocks.
    pub fn counter_total(&self, name: &str) -> u64 {
        self.blocks.iter().map(|b| b.counter(name)).sum()
    }
}

impl fmt::Display for RunStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "run: {:?} after {} rounds, {:.3}s",
            self.stop,
            self.rounds,
            self.elapsed.as_secs_f64()
        )?;
        for b in &self.blocks {
            write!(
                f,
                "  {:<24} consumed {:>10} produced {:>10} msg_in {:>6} msg_out {:>6}",
                b.name, b.items_consumed, b.items_produced, b.messages_in, b.messages_out
            )?;
            if !b.counters.is_empty() {
                write!(f, "  {:?}", b.counters)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

struct BlockEntry {
    name: String,
    block: Option<Box<dyn Block>>,
    type_name: &'static str,
    sig: Signature,
    in_edges: Vec<Option<usize>>,
    out_edges: Vec<Vec<usize>>,
    /// One FIFO per message input port, in signature order. Entries
    /// carry a graph-global arrival sequence so delivery across ports
    /// follows arrival order.
    queues: Vec<VecDeque<(u64, Pdu)>>,
    /// Subscribers per message output port: (block index, queue index).
    subs: Vec<Vec<(usize, usize)>>,
    finished: bool,
    stats: BlockStats,
    high_water_warned: bool,
}

/// A graph of blocks, stream edges, and message edges.
///
/// Stream edges must form a DAG; message edges may form cycles (required for
/// scheduler feedback loops). Execution is a deterministic round-robin over
/// blocks in insertion order, so identically constructed graphs produce
/// bit-identical stream outputs and identical per-edge message sequences.
#[derive(Default)]
pub struct Flowgraph {
    blocks: Vec<BlockEntry>,
    edges: Vec<RefCell<StreamEdge>>,
    default_capacity: usize,
    msg_seq: u64,
}

impl Flowgraph {
    pub fn new() -> Self {
        Flowgraph {
            blocks: Vec::new(),
            edges: Vec::new(),
            default_capacity: DEFAULT_EDGE_CAPACITY,
            msg_seq: 0,
        }
    }

    /// Change the default stream buffer capacity for subsequently created
    /// edges.
    pub fn set_default_capacity(&mut self, items: usize) {
        self.default_capacity = items;
    }

    pub fn add(&mut self, block: impl Block) -> BlockId {
        let type_name = block.type_name();
        let n = self
            .blocks
            .iter()
            .filter(|b| b.type_name == type_name)
            .count();
        self.add_named(&format!("{type_name}{n}"), block)
    }

    pub fn add_named(&mut self, name: &str, block: impl Block) -> BlockId {
        let sig = block.signature();
        let entry = BlockEntry {
            name: name.to_string(),
            type_name: block.type_name(),
            sig: sig.clone(),
            block: Some(Box::new(block)),
            in_edges: vec![None; sig.stream_in.len()],
            out_edges: vec![Vec::new(); sig.stream_out.len()],
            queues: vec![VecDeque::new(); sig.msg_in.len()],
            subs: vec![Vec::new(); sig.msg_out.len()],
            finished: false,
            stats: BlockStats {
                name: name.to_string(),
                ..BlockStats::default()
            },
            high_water_warned: false,
        };
        self.blocks.push(entry);
        BlockId(self.blocks.len() - 1)
    }

    pub fn block_name(&self, id: BlockId) -> &str {
        &self.blocks[id.0].name
    }

    /// Connect a stream output to a stream input with the default buffer
    /// capacity.
    pub fn connect_stream(
        &mut self,
        src: BlockId,
        src_port: usize,
        dst: BlockId,
        dst_port: usize,
    ) -> Result<(), RuntimeError> {
        self.connect_stream_with_capacity(src, src_port, dst, dst_port, self.default_capacity)
    }

    pub fn connect_stream_with_capacity(
        &mut self,
        src: BlockId,
        src_port: usize,
        dst: BlockId,
        dst_port: usize,
        capacity: usize,
    ) -> Result<(), RuntimeError> {
        let src_kind = *self.blocks[src.0].sig.stream_out.get(src_port).ok_or_else(|| {
            RuntimeError::NoSuchStreamPort {
                block: self.blocks[src.0].name.clone(),
                port: src_port,
            }
        })?;
        let dst_kind = *self.blocks[dst.0].sig.stream_in.get(dst_port).ok_or_else(|| {
            RuntimeError::NoSuchStreamPort {
                block: self.blocks[dst.0].name.clone(),
                port: dst_port,
            }
        })?;
        if src_kind != dst_kind {
            return Err(RuntimeError::KindMismatch {
                src: self.blocks[src.0].name.clone(),
                src_port,
                src_kind: src_kind.to_string(),
                dst: self.blocks[dst.0].name.clone(),
                dst_port,
                dst_kind: dst_kind.to_string(),
            });
        }
        if self.blocks[dst.0].in_edges[dst_port].is_some() {
            return Err(RuntimeError::AlreadyConnected {
                block: self.blocks[dst.0].name.clone(),
                port: dst_port,
            });
        }
        let edge = StreamEdge::new(src_kind, capacity, src.0, dst.0);
        self.edges.push(RefCell::new(edge));
        let id = self.edges.len() - 1;
        self.blocks[src.0].out_edges[src_port].push(id);
        self.blocks[dst.0].in_edges[dst_port] = Some(id);
        Ok(())
    }

    /// Connect a message output port to a message input port
    /// (publisher/subscriber; fan-out, fan-in, and cycles are all allowed).
    pub fn connect_message(
        &mut self,
        src: BlockId,
        src_port: &str,
        dst: BlockId,
        dst_port: &str,
    ) -> Result<(), RuntimeError> {
        let src_idx = self.blocks[src.0]
            .sig
            .msg_out
            .iter()
            .position(|p| *p == src_port)
            .ok_or_else(|| RuntimeError::UnknownPort {
                block: self.blocks[src.0].name.clone(),
                port: src_port.to_string(),
            })?;
        let dst_idx = self.blocks[dst.0]
            .sig
            .msg_in
            .iter()
            .position(|p| *p == dst_port)
            .ok_or_else(|| RuntimeError::UnknownPort {
                block: self.blocks[dst.0].name.clone(),
                port: dst_port.to_string(),
            })?;
        self.blocks[src.0].subs[src_idx].push((dst.0, dst_idx));
        Ok(())
    }

    /// Inject a message into a block's input port from outside the graph.
    /// Used by harnesses and I/O bridges.
    pub fn post(&mut self, dst: BlockId, port: &str, pdu: Pdu) -> Result<(), RuntimeError> {
        let idx = self.blocks[dst.0]
            .sig
            .msg_in
            .iter()
            .position(|p| *p == port)
            .ok_or_else(|| RuntimeError::UnknownPort {
                block: self.blocks[dst.0].name.clone(),
                port: port.to_string(),
            })?;
        let seq = self.msg_seq;
        self.msg_seq += 1;
        self.blocks[dst.0].queues[idx].push_back((seq, pdu));
        Ok(())
    }

    fn validate(&self) -> Result<(), RuntimeError> {
        // Every stream input must be connected.
        for b in &self.blocks {
            for (port, e) in b.in_edges.iter().enumerate() {
                if e.is_none() {
                    return Err(RuntimeError::Validation(format!(
                        "stream input {port} of {} is not connected",
                        b.name
                    )));
                }
            }
        }
        // Stream edges must be acyclic (message edges are exempt).
        let n = self.blocks.len();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            indegree[e.borrow().dst_block] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        while let Some(i) = queue.pop_front() {
            visited += 1;
            for port in &self.blocks[i].out_edges {
                for &eid in port {
                    let dst = self.edges[eid].borrow().dst_block;
                    indegree[dst] -= 1;
                    if indegree[dst] == 0 {
                        queue.push_back(dst);
                    }
                }
            }
        }
        if visited != n {
            return Err(RuntimeError::Validation(
                "stream edges form a cycle".to_string(),
            ));
        }
        Ok(())
    }

    fn is_stream_source(&self, i: usize) -> bool {
        self.blocks[i].sig.stream_in.is_empty() && !self.blocks[i].sig.stream_out.is_empty()
    }

    /// Execute the graph until the termination condition is met.
    pub fn run(&mut self, termination: Termination) -> Result<RunStats, RuntimeError> {
        self.validate()?;
        let start = Instant::now();
        let mut rounds: u64 = 0;
        let deadline = match termination {
            Termination::WallClock(d) => Some(start + d),
            _ => None,
        };
        let source_cap = match termination {
            Termination::MaxItems(n) => Some(n),
            _ => None,
        };

        let stop = loop {
            rounds += 1;
            if let Some(dl) = deadline {
                if Instant::now() >= dl {
                    break StopReason::WallClock;
                }
            }

            let mut progress = false;
            for i in 0..self.blocks.len() {
                progress |= self.step_block(i, source_cap)?;
            }

            if !progress {
                let all_finished = (0..self.blocks.len())
                    .filter(|&i| self.is_stream_source(i))
                    .all(|i| self.blocks[i].finished);
                break if all_finished {
                    StopReason::SourceExhausted
                } else {
                    StopReason::Stalled
                };
            }
        };

        if stop == StopReason::Stalled {
            warn!("flowgraph stalled: a source could not make progress");
        }

        Ok(RunStats {
            stop,
            blocks: self.blocks.iter().map(|b| b.stats.clone()).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| {
                    let e = e.borrow();
                    EdgeStats {
                        src: self.blocks[e.src_block].name.clone(),
                        dst: self.blocks[e.dst_block].name.clone(),
                        items: e.written_abs,
                        high_water: e.high_water,
                        capacity: e.capacity,
                    }
                })
                .collect(),
            rounds,
            elapsed: start.elapsed(),
        })
    }

    /// Run one block: deliver the messages queued at step start in port
    /// order, then perform stream work. Returns whether progress was made.
    fn step_block(&mut self, i: usize, source_cap: Option<u64>) -> Result<bool, RuntimeError> {
        let mut progress = false;
        let mut block = self.blocks[i].block.take().expect("block re-entered");

        // Message delivery first, across ports in arrival order. Only
        // messages already queued at step start are delivered, so a block
        // that posts to itself cannot monopolise the scheduler.
        let seq_limit = self.msg_seq;
        loop {
            let next = (0..self.blocks[i].queues.len())
                .filter_map(|q| self.blocks[i].queues[q].front().map(|(seq, _)| (*seq, q)))
                .filter(|(seq, _)| *seq < seq_limit)
                .min();
            let Some((_, q)) = next else {
                break;
            };
            {
                let (_, pdu) = self.blocks[i].queues[q].pop_front().expect("queue underflow");
                let port = self.blocks[i].sig.msg_in[q];
                let (result, finished, posted, counters) = {
                    let mut io = WorkIo::new(
                        &self.edges,
                        &self.blocks[i].in_edges,
                        &self.blocks[i].out_edges,
                        None,
                    );
                    let result = block.handle_message(port, pdu, &mut io);
                    let finished = io.finished.get();
                    let WorkIo {
                        posted, counters, ..
                    } = io;
                    (result, finished, posted.into_inner(), counters.into_inner())
                };
                self.blocks[i].stats.messages_in += 1;
                progress = true;
                self.apply_outputs(i, posted, counters)?;
                if finished && !self.blocks[i].finished {
                    self.blocks[i].finished = true;
                    self.mark_outputs_finished(i);
                }
                if let Err(e) = result {
                    self.blocks[i].block = Some(block);
                    return Err(RuntimeError::BlockWork {
                        block: self.blocks[i].name.clone(),
                        message: e.to_string(),
                    });
                }
            }
        }

        // Stream work. Message-only blocks get work calls too so that
        // message sources can emit without stream ports.
        if !self.blocks[i].finished {
            let budget = if self.is_stream_source(i) {
                source_cap.map(|cap| cap.saturating_sub(self.blocks[i].stats.items_produced))
            } else {
                None
            };
            if budget == Some(0) {
                self.blocks[i].finished = true;
                self.mark_outputs_finished(i);
                progress = true;
            } else {
                let before = self.io_snapshot(i);
                let (result, finished, posted, counters) = {
                    let mut io = WorkIo::new(
                        &self.edges,
                        &self.blocks[i].in_edges,
                        &self.blocks[i].out_edges,
                        budget,
                    );
                    let result = block.work(&mut io);
                    let finished = io.finished.get();
                    let WorkIo {
                        posted, counters, ..
                    } = io;
                    (result, finished, posted.into_inner(), counters.into_inner())
                };
                let after = self.io_snapshot(i);
                self.blocks[i].stats.items_consumed += after.0 - before.0;
                self.blocks[i].stats.items_produced += after.1 - before.1;
                if after != before || !posted.is_empty() {
                    progress = true;
                }
                self.apply_outputs(i, posted, counters)?;
                if finished {
                    self.blocks[i].finished = true;
                    self.mark_outputs_finished(i);
                    progress = true;
                }
                if let Err(e) = result {
                    self.blocks[i].block = Some(block);
                    return Err(RuntimeError::BlockWork {
                        block: self.blocks[i].name.clone(),
                        message: e.to_string(),
                    });
                }
            }
        }

        self.blocks[i].block = Some(block);
        Ok(progress)
    }

    /// (total consumed on input edges, total produced on the first fan-out
    /// edge of each output port) for progress accounting.
    fn io_snapshot(&self, i: usize) -> (u64, u64) {
        let mut consumed = 0;
        for e in self.blocks[i].in_edges.iter().flatten() {
            consumed += self.edges[*e].borrow().read_abs;
        }
        let mut produced = 0;
        for port in &self.blocks[i].out_edges {
            if let Some(&e) = port.first() {
                produced += self.edges[e].borrow().written_abs;
            }
        }
        (consumed, produced)
    }

    /// Apply posted messages and counters from a finished block step.
    fn apply_outputs(
        &mut self,
        i: usize,
        posted: Vec<(String, Pdu)>,
        counters: BTreeMap<String, u64>,
    ) -> Result<(), RuntimeError> {
        for (name, delta) in counters {
            *self.blocks[i].stats.counters.entry(name).or_insert(0) += delta;
        }
        for (port, pdu) in posted {
            let Some(port_idx) = self.blocks[i].sig.msg_out.iter().position(|p| *p == port)
            else {
                return Err(RuntimeError::UnknownPort {
                    block: self.blocks[i].name.clone(),
                    port,
                });
            };
            self.blocks[i].stats.messages_out += 1;
            let subs = self.blocks[i].subs[port_idx].clone();
            for (dst, q) in subs {
                let seq = self.msg_seq;
                self.msg_seq += 1;
                self.blocks[dst].queues[q].push_back((seq, pdu.clone()));
                if self.blocks[dst].queues[q].len() > MESSAGE_HIGH_WATER
                    && !self.blocks[dst].high_water_warned
                {
                    self.blocks[dst].high_water_warned = true;
                    warn!(
                        "message queue {}:{} exceeded {} entries",
                        self.blocks[dst].name,
                        self.blocks[dst].sig.msg_in[q],
                        MESSAGE_HIGH_WATER
                    );
                }
            }
        }
        Ok(())
    }

    fn mark_outputs_finished(&mut self, i: usize) {
        for port in &self.blocks[i].out_edges {
            for &e in port {
                self.edges[e].borrow_mut().src_finished = true;
            }
        }
    }
}
