//! Eventstream sink: extracts timed sample chunks from a stream into PDUs.

use std::collections::VecDeque;

use crate::eventstream::{TriggerMessage, EVENT_LENGTH_KEY, EVENT_TIME_KEY};
use crate::runtime::{Block, BlockError, ItemKind, Payload, Pdu, Signature, WorkIo};
use crate::Sample;

/// Default extraction history depth, in items.
pub const DEFAULT_HISTORY_DEPTH: usize = 1 << 20;

enum History {
    Complex(VecDeque<Sample>),
    Real(VecDeque<f64>),
}

impl History {
    fn len(&self) -> usize {
        match self {
            History::Complex(h) => h.len(),
            History::Real(h) => h.len(),
        }
    }

    fn extract(&mut self, start: usize, len: usize) -> Payload {
        match self {
            History::Complex(h) => {
                h.make_contiguous();
                Payload::Complex(h.as_slices().0[start..start + len].to_vec())
            }
            History::Real(h) => {
                h.make_contiguous();
                Payload::Real(h.as_slices().0[start..start + len].to_vec())
            }
        }
    }

    fn trim_front(&mut self, n: usize) {
        match self {
            History::Complex(h) => {
                h.drain(..n);
            }
            History::Real(h) => {
                h.drain(..n);
            }
        }
    }
}

struct PendingTrigger {
    msg: TriggerMessage,
    seq: u64,
}

/// Consumes a stream into a bounded history ring and answers trigger
/// messages by emitting the addressed span as a PDU on `out`.
///
/// Overlapping extractions are allowed (the history is read-only with
/// respect to events). Triggers that address history already discarded are
/// dropped and counted as `late_trigger`; triggers still incomplete when the
/// stream ends are dropped and counted as `truncated_event`.
pub struct EsSink {
    kind: ItemKind,
    history: History,
    depth: usize,
    /// Absolute index of the first retained history item.
    hist_start: u64,
    pending: Vec<PendingTrigger>,
    next_seq: u64,
}

impl EsSink {
    pub fn new(kind: ItemKind) -> Self {
        Self::with_history_depth(kind, DEFAULT_HISTORY_DEPTH)
    }

    pub fn with_history_depth(kind: ItemKind, depth: usize) -> Self {
        let history = match kind {
            ItemKind::Complex => History::Complex(VecDeque::new()),
            ItemKind::Real => History::Real(VecDeque::new()),
            other => panic!("es_sink supports complex or real streams, not {other}"),
        };
        EsSink {
            kind,
            history,
            depth,
            hist_start: 0,
            pending: Vec::new(),
            next_seq: 0,
        }
    }
}

impl Block for EsSink {
    fn type_name(&self) -> &'static str {
        "es_sink"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .stream_in(self.kind)
            .msg_in("trigger")
            .msg_out("out")
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        match TriggerMessage::from_pdu(&pdu) {
            Some(msg) if msg.length >= 1 => {
                self.pending.push(PendingTrigger {
                    msg,
                    seq: self.next_seq,
                });
                self.next_seq += 1;
            }
            _ => io.count("malformed_trigger", 1),
        }
        Ok(())
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let n = inp.available();
        if n > 0 {
            match &mut self.history {
                History::Complex(h) => h.extend(inp.complex()[..n].iter().copied()),
                History::Real(h) => h.extend(inp.real()[..n].iter().copied()),
            }
            inp.consume(n);
            let excess = self.history.len().saturating_sub(self.depth);
            if excess > 0 {
                self.history.trim_front(excess);
                self.hist_start += excess as u64;
            }
        }
        let eof = inp.finished() && inp.available() == 0;
        drop(inp);

        let hist_end = self.hist_start + self.history.len() as u64;

        // Emit every pending trigger whose span is fully retained, ordered by
        // completion position (ties by arrival).
        let mut emittable: Vec<PendingTrigger> = Vec::new();
        let mut waiting: Vec<PendingTrigger> = Vec::new();
        for p in self.pending.drain(..) {
            if p.msg.time < self.hist_start {
                io.count("late_trigger", 1);
            } else if p.msg.time + p.msg.length <= hist_end {
                emittable.push(p);
            } else if eof {
                io.count("truncated_event", 1);
            } else {
                waiting.push(p);
            }
        }
        emittable.sort_by_key(|p| (p.msg.time + p.msg.length, p.seq));
        for p in emittable {
            let start = (p.msg.time - self.hist_start) as usize;
            let payload = self.history.extract(start, p.msg.length as usize);
            let mut pdu = Pdu::new(payload);
            pdu.meta = p.msg.meta.clone();
            pdu.set_meta(EVENT_TIME_KEY, p.msg.time);
            pdu.set_meta(EVENT_LENGTH_KEY, p.msg.length);
            pdu.set_meta("stage", "extraction");
            io.post("out", pdu);
        }
        self.pending = waiting;
        Ok(())
    }
}
