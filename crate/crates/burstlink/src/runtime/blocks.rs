//! General-purpose blocks: vector sources/sinks, message sinks, the message
//! lambda block, PDU/tagged-stream conversion, and stream probes.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::runtime::block::{Block, BlockError, Signature, WorkIo};
use crate::runtime::pdu::{ItemKind, Payload, Pdu, Tag, Value};

/// Reserved tag key marking packet boundaries on tagged streams.
pub const PACKET_LEN_KEY: &str = "packet_len";

fn push_payload(writer: &mut crate::runtime::block::StreamWriter, payload: &Payload, range: std::ops::Range<usize>) {
    match payload {
        Payload::Complex(v) => writer.push_complex(&v[range]),
        Payload::Real(v) => writer.push_real(&v[range]),
        Payload::Bits(v) => writer.push_bits(&v[range]),
        Payload::Bytes(v) => writer.push_bytes(&v[range]),
    }
}

fn append_from_reader(payload: &mut Payload, reader: &crate::runtime::block::StreamReader, n: usize) {
    match payload {
        Payload::Complex(v) => v.extend_from_slice(&reader.complex()[..n]),
        Payload::Real(v) => v.extend_from_slice(&reader.real()[..n]),
        Payload::Bits(v) => v.extend_from_slice(&reader.bits()[..n]),
        Payload::Bytes(v) => v.extend_from_slice(&reader.bytes()[..n]),
    }
}

fn empty_payload(kind: ItemKind) -> Payload {
    match kind {
        ItemKind::Complex => Payload::Complex(Vec::new()),
        ItemKind::Real => Payload::Real(Vec::new()),
        ItemKind::Bit => Payload::Bits(Vec::new()),
        ItemKind::Byte => Payload::Bytes(Vec::new()),
    }
}

/// Emits a fixed vector of items, then finishes.
pub struct VectorSource {
    data: Payload,
    tags: Vec<Tag>,
    pos: usize,
}

impl VectorSource {
    pub fn new(data: Payload) -> Self {
        VectorSource {
            data,
            tags: Vec::new(),
            pos: 0,
        }
    }

    pub fn with_tags(mut self, tags: Vec<Tag>) -> Self {
        self.tags = tags;
        self
    }
}

impl Block for VectorSource {
    fn type_name(&self) -> &'static str {
        "vector_source"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_out(self.data.kind())
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut out = io.writer(0);
        let n = out.space().min(self.data.len() - self.pos);
        if n > 0 {
            for tag in &self.tags {
                let off = tag.offset as usize;
                if off >= self.pos && off < self.pos + n {
                    out.add_tag((off - self.pos) as u64, &tag.key, tag.value.clone());
                }
            }
            push_payload(&mut out, &self.data, self.pos..self.pos + n);
            self.pos += n;
        }
        if self.pos == self.data.len() {
            io.finish();
        }
        Ok(())
    }
}

/// Everything a [`VectorSink`] collected during a run.
#[derive(Debug, Clone)]
pub struct SinkData {
    pub payload: Payload,
    pub tags: Vec<Tag>,
}

/// Collects an entire stream (and its tags) for inspection after the run.
pub struct VectorSink {
    kind: ItemKind,
    data: Arc<Mutex<SinkData>>,
}

impl VectorSink {
    pub fn new(kind: ItemKind) -> (Self, Arc<Mutex<SinkData>>) {
        let data = Arc::new(Mutex::new(SinkData {
            payload: empty_payload(kind),
            tags: Vec::new(),
        }));
        (
            VectorSink {
                kind,
                data: data.clone(),
            },
            data,
        )
    }
}

impl Block for VectorSink {
    fn type_name(&self) -> &'static str {
        "vector_sink"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_in(self.kind)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let n = inp.available();
        if n > 0 {
            let mut data = self.data.lock().unwrap();
            let lo = inp.abs_offset();
            for tag in inp.tags() {
                if tag.offset >= lo && tag.offset < lo + n as u64 {
                    data.tags.push(tag.clone());
                }
            }
            append_from_reader(&mut data.payload, &inp, n);
            inp.consume(n);
        }
        Ok(())
    }
}

/// Consumes and discards a stream.
pub struct NullSink {
    kind: ItemKind,
}

impl NullSink {
    pub fn new(kind: ItemKind) -> Self {
        NullSink { kind }
    }
}

impl Block for NullSink {
    fn type_name(&self) -> &'static str {
        "null_sink"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_in(self.kind)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let n = inp.available();
        inp.consume(n);
        Ok(())
    }
}

/// Publishes a fixed sequence of PDUs on its `out` port, then stops.
pub struct PduSource {
    pdus: Vec<Pdu>,
    sent: bool,
}

impl PduSource {
    pub fn new(pdus: Vec<Pdu>) -> Self {
        PduSource { pdus, sent: false }
    }
}

impl Block for PduSource {
    fn type_name(&self) -> &'static str {
        "pdu_source"
    }

    fn signature(&self) -> Signature {
        Signature::new().msg_out("out")
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        if !self.sent {
            for pdu in self.pdus.drain(..) {
                io.post("out", pdu);
            }
            self.sent = true;
        }
        Ok(())
    }
}

/// Collects every PDU delivered to its `in` port.
pub struct MessageSink {
    data: Arc<Mutex<Vec<Pdu>>>,
}

impl MessageSink {
    pub fn new() -> (Self, Arc<Mutex<Vec<Pdu>>>) {
        let data = Arc::new(Mutex::new(Vec::new()));
        (MessageSink { data: data.clone() }, data)
    }
}

impl Block for MessageSink {
    fn type_name(&self) -> &'static str {
        "message_sink"
    }

    fn signature(&self) -> Signature {
        Signature::new().msg_in("in")
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, _io: &mut WorkIo) -> Result<(), BlockError> {
        self.data.lock().unwrap().push(pdu);
        Ok(())
    }
}

/// Message lambda block: applies a user function to every input PDU.
///
/// A failing function drops that PDU, bumps the `fn_error` counter, and
/// processing continues.
pub struct MessageMap {
    name: &'static str,
    func: Box<dyn FnMut(Pdu) -> Result<Pdu, String> + 'static>,
}

impl MessageMap {
    pub fn new(
        name: &'static str,
        func: impl FnMut(Pdu) -> Result<Pdu, String> + 'static,
    ) -> Self {
        MessageMap {
            name,
            func: Box::new(func),
        }
    }
}

impl Block for MessageMap {
    fn type_name(&self) -> &'static str {
        self.name
    }

    fn signature(&self) -> Signature {
        Signature::new().msg_in("in").msg_out("out")
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        match (self.func)(pdu) {
            Ok(out) => io.post("out", out),
            Err(why) => {
                log::debug!("{}: pdu dropped: {why}", self.name);
                io.count("fn_error", 1);
            }
        }
        Ok(())
    }
}

/// Converts PDUs to a tagged stream: payload items are emitted contiguously
/// with a `packet_len` tag on the first item, and every metadata entry is
/// emitted as an additional tag at the same offset.
pub struct PduToTaggedStream {
    kind: ItemKind,
    queue: std::collections::VecDeque<Pdu>,
    /// Items of the current packet already emitted.
    emitted: usize,
}

impl PduToTaggedStream {
    pub fn new(kind: ItemKind) -> Self {
        PduToTaggedStream {
            kind,
            queue: std::collections::VecDeque::new(),
            emitted: 0,
        }
    }
}

impl Block for PduToTaggedStream {
    fn type_name(&self) -> &'static str {
        "pdu_to_tagged_stream"
    }

    fn signature(&self) -> Signature {
        Signature::new().msg_in("pdus").stream_out(self.kind)
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        if pdu.payload.is_empty() {
            io.count("empty_payload", 1);
            return Ok(());
        }
        if pdu.payload.kind() != self.kind {
            io.count("kind_mismatch", 1);
            return Ok(());
        }
        self.queue.push_back(pdu);
        Ok(())
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut out = io.writer(0);
        while let Some(pdu) = self.queue.front() {
            let len = pdu.payload.len();
            let space = out.space();
            if space == 0 {
                break;
            }
            if self.emitted == 0 {
                out.add_tag(0, PACKET_LEN_KEY, len as u64);
                for (k, v) in &pdu.meta {
                    out.add_tag(0, k, v.clone());
                }
            }
            let n = space.min(len - self.emitted);
            push_payload(&mut out, &pdu.payload, self.emitted..self.emitted + n);
            self.emitted += n;
            if self.emitted == len {
                self.queue.pop_front();
                self.emitted = 0;
            } else {
                break;
            }
        }
        Ok(())
    }
}

/// Inverse of [`PduToTaggedStream`]: reassembles `packet_len`-tagged spans
/// into PDUs, restoring metadata tags found on the first item of each span.
///
/// Items arriving before the first tag are discarded and counted as
/// `missing_length_tag`; a partial packet at stream end is dropped and
/// counted as `truncated_final_packet`.
pub struct TaggedStreamToPdu {
    kind: ItemKind,
    current: Option<Pdu>,
    remaining: usize,
    gap_open: bool,
}

impl TaggedStreamToPdu {
    pub fn new(kind: ItemKind) -> Self {
        TaggedStreamToPdu {
            kind,
            current: None,
            remaining: 0,
            gap_open: false,
        }
    }
}

impl Block for TaggedStreamToPdu {
    fn type_name(&self) -> &'static str {
        "tagged_stream_to_pdu"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_in(self.kind).msg_out("pdus")
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        loop {
            let avail = inp.available();
            if avail == 0 {
                break;
            }
            let base = inp.abs_offset();
            if let Some(pdu) = self.current.as_mut() {
                let n = avail.min(self.remaining);
                append_from_reader(&mut pdu.payload, &inp, n);
                inp.consume(n);
                self.remaining -= n;
                if self.remaining == 0 {
                    io.post("pdus", self.current.take().expect("packet in flight"));
                }
                continue;
            }
            // Hunt for a packet_len tag at or after the current offset.
            let next_tag = inp
                .tags()
                .filter(|t| t.key == PACKET_LEN_KEY && t.offset >= base)
                .map(|t| (t.offset, t.value.clone()))
                .next();
            match next_tag {
                Some((off, value)) if off == base => {
                    let len = value.as_u64().unwrap_or(0) as usize;
                    if len == 0 {
                        io.count("malformed_length_tag", 1);
                        inp.consume(1);
                        continue;
                    }
                    let mut pdu = Pdu::new(empty_payload(self.kind));
                    for t in inp.tags() {
                        if t.offset == base && t.key != PACKET_LEN_KEY {
                            pdu.meta.insert(t.key.clone(), t.value.clone());
                        }
                    }
                    self.current = Some(pdu);
                    self.remaining = len;
                    self.gap_open = false;
                }
                Some((off, _)) => {
                    // Discard the untagged prefix, then resume at the tag.
                    if !self.gap_open {
                        io.count("missing_length_tag", 1);
                    }
                    inp.consume((off - base) as usize);
                    self.gap_open = false;
                }
                None => {
                    if !self.gap_open {
                        io.count("missing_length_tag", 1);
                        self.gap_open = true;
                    }
                    inp.consume(avail);
                    break;
                }
            }
        }
        if inp.finished() && inp.available() == 0 {
            if self.current.take().is_some() {
                io.count("truncated_final_packet", 1);
                self.remaining = 0;
            }
        }
        Ok(())
    }
}

/// Pure observer that chops a stream into fixed-size PDUs on a message port.
/// Used for diagnostics taps.
pub struct StreamProbe {
    kind: ItemKind,
    stage: String,
    chunk: usize,
}

impl StreamProbe {
    pub fn new(kind: ItemKind, stage: &str, chunk: usize) -> Self {
        assert!(chunk >= 1);
        StreamProbe {
            kind,
            stage: stage.to_string(),
            chunk,
        }
    }
}

impl Block for StreamProbe {
    fn type_name(&self) -> &'static str {
        "stream_probe"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_in(self.kind).msg_out("out")
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        loop {
            let avail = inp.available();
            let flush = inp.finished() && avail > 0;
            if avail < self.chunk && !flush {
                break;
            }
            let n = avail.min(self.chunk);
            let start = inp.abs_offset();
            let mut payload = empty_payload(self.kind);
            append_from_reader(&mut payload, &inp, n);
            inp.consume(n);
            let mut meta = BTreeMap::new();
            meta.insert("stage".to_string(), Value::Str(self.stage.clone()));
            meta.insert("start_index".to_string(), Value::U64(start));
            io.post("out", Pdu { meta, payload });
        }
        Ok(())
    }
}
