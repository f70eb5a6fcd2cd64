//! Eventstream source: places PDU payloads into an outgoing stream at
//! precise offsets, zero-filling between events.

use std::collections::BTreeMap;

use crate::eventstream::{EventDescriptor, NOW_KEY};
use crate::runtime::{Block, BlockError, ItemKind, Pdu, Signature, WorkIo};
use crate::Sample;

/// Default interval, in items, between "now" feedback messages.
pub const DEFAULT_FEEDBACK_PERIOD: u64 = 4096;

/// Tag key marking an event start offset when event tagging is enabled.
pub const BURST_LEN_TAG: &str = "burst_len";

/// Builds a stream that is all-zero except where accepted events place their
/// payloads. Publishes "now" feedback on the `now` port so upstream
/// schedulers can aim ahead of the write position.
///
/// Events are accepted from the `schedule` port. An event whose start time is
/// closer than `min_lead` to the current position is dropped and counted as
/// `late_event`. Overlapping events are rejected and counted by default;
/// additive mode sums them instead (collision simulation). Each work call
/// produces at most one feedback period of items, which bounds how far the
/// position can advance between feedback messages.
pub struct EsSource {
    kind: ItemKind,
    /// Accepted events keyed by start time.
    events: BTreeMap<u64, EventDescriptor>,
    pos: u64,
    min_lead: u64,
    feedback_period: u64,
    sent_initial_now: bool,
    additive: bool,
    /// Total items to emit before finishing; `None` runs until externally
    /// clamped.
    total_items: Option<u64>,
    /// Tag each event start offset with a `burst_len` tag.
    tag_events: bool,
}

impl EsSource {
    pub fn new(kind: ItemKind) -> Self {
        assert!(
            matches!(kind, ItemKind::Complex | ItemKind::Real),
            "es_source supports complex or real streams"
        );
        EsSource {
            kind,
            events: BTreeMap::new(),
            pos: 0,
            min_lead: 0,
            feedback_period: DEFAULT_FEEDBACK_PERIOD,
            sent_initial_now: false,
            additive: false,
            total_items: None,
            tag_events: false,
        }
    }

    pub fn with_min_lead(mut self, lead: u64) -> Self {
        self.min_lead = lead;
        self
    }

    pub fn with_feedback_period(mut self, period: u64) -> Self {
        assert!(period >= 1);
        self.feedback_period = period;
        self
    }

    pub fn with_total_items(mut self, total: u64) -> Self {
        self.total_items = Some(total);
        self
    }

    pub fn additive(mut self) -> Self {
        self.additive = true;
        self
    }

    /// Emit a `burst_len` tag at each event start offset.
    pub fn with_event_tags(mut self) -> Self {
        self.tag_events = true;
        self
    }

    fn overlaps(&self, time: u64, length: u64) -> bool {
        let end = time + length;
        self.events.range(..end).any(|(&t, e)| t + e.length > time)
    }
}

impl Block for EsSource {
    fn type_name(&self) -> &'static str {
        "es_source"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .stream_out(self.kind)
            .msg_in("schedule")
            .msg_out("now")
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        let Some(ev) = EventDescriptor::from_pdu(&pdu) else {
            io.count("malformed_event", 1);
            return Ok(());
        };
        if ev.payload.is_empty() || ev.payload.len() as u64 != ev.length {
            io.count("malformed_event", 1);
            return Ok(());
        }
        if ev.payload.kind() != self.kind {
            io.count("kind_mismatch", 1);
            return Ok(());
        }
        if ev.time < self.pos + self.min_lead {
            io.count("late_event", 1);
            return Ok(());
        }
        if !self.additive && self.overlaps(ev.time, ev.length) {
            io.count("overlap_rejected", 1);
            return Ok(());
        }
        self.events.insert(ev.time, ev);
        Ok(())
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        if !self.sent_initial_now {
            self.sent_initial_now = true;
            io.post("now", Pdu::control().with_meta(NOW_KEY, self.pos));
        }
        let mut out = io.writer(0);
        let mut n = out.space().min(self.feedback_period as usize);
        if let Some(total) = self.total_items {
            n = n.min(total.saturating_sub(self.pos) as usize);
        }
        if n > 0 {
            let lo = self.pos;
            let hi = lo + n as u64;
            if self.tag_events {
                for (&t, ev) in self.events.range(lo..hi) {
                    out.add_tag(t - lo, BURST_LEN_TAG, ev.length);
                }
            }
            match self.kind {
                ItemKind::Complex => {
                    let mut chunk = vec![Sample::new(0.0, 0.0); n];
                    for (&t, ev) in self.events.range(..hi) {
                        let p = ev.payload.complex().expect("kind checked at accept");
                        place(&mut chunk, lo, t, p, self.additive);
                    }
                    out.push_complex(&chunk);
                }
                ItemKind::Real => {
                    let mut chunk = vec![0.0f64; n];
                    for (&t, ev) in self.events.range(..hi) {
                        let p = ev.payload.real().expect("kind checked at accept");
                        place(&mut chunk, lo, t, p, self.additive);
                    }
                    out.push_real(&chunk);
                }
                _ => unreachable!(),
            }
            self.pos = hi;
            // Retire events fully behind the write position.
            let done: Vec<u64> = self
                .events
                .iter()
                .take_while(|(&t, _)| t < self.pos)
                .filter(|(&t, e)| t + e.length <= self.pos)
                .map(|(&t, _)| t)
                .collect();
            for t in done {
                self.events.remove(&t);
            }
            if hi / self.feedback_period > lo / self.feedback_period {
                io.post("now", Pdu::control().with_meta(NOW_KEY, self.pos));
            }
        }
        if self.total_items.is_some_and(|t| self.pos >= t) {
            if !self.events.is_empty() {
                io.count("unplaced_event", self.events.len() as u64);
                self.events.clear();
            }
            io.finish();
        }
        Ok(())
    }
}

fn place<T: Copy + std::ops::AddAssign>(
    chunk: &mut [T],
    chunk_start: u64,
    event_time: u64,
    payload: &[T],
    additive: bool,
) {
    let chunk_end = chunk_start + chunk.len() as u64;
    let ev_end = event_time + payload.len() as u64;
    let lo = event_time.max(chunk_start);
    let hi = ev_end.min(chunk_end);
    if lo >= hi {
        return;
    }
    let src0 = (lo - event_time) as usize;
    let dst0 = (lo - chunk_start) as usize;
    let len = (hi - lo) as usize;
    for i in 0..len {
        if additive {
            chunk[dst0 + i] += payload[src0 + i];
        } else {
            chunk[dst0 + i] = payload[src0 + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventstream::EventDescriptor;
    use crate::runtime::{Flowgraph, Payload, Termination, VectorSink};

    fn run_source(
        events: Vec<EventDescriptor>,
        total: u64,
        min_lead: u64,
    ) -> (Vec<f64>, crate::runtime::RunStats) {
        let mut g = Flowgraph::new();
        let src = g.add_named(
            "es",
            EsSource::new(ItemKind::Real)
                .with_total_items(total)
                .with_min_lead(min_lead),
        );
        let (sink, data) = VectorSink::new(ItemKind::Real);
        let dst = g.add(sink);
        g.connect_stream(src, 0, dst, 0).unwrap();
        for e in events {
            g.post(src, "schedule", e.to_pdu()).unwrap();
        }
        let stats = g.run(Termination::SourceExhausted).unwrap();
        let out = data.lock().unwrap().payload.real().unwrap().to_vec();
        (out, stats)
    }

    #[test]
    fn event_placed_at_exact_offset() {
        let ev = EventDescriptor::new(5, Payload::Real(vec![1.0, 2.0, 3.0]));
        let (out, _) = run_source(vec![ev], 10, 0);
        assert_eq!(out, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn no_events_all_zero() {
        let (out, _) = run_source(vec![], 16, 0);
        assert_eq!(out, vec![0.0; 16]);
    }

    #[test]
    fn late_event_dropped_stream_unaffected() {
        // min_lead 4 makes an event at t=2 late even before production starts.
        let ev = EventDescriptor::new(2, Payload::Real(vec![9.0]));
        let (out, stats) = run_source(vec![ev], 8, 4);
        assert_eq!(out, vec![0.0; 8]);
        assert_eq!(stats.block("es").unwrap().counter("late_event"), 1);
    }

    #[test]
    fn overlap_rejected_and_counted() {
        let a = EventDescriptor::new(4, Payload::Real(vec![1.0; 4]));
        let b = EventDescriptor::new(6, Payload::Real(vec![2.0; 4]));
        let (out, stats) = run_source(vec![a, b], 16, 0);
        assert_eq!(&out[4..8], &[1.0; 4]);
        assert_eq!(&out[8..12], &[0.0; 4]);
        assert_eq!(stats.block("es").unwrap().counter("overlap_rejected"), 1);
    }

    #[test]
    fn additive_mode_sums_overlap() {
        let mut g = Flowgraph::new();
        let src = g.add_named(
            "es",
            EsSource::new(ItemKind::Real).with_total_items(12).additive(),
        );
        let (sink, data) = VectorSink::new(ItemKind::Real);
        let dst = g.add(sink);
        g.connect_stream(src, 0, dst, 0).unwrap();
        g.post(src, "schedule", EventDescriptor::new(2, Payload::Real(vec![1.0; 4])).to_pdu())
            .unwrap();
        g.post(src, "schedule", EventDescriptor::new(4, Payload::Real(vec![2.0; 4])).to_pdu())
            .unwrap();
        g.run(Termination::SourceExhausted).unwrap();
        let out = data.lock().unwrap().payload.real().unwrap().to_vec();
        assert_eq!(out, vec![0.0, 0.0, 1.0, 1.0, 3.0, 3.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn now_feedback_reports_positions() {
        let mut g = Flowgraph::new();
        let src = g.add(
            EsSource::new(ItemKind::Real)
                .with_total_items(10_000)
                .with_feedback_period(1024),
        );
        let (sink, _) = VectorSink::new(ItemKind::Real);
        let dst = g.add(sink);
        let (msink, msgs) = crate::runtime::MessageSink::new();
        let mdst = g.add(msink);
        g.connect_stream(src, 0, dst, 0).unwrap();
        g.connect_message(src, "now", mdst, "in").unwrap();
        g.run(Termination::SourceExhausted).unwrap();
        let nows: Vec<u64> = msgs
            .lock()
            .unwrap()
            .iter()
            .map(|p| p.meta_u64(NOW_KEY).unwrap())
            .collect();
        assert_eq!(nows[0], 0);
        assert!(nows.windows(2).all(|w| w[1] > w[0]));
        assert!(nows.contains(&1024));
    }

    #[test]
    fn event_spanning_chunk_boundary_is_contiguous() {
        // Period 8 forces chunked production; event crosses two chunks.
        let mut g = Flowgraph::new();
        let src = g.add(
            EsSource::new(ItemKind::Real)
                .with_total_items(32)
                .with_feedback_period(8),
        );
        let (sink, data) = VectorSink::new(ItemKind::Real);
        let dst = g.add(sink);
        g.connect_stream(src, 0, dst, 0).unwrap();
        let payload: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        g.post(src, "schedule", EventDescriptor::new(5, Payload::Real(payload.clone())).to_pdu())
            .unwrap();
        g.run(Termination::SourceExhausted).unwrap();
        let out = data.lock().unwrap().payload.real().unwrap().to_vec();
        assert_eq!(&out[5..15], &payload[..]);
        assert!(out[..5].iter().all(|&x| x == 0.0));
        assert!(out[15..].iter().all(|&x| x == 0.0));
    }
}
