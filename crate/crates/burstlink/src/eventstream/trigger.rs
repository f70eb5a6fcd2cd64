//! Threshold trigger blocks: metric crossings become timed extraction
//! commands.

use crate::eventstream::TriggerMessage;
use crate::runtime::{Block, BlockError, ItemKind, Signature, Value, WorkIo};

struct TriggerState {
    label: &'static str,
    threshold: f64,
    holdoff: u64,
    event_length: u64,
    /// Added to the crossing index to form the event time; negative values
    /// look back so the extraction starts before the detection point.
    time_offset: i64,
    holdoff_until: u64,
    last_time: Option<u64>,
}

impl TriggerState {
    fn emit(&mut self, io: &WorkIo, index: u64, metric: f64) {
        let time = index.saturating_add_signed(self.time_offset);
        if let Some(prev) = self.last_time {
            if time <= prev {
                // Lookback clamping near stream start can collide with the
                // previous event; keep trigger times strictly increasing.
                io.count("nonmonotonic_suppressed", 1);
                return;
            }
        }
        self.last_time = Some(time);
        self.holdoff_until = index + self.holdoff;
        let mut msg = TriggerMessage::new(time, self.event_length);
        msg.meta.insert("metric".into(), Value::F64(metric));
        msg.meta.insert("trigger".into(), Value::Str(self.label.into()));
        io.post("trigger", msg.to_pdu());
    }
}

/// Emits a trigger when the metric rises to or above the threshold after
/// having been below it (the index before the stream start counts as below).
pub struct TriggerRisingEdge {
    state: TriggerState,
    below: bool,
}

impl TriggerRisingEdge {
    pub fn new(threshold: f64, holdoff: u64, event_length: u64) -> Self {
        assert!(threshold.is_finite(), "threshold must be finite");
        TriggerRisingEdge {
            state: TriggerState {
                label: "rising_edge",
                threshold,
                holdoff,
                event_length,
                time_offset: 0,
                holdoff_until: 0,
                last_time: None,
            },
            below: true,
        }
    }

    pub fn with_time_offset(mut self, offset: i64) -> Self {
        self.state.time_offset = offset;
        self
    }
}

impl Block for TriggerRisingEdge {
    fn type_name(&self) -> &'static str {
        "trigger_rising_edge"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_in(ItemKind::Real).msg_out("trigger")
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let n = inp.available();
        let base = inp.abs_offset();
        let xs = inp.real();
        for (k, &x) in xs[..n].iter().enumerate() {
            let i = base + k as u64;
            if i < self.state.holdoff_until {
                continue;
            }
            if x.is_nan() {
                io.count("nan_metric", 1);
                self.below = true;
                continue;
            }
            if self.below && x >= self.state.threshold {
                self.state.emit(io, i, x);
                self.below = false;
            } else {
                self.below = x < self.state.threshold;
            }
        }
        inp.consume(n);
        Ok(())
    }
}

/// Emits a trigger when the metric falls below the threshold after having
/// been at or above it. Starting below the threshold does not trigger.
pub struct TriggerBelow {
    state: TriggerState,
    armed: bool,
}

impl TriggerBelow {
    pub fn new(threshold: f64, holdoff: u64, event_length: u64) -> Self {
        assert!(threshold.is_finite(), "threshold must be finite");
        TriggerBelow {
            state: TriggerState {
                label: "below",
                threshold,
                holdoff,
                event_length,
                time_offset: 0,
                holdoff_until: 0,
                last_time: None,
            },
            armed: false,
        }
    }

    pub fn with_time_offset(mut self, offset: i64) -> Self {
        self.state.time_offset = offset;
        self
    }
}

impl Block for TriggerBelow {
    fn type_name(&self) -> &'static str {
        "trigger_below"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_in(ItemKind::Real).msg_out("trigger")
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let n = inp.available();
        let base = inp.abs_offset();
        let xs = inp.real();
        for (k, &x) in xs[..n].iter().enumerate() {
            let i = base + k as u64;
            if i < self.state.holdoff_until {
                continue;
            }
            if x.is_nan() {
                io.count("nan_metric", 1);
            }
            // NaN reads as below threshold.
            let is_below = x.is_nan() || x < self.state.threshold;
            if self.armed && is_below {
                self.state.emit(io, i, x);
                self.armed = false;
            } else if !is_below {
                self.armed = true;
            }
        }
        inp.consume(n);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventstream::TriggerMessage;
    use crate::runtime::{Flowgraph, MessageSink, Payload, Termination, VectorSource};

    fn run_trigger(block: impl Block, metric: Vec<f64>) -> (Vec<TriggerMessage>, u64) {
        let mut g = Flowgraph::new();
        let src = g.add(VectorSource::new(Payload::Real(metric)));
        let trig = g.add_named("trig", block);
        let (sink, data) = MessageSink::new();
        let dst = g.add(sink);
        g.connect_stream(src, 0, trig, 0).unwrap();
        g.connect_message(trig, "trigger", dst, "in").unwrap();
        let stats = g.run(Termination::SourceExhausted).unwrap();
        let msgs = data
            .lock()
            .unwrap()
            .iter()
            .map(|p| TriggerMessage::from_pdu(p).unwrap())
            .collect();
        (msgs, stats.block("trig").unwrap().counter("nan_metric"))
    }

    #[test]
    fn rising_edge_fires_on_first_crossing() {
        let metric = vec![0.0, 0.0, 0.2, 0.9, 0.95, 0.1];
        let (msgs, _) = run_trigger(TriggerRisingEdge::new(0.5, 0, 16), metric);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].time, 3);
        assert_eq!(msgs[0].length, 16);
        assert_eq!(msgs[0].meta.get("metric").unwrap().as_f64(), Some(0.9));
    }

    #[test]
    fn rising_edge_holdoff_suppresses_second_crossing() {
        let metric = vec![0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.8, 0.1];
        let (msgs, _) = run_trigger(TriggerRisingEdge::new(0.5, 10, 16), metric);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].time, 2);
    }

    #[test]
    fn rising_edge_all_below_never_fires() {
        let metric = vec![0.1; 100];
        let (msgs, _) = run_trigger(TriggerRisingEdge::new(0.5, 0, 16), metric);
        assert!(msgs.is_empty());
    }

    #[test]
    fn rising_edge_fires_at_index_zero_when_starting_high() {
        // metric[-1] counts as -inf, so a high first sample is a crossing.
        let (msgs, _) = run_trigger(TriggerRisingEdge::new(0.5, 0, 4), vec![0.9, 0.9]);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].time, 0);
    }

    #[test]
    fn rising_edge_nan_counts_as_below() {
        let metric = vec![0.0, f64::NAN, 0.9, 0.1];
        let (msgs, nan) = run_trigger(TriggerRisingEdge::new(0.5, 0, 4), metric);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].time, 2);
        assert_eq!(nan, 1);
    }

    #[test]
    fn below_fires_on_falling_edge() {
        let metric = vec![5.0, 4.0, 0.1, 0.1, 6.0];
        let (msgs, _) = run_trigger(TriggerBelow::new(0.5, 0, 8), metric);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].time, 2);
    }

    #[test]
    fn below_requires_prior_high() {
        // Starts below threshold and stays there: must fall, not start, below.
        let metric = vec![0.1, 0.2, 0.1, 0.3];
        let (msgs, _) = run_trigger(TriggerBelow::new(0.5, 0, 8), metric);
        assert!(msgs.is_empty());
    }

    #[test]
    fn below_holdoff_gives_one_trigger_per_burst() {
        // High noise, low burst, high noise again, low burst again.
        let mut metric = vec![5.0; 10];
        metric.extend(vec![0.1; 20]);
        metric.extend(vec![5.0; 10]);
        metric.extend(vec![0.1; 20]);
        let (msgs, _) = run_trigger(TriggerBelow::new(0.5, 15, 8), metric);
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].time, 10);
        assert_eq!(msgs[1].time, 40);
    }

    #[test]
    fn trigger_times_strictly_increase_and_respect_holdoff() {
        let mut metric = Vec::new();
        for _ in 0..20 {
            metric.extend([0.0, 1.0, 0.0, 1.0, 0.0]);
        }
        let (msgs, _) = run_trigger(TriggerRisingEdge::new(0.5, 7, 4), metric);
        assert!(!msgs.is_empty());
        for w in msgs.windows(2) {
            assert!(w[1].time > w[0].time);
            assert!(w[1].time - w[0].time >= 7, "holdoff violated: {} -> {}", w[0].time, w[1].time);
        }
    }

    #[test]
    fn lookback_offset_shifts_event_time() {
        let metric = vec![0.0, 0.0, 0.0, 0.0, 0.9, 0.1];
        let (msgs, _) =
            run_trigger(TriggerRisingEdge::new(0.5, 0, 8).with_time_offset(-3), metric);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].time, 1);
    }
}
