//! Bridge between the stream and message domains.
//!
//! Trigger blocks watch a real-valued detection metric and convert threshold
//! crossings into timed extraction commands. The eventstream sink pulls timed
//! chunks of a stream into PDUs; the eventstream source places PDU payloads
//! into an outgoing stream at precise sample offsets, zero-filling the gaps,
//! and feeds its current position back to upstream schedulers.

mod sink;
pub(crate) mod source;
mod trigger;

pub use sink::EsSink;
pub use source::{EsSource, BURST_LEN_TAG, DEFAULT_FEEDBACK_PERIOD};
pub use trigger::{TriggerBelow, TriggerRisingEdge};

use std::collections::BTreeMap;

use crate::runtime::{Payload, Pdu, Value};

/// Metadata key carrying the absolute sample index of an event.
pub const EVENT_TIME_KEY: &str = "event_time";
/// Metadata key carrying the item count of an event.
pub const EVENT_LENGTH_KEY: &str = "event_length";
/// Metadata key on "now" feedback messages from [`EsSource`].
pub const NOW_KEY: &str = "now";

/// Timed extraction command sent from a trigger block to an [`EsSink`].
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerMessage {
    /// Absolute sample index where the event starts.
    pub time: u64,
    /// Number of items to extract.
    pub length: u64,
    /// Detection metric value, trigger identity, and similar annotations.
    pub meta: BTreeMap<String, Value>,
}

impl TriggerMessage {
    pub fn new(time: u64, length: u64) -> Self {
        TriggerMessage {
            time,
            length,
            meta: BTreeMap::new(),
        }
    }

    pub fn to_pdu(&self) -> Pdu {
        let mut pdu = Pdu::control();
        pdu.meta = self.meta.clone();
        pdu.set_meta(EVENT_TIME_KEY, self.time);
        pdu.set_meta(EVENT_LENGTH_KEY, self.length);
        pdu
    }

    pub fn from_pdu(pdu: &Pdu) -> Option<Self> {
        let time = pdu.meta_u64(EVENT_TIME_KEY)?;
        let length = pdu.meta_u64(EVENT_LENGTH_KEY)?;
        let mut meta = pdu.meta.clone();
        meta.remove(EVENT_TIME_KEY);
        meta.remove(EVENT_LENGTH_KEY);
        Some(TriggerMessage { time, length, meta })
    }
}

/// A timed chunk to be placed into a stream by an [`EsSource`].
#[derive(Debug, Clone, PartialEq)]
pub struct EventDescriptor {
    /// Absolute output index of the first payload item.
    pub time: u64,
    /// Item count; equals the payload length for source events.
    pub length: u64,
    pub payload: Payload,
    pub meta: BTreeMap<String, Value>,
}

impl EventDescriptor {
    pub fn new(time: u64, payload: Payload) -> Self {
        EventDescriptor {
            time,
            length: payload.len() as u64,
            payload,
            meta: BTreeMap::new(),
        }
    }

    pub fn to_pdu(&self) -> Pdu {
        let mut pdu = Pdu::new(self.payload.clone());
        pdu.meta = self.meta.clone();
        pdu.set_meta(EVENT_TIME_KEY, self.time);
        pdu.set_meta(EVENT_LENGTH_KEY, self.length);
        pdu
    }

    pub fn from_pdu(pdu: &Pdu) -> Option<Self> {
        let time = pdu.meta_u64(EVENT_TIME_KEY)?;
        let length = pdu
            .meta_u64(EVENT_LENGTH_KEY)
            .unwrap_or(pdu.payload.len() as u64);
        let mut meta = pdu.meta.clone();
        meta.remove(EVENT_TIME_KEY);
        meta.remove(EVENT_LENGTH_KEY);
        Some(EventDescriptor {
            time,
            length,
            payload: pdu.payload.clone(),
            meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigger_message_pdu_round_trip() {
        let mut t = TriggerMessage::new(100, 50);
        t.meta.insert("metric".into(), Value::F64(7.5));
        let back = TriggerMessage::from_pdu(&t.to_pdu()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn event_descriptor_pdu_round_trip() {
        let e = EventDescriptor::new(5, Payload::Real(vec![1.0, 2.0, 3.0]));
        let back = EventDescriptor::from_pdu(&e.to_pdu()).unwrap();
        assert_eq!(back, e);
    }
}
