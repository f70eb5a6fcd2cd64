//! Slotted-aloha burst scheduling and the periodic test PDU source.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eventstream::{EventDescriptor, NOW_KEY};
use crate::phy::crc::value_to_bits_be;
use crate::runtime::{Block, BlockError, Pdu, Signature, Value, WorkIo};

/// Next slot boundary at or after `now + min_lead`.
pub fn burst_schedule(now: u64, min_lead: u64, slot_len: u64) -> u64 {
    assert!(slot_len >= 1);
    (now + min_lead).div_ceil(slot_len) * slot_len
}

/// Slotted-aloha scheduler: drops each burst payload into the stream at the
/// earliest free slot boundary, using asynchronous "now" feedback from the
/// downstream eventstream source to aim ahead of the write position.
pub struct BurstScheduler {
    slot_len: u64,
    min_lead: u64,
    now: u64,
    /// End of the last scheduled burst; the next burst starts at or after it.
    next_free: u64,
    pending: std::collections::VecDeque<Pdu>,
}

impl BurstScheduler {
    pub fn new(slot_len: u64, min_lead: u64) -> Self {
        assert!(slot_len >= 1);
        BurstScheduler {
            slot_len,
            min_lead,
            now: 0,
            next_free: 0,
            pending: std::collections::VecDeque::new(),
        }
    }

    fn flush(&mut self, io: &WorkIo) {
        while let Some(pdu) = self.pending.pop_front() {
            let earliest = (self.now + self.min_lead).max(self.next_free);
            let time = burst_schedule(earliest, 0, self.slot_len);
            let len = pdu.payload.len() as u64;
            if len > self.slot_len {
                io.count("burst_longer_than_slot", 1);
            }
            let mut ev = EventDescriptor::new(time, pdu.payload);
            ev.meta = pdu.meta;
            ev.meta.insert("slot".into(), Value::U64(time / self.slot_len));
            self.next_free = time + len;
            io.post("schedule", ev.to_pdu());
        }
    }
}

impl Block for BurstScheduler {
    fn type_name(&self) -> &'static str {
        "burst_scheduler"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .msg_in("pdus")
            .msg_in("now")
            .msg_out("schedule")
    }

    fn handle_message(&mut self, port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        match port {
            "now" => {
                if let Some(now) = pdu.meta_u64(NOW_KEY) {
                    self.now = self.now.max(now);
                }
            }
            _ => {
                if pdu.payload.is_empty() {
                    io.count("empty_payload", 1);
                } else {
                    self.pending.push_back(pdu);
                }
            }
        }
        self.flush(io);
        Ok(())
    }
}

/// Periodic random-PDU source for loopback testing: emits burst `k` once the
/// transmit timeline reaches `k * period`. The first 32 payload bits carry
/// the burst sequence number (big-endian); the rest are seeded random bits.
pub struct PduStrobe {
    period: u64,
    n_bursts: u64,
    payload_data_bits: usize,
    rng: ChaCha8Rng,
    emitted: u64,
}

impl PduStrobe {
    pub fn new(period: u64, n_bursts: u64, payload_data_bits: usize, seed: u64) -> Self {
        assert!(period >= 1);
        PduStrobe {
            period,
            n_bursts,
            payload_data_bits,
            rng: ChaCha8Rng::seed_from_u64(seed),
            emitted: 0,
        }
    }

    /// Payload for burst `seq` under the given seed, for comparing received
    /// bursts against what was sent.
    pub fn expected_payloads(
        seed: u64,
        n_bursts: u64,
        payload_data_bits: usize,
    ) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_bursts)
            .map(|seq| {
                let mut bits = value_to_bits_be(seq, 32);
                bits.extend((0..payload_data_bits).map(|_| rng.random_range(0..=1) as u8));
                bits
            })
            .collect()
    }
}

impl Block for PduStrobe {
    fn type_name(&self) -> &'static str {
        "pdu_strobe"
    }

    fn signature(&self) -> Signature {
        Signature::new().msg_in("now").msg_out("out")
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        let Some(now) = pdu.meta_u64(NOW_KEY) else {
            return Ok(());
        };
        while self.emitted < self.n_bursts && now >= self.emitted * self.period {
            let mut bits = value_to_bits_be(self.emitted, 32);
            bits.extend((0..self.payload_data_bits).map(|_| self.rng.random_range(0..=1) as u8));
            let out = Pdu::bits(bits).with_meta("seq", self.emitted);
            io.post("out", out);
            self.emitted += 1;
        }
        Ok(())
    }
}
