//! Message-domain burst processing shared by the modems: framing, whitening,
//! FEC, symbol mapping, burst synchronization, and slot scheduling.

pub mod crc;
pub mod detect;
pub mod fec;
pub mod framing;
pub mod fsk;
pub mod lfsr;
pub mod qpsk;
pub mod schedule;
pub mod sync;

pub use detect::{length_detect, length_detect_at, LengthDetectResult};
pub use fec::{codec_for, fec_decode, fec_encode, slice_llr, Codec, CodecId};
pub use framing::{
    deframe, frame, frame_align, pad_to_block, DeframedPayload, FRAME_HEADER_BITS,
    FRAME_OVERHEAD_BITS,
};
pub use fsk::{fsk_map, fsk_timing_and_slice, FskSync};
pub use lfsr::{default_preamble, randomize, Lfsr};
pub use qpsk::{qpsk_hard_demap, qpsk_map, qpsk_soft_demap, slice_bits};
pub use schedule::{burst_schedule, BurstScheduler, PduStrobe};
pub use sync::{SyncEstimate, Synchronizer};

use crate::Sample;

#[derive(Debug, thiserror::Error)]
pub enum PhyError {
    #[error("payload too long: {0} bits (max 65535)")]
    PayloadTooLong(usize),
    #[error("frame too short: {0} bits")]
    FrameTooShort(usize),
    #[error("header crc failed")]
    HeaderCrcFail,
    #[error("bit count {0} is odd")]
    OddBitCount(usize),
    #[error("unknown codec: {0}")]
    UnknownCodec(String),
    #[error("length {len} is not a multiple of the block size {block}")]
    LengthNotMultiple { len: usize, block: usize },
    #[error("burst too short: got {got}, need {need}")]
    BurstTooShort { got: usize, need: usize },
    #[error("no correlation peak: score {score:.3} below floor {floor:.3}")]
    NoPeak { score: f64, floor: f64 },
    #[error("invalid burst config: {0}")]
    ConfigInvalid(String),
}

/// All modem parameters shared by a transmitter and its receiver.
#[derive(Debug, Clone)]
pub struct BurstConfig {
    /// Known preamble bit sequence (even length for the QPSK mapper).
    pub preamble_bits: Vec<u8>,
    pub fec: CodecId,
    /// Samples per symbol after pulse shaping.
    pub sps: usize,
    pub rrc_beta: f64,
    /// RRC span in symbols (tap count is sps*span + 1).
    pub rrc_span: usize,
    /// Slot size, in items of the transmit eventstream timeline.
    pub slot_len: u64,
    /// Minimum scheduling lead ahead of the stream source position.
    pub min_lead: u64,
    /// PSK detection metric threshold (normalized correlation metric units).
    pub detect_threshold: f64,
    /// Upper bound on extracted burst length, in receive samples.
    pub max_burst_samples: usize,
    /// FSK frequency deviation per unit mapping, radians/sample.
    pub fsk_sensitivity: f64,
    /// Whether the whitening randomizer is applied.
    pub randomize: bool,

    /// Moving-average window of the detection metric normalizer.
    pub avg_window: usize,
    /// Window of the FM-demod variance detector.
    pub variance_window: usize,
    /// FSK variance threshold (trigger-below fires under this).
    pub fsk_detect_threshold: f64,
    /// Power envelope window for burst length trimming.
    pub envelope_window: usize,
    /// Envelope threshold factor for length trimming.
    pub length_alpha: f64,
    /// Normalized preamble correlation floor for PSK synchronization.
    pub sync_corr_floor: f64,
    /// Normalized preamble correlation floor for FSK timing.
    pub fsk_corr_floor: f64,
    /// Least-squares equalizer taps over the preamble (1..=8).
    pub eq_taps: usize,
    /// Trigger holdoff, in receive samples.
    pub trigger_holdoff: u64,
    /// "now" feedback period of the transmit eventstream source.
    pub feedback_period: u64,
    /// Extraction history depth of the eventstream sink.
    pub history_depth: usize,
}

impl Default for BurstConfig {
    fn default() -> Self {
        BurstConfig {
            preamble_bits: default_preamble(64),
            fec: CodecId::None { k: 128 },
            sps: 2,
            rrc_beta: 0.35,
            rrc_span: 11,
            slot_len: 512,
            min_lead: 4096,
            detect_threshold: 8.0,
            max_burst_samples: 2048,
            fsk_sensitivity: std::f64::consts::TAU * 0.1,
            randomize: true,
            avg_window: 64,
            variance_window: 64,
            fsk_detect_threshold: 1.0,
            envelope_window: 32,
            length_alpha: 0.25,
            sync_corr_floor: 0.5,
            fsk_corr_floor: 0.6,
            eq_taps: 1,
            trigger_holdoff: 512,
            feedback_period: 1024,
            history_depth: 1 << 20,
        }
    }
}

impl BurstConfig {
    pub fn validate(&self) -> Result<(), PhyError> {
        let codec = codec_for(&self.fec)?;
        if codec.n() < codec.k() || codec.k() < 1 {
            return Err(PhyError::ConfigInvalid(format!(
                "codec sizes invalid: n {} k {}",
                codec.n(),
                codec.k()
            )));
        }
        if self.preamble_bits.is_empty() || self.preamble_bits.len() % 2 != 0 {
            return Err(PhyError::ConfigInvalid(
                "preamble length must be even and nonzero".into(),
            ));
        }
        if self.slot_len < 1 {
            return Err(PhyError::ConfigInvalid("slot_len must be >= 1".into()));
        }
        if self.sps < 1 {
            return Err(PhyError::ConfigInvalid("sps must be >= 1".into()));
        }
        if !(self.eq_taps >= 1 && self.eq_taps <= 8) {
            return Err(PhyError::ConfigInvalid("eq_taps must be in 1..=8".into()));
        }
        // One minimal frame (overhead only), padded and coded, plus the
        // preamble must fit in the extraction window.
        let k = codec.k();
        let min_coded = FRAME_OVERHEAD_BITS.div_ceil(k) * codec.n();
        let min_burst = (self.preamble_bits.len() + min_coded) / 2 * self.sps;
        if self.max_burst_samples < min_burst {
            return Err(PhyError::ConfigInvalid(format!(
                "max_burst_samples {} below minimum burst {}",
                self.max_burst_samples, min_burst
            )));
        }
        crate::dsp::design_rrc(self.sps, self.rrc_beta, self.rrc_span)
            .map_err(|e| PhyError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }

    /// QPSK symbols of the preamble.
    pub fn preamble_symbols(&self) -> Vec<Sample> {
        qpsk_map(&self.preamble_bits).expect("preamble length validated even")
    }

    /// Preamble span in receive samples for the PSK chain.
    pub fn preamble_span_samples(&self) -> usize {
        self.preamble_bits.len() / 2 * self.sps
    }

    pub fn codec(&self) -> Box<dyn Codec> {
        codec_for(&self.fec).expect("config validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        BurstConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = BurstConfig::default();
        c.preamble_bits = vec![1, 0, 1];
        assert!(c.validate().is_err());

        let mut c = BurstConfig::default();
        c.fec = CodecId::Ldpc { name: "x".into() };
        assert!(c.validate().is_err());

        let mut c = BurstConfig::default();
        c.max_burst_samples = 10;
        assert!(c.validate().is_err());
    }
}
