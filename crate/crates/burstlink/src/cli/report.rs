//! Run accounting shared by the loopback and sweep commands.

use std::fmt;

/// Outcome of one loopback run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub bursts_tx: u64,
    /// PDUs that reached the output and matched a transmitted sequence
    /// number.
    pub bursts_detected: u64,
    pub bursts_crc_ok: u64,
    /// Output PDUs that matched no transmitted burst.
    pub false_triggers: u64,
    pub bit_errors: u64,
    pub bits_compared: u64,
    pub per: f64,
    pub ber: f64,
    pub elapsed_s: f64,
    pub seed: u64,
}

impl RunReport {
    pub fn check_invariants(&self) -> bool {
        self.bursts_crc_ok <= self.bursts_detected
            && self.bursts_detected <= self.bursts_tx + self.false_triggers
            && (self.bits_compared == 0
                || (self.ber - self.bit_errors as f64 / self.bits_compared as f64).abs() < 1e-12)
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bursts_tx: {}", self.bursts_tx)?;
        writeln!(f, "bursts_detected: {}", self.bursts_detected)?;
        writeln!(f, "bursts_crc_ok: {}", self.bursts_crc_ok)?;
        writeln!(f, "false_triggers: {}", self.false_triggers)?;
        writeln!(f, "bit_errors: {}", self.bit_errors)?;
        writeln!(f, "bits_compared: {}", self.bits_compared)?;
        writeln!(f, "per: {}", self.per)?;
        writeln!(f, "ber: {}", self.ber)?;
        writeln!(f, "elapsed_s: {:.3}", self.elapsed_s)?;
        writeln!(f, "seed: {}", self.seed)
    }
}
