//! Command implementations behind the `burstlink` binary: loopback runs,
//! BER sweeps, IQ file record/play, and UDP PDU bridges.

pub mod ber;
pub mod config;
pub mod iq;
pub mod loopback;
pub mod report;
pub mod udp;

pub use ber::{noise_voltage_for_ebn0, run_sweep, write_sweep_csv, SweepOptions, SweepPoint};
pub use config::{config_hash, ConfigError, ConfigMap};
pub use iq::{read_iq_file, write_iq_file, IqFileSink, IqFileSource};
pub use loopback::{run_loopback, write_diagnostics, LoopbackOptions, LoopbackOutcome, Modem};
pub use report::RunReport;
pub use udp::{decode_datagram, encode_datagram, UdpPduSink, UdpPduSource};

use crate::modems::ModemError;
use crate::runtime::RuntimeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Modem(#[from] ModemError),
    #[error("runtime error: {0}")]
    Runtime(#[from] RuntimeError),
    #[error("io error: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("malformed datagram: {0}")]
    MalformedDatagram(String),
    #[error("pdu payload too large for one datagram: {0} bytes")]
    OversizePdu(usize),
    #[error("assertion failed: {0}")]
    AssertFailed(String),
}

impl CliError {
    /// Process exit code: 2 configuration, 4 assertion threshold, 3 other
    /// runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::AssertFailed(_) => 4,
            _ => 3,
        }
    }
}
