//! Reference burst modem flowgraphs: PSK and FSK transmit/receive chains
//! plus the header-then-payload event-chaining receiver.
//!
//! Each `wire_*` function composes blocks into an existing [`Flowgraph`] and
//! returns the boundary ports, so transmitters, channels, and receivers can
//! share one graph (loopback) or stand alone (file/UDP I/O). The `build_*`
//! functions wrap a fresh graph for standalone use.

pub mod acm;
pub mod fsk;
pub mod psk;

pub use acm::wire_acm_rx;
pub use fsk::{wire_fsk_rx, wire_fsk_tx};
pub use psk::{wire_psk_rx, wire_psk_tx};

use crate::phy::{BurstConfig, PhyError};
use crate::runtime::{BlockId, Flowgraph, RuntimeError};

#[derive(Debug, thiserror::Error)]
pub enum ModemError {
    #[error("modem config: {0}")]
    Config(#[from] PhyError),
    #[error("modem graph: {0}")]
    Graph(#[from] RuntimeError),
}

/// Message port reference: block plus port name.
pub type MsgPort = (BlockId, &'static str);
/// Stream port reference: block plus port index.
pub type StreamPort = (BlockId, usize);

/// Boundary ports of a wired modem chain.
#[derive(Debug, Clone, Default)]
pub struct ModemPorts {
    /// TX: where payload PDUs enter (framer input).
    pub pdu_in: Option<MsgPort>,
    /// RX: where decoded payload PDUs leave (deframer output).
    pub pdu_out: Option<MsgPort>,
    /// RX: complex baseband input.
    pub iq_in: Option<StreamPort>,
    /// TX: complex baseband output.
    pub iq_out: Option<StreamPort>,
    /// TX: position feedback publisher (eventstream source "now").
    pub now_feedback: Option<MsgPort>,
    pub es_source: Option<BlockId>,
    pub es_sink: Option<BlockId>,
    /// Named diagnostics publishers; every one emits PDUs with a declared
    /// element kind and a stage label in the metadata. Pure observers:
    /// subscribing or not never changes `pdu_out`.
    pub diagnostics: Vec<(&'static str, MsgPort)>,
}

/// A standalone modem: one flowgraph plus its boundary ports.
pub struct ModemGraph {
    pub graph: Flowgraph,
    pub config: BurstConfig,
    pub ports: ModemPorts,
}

pub fn build_psk_tx(config: &BurstConfig) -> Result<ModemGraph, ModemError> {
    let mut graph = Flowgraph::new();
    let ports = wire_psk_tx(&mut graph, config)?;
    Ok(ModemGraph {
        graph,
        config: config.clone(),
        ports,
    })
}

pub fn build_psk_rx(config: &BurstConfig) -> Result<ModemGraph, ModemError> {
    let mut graph = Flowgraph::new();
    let ports = wire_psk_rx(&mut graph, config)?;
    Ok(ModemGraph {
        graph,
        config: config.clone(),
        ports,
    })
}

pub fn build_fsk_tx(config: &BurstConfig) -> Result<ModemGraph, ModemError> {
    let mut graph = Flowgraph::new();
    let ports = wire_fsk_tx(&mut graph, config)?;
    Ok(ModemGraph {
        graph,
        config: config.clone(),
        ports,
    })
}

pub fn build_fsk_rx(config: &BurstConfig) -> Result<ModemGraph, ModemError> {
    let mut graph = Flowgraph::new();
    let ports = wire_fsk_rx(&mut graph, config)?;
    Ok(ModemGraph {
        graph,
        config: config.clone(),
        ports,
    })
}

pub fn build_acm_demo(config: &BurstConfig) -> Result<ModemGraph, ModemError> {
    let mut graph = Flowgraph::new();
    let ports = wire_acm_rx(&mut graph, config)?;
    Ok(ModemGraph {
        graph,
        config: config.clone(),
        ports,
    })
}

/// Stage label helper shared by the chain blocks.
pub(crate) fn relabel(mut pdu: crate::runtime::Pdu, stage: &str) -> crate::runtime::Pdu {
    pdu.set_meta("stage", stage);
    pdu
}
