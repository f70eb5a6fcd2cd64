//! Burst modem toolkit built on a hybrid stream/message flowgraph runtime.
//!
//! The crate is organised in layers:
//!
//! - [`runtime`]: deterministic flowgraph engine — stream actors over bounded
//!   FIFO buffers, stream tags, publish/subscribe message ports, and PDU /
//!   tagged-stream conversion.
//! - [`eventstream`]: the bridge between the stream and message domains —
//!   threshold triggers, a sink that extracts timed sample chunks into PDUs,
//!   and a source that places PDU payloads into an outgoing stream at precise
//!   sample offsets.
//! - [`dsp`]: stream-domain kernels shared by the modems — RRC pulse shaping,
//!   FIR filtering, FM modulation/demodulation, detection metrics, and the
//!   simulated channel.
//! - [`phy`]: message-domain burst processing — framing, whitening, FEC,
//!   symbol mapping, burst synchronization, and slot scheduling.
//! - [`modems`]: the reference PSK and FSK burst transmit/receive flowgraphs
//!   plus the header-then-payload event-chaining demo.
//! - [`cli`]: the `burstlink` command implementations — loopback runs, BER
//!   sweeps, IQ file record/play, and UDP PDU bridges.

pub mod cli;
pub mod dsp;
pub mod eventstream;
pub mod modems;
pub mod phy;
pub mod runtime;

/// Complex baseband sample. All stream edges carrying IQ data use this type.
pub type Sample = num_complex::Complex64;
