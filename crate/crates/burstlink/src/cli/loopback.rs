//! TX -> channel -> RX loopback runs with per-stage CSV diagnostics.

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::cli::config::{config_hash, ConfigMap};
use crate::cli::report::RunReport;
use crate::cli::CliError;
use crate::dsp::{ChannelBlock, ChannelParams};
use crate::modems::{wire_fsk_rx, wire_fsk_tx, wire_psk_rx, wire_psk_tx, ModemPorts};
use crate::phy::crc::bits_to_value_be;
use crate::phy::{BurstConfig, PduStrobe};
use crate::runtime::{Flowgraph, MessageSink, Payload, Pdu, RunStats, Termination};

/// Which reference modem to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modem {
    Psk,
    Fsk,
}

impl std::str::FromStr for Modem {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psk" => Ok(Modem::Psk),
            "fsk" => Ok(Modem::Fsk),
            other => Err(format!("unknown modem {other:?} (expected psk or fsk)")),
        }
    }
}

pub struct LoopbackOptions {
    pub modem: Modem,
    pub config: BurstConfig,
    pub channel: ChannelParams,
    pub n_bursts: u64,
    /// Random payload bits per burst in addition to the 32-bit sequence
    /// number.
    pub payload_data_bits: usize,
    pub seed: u64,
}

/// Burst interval on the transmit timeline: enough room that extraction
/// windows and holdoff cannot straddle two bursts at the default sizes.
pub fn burst_interval(modem: Modem, config: &BurstConfig) -> u64 {
    match modem {
        Modem::Psk => config.slot_len * 2,
        Modem::Fsk => config.slot_len * 4,
    }
}

/// Transmit-timeline horizon covering every burst plus drain margin.
pub fn run_horizon(opts: &LoopbackOptions) -> u64 {
    let interval = burst_interval(opts.modem, &opts.config);
    opts.config.min_lead + (opts.n_bursts + 2) * interval + 4 * opts.config.slot_len
}

pub struct LoopbackOutcome {
    pub report: RunReport,
    pub stats: RunStats,
    /// Decoded output PDUs in arrival order.
    pub pdus: Vec<Pdu>,
    /// Diagnostics PDUs per stage, in arrival order.
    pub taps: Vec<(&'static str, Vec<Pdu>)>,
}

/// Assemble and run one loopback flowgraph.
pub fn run_loopback(opts: &LoopbackOptions) -> Result<LoopbackOutcome, CliError> {
    let mut g = Flowgraph::new();
    let (tx, rx): (ModemPorts, ModemPorts) = match opts.modem {
        Modem::Psk => (
            wire_psk_tx(&mut g, &opts.config)?,
            wire_psk_rx(&mut g, &opts.config)?,
        ),
        Modem::Fsk => (
            wire_fsk_tx(&mut g, &opts.config)?,
            wire_fsk_rx(&mut g, &opts.config)?,
        ),
    };

    let interval = burst_interval(opts.modem, &opts.config);
    let strobe = g.add(PduStrobe::new(
        interval,
        opts.n_bursts,
        opts.payload_data_bits,
        opts.seed,
    ));
    let (nb, np) = tx.now_feedback.expect("tx exposes now feedback");
    g.connect_message(nb, np, strobe, "now")?;
    let (fb, fp) = tx.pdu_in.expect("tx exposes pdu_in");
    g.connect_message(strobe, "out", fb, fp)?;

    let chan = g.add(ChannelBlock::new(opts.channel.clone()));
    let (txo, txp) = tx.iq_out.expect("tx exposes iq_out");
    g.connect_stream(txo, txp, chan, 0)?;
    let (rxi, rxp) = rx.iq_in.expect("rx exposes iq_in");
    g.connect_stream(chan, 0, rxi, rxp)?;

    let (sink, pdus) = MessageSink::new();
    let dst = g.add(sink);
    let (po, pp) = rx.pdu_out.expect("rx exposes pdu_out");
    g.connect_message(po, pp, dst, "in")?;

    let mut taps: Vec<(&'static str, Arc<Mutex<Vec<Pdu>>>)> = Vec::new();
    for (name, (blk, port)) in &rx.diagnostics {
        let (tap, data) = MessageSink::new();
        let tid = g.add(tap);
        g.connect_message(*blk, port, tid, "in")?;
        taps.push((name, data));
    }

    let stats = g.run(Termination::MaxItems(run_horizon(opts)))?;
    let pdus = pdus.lock().unwrap().clone();
    let report = account(opts, &pdus, stats.elapsed.as_secs_f64());
    Ok(LoopbackOutcome {
        report,
        stats,
        pdus,
        taps: taps
            .into_iter()
            .map(|(n, d)| (n, d.lock().unwrap().clone()))
            .collect(),
    })
}

/// Compare decoded PDUs against the transmitted payloads by the sequence
/// number carried in the first 32 payload bits.
fn account(opts: &LoopbackOptions, pdus: &[Pdu], elapsed_s: f64) -> RunReport {
    let expected =
        PduStrobe::expected_payloads(opts.seed, opts.n_bursts, opts.payload_data_bits);
    let mut recovered = vec![false; opts.n_bursts as usize];
    let mut detected = 0u64;
    let mut crc_ok_count = 0u64;
    let mut false_triggers = 0u64;
    let mut bit_errors = 0u64;
    let mut bits_compared = 0u64;
    for pdu in pdus {
        let Some(bits) = pdu.payload.bits() else {
            false_triggers += 1;
            continue;
        };
        let seq = if bits.len() >= 32 {
            bits_to_value_be(&bits[..32])
        } else {
            u64::MAX
        };
        let reference = expected
            .get(seq as usize)
            .filter(|e| e.len() == bits.len());
        let Some(reference) = reference else {
            false_triggers += 1;
            continue;
        };
        detected += 1;
        bits_compared += bits.len() as u64;
        let errs = bits
            .iter()
            .zip(reference.iter())
            .filter(|(a, b)| a != b)
            .count() as u64;
        bit_errors += errs;
        if pdu.meta_bool("crc_ok") == Some(true) {
            crc_ok_count += 1;
            if errs == 0 {
                recovered[seq as usize] = true;
            }
        }
    }
    let good = recovered.iter().filter(|&&g| g).count() as u64;
    RunReport {
        bursts_tx: opts.n_bursts,
        bursts_detected: detected,
        bursts_crc_ok: crc_ok_count,
        false_triggers,
        bit_errors,
        bits_compared,
        per: if opts.n_bursts > 0 {
            1.0 - good as f64 / opts.n_bursts as f64
        } else {
            0.0
        },
        ber: if bits_compared > 0 {
            bit_errors as f64 / bits_compared as f64
        } else {
            0.0
        },
        elapsed_s,
        seed: opts.seed,
    }
}

/// Write one CSV per diagnostics stage plus a decoded-PDU summary.
pub fn write_diagnostics(
    out_dir: &Path,
    outcome: &LoopbackOutcome,
    config: &ConfigMap,
    seed: u64,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let stamp = format!("# config_hash={:#018x} seed={}\n", config_hash(config, seed), seed);

    for (name, pdus) in &outcome.taps {
        let path = out_dir.join(format!("{name}.csv"));
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| CliError::Io(e.to_string()))?);
        f.write_all(stamp.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
        let complex = pdus
            .first()
            .map(|p| matches!(p.payload, Payload::Complex(_)))
            .unwrap_or(false);
        let header = if complex {
            "stage,index,re,im\n"
        } else {
            "stage,index,value\n"
        };
        f.write_all(header.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
        for pdu in pdus {
            let stage = pdu.meta_str("stage").unwrap_or(name);
            let base = pdu
                .meta_u64("start_index")
                .or_else(|| pdu.meta_u64("event_time"))
                .unwrap_or(0);
            match &pdu.payload {
                Payload::Complex(v) => {
                    for (i, s) in v.iter().enumerate() {
                        writeln!(f, "{stage},{},{},{}", base + i as u64, s.re, s.im)
                            .map_err(|e| CliError::Io(e.to_string()))?;
                    }
                }
                Payload::Real(v) => {
                    for (i, x) in v.iter().enumerate() {
                        writeln!(f, "{stage},{},{}", base + i as u64, x)
                            .map_err(|e| CliError::Io(e.to_string()))?;
                    }
                }
                Payload::Bits(v) | Payload::Bytes(v) => {
                    for (i, x) in v.iter().enumerate() {
                        writeln!(f, "{stage},{},{}", base + i as u64, x)
                            .map_err(|e| CliError::Io(e.to_string()))?;
                    }
                }
            }
        }
    }

    let path = out_dir.join("decoded.csv");
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| CliError::Io(e.to_string()))?);
    f.write_all(stamp.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    f.write_all(b"seq,crc_ok,payload_bits\n").map_err(|e| CliError::Io(e.to_string()))?;
    for pdu in &outcome.pdus {
        let bits = match pdu.payload.bits() {
            Some(b) => b,
            None => continue,
        };
        let seq = if bits.len() >= 32 {
            bits_to_value_be(&bits[..32]) as i64
        } else {
            -1
        };
        writeln!(
            f,
            "{},{},{}",
            seq,
            pdu.meta_bool("crc_ok").unwrap_or(false),
            bits.len()
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}
