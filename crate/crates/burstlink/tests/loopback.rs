//! End-to-end modem loopback: TX and RX chains wired into one flowgraph
//! through the simulated channel.

use burstlink::dsp::{ChannelBlock, ChannelParams};
use burstlink::modems::{wire_fsk_rx, wire_fsk_tx, wire_psk_rx, wire_psk_tx};
use burstlink::phy::{BurstConfig, CodecId, PduStrobe};
use burstlink::runtime::{Flowgraph, MessageSink, Pdu, Termination};

/// Wire TX -> channel -> RX plus a strobe source; run; return the decoded
/// PDUs and the run stats.
fn run_loopback(
    modem: &str,
    config: &BurstConfig,
    channel: ChannelParams,
    n_bursts: u64,
    payload_data_bits: usize,
    seed: u64,
) -> (Vec<Pdu>, burstlink::runtime::RunStats) {
    let mut g = Flowgraph::new();
    let (tx, rx) = match modem {
        "psk" => (
            wire_psk_tx(&mut g, config).unwrap(),
            wire_psk_rx(&mut g, config).unwrap(),
        ),
        "fsk" => (
            wire_fsk_tx(&mut g, config).unwrap(),
            wire_fsk_rx(&mut g, config).unwrap(),
        ),
        other => panic!("unknown modem {other}"),
    };

    // Burst interval on the TX timeline, sized so extraction windows and
    // trigger holdoff cannot straddle two bursts.
    let interval = strobe_interval(modem, config);
    let strobe = g.add(PduStrobe::new(interval, n_bursts, payload_data_bits, seed));
    let (now_blk, now_port) = tx.now_feedback.unwrap();
    g.connect_message(now_blk, now_port, strobe, "now").unwrap();
    let (framer, fin) = tx.pdu_in.unwrap();
    g.connect_message(strobe, "out", framer, fin).unwrap();

    let chan = g.add(ChannelBlock::new(channel));
    let (txo, txp) = tx.iq_out.unwrap();
    g.connect_stream(txo, txp, chan, 0).unwrap();
    let (rxi, rxp) = rx.iq_in.unwrap();
    g.connect_stream(chan, 0, rxi, rxp).unwrap();

    let (sink, pdus) = MessageSink::new();
    let dst = g.add(sink);
    let (po, pp) = rx.pdu_out.unwrap();
    g.connect_message(po, pp, dst, "in").unwrap();

    let horizon = config.min_lead + (n_bursts + 2) * interval + 4 * config.slot_len;
    let stats = g.run(Termination::MaxItems(horizon)).unwrap();
    let out = pdus.lock().unwrap().clone();
    (out, stats)
}

fn strobe_interval(modem: &str, config: &BurstConfig) -> u64 {
    // Two slots per burst keeps consecutive extractions disjoint at the
    // default sizes.
    let slots_per_burst = if modem == "psk" { 2 } else { 4 };
    config.slot_len * slots_per_burst
}

/// Count how many transmitted bursts were recovered bit-exactly with a good
/// CRC.
fn recovered(pdus: &[Pdu], seed: u64, n_bursts: u64, payload_data_bits: usize) -> usize {
    let expected = PduStrobe::expected_payloads(seed, n_bursts, payload_data_bits);
    let mut got = vec![false; n_bursts as usize];
    for pdu in pdus {
        if pdu.meta_bool("crc_ok") != Some(true) {
            continue;
        }
        let Some(bits) = pdu.payload.bits() else {
            continue;
        };
        if bits.len() < 32 {
            continue;
        }
        let seq = bits[..32].iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        if (seq as usize) < got.len() && bits == expected[seq as usize] {
            got[seq as usize] = true;
        }
    }
    got.iter().filter(|&&g| g).count()
}

#[test]
fn psk_noiseless_loopback_recovers_all_bursts() {
    let config = BurstConfig::default();
    let n = 20;
    let (pdus, stats) = run_loopback("psk", &config, ChannelParams::default(), n, 128, 7);
    let ok = recovered(&pdus, 7, n, 128);
    assert_eq!(ok as u64, n, "recovered {ok}/{n}\n{stats}");
}

#[test]
fn psk_loopback_with_cfo_recovers_all_bursts() {
    let config = BurstConfig::default();
    let n = 20;
    let channel = ChannelParams {
        cfo: 0.005,
        phase0: 1.1,
        integer_delay: 13,
        ..ChannelParams::default()
    };
    let (pdus, stats) = run_loopback("psk", &config, channel, n, 128, 8);
    let ok = recovered(&pdus, 8, n, 128);
    assert_eq!(ok as u64, n, "recovered {ok}/{n}\n{stats}");
}

#[test]
fn psk_rep2_loopback_recovers_all_bursts() {
    let mut config = BurstConfig::default();
    config.fec = CodecId::Repetition { k: 128, r: 2 };
    let n = 10;
    let (pdus, stats) = run_loopback("psk", &config, ChannelParams::default(), n, 128, 9);
    let ok = recovered(&pdus, 9, n, 128);
    assert_eq!(ok as u64, n, "recovered {ok}/{n}\n{stats}");
}

#[test]
fn fsk_noiseless_loopback_recovers_all_bursts() {
    let mut config = BurstConfig::default();
    config.slot_len = 1024;
    let n = 10;
    let (pdus, stats) = run_loopback("fsk", &config, ChannelParams::default(), n, 128, 11);
    let ok = recovered(&pdus, 11, n, 128);
    assert_eq!(ok as u64, n, "recovered {ok}/{n}\n{stats}");
}

#[test]
fn fsk_20db_loopback_recovers_nearly_all() {
    let mut config = BurstConfig::default();
    config.slot_len = 1024;
    let n = 50;
    // 20 dB SNR on a unit-amplitude FSK carrier: per-component sigma.
    let snr_lin = 100.0_f64;
    let sigma = (1.0 / (2.0 * snr_lin)).sqrt();
    let channel = ChannelParams {
        noise_voltage: sigma,
        seed: 33,
        ..ChannelParams::default()
    };
    let (pdus, stats) = run_loopback("fsk", &config, channel, n, 128, 12);
    let ok = recovered(&pdus, 12, n, 128);
    assert!(ok as u64 >= n - 1, "recovered {ok}/{n}\n{stats}");
}

#[test]
fn diagnostics_taps_do_not_change_output() {
    let config = BurstConfig::default();
    // Baseline without subscribers.
    let (pdus_plain, _) = run_loopback("psk", &config, ChannelParams::default(), 5, 64, 21);

    // Same run with every diagnostics port subscribed.
    let mut g = Flowgraph::new();
    let tx = wire_psk_tx(&mut g, &config).unwrap();
    let rx = wire_psk_rx(&mut g, &config).unwrap();
    let interval = strobe_interval("psk", &config);
    let strobe = g.add(PduStrobe::new(interval, 5, 64, 21));
    let (nb, np) = tx.now_feedback.unwrap();
    g.connect_message(nb, np, strobe, "now").unwrap();
    let (framer, fin) = tx.pdu_in.unwrap();
    g.connect_message(strobe, "out", framer, fin).unwrap();
    let chan = g.add(ChannelBlock::new(ChannelParams::default()));
    let (txo, txp) = tx.iq_out.unwrap();
    g.connect_stream(txo, txp, chan, 0).unwrap();
    let (rxi, rxp) = rx.iq_in.unwrap();
    g.connect_stream(chan, 0, rxi, rxp).unwrap();
    let (sink, pdus) = MessageSink::new();
    let dst = g.add(sink);
    let (po, pp) = rx.pdu_out.unwrap();
    g.connect_message(po, pp, dst, "in").unwrap();
    let mut taps = Vec::new();
    for (name, (blk, port)) in &rx.diagnostics {
        let (tap, data) = MessageSink::new();
        let tid = g.add(tap);
        g.connect_message(*blk, port, tid, "in").unwrap();
        taps.push((*name, data));
    }
    let horizon = config.min_lead + 7 * interval + 4 * config.slot_len;
    g.run(Termination::MaxItems(horizon)).unwrap();
    let pdus_tapped = pdus.lock().unwrap().clone();

    assert_eq!(pdus_plain, pdus_tapped, "taps must be pure observers");
    // Every diagnostic PDU declares its stage.
    for (name, data) in taps {
        let data = data.lock().unwrap();
        if name == "extraction" || name == "sync" || name == "demap" {
            assert!(!data.is_empty(), "diagnostics port {name} saw no PDUs");
        }
        for pdu in data.iter() {
            assert!(pdu.meta_str("stage").is_some(), "{name} pdu missing stage");
        }
    }
}
