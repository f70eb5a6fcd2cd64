use burstlink::dsp::{ChannelBlock, ChannelParams};
use burstlink::modems::{wire_psk_rx, wire_psk_tx};
use burstlink::phy::{BurstConfig, PduStrobe};
use burstlink::runtime::{Flowgraph, MessageSink, Termination};

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let cfo: f64 = args.get(1).map(|v| v.parse().unwrap()).unwrap_or(0.0);
    let delay: usize = args.get(2).map(|v| v.parse().unwrap()).unwrap_or(0);
    let seed: u64 = args.get(3).map(|v| v.parse().unwrap()).unwrap_or(7);
    let config = BurstConfig::default();
    let n_bursts = 20u64;
    let mut g = Flowgraph::new();
    let tx = wire_psk_tx(&mut g, &config).unwrap();
    let rx = wire_psk_rx(&mut g, &config).unwrap();
    let interval = config.slot_len * 2;
    let strobe = g.add(PduStrobe::new(interval, n_bursts, 128, seed));
    let (nb, np) = tx.now_feedback.unwrap();
    g.connect_message(nb, np, strobe, "now").unwrap();
    let (framer, fin) = tx.pdu_in.unwrap();
    g.connect_message(strobe, "out", framer, fin).unwrap();
    let chan = g.add(ChannelBlock::new(ChannelParams { cfo, integer_delay: delay, phase0: 1.1, ..ChannelParams::default() }));
    let (txo, txp) = tx.iq_out.unwrap();
    g.connect_stream(txo, txp, chan, 0).unwrap();
    let (rxi, rxp) = rx.iq_in.unwrap();
    g.connect_stream(chan, 0, rxi, rxp).unwrap();
    let (sink, pdus) = MessageSink::new();
    let dst = g.add(sink);
    let (po, pp) = rx.pdu_out.unwrap();
    g.connect_message(po, pp, dst, "in").unwrap();
    // also tap extraction + sync
    let (tap_ex, ex_data) = MessageSink::new();
    let te = g.add(tap_ex);
    let (exb, exp) = rx.diagnostics.iter().find(|(n, _)| *n == "extraction").unwrap().1;
    g.connect_message(exb, exp, te, "in").unwrap();
    let (tap_sync, sync_data) = MessageSink::new();
    let ts = g.add(tap_sync);
    let (sb, sp) = rx.diagnostics.iter().find(|(n, _)| *n == "sync").unwrap().1;
    g.connect_message(sb, sp, ts, "in").unwrap();

    let horizon = config.min_lead + (n_bursts + 2) * interval + 4 * config.slot_len;
    let stats = g.run(Termination::MaxItems(horizon)).unwrap();
    println!("{stats}");
    let exs = ex_data.lock().unwrap();
    println!("extractions: {}", exs.len());
    for e in exs.iter().take(25) {
        println!("  event_time={:?} len={:?} metric={:?}", e.meta_u64("event_time"), e.payload.len(), e.meta_f64("metric"));
    }
    let syncs = sync_data.lock().unwrap();
    println!("sync outputs: {}", syncs.len());
    for s in syncs.iter().take(25) {
        println!("  ev={:?} cfo={:.2e} peak={:.3} pre_idx={:?} nvar={:.2e}", s.meta_u64("event_time"), s.meta_f64("cfo").unwrap(), s.meta_f64("corr_peak").unwrap(), s.meta_u64("preamble_index"), s.meta_f64("noise_var").unwrap());
    }
    let out = pdus.lock().unwrap();
    println!("pdu_out: {}", out.len());
    let expected = PduStrobe::expected_payloads(seed, n_bursts, 128);
    let mut got = vec![false; n_bursts as usize];
    for p in out.iter() {
        let bits = p.payload.bits().unwrap();
        let seq = bits[..32.min(bits.len())].iter().fold(0u64, |a, &b| (a<<1)|b as u64);
        let matches = (seq as usize) < expected.len() && bits == &expected[seq as usize][..];
        if matches && p.meta_bool("crc_ok") == Some(true) { got[seq as usize] = true; }
        println!("  seq={} crc_ok={:?} len={} match={} ev={:?}", seq, p.meta_bool("crc_ok"), bits.len(), matches, p.meta_u64("event_time"));
    }
    println!("missing: {:?}", got.iter().enumerate().filter(|(_, &g)| !g).map(|(i, _)| i).collect::<Vec<_>>());
}
