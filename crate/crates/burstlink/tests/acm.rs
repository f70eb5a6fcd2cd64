//! Event-chaining receiver: header extraction drives a second, payload-sized
//! extraction through a message cycle back into the eventstream sink.

use burstlink::dsp::{design_rrc, interpolate};
use burstlink::modems::wire_acm_rx;
use burstlink::phy::{fec_encode, frame, pad_to_block, qpsk_map, randomize, BurstConfig};
use burstlink::runtime::{Flowgraph, MessageSink, Payload, Pdu, Termination, VectorSource};
use burstlink::Sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn acm_config() -> BurstConfig {
    let mut c = BurstConfig::default();
    // Cover a whole burst (suppress mid-payload re-triggers) while staying
    // below the burst spacing used in the ordering test.
    c.trigger_holdoff = 800;
    c
}

fn random_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..=1) as u8).collect()
}

/// TX-shaped burst waveform for a payload, optionally with one coded bit
/// flipped inside the header block.
fn burst_wave(config: &BurstConfig, payload: &[u8], corrupt_header: bool) -> Vec<Sample> {
    let k = config.codec().k();
    let framed = frame(payload).unwrap();
    let padded = pad_to_block(&framed, k);
    let white = if config.randomize {
        randomize(&padded)
    } else {
        padded
    };
    let mut coded = fec_encode(&white, &config.fec).unwrap();
    if corrupt_header {
        coded[5] ^= 1; // inside the first coded block: header CRC must fail
    }
    let mut bits = config.preamble_bits.clone();
    bits.extend(coded);
    let mut syms = qpsk_map(&bits).unwrap();
    syms.extend(vec![Sample::new(0.0, 0.0); config.rrc_span + 1]);
    let rrc = design_rrc(config.sps, config.rrc_beta, config.rrc_span).unwrap();
    interpolate(&syms, &rrc, config.sps)
}

/// Assemble a timeline of bursts at given offsets and run it through the
/// event-chaining receiver. Returns (event kinds in emission order, decoded
/// PDUs).
fn run_acm(
    config: &BurstConfig,
    bursts: &[(usize, Vec<Sample>)],
    tail: usize,
) -> (Vec<(String, u64)>, Vec<Pdu>) {
    let total = bursts
        .iter()
        .map(|(off, w)| off + w.len())
        .max()
        .unwrap_or(0)
        + tail;
    let mut iq = vec![Sample::new(0.0, 0.0); total];
    for (off, wave) in bursts {
        for (i, &s) in wave.iter().enumerate() {
            iq[off + i] += s;
        }
    }
    let mut g = Flowgraph::new();
    let src = g.add(VectorSource::new(Payload::Complex(iq)));
    let rx = wire_acm_rx(&mut g, config).unwrap();
    let (rxi, rxp) = rx.iq_in.unwrap();
    g.connect_stream(src, 0, rxi, rxp).unwrap();
    let (events_sink, events) = MessageSink::new();
    let ev = g.add(events_sink);
    let (exb, exp) = rx
        .diagnostics
        .iter()
        .find(|(n, _)| *n == "extraction")
        .unwrap()
        .1;
    g.connect_message(exb, exp, ev, "in").unwrap();
    let (pdu_sink, pdus) = MessageSink::new();
    let dst = g.add(pdu_sink);
    let (po, pp) = rx.pdu_out.unwrap();
    g.connect_message(po, pp, dst, "in").unwrap();
    g.run(Termination::SourceExhausted).unwrap();
    let kinds = events
        .lock()
        .unwrap()
        .iter()
        .map(|p| {
            (
                p.meta_str("trigger").unwrap_or("?").to_string(),
                p.meta_u64("event_time").unwrap(),
            )
        })
        .collect();
    let out = pdus.lock().unwrap().clone();
    (kinds, out)
}

#[test]
fn burst_yields_exactly_two_extraction_events() {
    let config = acm_config();
    let payload = random_bits(256, 1);
    let wave = burst_wave(&config, &payload, false);
    let (kinds, pdus) = run_acm(&config, &[(3000, wave)], 4000);
    let headers = kinds.iter().filter(|(k, _)| k == "rising_edge").count();
    let payloads = kinds.iter().filter(|(k, _)| k == "acm_payload").count();
    assert_eq!((headers, payloads), (1, 1), "events: {kinds:?}");
    assert_eq!(pdus.len(), 1);
    assert_eq!(pdus[0].meta_bool("crc_ok"), Some(true));
    assert_eq!(pdus[0].payload.bits().unwrap(), &payload[..]);
}

#[test]
fn header_crc_failure_yields_one_event_and_no_output() {
    let config = acm_config();
    let payload = random_bits(256, 2);
    let wave = burst_wave(&config, &payload, true);
    let (kinds, pdus) = run_acm(&config, &[(3000, wave)], 4000);
    let headers = kinds.iter().filter(|(k, _)| k == "rising_edge").count();
    let payloads = kinds.iter().filter(|(k, _)| k == "acm_payload").count();
    assert_eq!((headers, payloads), (1, 0), "events: {kinds:?}");
    assert!(pdus.is_empty());
}

#[test]
fn second_header_extracted_before_first_payload() {
    let config = acm_config();
    let p1 = random_bits(512, 3);
    let p2 = random_bits(512, 4);
    let w1 = burst_wave(&config, &p1, false);
    let w2 = burst_wave(&config, &p2, false);
    let gap = w1.len() + 500;
    let (kinds, pdus) = run_acm(&config, &[(3000, w1), (3000 + gap, w2.clone())], 6000);
    let order: Vec<&str> = kinds.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(
        order,
        vec!["rising_edge", "rising_edge", "acm_payload", "acm_payload"],
        "emission order {kinds:?}"
    );
    // Both payloads decode despite interleaved processing.
    assert_eq!(pdus.len(), 2);
    let mut decoded: Vec<Vec<u8>> = pdus
        .iter()
        .map(|p| p.payload.bits().unwrap().to_vec())
        .collect();
    decoded.sort();
    let mut expect = vec![p1, p2];
    expect.sort();
    assert_eq!(decoded, expect);
    for p in &pdus {
        assert_eq!(p.meta_bool("crc_ok"), Some(true));
    }
}
