//! FSK burst transmitter and receiver chains.

use crate::dsp::{BurstGate, ChannelBlock, ChannelParams, QuadratureDemodBlock, VcoBlock,
    WindowedVarianceBlock};
use crate::eventstream::{EsSink, EsSource, TriggerBelow};
use crate::modems::{relabel, ModemError, ModemPorts};
use crate::phy::{
    deframe, fec_decode, fec_encode, frame, fsk_map, fsk_timing_and_slice, pad_to_block,
    randomize, BurstConfig, BurstScheduler, CodecId,
};
use crate::runtime::{Flowgraph, ItemKind, MessageMap, Payload, Pdu, StreamProbe};

/// Seed for the receiver's internal dither source. The variance detector
/// needs a noise floor to arm against in noiseless simulation; -120 dB of
/// seeded Gaussian dither provides one without touching error rates.
const RX_DITHER_SEED: u64 = 0x0D17;
const RX_DITHER_SIGMA: f64 = 1e-6;

/// FSK burst transmitter: frame -> (pad/whiten/encode per config) ->
/// preamble -> +/-1 deviation map -> slotted-aloha scheduler <-> eventstream
/// source -> VCO -> burst gate. The gate keeps the carrier inside scheduled
/// events only, so the stream is exactly zero between bursts.
pub fn wire_fsk_tx(g: &mut Flowgraph, config: &BurstConfig) -> Result<ModemPorts, ModemError> {
    config.validate()?;
    let codec_id = config.fec.clone();
    let k = config.codec().k();
    let coded = !matches!(codec_id, CodecId::None { .. }) || config.randomize;

    let framer = g.add_named(
        "framer",
        MessageMap::new("framer", move |pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("framer expects bit payload")?;
            let framed = frame(bits).map_err(|e| e.to_string())?;
            let mut out = pdu.clone();
            out.payload = Payload::Bits(framed);
            Ok(relabel(out, "framer"))
        }),
    );
    let mut prev = framer;
    if coded {
        let pad = g.add_named(
            "burst_padder",
            MessageMap::new("burst_padder", move |mut pdu: Pdu| {
                let bits = pdu.payload.bits().ok_or("padder expects bits")?;
                pdu.payload = Payload::Bits(pad_to_block(bits, k));
                Ok(relabel(pdu, "burst_padder"))
            }),
        );
        g.connect_message(prev, "out", pad, "in")?;
        prev = pad;
        if config.randomize {
            let rand = g.add_named(
                "randomizer",
                MessageMap::new("randomizer", move |mut pdu: Pdu| {
                    let bits = pdu.payload.bits().ok_or("randomizer expects bits")?;
                    pdu.payload = Payload::Bits(randomize(bits));
                    Ok(relabel(pdu, "randomizer"))
                }),
            );
            g.connect_message(prev, "out", rand, "in")?;
            prev = rand;
        }
        let enc_id = codec_id.clone();
        let enc = g.add_named(
            "fec_encoder",
            MessageMap::new("fec_encoder", move |mut pdu: Pdu| {
                let bits = pdu.payload.bits().ok_or("encoder expects bits")?;
                pdu.payload =
                    Payload::Bits(fec_encode(bits, &enc_id).map_err(|e| e.to_string())?);
                Ok(relabel(pdu, "fec_encoder"))
            }),
        );
        g.connect_message(prev, "out", enc, "in")?;
        prev = enc;
    }

    let preamble = config.preamble_bits.clone();
    let prepend = g.add_named(
        "preamble_prepend",
        MessageMap::new("preamble_prepend", move |mut pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("prepend expects bits")?;
            let mut all = preamble.clone();
            all.extend_from_slice(bits);
            pdu.payload = Payload::Bits(all);
            Ok(relabel(pdu, "preamble_prepend"))
        }),
    );
    g.connect_message(prev, "out", prepend, "in")?;

    let sps = config.sps;
    let mapper = g.add_named(
        "fsk_mapper",
        MessageMap::new("fsk_mapper", move |mut pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("fsk mapper expects bits")?;
            pdu.payload = Payload::Real(fsk_map(bits, sps));
            Ok(relabel(pdu, "fsk_mapper"))
        }),
    );
    g.connect_message(prepend, "out", mapper, "in")?;

    let scheduler = g.add_named(
        "burst_scheduler",
        BurstScheduler::new(config.slot_len, config.min_lead),
    );
    g.connect_message(mapper, "out", scheduler, "pdus")?;

    let source = g.add_named(
        "es_source",
        EsSource::new(ItemKind::Real)
            .with_feedback_period(config.feedback_period)
            .with_event_tags(),
    );
    g.connect_message(scheduler, "schedule", source, "schedule")?;
    g.connect_message(source, "now", scheduler, "now")?;

    let vco = g.add_named("vco", VcoBlock::new(config.fsk_sensitivity));
    g.connect_stream(source, 0, vco, 0)?;
    let gate = g.add_named("burst_gate", BurstGate::new());
    g.connect_stream(vco, 0, gate, 0)?;

    Ok(ModemPorts {
        pdu_in: Some((framer, "in")),
        iq_out: Some((gate, 0)),
        now_feedback: Some((source, "now")),
        es_source: Some(source),
        ..ModemPorts::default()
    })
}

/// FSK burst receiver: continuous quadrature discriminator -> windowed
/// variance -> below-threshold trigger -> eventstream sink over the
/// demodulated stream -> block timing and slicing -> (FEC/derandomize per
/// config) -> deframe.
pub fn wire_fsk_rx(g: &mut Flowgraph, config: &BurstConfig) -> Result<ModemPorts, ModemError> {
    config.validate()?;

    let dither = g.add_named(
        "rx_dither",
        ChannelBlock::new(ChannelParams {
            noise_voltage: RX_DITHER_SIGMA,
            seed: RX_DITHER_SEED,
            ..ChannelParams::default()
        }),
    );
    let demod = g.add_named("quadrature_demod", QuadratureDemodBlock::new(1.0));
    g.connect_stream(dither, 0, demod, 0)?;

    let variance = g.add_named(
        "variance",
        WindowedVarianceBlock::new(config.variance_window),
    );
    g.connect_stream(demod, 0, variance, 0)?;

    let lookback = (config.variance_window + 8 * config.sps) as u64;
    let trigger = g.add_named(
        "trigger",
        TriggerBelow::new(
            config.fsk_detect_threshold,
            config.trigger_holdoff,
            config.max_burst_samples as u64,
        )
        .with_time_offset(-(lookback as i64)),
    );
    g.connect_stream(variance, 0, trigger, 0)?;

    let sink = g.add_named(
        "es_sink",
        EsSink::with_history_depth(ItemKind::Real, config.history_depth),
    );
    g.connect_stream(demod, 0, sink, 0)?;
    g.connect_message(trigger, "trigger", sink, "trigger")?;

    let metric_probe = g.add_named(
        "metric_probe",
        StreamProbe::new(ItemKind::Real, "variance_metric", 1024),
    );
    g.connect_stream(variance, 0, metric_probe, 0)?;

    let slicer_cfg = config.clone();
    let slicer = g.add_named(
        "fsk_timing",
        MessageMap::new("fsk_timing", move |mut pdu: Pdu| {
            let samples = pdu.payload.real().ok_or("fsk timing expects real samples")?;
            let (bits, sync) =
                fsk_timing_and_slice(samples, &slicer_cfg).map_err(|e| e.to_string())?;
            pdu.set_meta("start", sync.start as u64);
            pdu.set_meta("corr_score", sync.score);
            pdu.set_meta("dc", sync.dc);
            pdu.set_meta("amplitude", sync.amplitude);
            pdu.payload = Payload::Bits(bits);
            Ok(relabel(pdu, "fsk_timing"))
        }),
    );
    g.connect_message(sink, "out", slicer, "in")?;

    let mut prev = slicer;
    if !matches!(config.fec, CodecId::None { .. }) {
        let n = config.codec().n();
        let dec_id = config.fec.clone();
        let dec = g.add_named(
            "fec_decoder",
            MessageMap::new("fec_decoder", move |mut pdu: Pdu| {
                let bits = pdu.payload.bits().ok_or("decoder expects bits")?;
                // Hard bits to unit LLRs, trimmed to whole coded blocks.
                let keep = bits.len() / n * n;
                let llrs: Vec<f64> = bits[..keep]
                    .iter()
                    .map(|&b| if b == 0 { 1.0 } else { -1.0 })
                    .collect();
                pdu.payload =
                    Payload::Bits(fec_decode(&llrs, &dec_id).map_err(|e| e.to_string())?);
                Ok(relabel(pdu, "fec_decoder"))
            }),
        );
        g.connect_message(prev, "out", dec, "in")?;
        prev = dec;
    }
    if config.randomize {
        let derand = g.add_named(
            "derandomizer",
            MessageMap::new("derandomizer", move |mut pdu: Pdu| {
                let bits = pdu.payload.bits().ok_or("derandomizer expects bits")?;
                pdu.payload = Payload::Bits(randomize(bits));
                Ok(relabel(pdu, "derandomizer"))
            }),
        );
        g.connect_message(prev, "out", derand, "in")?;
        prev = derand;
    }

    let deframer = g.add_named(
        "deframer",
        MessageMap::new("deframer", move |mut pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("deframer expects bits")?;
            let d = deframe(bits).map_err(|e| e.to_string())?;
            pdu.set_meta("crc_ok", d.crc_ok);
            pdu.set_meta("payload_len", d.payload_len as u64);
            pdu.payload = Payload::Bits(d.payload);
            Ok(relabel(pdu, "deframer"))
        }),
    );
    g.connect_message(prev, "out", deframer, "in")?;

    Ok(ModemPorts {
        pdu_out: Some((deframer, "out")),
        iq_in: Some((dither, 0)),
        es_sink: Some(sink),
        diagnostics: vec![
            ("variance_metric", (metric_probe, "out")),
            ("extraction", (sink, "out")),
            ("timing", (slicer, "out")),
        ],
        ..ModemPorts::default()
    })
}
