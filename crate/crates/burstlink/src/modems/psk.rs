//! PSK burst transmitter and receiver chains.

use crate::dsp::{design_rrc, fir_filter, interpolate, CorrelatorNormalizeBlock, FirFilterBlock};
use crate::eventstream::{EsSink, EsSource, TriggerRisingEdge};
use crate::modems::{relabel, ModemError, ModemPorts};
use crate::phy::{
    deframe, fec_decode, fec_encode, frame, frame_align, length_detect_at, pad_to_block,
    qpsk_map, qpsk_soft_demap, randomize, BurstConfig, BurstScheduler, Synchronizer,
};
use crate::runtime::{Flowgraph, ItemKind, MessageMap, Payload, Pdu, StreamProbe};

/// Extraction lookback: the detection metric can cross anywhere along the
/// preamble, so the extraction starts early enough to keep the whole
/// preamble plus pulse tails.
pub(crate) fn detection_lookback(config: &BurstConfig) -> u64 {
    let rrc_taps = config.sps * config.rrc_span + 1;
    (config.preamble_span_samples() + 2 * (rrc_taps - 1)) as u64
}

/// Message-domain transmit processing: frame, pad, whiten, encode, prepend
/// preamble, map to symbols. Shared with the FSK transmitter up to mapping.
fn tx_bit_chain(
    g: &mut Flowgraph,
    config: &BurstConfig,
) -> Result<(crate::modems::MsgPort, crate::modems::MsgPort), ModemError> {
    let codec_id = config.fec.clone();
    let k = config.codec().k();
    let do_randomize = config.randomize;

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
    let padder = g.add_named(
        "burst_padder",
        MessageMap::new("burst_padder", move |mut pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("padder expects bits")?;
            pdu.payload = Payload::Bits(pad_to_block(bits, k));
            Ok(relabel(pdu, "burst_padder"))
        }),
    );
    g.connect_message(framer, "out", padder, "in")?;
    let mut prev = padder;
    if do_randomize {
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
    let encoder = g.add_named(
        "fec_encoder",
        MessageMap::new("fec_encoder", move |mut pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("encoder expects bits")?;
            pdu.payload = Payload::Bits(fec_encode(bits, &enc_id).map_err(|e| e.to_string())?);
            Ok(relabel(pdu, "fec_encoder"))
        }),
    );
    g.connect_message(prev, "out", encoder, "in")?;
    let preamble = config.preamble_bits.clone();
    let prepend = g.add_named(
        "preamble_prepend",
        MessageMap::new("preamble_prepend", move |mut pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("prepend expects bits")?;
            let mut out = preamble.clone();
            out.extend_from_slice(bits);
            pdu.payload = Payload::Bits(out);
            Ok(relabel(pdu, "preamble_prepend"))
        }),
    );
    g.connect_message(encoder, "out", prepend, "in")?;
    Ok(((framer, "in"), (prepend, "out")))
}

/// PSK burst transmitter: frame -> pad -> whiten -> encode -> preamble ->
/// QPSK map -> slotted-aloha scheduler <-> eventstream source -> 1:sps RRC
/// interpolator.
pub fn wire_psk_tx(g: &mut Flowgraph, config: &BurstConfig) -> Result<ModemPorts, ModemError> {
    config.validate()?;
    let (pdu_in, bits_out) = tx_bit_chain(g, config)?;

    let mapper = g.add_named(
        "qpsk_mapper",
        MessageMap::new("qpsk_mapper", move |mut pdu: Pdu| {
            let bits = pdu.payload.bits().ok_or("mapper expects bits")?;
            pdu.payload = Payload::Complex(qpsk_map(bits).map_err(|e| e.to_string())?);
            Ok(relabel(pdu, "qpsk_mapper"))
        }),
    );
    g.connect_message(bits_out.0, bits_out.1, mapper, "in")?;

    let scheduler = g.add_named(
        "burst_scheduler",
        BurstScheduler::new(config.slot_len, config.min_lead),
    );
    g.connect_message(mapper, "out", scheduler, "pdus")?;

    let source = g.add_named(
        "es_source",
        EsSource::new(ItemKind::Complex).with_feedback_period(config.feedback_period),
    );
    g.connect_message(scheduler, "schedule", source, "schedule")?;
    g.connect_message(source, "now", scheduler, "now")?;

    let rrc = design_rrc(config.sps, config.rrc_beta, config.rrc_span)
        .map_err(|e| crate::phy::PhyError::ConfigInvalid(e.to_string()))?;
    let shaper = g.add_named("tx_rrc", FirFilterBlock::new(&rrc, config.sps));
    g.connect_stream(source, 0, shaper, 0)?;

    Ok(ModemPorts {
        pdu_in: Some(pdu_in),
        iq_out: Some((shaper, 0)),
        now_feedback: Some((source, "now")),
        es_source: Some(source),
        ..ModemPorts::default()
    })
}

/// PSK burst receiver: RX RRC -> preamble matched filter -> normalized
/// metric -> rising-edge trigger -> eventstream sink -> length trim ->
/// block synchronizer -> soft demap -> frame align -> FEC decode ->
/// derandomize -> deframe.
pub fn wire_psk_rx(g: &mut Flowgraph, config: &BurstConfig) -> Result<ModemPorts, ModemError> {
    config.validate()?;
    let rrc = design_rrc(config.sps, config.rrc_beta, config.rrc_span)
        .map_err(|e| crate::phy::PhyError::ConfigInvalid(e.to_string()))?;
    let matched = g.add_named("rx_rrc", FirFilterBlock::new(&rrc, 1));

    // Detection reference: the preamble as the matched-filter input sees it
    // (TX-shaped then RX-filtered).
    let pre_wave = fir_filter(&interpolate(&config.preamble_symbols(), &rrc, config.sps), &rrc, 1);
    let pre_mf = g.add_named(
        "preamble_mf",
        FirFilterBlock::new(&crate::dsp::FirTaps::matched(&pre_wave), 1),
    );
    g.connect_stream(matched, 0, pre_mf, 0)?;

    let correlator = g.add_named(
        "correlator",
        CorrelatorNormalizeBlock::new(config.avg_window),
    );
    g.connect_stream(pre_mf, 0, correlator, 0)?;

    let lookback = detection_lookback(config);
    let trigger = g.add_named(
        "trigger",
        TriggerRisingEdge::new(
            config.detect_threshold,
            config.trigger_holdoff,
            config.max_burst_samples as u64,
        )
        .with_time_offset(-(lookback as i64)),
    );
    g.connect_stream(correlator, 0, trigger, 0)?;

    let sink = g.add_named(
        "es_sink",
        EsSink::with_history_depth(ItemKind::Complex, config.history_depth),
    );
    g.connect_stream(matched, 0, sink, 0)?;
    g.connect_message(trigger, "trigger", sink, "trigger")?;

    // Diagnostics observer on the detection metric.
    let metric_probe = g.add_named(
        "metric_probe",
        StreamProbe::new(ItemKind::Real, "detection_metric", 1024),
    );
    g.connect_stream(correlator, 0, metric_probe, 0)?;

    let trim_cfg = config.clone();
    let trimmer = g.add_named(
        "length_detect",
        MessageMap::new("length_detect", move |mut pdu: Pdu| {
            let samples = pdu.payload.complex().ok_or("length_detect expects samples")?;
            let r = length_detect_at(samples, &trim_cfg, detection_lookback(&trim_cfg) as usize);
            pdu.set_meta("trimmed_len", r.trimmed_len as u64);
            pdu.set_meta("short_burst", r.short_burst);
            pdu.payload = Payload::Complex(r.samples);
            Ok(relabel(pdu, "length_detect"))
        }),
    );
    g.connect_message(sink, "out", trimmer, "in")?;

    let mut synchronizer = Synchronizer::new(config)?;
    let sync_block = g.add_named(
        "synchronizer",
        MessageMap::new("synchronizer", move |mut pdu: Pdu| {
            let samples = pdu.payload.complex().ok_or("synchronizer expects samples")?;
            let (symbols, est) = synchronizer.synchronize(samples).map_err(|e| e.to_string())?;
            pdu.set_meta("cfo", est.cfo);
            pdu.set_meta("timing", est.timing);
            pdu.set_meta("corr_peak", est.corr_peak);
            pdu.set_meta("preamble_index", est.preamble_index as u64);
            pdu.set_meta("noise_var", est.noise_var);
            pdu.set_meta("eq_re", est.eq_tap.re);
            pdu.set_meta("eq_im", est.eq_tap.im);
            pdu.payload = Payload::Complex(symbols);
            Ok(relabel(pdu, "synchronizer"))
        }),
    );
    g.connect_message(trimmer, "out", sync_block, "in")?;

    let demap = g.add_named(
        "soft_demapper",
        MessageMap::new("soft_demapper", move |mut pdu: Pdu| {
            let syms = pdu.payload.complex().ok_or("demapper expects symbols")?;
            let var = pdu.meta_f64("noise_var").unwrap_or(1.0).max(1e-12);
            pdu.payload = Payload::Real(qpsk_soft_demap(syms, var));
            Ok(relabel(pdu, "soft_demapper"))
        }),
    );
    g.connect_message(sync_block, "out", demap, "in")?;

    let pre_len = config.preamble_bits.len();
    let n = config.codec().n();
    let align = g.add_named(
        "frame_align",
        MessageMap::new("frame_align", move |mut pdu: Pdu| {
            let soft = pdu.payload.real().ok_or("align expects soft bits")?;
            let aligned = frame_align(soft, pre_len, n).map_err(|e| e.to_string())?;
            pdu.payload = Payload::Real(aligned);
            Ok(relabel(pdu, "frame_align"))
        }),
    );
    g.connect_message(demap, "out", align, "in")?;

    let dec_id = config.fec.clone();
    let decoder = g.add_named(
        "fec_decoder",
        MessageMap::new("fec_decoder", move |mut pdu: Pdu| {
            let soft = pdu.payload.real().ok_or("decoder expects soft bits")?;
            pdu.payload = Payload::Bits(fec_decode(soft, &dec_id).map_err(|e| e.to_string())?);
            Ok(relabel(pdu, "fec_decoder"))
        }),
    );
    g.connect_message(align, "out", decoder, "in")?;

    let mut prev = decoder;
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
        iq_in: Some((matched, 0)),
        es_sink: Some(sink),
        diagnostics: vec![
            ("detection_metric", (metric_probe, "out")),
            ("extraction", (sink, "out")),
            ("sync", (sync_block, "out")),
            ("demap", (demap, "out")),
        ],
        ..ModemPorts::default()
    })
}
