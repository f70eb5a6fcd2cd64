//! Header-then-payload event chaining.
//!
//! A PSK receiver variant where the initial extraction covers only the fixed
//! header span. Once the header block decodes, its length field is turned
//! into a second trigger aimed back at the same eventstream sink — a message
//! cycle — and the payload is demodulated as an independent event using the
//! header's synchronization estimate. Header extraction of a later burst
//! never waits on payload processing of an earlier one.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::dsp::{design_rrc, fir_filter, interpolate, CorrelatorNormalizeBlock, FirFilterBlock};
use crate::eventstream::{EsSink, TriggerMessage, TriggerRisingEdge, EVENT_TIME_KEY};
use crate::modems::psk::detection_lookback;
use crate::modems::{relabel, ModemError, ModemPorts};
use crate::phy::crc::{bits_to_value_be, crc16_ccitt_false};
use crate::phy::{
    deframe, fec_decode, frame_align, qpsk_soft_demap, randomize, BurstConfig, Lfsr,
    Synchronizer, FRAME_OVERHEAD_BITS,
};
use crate::runtime::{
    Block, BlockError, Flowgraph, ItemKind, MessageMap, Payload, Pdu, Signature, WorkIo,
};
use crate::Sample;

/// Trigger identity attached to chained payload extractions.
pub const ACM_PAYLOAD_TRIGGER: &str = "acm_payload";

/// Extraction length covering lookback, preamble, one coded block, and
/// filter slop.
pub(crate) fn header_span(config: &BurstConfig) -> u64 {
    let rrc_taps = config.sps * config.rrc_span + 1;
    detection_lookback(config)
        + (config.preamble_span_samples() + config.codec().n() / 2 * config.sps) as u64
        + (rrc_taps - 1) as u64
        + (8 * config.sps) as u64
}

/// Routes eventstream sink output by the trigger identity in its metadata.
struct EventDemux;

impl Block for EventDemux {
    fn type_name(&self) -> &'static str {
        "event_demux"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .msg_in("in")
            .msg_out("header")
            .msg_out("payload")
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        match pdu.meta_str("trigger") {
            Some(ACM_PAYLOAD_TRIGGER) => io.post("payload", pdu),
            Some(_) => io.post("header", pdu),
            None => io.count("unrouted_event", 1),
        }
        Ok(())
    }
}

struct PendingPayload {
    /// Aligned LLRs of the first coded block.
    header_llrs: Vec<f64>,
    cfo: f64,
    eq: Sample,
    noise_var: f64,
    /// Stream time the header's derotation is referenced to.
    header_event_time: u64,
    /// Fractional offset of the first payload symbol inside the payload
    /// extraction.
    first_offset: f64,
    payload_syms: usize,
}

/// Decodes header blocks, queues payload extraction triggers, and demodulates
/// payload events against the stored per-burst estimates.
struct AcmController {
    config: BurstConfig,
    /// Filter group delay used by the synchronizer's symbol instants.
    sym_offset: usize,
    /// Whitening prefix for the first coded block.
    pn_prefix: Vec<u8>,
    pending: BTreeMap<u64, PendingPayload>,
    guard: usize,
}

impl AcmController {
    fn new(config: &BurstConfig) -> Self {
        let rrc_taps = config.sps * config.rrc_span + 1;
        let k = config.codec().k();
        AcmController {
            config: config.clone(),
            sym_offset: rrc_taps - 1,
            pn_prefix: Lfsr::new().take_bits(k),
            pending: BTreeMap::new(),
            guard: 4 * config.sps,
        }
    }

    fn handle_header(&mut self, pdu: Pdu, io: &mut WorkIo) {
        let codec = self.config.codec();
        let n = codec.n();
        let Some(llrs) = pdu.payload.real() else {
            io.count("bad_header_payload", 1);
            return;
        };
        if llrs.len() < n {
            io.count("short_header", 1);
            return;
        }
        let header_llrs = llrs[..n].to_vec();
        let Ok(block_bits) = fec_decode(&header_llrs, &self.config.fec) else {
            io.count("header_decode_fail", 1);
            return;
        };
        let bits: Vec<u8> = if self.config.randomize {
            block_bits
                .iter()
                .zip(&self.pn_prefix)
                .map(|(b, p)| b ^ p)
                .collect()
        } else {
            block_bits
        };
        if bits.len() < 32 {
            io.count("short_header", 1);
            return;
        }
        let length_field = &bits[..16];
        let wire_crc = bits_to_value_be(&bits[16..32]) as u16;
        if crc16_ccitt_false(length_field) != wire_crc {
            io.count("header_crc_fail", 1);
            return;
        }
        let payload_bits = bits_to_value_be(length_field) as usize;

        let k = codec.k();
        let frame_bits = FRAME_OVERHEAD_BITS + payload_bits;
        let coded_total = frame_bits.div_ceil(k) * n;
        let remaining_coded = coded_total.saturating_sub(n);

        let (Some(event_time), Some(pre_idx), Some(cfo), Some(timing), Some(noise_var)) = (
            pdu.meta_u64(EVENT_TIME_KEY),
            pdu.meta_u64("preamble_index"),
            pdu.meta_f64("cfo"),
            pdu.meta_f64("timing"),
            pdu.meta_f64("noise_var"),
        ) else {
            io.count("missing_sync_meta", 1);
            return;
        };
        let eq = Sample::new(
            pdu.meta_f64("eq_re").unwrap_or(1.0),
            pdu.meta_f64("eq_im").unwrap_or(0.0),
        );

        if remaining_coded == 0 {
            // Whole frame fits in the header block: no chained event.
            io.count("single_block_burst", 1);
            let mut out = Pdu::new(Payload::Real(header_llrs));
            out.meta = pdu.meta.clone();
            io.post("frame", relabel(out, "acm_reassembly"));
            return;
        }

        let pre_syms = self.config.preamble_bits.len() / 2;
        let sps = self.config.sps;
        // Global position of payload symbol 0, from the header's timing.
        let payload_first_global = event_time as f64
            + pre_idx as f64
            + self.sym_offset as f64
            + timing
            + ((pre_syms + n / 2) * sps) as f64;
        let t2 = (payload_first_global as u64).saturating_sub(self.guard as u64);
        let payload_syms = remaining_coded / 2;
        let length = (payload_syms * sps + 2 * self.guard + self.sym_offset) as u64;

        let mut trig = TriggerMessage::new(t2, length);
        trig.meta
            .insert("trigger".into(), crate::runtime::Value::Str(ACM_PAYLOAD_TRIGGER.into()));
        io.post("trigger", trig.to_pdu());

        self.pending.insert(
            t2,
            PendingPayload {
                header_llrs,
                cfo,
                eq,
                noise_var,
                header_event_time: event_time,
                first_offset: payload_first_global - t2 as f64,
                payload_syms,
            },
        );
    }

    fn handle_payload(&mut self, pdu: Pdu, io: &mut WorkIo) {
        let Some(t2) = pdu.meta_u64(EVENT_TIME_KEY) else {
            io.count("orphan_payload", 1);
            return;
        };
        let Some(state) = self.pending.remove(&t2) else {
            io.count("orphan_payload", 1);
            return;
        };
        let Some(samples) = pdu.payload.complex() else {
            io.count("bad_payload_kind", 1);
            return;
        };
        let mut symbols = Vec::with_capacity(state.payload_syms);
        for s in 0..state.payload_syms {
            let pos = state.first_offset + (s * self.config.sps) as f64;
            let i0 = pos.floor() as usize;
            if i0 + 1 >= samples.len() {
                break;
            }
            let f = pos - i0 as f64;
            let raw = samples[i0] * (1.0 - f) + samples[i0 + 1] * f;
            // Derotate in the same reference frame as the header event.
            let global = t2 as f64 + pos - state.header_event_time as f64;
            let derot = raw * Sample::from_polar(1.0, -TAU * (state.cfo * global).fract());
            symbols.push(derot / state.eq);
        }
        if symbols.len() < state.payload_syms {
            io.count("payload_truncated", 1);
            return;
        }
        let payload_llrs = qpsk_soft_demap(&symbols, state.noise_var.max(1e-12));
        let mut frame_llrs = state.header_llrs;
        frame_llrs.extend(payload_llrs);
        let mut out = Pdu::new(Payload::Real(frame_llrs));
        out.meta = pdu.meta.clone();
        io.post("frame", relabel(out, "acm_reassembly"));
    }
}

impl Block for AcmController {
    fn type_name(&self) -> &'static str {
        "acm_controller"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .msg_in("header")
            .msg_in("payload")
            .msg_out("trigger")
            .msg_out("frame")
    }

    fn handle_message(&mut self, port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        match port {
            "header" => self.handle_header(pdu, io),
            _ => self.handle_payload(pdu, io),
        }
        Ok(())
    }
}

/// Event-chaining PSK receiver: the front end and header path match the
/// plain PSK receiver with a header-sized extraction; decoded headers queue
/// payload extractions back to the same sink (a message cycle), and both
/// event streams converge on one deframer.
pub fn wire_acm_rx(g: &mut Flowgraph, config: &BurstConfig) -> Result<ModemPorts, ModemError> {
    config.validate()?;
    let rrc = design_rrc(config.sps, config.rrc_beta, config.rrc_span)
        .map_err(|e| crate::phy::PhyError::ConfigInvalid(e.to_string()))?;
    let matched = g.add_named("rx_rrc", FirFilterBlock::new(&rrc, 1));

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
            header_span(config),
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

    let demux = g.add_named("event_demux", EventDemux);
    g.connect_message(sink, "out", demux, "in")?;

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
    g.connect_message(demux, "header", sync_block, "in")?;

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

    let controller = g.add_named("acm_controller", AcmController::new(config));
    g.connect_message(align, "out", controller, "header")?;
    g.connect_message(demux, "payload", controller, "payload")?;
    // The chained trigger: a message cycle back into the sink.
    g.connect_message(controller, "trigger", sink, "trigger")?;

    let dec_id = config.fec.clone();
    let decoder = g.add_named(
        "fec_decoder",
        MessageMap::new("fec_decoder", move |mut pdu: Pdu| {
            let soft = pdu.payload.real().ok_or("decoder expects soft bits")?;
            pdu.payload = Payload::Bits(fec_decode(soft, &dec_id).map_err(|e| e.to_string())?);
            Ok(relabel(pdu, "fec_decoder"))
        }),
    );
    g.connect_message(controller, "frame", decoder, "in")?;

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
        diagnostics: vec![("extraction", (sink, "out")), ("sync", (sync_block, "out"))],
        ..ModemPorts::default()
    })
}
