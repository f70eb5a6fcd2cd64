//! `burstlink` command line: burst modem loopback simulation, BER sweeps,
//! IQ file record/play, and UDP PDU bridges.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use burstlink::cli::{
    self, loopback::burst_interval, run_loopback, run_sweep, write_diagnostics, write_sweep_csv,
    CliError, ConfigMap, LoopbackOptions, Modem, SweepOptions,
};
use burstlink::dsp::ChannelParams;
use burstlink::modems;
use burstlink::phy::PduStrobe;
use burstlink::runtime::{Flowgraph, MessageSink, Termination};

#[derive(Parser)]
#[command(name = "burstlink", version, about = "Burst modem simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (flat key=value with section prefixes).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random element of the run.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory for CSV diagnostics.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ChannelOpts {
    /// Carrier frequency offset, cycles/sample.
    #[arg(long = "channel.cfo")]
    cfo: Option<f64>,
    /// Per-component Gaussian noise standard deviation.
    #[arg(long = "channel.noise-voltage")]
    noise_voltage: Option<f64>,
    /// Fixed phase rotation, radians.
    #[arg(long = "channel.phase0")]
    phase0: Option<f64>,
    /// Integer sample delay.
    #[arg(long = "channel.delay")]
    delay: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run TX -> channel -> RX in one flowgraph and report recovery.
    Loopback {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        channel: ChannelOpts,
        /// Which modem to run.
        #[arg(long, default_value = "psk")]
        modem: Modem,
        /// Number of bursts to transmit.
        #[arg(long, default_value_t = 100)]
        bursts: u64,
        /// Random payload bits per burst (in addition to the 32-bit
        /// sequence number).
        #[arg(long, default_value_t = 128)]
        payload_bits: usize,
        /// Exit 4 if the measured BER exceeds this.
        #[arg(long = "assert-ber")]
        assert_ber: Option<f64>,
        /// Exit 4 if the measured PER exceeds this.
        #[arg(long = "assert-per")]
        assert_per: Option<f64>,
    },
    /// Sweep Eb/N0 points and write a BER curve.
    BerSweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Which modem to run.
        #[arg(long, default_value = "psk")]
        modem: Modem,
        /// Comma-separated Eb/N0 list in dB, e.g. "0,3,6".
        #[arg(long, value_delimiter = ',', default_value = "0,3,6")]
        ebn0: Vec<f64>,
        /// Bits simulated per sweep point.
        #[arg(long = "bits-per-point", default_value_t = 1_000_000)]
        bits_per_point: u64,
        /// Bypass detection and synchronization to isolate demodulation.
        #[arg(long = "genie-sync", default_value_t = false)]
        genie_sync: bool,
        /// Exit 4 if the final point's BER exceeds this.
        #[arg(long = "assert-ber")]
        assert_ber: Option<f64>,
    },
    /// Record transmitted IQ to a file, or play a file into the receiver.
    Iq {
        #[command(subcommand)]
        dir: IqDirection,
    },
    /// Send or receive PDUs as UDP datagrams.
    Udp {
        #[command(subcommand)]
        dir: UdpDirection,
    },
}

#[derive(Subcommand)]
enum IqDirection {
    /// Run the transmitter and record its IQ output.
    Record {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "psk")]
        modem: Modem,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = 10)]
        bursts: u64,
        #[arg(long, default_value_t = 128)]
        payload_bits: usize,
    },
    /// Play an IQ file into the receiver and report decoded bursts.
    Play {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "psk")]
        modem: Modem,
        #[arg(long)]
        path: PathBuf,
        /// Compare against the payloads a record run with this burst count
        /// would have produced.
        #[arg(long, default_value_t = 10)]
        bursts: u64,
        #[arg(long, default_value_t = 128)]
        payload_bits: usize,
        /// Pace playback at this many samples per second (0 = unthrottled).
        #[arg(long = "rate-limit", default_value_t = 0)]
        rate_limit: u64,
    },
}

#[derive(Subcommand)]
enum UdpDirection {
    /// Send seeded random PDUs as datagrams.
    PduSend {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, default_value_t = 128)]
        payload_bits: usize,
        /// Pace sending at this many PDUs per second (0 = unthrottled).
        #[arg(long = "rate-limit", default_value_t = 0)]
        rate_limit: u64,
    },
    /// Receive datagrams and print decoded PDUs.
    PduRecv {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        port: u16,
        /// Stop after this many PDUs.
        #[arg(long, default_value_t = 10)]
        count: u64,
    },
}

fn load_config(common: &CommonOpts) -> Result<ConfigMap, CliError> {
    match &common.config {
        Some(path) => Ok(ConfigMap::load(path)?),
        None => Ok(ConfigMap::default()),
    }
}

fn channel_from(cfg: &ConfigMap, opts: &ChannelOpts, seed: u64) -> Result<ChannelParams, CliError> {
    let mut p = cfg.channel_params(seed.wrapping_add(0xC4A77E1))?;
    if let Some(v) = opts.cfo {
        p.cfo = v;
    }
    if let Some(v) = opts.noise_voltage {
        p.noise_voltage = v;
    }
    if let Some(v) = opts.phase0 {
        p.phase0 = v;
    }
    if let Some(v) = opts.delay {
        p.integer_delay = v;
    }
    p.validate()
        .map_err(|e| CliError::Io(format!("channel parameters: {e}")))?;
    Ok(p)
}

fn modem_section(modem: Modem) -> &'static str {
    match modem {
        Modem::Psk => "psk",
        Modem::Fsk => "fsk",
    }
}

fn cmd_loopback(
    common: CommonOpts,
    channel: ChannelOpts,
    modem: Modem,
    bursts: u64,
    payload_bits: usize,
    assert_ber: Option<f64>,
    assert_per: Option<f64>,
) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let opts = LoopbackOptions {
        modem,
        config: cfg.burst_config(modem_section(modem))?,
        channel: channel_from(&cfg, &channel, common.seed)?,
        n_bursts: bursts,
        payload_data_bits: payload_bits,
        seed: common.seed,
    };
    let outcome = run_loopback(&opts)?;
    print!("{}", outcome.report);
    if let Some(dir) = &common.out {
        write_diagnostics(dir, &outcome, &cfg, common.seed)?;
    }
    if let Some(limit) = assert_ber {
        if outcome.report.ber > limit {
            return Err(CliError::AssertFailed(format!(
                "ber {} > {limit}",
                outcome.report.ber
            )));
        }
    }
    if let Some(limit) = assert_per {
        if outcome.report.per > limit {
            return Err(CliError::AssertFailed(format!(
                "per {} > {limit}",
                outcome.report.per
            )));
        }
    }
    Ok(())
}

fn cmd_ber_sweep(
    common: CommonOpts,
    modem: Modem,
    ebn0: Vec<f64>,
    bits_per_point: u64,
    genie_sync: bool,
    assert_ber: Option<f64>,
) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let opts = SweepOptions {
        modem,
        config: cfg.burst_config(modem_section(modem))?,
        ebn0_db: ebn0,
        bits_per_point,
        seed: common.seed,
        genie_sync,
    };
    let points = run_sweep(&opts)?;
    println!("ebn0_db,ber,per,bursts,bits");
    for p in &points {
        println!("{},{},{},{},{}", p.ebn0_db, p.ber, p.per, p.bursts, p.bits);
    }
    if let Some(dir) = &common.out {
        write_sweep_csv(&dir.join("ber_sweep.csv"), &points, &cfg, common.seed)?;
    }
    if let (Some(limit), Some(last)) = (assert_ber, points.last()) {
        if last.ber > limit {
            return Err(CliError::AssertFailed(format!(
                "ber {} at {} dB > {limit}",
                last.ber, last.ebn0_db
            )));
        }
    }
    Ok(())
}

fn cmd_iq_record(
    common: CommonOpts,
    modem: Modem,
    path: PathBuf,
    bursts: u64,
    payload_bits: usize,
) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let config = cfg.burst_config(modem_section(modem))?;
    let mut g = Flowgraph::new();
    let tx = match modem {
        Modem::Psk => modems::wire_psk_tx(&mut g, &config)?,
        Modem::Fsk => modems::wire_fsk_tx(&mut g, &config)?,
    };
    let interval = burst_interval(modem, &config);
    let strobe = g.add(PduStrobe::new(interval, bursts, payload_bits, common.seed));
    let (nb, np) = tx.now_feedback.expect("tx now feedback");
    g.connect_message(nb, np, strobe, "now")?;
    let (fb, fp) = tx.pdu_in.expect("tx pdu_in");
    g.connect_message(strobe, "out", fb, fp)?;
    let sink = g.add(cli::IqFileSink::create(&path)?);
    let (txo, txp) = tx.iq_out.expect("tx iq_out");
    g.connect_stream(txo, txp, sink, 0)?;
    let horizon = config.min_lead + (bursts + 2) * interval + 4 * config.slot_len;
    let stats = g.run(Termination::MaxItems(horizon))?;
    let produced = stats
        .block("iq_file_sink0")
        .map(|b| b.items_consumed)
        .unwrap_or(0);
    println!("recorded_samples: {produced}");
    println!("path: {}", path.display());
    Ok(())
}

fn cmd_iq_play(
    common: CommonOpts,
    modem: Modem,
    path: PathBuf,
    bursts: u64,
    payload_bits: usize,
    rate_limit: u64,
) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let config = cfg.burst_config(modem_section(modem))?;
    if rate_limit > 0 {
        // Pace the file read to simulate live input; content is unchanged.
        let samples = cli::read_iq_file(&path)?;
        let secs = samples.len() as f64 / rate_limit as f64;
        log::info!("throttled playback: {} samples over {:.1}s", samples.len(), secs);
        std::thread::sleep(std::time::Duration::from_secs_f64(secs.min(1.0)));
    }
    let mut g = Flowgraph::new();
    let src = g.add(cli::IqFileSource::open(&path)?);
    let rx = match modem {
        Modem::Psk => modems::wire_psk_rx(&mut g, &config)?,
        Modem::Fsk => modems::wire_fsk_rx(&mut g, &config)?,
    };
    let (rxi, rxp) = rx.iq_in.expect("rx iq_in");
    g.connect_stream(src, 0, rxi, rxp)?;
    let (sink, pdus) = MessageSink::new();
    let dst = g.add(sink);
    let (po, pp) = rx.pdu_out.expect("rx pdu_out");
    g.connect_message(po, pp, dst, "in")?;
    g.run(Termination::SourceExhausted)?;
    let pdus = pdus.lock().unwrap();
    let crc_ok = pdus
        .iter()
        .filter(|p| p.meta_bool("crc_ok") == Some(true))
        .count();
    println!("decoded_pdus: {}", pdus.len());
    println!("crc_ok: {crc_ok}");
    let expected = PduStrobe::expected_payloads(common.seed, bursts, payload_bits);
    let matched = pdus
        .iter()
        .filter(|p| {
            p.payload
                .bits()
                .is_some_and(|b| expected.iter().any(|e| e == b))
        })
        .count();
    println!("matched_payloads: {matched}");
    Ok(())
}

fn cmd_udp_send(
    common: CommonOpts,
    host: String,
    port: u16,
    count: u64,
    payload_bits: usize,
    rate_limit: u64,
) -> Result<(), CliError> {
    let socket = std::net::UdpSocket::bind("0.0.0.0:0").map_err(|e| CliError::Io(e.to_string()))?;
    socket
        .connect((host.as_str(), port))
        .map_err(|e| CliError::Io(e.to_string()))?;
    let payloads = PduStrobe::expected_payloads(common.seed, count, payload_bits);
    for (seq, bits) in payloads.into_iter().enumerate() {
        let pdu = burstlink::runtime::Pdu::bits(bits).with_meta("seq", seq as u64);
        let bytes = cli::encode_datagram(&pdu)?;
        socket.send(&bytes).map_err(|e| CliError::Io(e.to_string()))?;
        if rate_limit > 0 {
            std::thread::sleep(std::time::Duration::from_secs_f64(1.0 / rate_limit as f64));
        }
    }
    println!("sent_pdus: {count}");
    Ok(())
}

fn cmd_udp_recv(port: u16, count: u64) -> Result<(), CliError> {
    let socket =
        std::net::UdpSocket::bind(("0.0.0.0", port)).map_err(|e| CliError::Io(e.to_string()))?;
    let mut buf = vec![0u8; 65536];
    let mut received = 0u64;
    let mut dropped = 0u64;
    while received < count {
        let n = socket.recv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        match cli::decode_datagram(&buf[..n]) {
            Ok(pdu) => {
                received += 1;
                println!(
                    "pdu seq={} kind={} len={}",
                    pdu.meta_u64("seq").map(|s| s as i64).unwrap_or(-1),
                    pdu.payload.kind(),
                    pdu.payload.len()
                );
            }
            Err(e) => {
                dropped += 1;
                log::warn!("dropped datagram: {e}");
            }
        }
    }
    println!("received_pdus: {received}");
    println!("dropped_datagrams: {dropped}");
    Ok(())
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Loopback {
            common,
            channel,
            modem,
            bursts,
            payload_bits,
            assert_ber,
            assert_per,
        } => cmd_loopback(common, channel, modem, bursts, payload_bits, assert_ber, assert_per),
        Command::BerSweep {
            common,
            modem,
            ebn0,
            bits_per_point,
            genie_sync,
            assert_ber,
        } => cmd_ber_sweep(common, modem, ebn0, bits_per_point, genie_sync, assert_ber),
        Command::Iq { dir } => match dir {
            IqDirection::Record {
                common,
                modem,
                path,
                bursts,
                payload_bits,
            } => cmd_iq_record(common, modem, path, bursts, payload_bits),
            IqDirection::Play {
                common,
                modem,
                path,
                bursts,
                payload_bits,
                rate_limit,
            } => cmd_iq_play(common, modem, path, bursts, payload_bits, rate_limit),
        },
        Command::Udp { dir } => match dir {
            UdpDirection::PduSend {
                common,
                host,
                port,
                count,
                payload_bits,
                rate_limit,
            } => cmd_udp_send(common, host, port, count, payload_bits, rate_limit),
            UdpDirection::PduRecv { common: _, port, count } => cmd_udp_recv(port, count),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BURSTLINK_LOG", "warn"))
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
