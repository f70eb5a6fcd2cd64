//! PDU-over-UDP bridges.
//!
//! Datagram wire format, big-endian where multi-byte:
//!   magic 0x45535055 ("ESPU") | version u8 = 1 | element-kind u8
//!   (0 = byte, 1 = bit-packed, 2 = float32 LLR, 3 = complex64)
//!   | reserved u16 = 0 | payload-length-bytes u32 | payload
//!   | metadata as UTF-8 JSON to the datagram end.
//!
//! Bit payloads are packed MSB-first; the exact bit count rides in the
//! metadata under `bit_len`. Soft bits and complex samples are float32 on
//! the wire.

use std::net::UdpSocket;
use std::sync::mpsc;

use crate::cli::CliError;
use crate::runtime::{Block, BlockError, Payload, Pdu, Signature, Value, WorkIo};
use crate::Sample;

pub const MAGIC: u32 = 0x45535055;
pub const VERSION: u8 = 1;
/// Payloads above this many bytes are refused (single-datagram transport).
pub const MAX_PAYLOAD_BYTES: usize = 65000;

const KIND_BYTE: u8 = 0;
const KIND_BITS: u8 = 1;
const KIND_LLR: u8 = 2;
const KIND_COMPLEX: u8 = 3;

fn meta_to_json(meta: &std::collections::BTreeMap<String, Value>) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (k, v) in meta {
        let jv = match v {
            Value::Bool(b) => serde_json::Value::from(*b),
            Value::U64(n) => serde_json::Value::from(*n),
            Value::I64(n) => serde_json::Value::from(*n),
            Value::F64(x) => serde_json::Value::from(*x),
            Value::Str(s) => serde_json::Value::from(s.clone()),
            Value::VecF64(v) => serde_json::Value::from(v.clone()),
            Value::VecU8(v) => serde_json::Value::from(v.clone()),
        };
        map.insert(k.clone(), jv);
    }
    serde_json::Value::Object(map)
}

fn json_to_meta(v: &serde_json::Value) -> std::collections::BTreeMap<String, Value> {
    let mut meta = std::collections::BTreeMap::new();
    if let serde_json::Value::Object(map) = v {
        for (k, jv) in map {
            let val = match jv {
                serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
                serde_json::Value::Number(n) => {
                    if let Some(u) = n.as_u64() {
                        Some(Value::U64(u))
                    } else if let Some(i) = n.as_i64() {
                        Some(Value::I64(i))
                    } else {
                        n.as_f64().map(Value::F64)
                    }
                }
                serde_json::Value::String(s) => Some(Value::Str(s.clone())),
                _ => None,
            };
            if let Some(val) = val {
                meta.insert(k.clone(), val);
            }
        }
    }
    meta
}

/// Serialize one PDU into a datagram.
pub fn encode_datagram(pdu: &Pdu) -> Result<Vec<u8>, CliError> {
    let (kind, payload, extra_meta): (u8, Vec<u8>, Option<(String, Value)>) = match &pdu.payload {
        Payload::Bytes(b) => (KIND_BYTE, b.clone(), None),
        Payload::Bits(bits) => {
            let mut packed = vec![0u8; bits.len().div_ceil(8)];
            for (i, &b) in bits.iter().enumerate() {
                if b != 0 {
                    packed[i / 8] |= 0x80 >> (i % 8);
                }
            }
            (
                KIND_BITS,
                packed,
                Some(("bit_len".to_string(), Value::U64(bits.len() as u64))),
            )
        }
        Payload::Real(v) => {
            let mut bytes = Vec::with_capacity(v.len() * 4);
            for &x in v {
                bytes.extend_from_slice(&(x as f32).to_le_bytes());
            }
            (KIND_LLR, bytes, None)
        }
        Payload::Complex(v) => {
            let mut bytes = Vec::with_capacity(v.len() * 8);
            for s in v {
                bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
                bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
            }
            (KIND_COMPLEX, bytes, None)
        }
    };
    if payload.len() > MAX_PAYLOAD_BYTES {
        return Err(CliError::OversizePdu(payload.len()));
    }
    let mut meta = pdu.meta.clone();
    if let Some((k, v)) = extra_meta {
        meta.insert(k, v);
    }
    let json = serde_json::to_vec(&meta_to_json(&meta)).map_err(|e| CliError::Io(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + payload.len() + json.len());
    out.extend_from_slice(&MAGIC.to_be_bytes());
    out.push(VERSION);
    out.push(kind);
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&json);
    Ok(out)
}

/// Parse one datagram back into a PDU.
pub fn decode_datagram(bytes: &[u8]) -> Result<Pdu, CliError> {
    let malformed = |msg: &str| CliError::MalformedDatagram(msg.to_string());
    if bytes.len() < 12 {
        return Err(malformed("shorter than the fixed header"));
    }
    if u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) != MAGIC {
        return Err(malformed("bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(malformed("unsupported version"));
    }
    let kind = bytes[5];
    if u16::from_be_bytes([bytes[6], bytes[7]]) != 0 {
        return Err(malformed("reserved field not zero"));
    }
    let plen = u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    if bytes.len() < 12 + plen {
        return Err(malformed("declared payload length exceeds datagram"));
    }
    let payload = &bytes[12..12 + plen];
    let meta: std::collections::BTreeMap<String, Value> = if bytes.len() > 12 + plen {
        let json: serde_json::Value = serde_json::from_slice(&bytes[12 + plen..])
            .map_err(|_| malformed("metadata is not valid JSON"))?;
        json_to_meta(&json)
    } else {
        Default::default()
    };

    let mut pdu = match kind {
        KIND_BYTE => Pdu::bytes(payload.to_vec()),
        KIND_BITS => {
            let bit_len = meta
                .get("bit_len")
                .and_then(Value::as_u64)
                .unwrap_or(8 * plen as u64) as usize;
            if bit_len > 8 * plen {
                return Err(malformed("bit_len exceeds packed payload"));
            }
            let bits: Vec<u8> = (0..bit_len)
                .map(|i| (payload[i / 8] >> (7 - i % 8)) & 1)
                .collect();
            Pdu::bits(bits)
        }
        KIND_LLR => {
            if plen % 4 != 0 {
                return Err(malformed("float payload not a whole number of f32"));
            }
            Pdu::real(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect(),
            )
        }
        KIND_COMPLEX => {
            if plen % 8 != 0 {
                return Err(malformed("complex payload not a whole number of pairs"));
            }
            Pdu::complex(
                payload
                    .chunks_exact(8)
                    .map(|c| {
                        Sample::new(
                            f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                            f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64,
                        )
                    })
                    .collect(),
            )
        }
        other => return Err(malformed(&format!("unknown element kind {other}"))),
    };
    pdu.meta = meta;
    pdu.meta.remove("bit_len");
    Ok(pdu)
}

/// Sends every PDU delivered to `in` as one datagram.
pub struct UdpPduSink {
    socket: UdpSocket,
}

impl UdpPduSink {
    pub fn connect(host: &str, port: u16) -> Result<Self, CliError> {
        let socket = UdpSocket::bind("0.0.0.0:0").map_err(|e| CliError::Io(e.to_string()))?;
        socket
            .connect((host, port))
            .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(UdpPduSink { socket })
    }
}

impl Block for UdpPduSink {
    fn type_name(&self) -> &'static str {
        "udp_pdu_sink"
    }

    fn signature(&self) -> Signature {
        Signature::new().msg_in("in")
    }

    fn handle_message(&mut self, _port: &str, pdu: Pdu, io: &mut WorkIo) -> Result<(), BlockError> {
        match encode_datagram(&pdu) {
            Ok(bytes) => {
                self.socket
                    .send(&bytes)
                    .map_err(|e| BlockError::new(format!("udp send: {e}")))?;
            }
            Err(e) => {
                log::warn!("pdu not sent: {e}");
                io.count("oversize_pdu", 1);
            }
        }
        Ok(())
    }
}

/// Receives datagrams on a background thread and publishes decoded PDUs on
/// `out`. Finishes after `expected` PDUs when set.
pub struct UdpPduSource {
    rx: mpsc::Receiver<Vec<u8>>,
    expected: Option<u64>,
    received: u64,
}

impl UdpPduSource {
    pub fn bind(port: u16, expected: Option<u64>) -> Result<(Self, u16), CliError> {
        let socket =
            UdpSocket::bind(("127.0.0.1", port)).map_err(|e| CliError::Io(e.to_string()))?;
        let local_port = socket.local_addr().map_err(|e| CliError::Io(e.to_string()))?.port();
        socket
            .set_read_timeout(Some(std::time::Duration::from_millis(50)))
            .map_err(|e| CliError::Io(e.to_string()))?;
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut buf = vec![0u8; 65536];
            loop {
                match socket.recv(&mut buf) {
                    Ok(n) => {
                        if tx.send(buf[..n].to_vec()).is_err() {
                            break;
                        }
                    }
                    Err(e)
                        if e.kind() == std::io::ErrorKind::WouldBlock
                            || e.kind() == std::io::ErrorKind::TimedOut =>
                    {
                        if tx.send(Vec::new()).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        Ok((
            UdpPduSource {
                rx,
                expected,
                received: 0,
            },
            local_port,
        ))
    }
}

impl Block for UdpPduSource {
    fn type_name(&self) -> &'static str {
        "udp_pdu_source"
    }

    fn signature(&self) -> Signature {
        Signature::new().msg_out("out")
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        // Block briefly on the receive thread so an idle graph does not
        // spin; empty buffers are timeout keepalives.
        match self.rx.recv_timeout(std::time::Duration::from_millis(100)) {
            Ok(bytes) if bytes.is_empty() => {}
            Ok(bytes) => match decode_datagram(&bytes) {
                Ok(pdu) => {
                    self.received += 1;
                    io.post("out", pdu);
                }
                Err(e) => {
                    log::warn!("datagram dropped: {e}");
                    io.count("malformed_datagram", 1);
                }
            },
            Err(_) => {}
        }
        if self.expected.is_some_and(|n| self.received >= n) {
            io.finish();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datagram_round_trip_all_kinds() {
        let pdus = vec![
            Pdu::bytes(vec![1, 2, 3, 255]).with_meta("k", 7u64),
            Pdu::bits(vec![1, 0, 1, 1, 0, 0, 1, 0, 1]).with_meta("s", "x"),
            Pdu::real(vec![1.5, -2.25, 0.0]),
            Pdu::complex(vec![Sample::new(0.5, -0.5), Sample::new(1.0, 2.0)]),
        ];
        for pdu in pdus {
            let bytes = encode_datagram(&pdu).unwrap();
            let back = decode_datagram(&bytes).unwrap();
            assert_eq!(back, pdu);
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_datagram(&Pdu::bytes(vec![1])).unwrap();
        bytes[0] ^= 0xFF;
        assert!(matches!(
            decode_datagram(&bytes),
            Err(CliError::MalformedDatagram(_))
        ));
    }

    #[test]
    fn declared_length_beyond_datagram_rejected() {
        let mut bytes = encode_datagram(&Pdu::bytes(vec![1, 2, 3])).unwrap();
        bytes[11] = 200; // declared payload length now exceeds the datagram
        assert!(matches!(
            decode_datagram(&bytes),
            Err(CliError::MalformedDatagram(_))
        ));
    }

    #[test]
    fn oversize_payload_refused() {
        let pdu = Pdu::bytes(vec![0u8; MAX_PAYLOAD_BYTES + 1]);
        assert!(matches!(encode_datagram(&pdu), Err(CliError::OversizePdu(_))));
    }

    #[test]
    fn socket_round_trip_on_loopback() {
        let recv = UdpSocket::bind("127.0.0.1:0").unwrap();
        let port = recv.local_addr().unwrap().port();
        let send = UdpSocket::bind("127.0.0.1:0").unwrap();
        let pdu = Pdu::bytes((0..1400u16).map(|i| i as u8).collect()).with_meta("n", 3u64);
        send.send_to(&encode_datagram(&pdu).unwrap(), ("127.0.0.1", port))
            .unwrap();
        let mut buf = vec![0u8; 65536];
        let n = recv.recv(&mut buf).unwrap();
        assert_eq!(decode_datagram(&buf[..n]).unwrap(), pdu);
    }
}
