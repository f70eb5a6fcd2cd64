//! Frame assembly and parsing, block padding, and coded-block alignment.
//!
//! Frame layout, in transmission order:
//!   length_field (16 bits, big-endian payload bit count)
//!   header CRC-16/CCITT-FALSE over the length field (16 bits)
//!   payload (length_field bits)
//!   payload CRC-32 (32 bits)
//! Total frame length is 64 + payload bits.

use crate::phy::crc::{
    bits_to_crc32, bits_to_value_be, crc16_ccitt_false, crc32, crc32_to_bits, value_to_bits_be,
};
use crate::phy::PhyError;

/// Bits of frame overhead (length + header CRC + payload CRC).
pub const FRAME_OVERHEAD_BITS: usize = 64;
/// Bits before the payload starts.
pub const FRAME_HEADER_BITS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct DeframedPayload {
    pub payload: Vec<u8>,
    pub crc_ok: bool,
    pub payload_len: usize,
}

/// Wrap a payload with the length field and checksums.
pub fn frame(payload: &[u8]) -> Result<Vec<u8>, PhyError> {
    if payload.len() > 65535 {
        return Err(PhyError::PayloadTooLong(payload.len()));
    }
    let mut bits = Vec::with_capacity(FRAME_OVERHEAD_BITS + payload.len());
    let length_field = value_to_bits_be(payload.len() as u64, 16);
    let header_crc = crc16_ccitt_false(&length_field);
    bits.extend_from_slice(&length_field);
    bits.extend_from_slice(&value_to_bits_be(header_crc as u64, 16));
    bits.extend_from_slice(payload);
    bits.extend_from_slice(&crc32_to_bits(crc32(payload)));
    Ok(bits)
}

/// Validate and strip framing. Trailing pad bits beyond the declared length
/// are discarded. A header CRC failure discards the burst; a payload CRC
/// failure still yields the payload, flagged `crc_ok = false`.
pub fn deframe(bits: &[u8]) -> Result<DeframedPayload, PhyError> {
    if bits.len() < FRAME_OVERHEAD_BITS {
        return Err(PhyError::FrameTooShort(bits.len()));
    }
    let length_field = &bits[..16];
    let header_crc = bits_to_value_be(&bits[16..32]) as u16;
    if crc16_ccitt_false(length_field) != header_crc {
        return Err(PhyError::HeaderCrcFail);
    }
    let payload_len = bits_to_value_be(length_field) as usize;
    if bits.len() < FRAME_OVERHEAD_BITS + payload_len {
        return Err(PhyError::FrameTooShort(bits.len()));
    }
    let payload = bits[FRAME_HEADER_BITS..FRAME_HEADER_BITS + payload_len].to_vec();
    let wire_crc = bits_to_crc32(&bits[FRAME_HEADER_BITS + payload_len..FRAME_HEADER_BITS + payload_len + 32]);
    let crc_ok = crc32(&payload) == wire_crc;
    Ok(DeframedPayload {
        payload_len: payload.len(),
        payload,
        crc_ok,
    })
}

/// Append zero bits up to the next multiple of `k`. Length 0 stays 0.
pub fn pad_to_block(bits: &[u8], k: usize) -> Vec<u8> {
    assert!(k >= 1, "block size must be >= 1");
    let mut out = bits.to_vec();
    let rem = out.len() % k;
    if rem != 0 {
        out.resize(out.len() + (k - rem), 0);
    }
    out
}

/// Strip the preamble soft bits and truncate the remainder to a whole number
/// of coded blocks of `n` soft bits.
pub fn frame_align(soft_bits: &[f64], preamble_len: usize, n: usize) -> Result<Vec<f64>, PhyError> {
    assert!(n >= 1);
    if soft_bits.len() < preamble_len + n {
        return Err(PhyError::BurstTooShort {
            got: soft_bits.len(),
            need: preamble_len + n,
        });
    }
    let body = &soft_bits[preamble_len..];
    let keep = (body.len() / n) * n;
    Ok(body[..keep].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..=1) as u8).collect()
    }

    #[test]
    fn empty_payload_is_64_bit_frame() {
        let f = frame(&[]).unwrap();
        assert_eq!(f.len(), 64);
        assert_eq!(bits_to_value_be(&f[..16]), 0);
        let d = deframe(&f).unwrap();
        assert!(d.crc_ok);
        assert!(d.payload.is_empty());
    }

    #[test]
    fn deframe_inverts_frame_for_many_lengths() {
        for len in [0usize, 1, 7, 128, 1000, 4096] {
            let payload = random_bits(len, len as u64 + 1);
            let d = deframe(&frame(&payload).unwrap()).unwrap();
            assert!(d.crc_ok, "len {len}");
            assert_eq!(d.payload, payload, "len {len}");
        }
    }

    #[test]
    fn trailing_pad_zeros_stripped() {
        let payload = random_bits(100, 9);
        let mut bits = frame(&payload).unwrap();
        bits.extend(vec![0u8; 37]);
        let d = deframe(&bits).unwrap();
        assert!(d.crc_ok);
        assert_eq!(d.payload, payload);
    }

    #[test]
    fn flipped_payload_bit_sets_crc_false_but_emits() {
        let payload = random_bits(64, 3);
        let mut bits = frame(&payload).unwrap();
        bits[40] ^= 1; // inside payload
        let d = deframe(&bits).unwrap();
        assert!(!d.crc_ok);
        assert_eq!(d.payload.len(), 64);
    }

    #[test]
    fn flipped_length_bit_discards_frame() {
        let payload = random_bits(64, 4);
        let mut bits = frame(&payload).unwrap();
        bits[3] ^= 1; // inside length field
        assert!(matches!(deframe(&bits), Err(PhyError::HeaderCrcFail)));
    }

    /// Exhaustive single-bit-flip detection over the payload of a 128-bit
    /// frame: every flip must clear crc_ok.
    #[test]
    fn crc_detects_every_single_payload_flip() {
        let payload = random_bits(128, 5);
        let bits = frame(&payload).unwrap();
        for i in 0..128 {
            let mut corrupted = bits.clone();
            corrupted[FRAME_HEADER_BITS + i] ^= 1;
            let d = deframe(&corrupted).unwrap();
            assert!(!d.crc_ok, "payload flip at {i} undetected");
        }
    }

    #[test]
    fn pad_to_block_ceiling() {
        assert_eq!(pad_to_block(&[1; 100], 128).len(), 128);
        assert_eq!(pad_to_block(&[1; 256], 128).len(), 256);
        assert_eq!(pad_to_block(&[1; 129], 128).len(), 256);
        assert_eq!(pad_to_block(&[], 128).len(), 0);
        let padded = pad_to_block(&[1; 100], 128);
        assert!(padded[100..].iter().all(|&b| b == 0));
    }

    #[test]
    fn frame_align_strips_and_trims() {
        let soft: Vec<f64> = (0..664).map(|i| i as f64).collect();
        let aligned = frame_align(&soft, 64, 271).unwrap();
        assert_eq!(aligned.len(), 542); // 600 -> 2 blocks of 271
        assert_eq!(aligned[0], 64.0);
    }

    #[test]
    fn frame_align_exact_block() {
        let soft = vec![1.0; 64 + 271];
        assert_eq!(frame_align(&soft, 64, 271).unwrap().len(), 271);
    }

    #[test]
    fn frame_align_too_short() {
        let soft = vec![1.0; 64 + 270];
        assert!(matches!(
            frame_align(&soft, 64, 271),
            Err(PhyError::BurstTooShort { .. })
        ));
    }

    #[test]
    fn overlong_payload_rejected() {
        let payload = vec![0u8; 65536];
        assert!(matches!(frame(&payload), Err(PhyError::PayloadTooLong(_))));
    }
}
