//! Bit-level CRC implementations used by the framer.
//!
//! Both CRCs consume bits in transmission order. CRC-16/CCITT-FALSE is the
//! unreflected variant (byte data maps MSB-first); CRC-32 is the reflected
//! variant (byte data maps LSB-first, the usual serial convention), matching
//! the published check values.

/// CRC-16/CCITT-FALSE over a bit sequence: poly 0x1021, init 0xFFFF, no
/// reflection, no output xor.
pub fn crc16_ccitt_false(bits: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bits {
        debug_assert!(b <= 1);
        let top = (crc >> 15) as u8 & 1;
        crc <<= 1;
        if top ^ b == 1 {
            crc ^= 0x1021;
        }
    }
    crc
}

/// CRC-32 over a bit sequence: reflected polynomial 0x04C11DB7 (0xEDB88320),
/// init 0xFFFFFFFF, output xor 0xFFFFFFFF.
pub fn crc32(bits: &[u8]) -> u32 {
    let mut crc: u32 = 0xFFFFFFFF;
    for &b in bits {
        debug_assert!(b <= 1);
        if (crc ^ b as u32) & 1 == 1 {
            crc = (crc >> 1) ^ 0xEDB88320;
        } else {
            crc >>= 1;
        }
    }
    crc ^ 0xFFFFFFFF
}

/// Expand bytes MSB-first (unreflected bit order).
pub fn bytes_to_bits_msb(data: &[u8]) -> Vec<u8> {
    data.iter()
        .flat_map(|&byte| (0..8).map(move |i| (byte >> (7 - i)) & 1))
        .collect()
}

/// Expand bytes LSB-first (reflected bit order).
pub fn bytes_to_bits_lsb(data: &[u8]) -> Vec<u8> {
    data.iter()
        .flat_map(|&byte| (0..8).map(move |i| (byte >> i) & 1))
        .collect()
}

/// Value as a fixed-width bit vector, MSB first.
pub fn value_to_bits_be(value: u64, width: usize) -> Vec<u8> {
    (0..width)
        .map(|i| ((value >> (width - 1 - i)) & 1) as u8)
        .collect()
}

/// Inverse of [`value_to_bits_be`].
pub fn bits_to_value_be(bits: &[u8]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

/// CRC-32 as 32 bits in reflected (LSB-first) transmission order.
pub fn crc32_to_bits(crc: u32) -> Vec<u8> {
    (0..32).map(|i| ((crc >> i) & 1) as u8).collect()
}

/// Inverse of [`crc32_to_bits`].
pub fn bits_to_crc32(bits: &[u8]) -> u32 {
    bits.iter()
        .enumerate()
        .fold(0u32, |acc, (i, &b)| acc | ((b as u32) << i))
}
