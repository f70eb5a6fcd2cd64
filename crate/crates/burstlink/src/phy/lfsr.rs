//! Whitening sequence generator and the default preamble.

/// Maximal-length LFSR for the polynomial x^15 + x^14 + 1 (period 32767).
///
/// The register is seeded with 0x7FFF; the first 15 output bits are the seed
/// itself (LSB first) and subsequent bits follow a[n] = a[n-1] ^ a[n-15].
pub struct Lfsr {
    state: u16,
}

pub const LFSR_SEED: u16 = 0x7FFF;

impl Lfsr {
    pub fn new() -> Self {
        Lfsr { state: LFSR_SEED }
    }

    pub fn next_bit(&mut self) -> u8 {
        let out = (self.state & 1) as u8;
        let fb = ((self.state >> 14) ^ self.state) & 1;
        self.state = (self.state >> 1) | (fb << 14);
        out
    }

    pub fn take_bits(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.next_bit()).collect()
    }
}

impl Default for Lfsr {
    fn default() -> Self {
        Self::new()
    }
}

/// XOR the whitening sequence onto a bit vector. The LFSR restarts for every
/// call, so the operation is its own inverse.
pub fn randomize(bits: &[u8]) -> Vec<u8> {
    let mut lfsr = Lfsr::new();
    bits.iter().map(|&b| b ^ lfsr.next_bit()).collect()
}

/// The default burst preamble: the first `n` output bits of the whitening
/// LFSR.
pub fn default_preamble(n: usize) -> Vec<u8> {
    Lfsr::new().take_bits(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Frozen constant: the first 64 LFSR output bits. Independently
    /// generated from the recurrence a[n] = a[n-1] ^ a[n-15], seed all-ones.
    const FIRST_64: &str =
        "1111111111111110101010101010100110011001100111011101110111010010";

    #[test]
    fn first_64_bits_match_frozen_constant() {
        let bits = default_preamble(64);
        let s: String = bits.iter().map(|b| char::from(b'0' + b)).collect();
        assert_eq!(s, FIRST_64);
    }

    #[test]
    fn sequence_is_maximal_length() {
        let mut lfsr = Lfsr::new();
        let head = lfsr.take_bits(15);
        let mut n = 15u32;
        // Walk until the register revisits the seed.
        loop {
            if lfsr.state == LFSR_SEED {
                break;
            }
            lfsr.next_bit();
            n += 1;
            assert!(n <= 40000, "no period found");
        }
        assert_eq!(n, 32767);
        let _ = head;
    }

    #[test]
    fn randomize_is_involution() {
        let bits: Vec<u8> = (0..777).map(|i| ((i * 7 + 3) % 5 == 0) as u8).collect();
        assert_eq!(randomize(&randomize(&bits)), bits);
    }

    #[test]
    fn randomize_zero_input_reveals_pn_sequence() {
        let zeros = vec![0u8; 64];
        assert_eq!(randomize(&zeros), default_preamble(64));
    }

    #[test]
    fn randomize_preserves_length() {
        for n in [0usize, 1, 64, 1000] {
            assert_eq!(randomize(&vec![1u8; n]).len(), n);
        }
    }
}
