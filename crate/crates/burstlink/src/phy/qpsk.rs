//! Gray-coded QPSK mapping and soft demapping.
//!
//! Constellation, bit pair (b0, b1) at unit average energy:
//!   00 -> (+1+j)/sqrt(2)    01 -> (-1+j)/sqrt(2)
//!   11 -> (-1-j)/sqrt(2)    10 -> (+1-j)/sqrt(2)
//! b0 selects the imaginary sign and b1 the real sign, so the exact LLRs in
//! complex AWGN with per-sample variance sigma^2 are
//!   LLR(b0) = 2*sqrt(2)*Im(y)/sigma^2, LLR(b1) = 2*sqrt(2)*Re(y)/sigma^2,
//! positive meaning bit 0.

use crate::phy::fec::slice_llr;
use crate::phy::PhyError;
use crate::Sample;

const A: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Map a bit vector (even length) onto QPSK symbols, two bits per symbol.
pub fn qpsk_map(bits: &[u8]) -> Result<Vec<Sample>, PhyError> {
    if bits.len() % 2 != 0 {
        return Err(PhyError::OddBitCount(bits.len()));
    }
    Ok(bits
        .chunks(2)
        .map(|pair| {
            let re = if pair[1] == 0 { A } else { -A };
            let im = if pair[0] == 0 { A } else { -A };
            Sample::new(re, im)
        })
        .collect())
}

/// Soft demap symbols to LLRs, two per symbol, in (b0, b1) order.
pub fn qpsk_soft_demap(symbols: &[Sample], noise_var: f64) -> Vec<f64> {
    assert!(noise_var > 0.0, "noise variance must be positive");
    let scale = 2.0 * std::f64::consts::SQRT_2 / noise_var;
    let mut out = Vec::with_capacity(symbols.len() * 2);
    for s in symbols {
        out.push(scale * s.im); // b0
        out.push(scale * s.re); // b1
    }
    out
}

/// Hard decisions straight from symbols.
pub fn qpsk_hard_demap(symbols: &[Sample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * 2);
    for s in symbols {
        out.push(if s.im >= 0.0 { 0 } else { 1 });
        out.push(if s.re >= 0.0 { 0 } else { 1 });
    }
    out
}

/// Sign-slice a soft-bit vector.
pub fn slice_bits(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| slice_llr(l)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constellation_points() {
        let syms = qpsk_map(&[0, 0, 0, 1, 1, 1, 1, 0]).unwrap();
        let expect = [
            Sample::new(A, A),
            Sample::new(-A, A),
            Sample::new(-A, -A),
            Sample::new(A, -A),
        ];
        for (s, e) in syms.iter().zip(&expect) {
            assert!((s - e).norm() < 1e-12, "{s} vs {e}");
        }
        assert!((syms[0].re - 0.70711).abs() < 1e-5);
        assert!((syms[2].re + 0.70711).abs() < 1e-5);
    }

    #[test]
    fn unit_average_energy() {
        let syms = qpsk_map(&[0, 0, 0, 1, 1, 1, 1, 0]).unwrap();
        for s in syms {
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    /// Analytic LLR formula evaluated independently:
    /// y = (1+j)/sqrt(2), sigma^2 = 0.5 -> LLRs (+4, +4).
    #[test]
    fn llr_formula_reference_point() {
        let llrs = qpsk_soft_demap(&[Sample::new(A, A)], 0.5);
        assert!((llrs[0] - 4.0).abs() < 1e-9, "{}", llrs[0]);
        assert!((llrs[1] - 4.0).abs() < 1e-9, "{}", llrs[1]);
    }

    #[test]
    fn zero_symbol_is_erasure() {
        let llrs = qpsk_soft_demap(&[Sample::new(0.0, 0.0)], 1.0);
        assert_eq!(llrs, vec![0.0, 0.0]);
    }

    #[test]
    fn doubling_noise_halves_llrs() {
        let y = Sample::new(0.3, -0.8);
        let a = qpsk_soft_demap(&[y], 0.4);
        let b = qpsk_soft_demap(&[y], 0.8);
        for (x, h) in a.iter().zip(&b) {
            assert!((x - 2.0 * h).abs() < 1e-12);
            assert_eq!(slice_llr(*x), slice_llr(*h));
        }
    }

    #[test]
    fn noiseless_round_trip_every_pair() {
        for b0 in 0..=1u8 {
            for b1 in 0..=1u8 {
                let bits = vec![b0, b1];
                let syms = qpsk_map(&bits).unwrap();
                for var in [0.1, 0.5, 2.0] {
                    let sliced = slice_bits(&qpsk_soft_demap(&syms, var));
                    assert_eq!(sliced, bits, "({b0},{b1}) var {var}");
                }
                assert_eq!(qpsk_hard_demap(&syms), bits);
            }
        }
    }

    #[test]
    fn odd_bit_count_rejected() {
        assert!(matches!(qpsk_map(&[1, 0, 1]), Err(PhyError::OddBitCount(3))));
    }
}
