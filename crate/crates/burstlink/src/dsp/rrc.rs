//! Root-raised-cosine pulse shaping.

use crate::Sample;

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// FIR coefficient set with a nominal gain applied during filtering.
#[derive(Debug, Clone)]
pub struct FirTaps {
    pub coeffs: Vec<Sample>,
    pub gain: f64,
}

impl FirTaps {
    pub fn real(taps: &[f64]) -> Self {
        assert!(!taps.is_empty(), "taps must not be empty");
        assert!(taps.iter().all(|t| t.is_finite()), "taps must be finite");
        FirTaps {
            coeffs: taps.iter().map(|&t| Sample::new(t, 0.0)).collect(),
            gain: 1.0,
        }
    }

    pub fn complex(taps: Vec<Sample>) -> Self {
        assert!(!taps.is_empty(), "taps must not be empty");
        assert!(
            taps.iter().all(|t| t.re.is_finite() && t.im.is_finite()),
            "taps must be finite"
        );
        FirTaps { coeffs: taps, gain: 1.0 }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Matched filter for a known waveform: conjugated, time-reversed copy.
    pub fn matched(waveform: &[Sample]) -> Self {
        let taps: Vec<Sample> = waveform.iter().rev().map(|s| s.conj()).collect();
        FirTaps::complex(taps)
    }
}

/// Root-raised-cosine taps: `sps*span + 1` symmetric coefficients normalized
/// to unit energy (matched-filter convention). `span` counts total symbols
/// covered, so the filter reaches `span/2` symbols each side of center.
pub fn design_rrc(sps: usize, beta: f64, span: usize) -> Result<FirTaps, DspError> {
    if sps < 1 {
        return Err(DspError::InvalidParameter("sps must be >= 1".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(DspError::InvalidParameter(format!(
            "rolloff beta must be in (0, 1], got {beta}"
        )));
    }
    if span < 2 {
        return Err(DspError::InvalidParameter("span must be >= 2 symbols".into()));
    }
    if (sps * span) % 2 != 0 {
        return Err(DspError::InvalidParameter(
            "sps*span must be even so the tap count sps*span+1 is odd".into(),
        ));
    }
    let n = sps * span + 1;
    let mid = (n - 1) as f64 / 2.0;
    let mut taps = Vec::with_capacity(n);
    for i in 0..n {
        // Time in symbol periods, centered on the middle tap.
        let t = (i as f64 - mid) / sps as f64;
        let h = if t.abs() < 1e-12 {
            1.0 - beta + 4.0 * beta / std::f64::consts::PI
        } else if (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-9 {
            let a = (1.0 + 2.0 / std::f64::consts::PI)
                * (std::f64::consts::PI / (4.0 * beta)).sin();
            let b = (1.0 - 2.0 / std::f64::consts::PI)
                * (std::f64::consts::PI / (4.0 * beta)).cos();
            beta / std::f64::consts::SQRT_2 * (a + b)
        } else {
            let pi_t = std::f64::consts::PI * t;
            let num = (pi_t * (1.0 - beta)).sin() + 4.0 * beta * t * (pi_t * (1.0 + beta)).cos();
            let den = pi_t * (1.0 - (4.0 * beta * t).powi(2));
            num / den
        };
        taps.push(h);
    }
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let norm = energy.sqrt();
    for h in &mut taps {
        *h /= norm;
    }
    Ok(FirTaps::real(&taps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rrc_is_symmetric() {
        for (sps, beta, span) in [(2, 0.35, 11), (4, 0.25, 8), (2, 1.0, 6)] {
            let taps = design_rrc(sps, beta, span).unwrap();
            let n = taps.len();
            assert_eq!(n, sps * span + 1);
            for i in 0..n / 2 {
                let a = taps.coeffs[i].re;
                let b = taps.coeffs[n - 1 - i].re;
                assert!((a - b).abs() < 1e-12, "asymmetric at {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rrc_unit_energy() {
        for sps in [2usize, 4] {
            let taps = design_rrc(sps, 0.35, 11).unwrap();
            let energy: f64 = taps.coeffs.iter().map(|c| c.re * c.re).sum();
            assert!((energy - 1.0).abs() < 1e-12, "energy {energy}");
        }
    }

    /// Numerical convolution oracle: the TX/RX RRC cascade sampled at symbol
    /// instants within the filter span must be (near) ISI-free. Instants
    /// beyond the truncated support only see the overlap of the two filter
    /// edges and sit near -50 dB, so they are excluded here.
    #[test]
    fn rrc_cascade_isi_below_1e3() {
        for sps in [2usize, 4] {
            let taps = design_rrc(sps, 0.35, 11).unwrap();
            let h: Vec<f64> = taps.coeffs.iter().map(|c| c.re).collect();
            let half = (h.len() - 1) / 2;
            let mut rc = vec![0.0; 2 * h.len() - 1];
            for (i, a) in h.iter().enumerate() {
                for (j, b) in h.iter().enumerate() {
                    rc[i + j] += a * b;
                }
            }
            let center = rc.len() / 2;
            let peak = rc[center];
            assert!((peak - 1.0).abs() < 1e-12, "unit-energy peak {peak}");
            let mut k = 1;
            while k * sps <= half {
                let isi = (rc[center + k * sps] / peak).abs();
                assert!(isi <= 1e-3, "sps {sps}: ISI {isi} at symbol offset {k}");
                k += 1;
            }
            assert!(k > 4, "oracle must cover several symbols");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(design_rrc(0, 0.35, 11).is_err());
        assert!(design_rrc(2, 0.0, 11).is_err());
        assert!(design_rrc(2, 1.5, 11).is_err());
        assert!(design_rrc(2, 0.35, 1).is_err());
        assert!(design_rrc(3, 0.35, 5).is_err()); // odd sps*span
    }
}
