//! Two-level FSK mapping and block timing/slicing.

use crate::phy::{BurstConfig, PhyError};

/// Map bits onto frequency deviations: bit 1 -> +1, bit 0 -> -1, each held
/// for `sps` samples.
pub fn fsk_map(bits: &[u8], sps: usize) -> Vec<f64> {
    assert!(sps >= 1);
    let mut out = Vec::with_capacity(bits.len() * sps);
    for &b in bits {
        let d = if b == 1 { 1.0 } else { -1.0 };
        out.extend(std::iter::repeat(d).take(sps));
    }
    out
}

/// Timing and amplitude information recovered from one FSK burst.
#[derive(Debug, Clone)]
pub struct FskSync {
    /// Sample index within the burst where the preamble starts.
    pub start: usize,
    /// Normalized preamble correlation score in [0, 1].
    pub score: f64,
    /// Estimated DC offset of the discriminator output (residual CFO).
    pub dc: f64,
    /// Estimated deviation amplitude.
    pub amplitude: f64,
}

/// Block timing recovery and slicing for a burst of FM-demodulated samples.
///
/// Pipeline: remove the burst mean (cancels residual carrier offset),
/// correlate against the known +/-1 preamble waveform to find the start,
/// refine the DC and amplitude by least squares over the preamble span, then
/// integrate-and-dump each symbol and slice at zero. Returns the payload
/// bits (preamble stripped).
pub fn fsk_timing_and_slice(
    demod: &[f64],
    config: &BurstConfig,
) -> Result<(Vec<u8>, FskSync), PhyError> {
    let sps = config.sps;
    let pattern = fsk_map(&config.preamble_bits, sps);
    let pre_span = pattern.len();
    if demod.len() < pre_span + sps {
        return Err(PhyError::BurstTooShort {
            got: demod.len(),
            need: pre_span + sps,
        });
    }

    let mean = demod.iter().sum::<f64>() / demod.len() as f64;
    let x: Vec<f64> = demod.iter().map(|v| v - mean).collect();

    // Signed normalized correlation; FSK polarity is fixed by the mapping.
    let pat_energy: f64 = pattern.iter().map(|v| v * v).sum();
    let mut win_energy: f64 = x[..pre_span].iter().map(|v| v * v).sum();
    let mut best = (0usize, f64::MIN);
    for k in 0..=(x.len() - pre_span) {
        let dot: f64 = pattern.iter().zip(&x[k..k + pre_span]).map(|(p, v)| p * v).sum();
        let denom = (pat_energy * win_energy).sqrt();
        let score = if denom > 1e-30 { dot / denom } else { 0.0 };
        if score > best.1 {
            best = (k, score);
        }
        if k + pre_span < x.len() {
            win_energy += x[k + pre_span] * x[k + pre_span] - x[k] * x[k];
            win_energy = win_energy.max(0.0);
        }
    }
    let (start, score) = best;
    if score < config.fsk_corr_floor {
        return Err(PhyError::NoPeak {
            score,
            floor: config.fsk_corr_floor,
        });
    }

    // Least-squares fit demod ~= dc + amplitude * pattern over the preamble
    // (on the raw samples, so `dc` absorbs the full carrier offset).
    let span = &demod[start..start + pre_span];
    let n = pre_span as f64;
    let sum_y: f64 = span.iter().sum();
    let sum_p: f64 = pattern.iter().sum();
    let sum_pp = pat_energy;
    let sum_py: f64 = pattern.iter().zip(span).map(|(p, y)| p * y).sum();
    let det = n * sum_pp - sum_p * sum_p;
    let (dc, amplitude) = if det.abs() > 1e-30 {
        (
            (sum_y * sum_pp - sum_p * sum_py) / det,
            (n * sum_py - sum_p * sum_y) / det,
        )
    } else {
        (mean, 1.0)
    };

    // Integrate-and-dump payload symbols after the preamble.
    let mut bits = Vec::new();
    let mut pos = start + pre_span;
    while pos + sps <= demod.len() {
        let acc: f64 = demod[pos..pos + sps].iter().map(|v| v - dc).sum();
        bits.push((acc > 0.0) as u8);
        pos += sps;
    }

    Ok((
        bits,
        FskSync {
            start,
            score,
            dc,
            amplitude,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::GaussianGen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fsk_config() -> BurstConfig {
        BurstConfig::default()
    }

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..=1) as u8).collect()
    }

    /// Demod-domain burst: preamble + payload deviations scaled by the
    /// sensitivity, surrounded by near-zero silence.
    fn synth_demod_burst(config: &BurstConfig, payload: &[u8], offset: usize, dc: f64) -> Vec<f64> {
        let s = config.fsk_sensitivity;
        let mut x = vec![0.0; offset];
        x.extend(fsk_map(&config.preamble_bits, config.sps).iter().map(|d| d * s));
        x.extend(fsk_map(payload, config.sps).iter().map(|d| d * s));
        x.extend(vec![0.0; 2 * config.sps]);
        x.iter().map(|v| v + dc).collect()
    }

    #[test]
    fn fsk_map_repeats_deviations() {
        assert_eq!(fsk_map(&[1, 0], 2), vec![1.0, 1.0, -1.0, -1.0]);
        assert!(fsk_map(&[], 3).is_empty());
    }

    #[test]
    fn map_then_slice_round_trip() {
        let config = fsk_config();
        let bits = random_bits(100, 1);
        let burst = synth_demod_burst(&config, &bits, 0, 0.0);
        let (out, sync) = fsk_timing_and_slice(&burst, &config).unwrap();
        assert_eq!(sync.start, 0);
        assert_eq!(&out[..bits.len()], &bits[..]);
    }

    #[test]
    fn offset_burst_found_at_13() {
        let config = fsk_config();
        let bits = random_bits(64, 2);
        let burst = synth_demod_burst(&config, &bits, 13, 0.0);
        let (out, sync) = fsk_timing_and_slice(&burst, &config).unwrap();
        assert_eq!(sync.start, 13);
        assert_eq!(&out[..bits.len()], &bits[..]);
    }

    #[test]
    fn dc_offset_cancelled() {
        let config = fsk_config();
        let bits = random_bits(64, 3);
        let clean = synth_demod_burst(&config, &bits, 5, 0.0);
        let shifted = synth_demod_burst(&config, &bits, 5, 0.2);
        let (a, _) = fsk_timing_and_slice(&clean, &config).unwrap();
        let (b, sync) = fsk_timing_and_slice(&shifted, &config).unwrap();
        assert_eq!(a, b);
        assert!((sync.dc - 0.2).abs() < 0.05, "dc {}", sync.dc);
    }

    /// Statistical oracle: pure noise must be rejected in at least 99% of
    /// trials at the default correlation floor.
    #[test]
    fn pure_noise_rejected_in_99_percent_of_trials() {
        let config = fsk_config();
        let mut rejected = 0;
        let trials = 300;
        for t in 0..trials {
            let mut gen = GaussianGen::new(1000 + t);
            let noise: Vec<f64> = (0..800).map(|_| gen.next_pair().0 * 1.8).collect();
            if fsk_timing_and_slice(&noise, &config).is_err() {
                rejected += 1;
            }
        }
        assert!(
            rejected as f64 >= 0.99 * trials as f64,
            "only {rejected}/{trials} rejected"
        );
    }

    #[test]
    fn amplitude_estimate_tracks_sensitivity() {
        let config = fsk_config();
        let bits = random_bits(32, 4);
        let burst = synth_demod_burst(&config, &bits, 0, 0.0);
        let (_, sync) = fsk_timing_and_slice(&burst, &config).unwrap();
        assert!(
            (sync.amplitude - config.fsk_sensitivity).abs() < 0.05 * config.fsk_sensitivity,
            "amplitude {} vs {}",
            sync.amplitude,
            config.fsk_sensitivity
        );
    }
}
