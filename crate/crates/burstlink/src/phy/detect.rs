//! Burst length trimming from the power envelope trailing edge.

use crate::dsp::power_envelope;
use crate::phy::BurstConfig;
use crate::Sample;

#[derive(Debug, Clone)]
pub struct LengthDetectResult {
    pub samples: Vec<Sample>,
    /// Length kept after trimming.
    pub trimmed_len: usize,
    /// The trim hit the minimum-span floor (likely a false trigger).
    pub short_burst: bool,
}

/// Trim trailing noise off an extracted burst based on the power envelope.
///
/// The reference level is the median envelope over one preamble span of
/// samples starting at `ref_offset` (where the chain expects the preamble:
/// extractions begin one detection lookback before it). Everything after the
/// last index whose envelope reaches `length_alpha` times that reference is
/// dropped. The result never shrinks below the reference span end; inputs
/// with no measurable reference energy come back untrimmed.
pub fn length_detect_at(
    samples: &[Sample],
    config: &BurstConfig,
    ref_offset: usize,
) -> LengthDetectResult {
    let n = config.envelope_window;
    let pre_span = config.preamble_span_samples().max(1);
    let floor_len = (ref_offset + pre_span).min(samples.len());
    if samples.len() < n.max(2) || samples.len() <= floor_len || ref_offset >= samples.len() {
        return LengthDetectResult {
            trimmed_len: samples.len(),
            samples: samples.to_vec(),
            short_burst: false,
        };
    }
    let env = power_envelope(samples, n);
    let ref_end = (ref_offset + pre_span).min(env.len());
    let mut head: Vec<f64> = env[ref_offset..ref_end].to_vec();
    head.sort_by(|a, b| a.total_cmp(b));
    let median = head[head.len() / 2];
    if median <= 0.0 {
        // No reference energy to judge a trailing edge against.
        return LengthDetectResult {
            trimmed_len: samples.len(),
            samples: samples.to_vec(),
            short_burst: true,
        };
    }
    let threshold = config.length_alpha * median;
    let last = env.iter().rposition(|&e| e >= threshold).unwrap_or(0);
    let keep = (last + 1).clamp(floor_len, samples.len());
    LengthDetectResult {
        samples: samples[..keep].to_vec(),
        trimmed_len: keep,
        short_burst: keep <= floor_len,
    }
}

/// [`length_detect_at`] with the reference window at the burst start.
pub fn length_detect(samples: &[Sample], config: &BurstConfig) -> LengthDetectResult {
    length_detect_at(samples, config, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::GaussianGen;

    fn config() -> BurstConfig {
        BurstConfig::default() // preamble span 64 samples, window 32
    }

    /// Synthetic envelope oracle: signal for 200 samples, then noise 30 dB
    /// down; the trim must land within one window of the true edge.
    #[test]
    fn trailing_noise_trimmed_near_signal_edge() {
        let cfg = config();
        let mut gen = GaussianGen::new(11);
        let mut x: Vec<Sample> = (0..200)
            .map(|i| Sample::from_polar(1.0, 0.3 * i as f64))
            .collect();
        // -30 dB noise tail.
        x.extend((0..400).map(|_| gen.next_complex(0.0224)));
        let r = length_detect(&x, &cfg);
        assert!(
            (200..=200 + cfg.envelope_window).contains(&r.trimmed_len),
            "trimmed to {}",
            r.trimmed_len
        );
        assert!(!r.short_burst);
    }

    /// Same oracle with a detection lookback prefix of silence ahead of the
    /// burst, as extractions arrive in the receive chain.
    #[test]
    fn lookback_prefix_handled_via_ref_offset() {
        let cfg = config();
        let mut gen = GaussianGen::new(12);
        let mut x = vec![Sample::new(0.0, 0.0); 150];
        x.extend((0..200).map(|i| Sample::from_polar(1.0, 0.3 * i as f64)));
        x.extend((0..400).map(|_| gen.next_complex(0.0224)));
        let r = length_detect_at(&x, &cfg, 150);
        assert!(
            (350..=350 + cfg.envelope_window).contains(&r.trimmed_len),
            "trimmed to {}",
            r.trimmed_len
        );
        assert!(!r.short_burst);
    }

    #[test]
    fn signal_spanning_whole_extraction_untrimmed() {
        let cfg = config();
        let x: Vec<Sample> = (0..500)
            .map(|i| Sample::from_polar(1.0, 0.2 * i as f64))
            .collect();
        let r = length_detect(&x, &cfg);
        assert_eq!(r.trimmed_len, 500);
    }

    /// A silent extraction has no reference energy: it passes through
    /// untrimmed but flagged, and the downstream synchronizer rejects it.
    #[test]
    fn silent_extraction_flagged_short() {
        let cfg = config();
        let x = vec![Sample::new(0.0, 0.0); 600];
        let r = length_detect(&x, &cfg);
        assert_eq!(r.trimmed_len, 600);
        assert!(r.short_burst);
    }

    #[test]
    fn degenerate_short_input_returned_untrimmed() {
        let cfg = config();
        let x = vec![Sample::new(1.0, 0.0); 10];
        let r = length_detect(&x, &cfg);
        assert_eq!(r.trimmed_len, 10);
        assert!(!r.short_burst);
    }
}
