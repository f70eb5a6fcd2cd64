//! Block burst synchronizer for the PSK receiver.
//!
//! One estimate per burst, no tracking loops: carrier frequency offset from
//! the modulation-stripped (fourth-power) periodogram over the whole burst,
//! timing from cross-correlation against the known preamble waveform with
//! parabolic interpolation, and a least-squares equalizer over the preamble
//! symbols that also resolves the four-fold phase ambiguity.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::dsp::{design_rrc, fir_filter, interpolate};
use crate::phy::{BurstConfig, PhyError};
use crate::Sample;

/// Per-burst synchronization estimate.
#[derive(Debug, Clone)]
pub struct SyncEstimate {
    /// Carrier frequency offset, cycles/sample. Unambiguous within
    /// |cfo| < 0.125 (quarter of the QPSK fourth-power range).
    pub cfo: f64,
    /// Fractional-sample timing offset at the correlation peak.
    pub timing: f64,
    /// Complex channel gain (applied as division).
    pub eq_tap: Sample,
    /// Normalized preamble correlation peak in [0, 1].
    pub corr_peak: f64,
    /// Sample index within the burst where the preamble waveform starts.
    pub preamble_index: usize,
    /// Noise variance per complex sample estimated from preamble residuals.
    pub noise_var: f64,
}

/// Reusable synchronizer context: precomputed preamble reference waveform
/// and FFT plan.
pub struct Synchronizer {
    sps: usize,
    preamble_syms: Vec<Sample>,
    /// Preamble as the receiver sees it: shaped by the TX RRC and the RX
    /// matched filter.
    ref_wave: Vec<Sample>,
    /// Offset of the first preamble symbol instant within `ref_wave`.
    sym_offset: usize,
    ref_energy: f64,
    corr_floor: f64,
    eq_taps: usize,
    planner: FftPlanner<f64>,
}

impl Synchronizer {
    pub fn new(config: &BurstConfig) -> Result<Self, PhyError> {
        config.validate()?;
        let rrc = design_rrc(config.sps, config.rrc_beta, config.rrc_span)
            .map_err(|e| PhyError::ConfigInvalid(e.to_string()))?;
        let preamble_syms = config.preamble_symbols();
        let shaped = interpolate(&preamble_syms, &rrc, config.sps);
        let ref_wave = fir_filter(&shaped, &rrc, 1);
        // Two identical linear-phase filters delay by taps-1 in total.
        let sym_offset = rrc.len() - 1;
        let ref_energy: f64 = ref_wave.iter().map(|s| s.norm_sqr()).sum();
        Ok(Synchronizer {
            sps: config.sps,
            preamble_syms,
            ref_wave,
            sym_offset,
            ref_energy,
            corr_floor: config.sync_corr_floor,
            eq_taps: config.eq_taps,
            planner: FftPlanner::new(),
        })
    }

    /// Full burst synchronization. Returns symbols at one sample per symbol
    /// starting at the first preamble symbol, corrected for CFO, timing, and
    /// complex gain.
    pub fn synchronize(
        &mut self,
        burst: &[Sample],
    ) -> Result<(Vec<Sample>, SyncEstimate), PhyError> {
        let need = self.ref_wave.len() + self.sps;
        if burst.len() < need {
            return Err(PhyError::BurstTooShort {
                got: burst.len(),
                need,
            });
        }

        // The fourth-power spectrum of a short burst can put a modulation
        // line above the carrier line; test the strongest candidates against
        // the known preamble and keep the best.
        let candidates = self.cfo_candidates(burst);
        let mut best: Option<(f64, Vec<Sample>, usize, f64)> = None;
        for cfo in candidates {
            let derotated: Vec<Sample> = burst
                .iter()
                .enumerate()
                .map(|(n, &s)| s * Sample::from_polar(1.0, -TAU * (cfo * n as f64).fract()))
                .collect();
            let (peak_idx, score) = self.correlate_preamble(&derotated);
            let better = best.as_ref().is_none_or(|b| score > b.3);
            if better {
                let early_exit = score >= 0.9;
                best = Some((cfo, derotated, peak_idx, score));
                if early_exit {
                    break;
                }
            }
        }
        let (cfo, derotated, peak_idx, corr_peak) = best.expect("candidate list nonempty");
        if corr_peak < self.corr_floor {
            return Err(PhyError::NoPeak {
                score: corr_peak,
                floor: self.corr_floor,
            });
        }
        let frac = self.refine_timing(&derotated, peak_idx);

        // Decimate at the estimated symbol instants.
        let first = peak_idx as f64 + self.sym_offset as f64 + frac;
        let mut symbols = Vec::new();
        let mut s = 0usize;
        loop {
            let pos = first + (s * self.sps) as f64;
            let i0 = pos.floor() as usize;
            if i0 + 1 >= derotated.len() {
                break;
            }
            let f = pos - i0 as f64;
            symbols.push(derotated[i0] * (1.0 - f) + derotated[i0 + 1] * f);
            s += 1;
        }
        if symbols.len() < self.preamble_syms.len() {
            return Err(PhyError::BurstTooShort {
                got: symbols.len(),
                need: self.preamble_syms.len(),
            });
        }

        // Residual CFO at symbol rate: the lag-1 product of the
        // fourth-power symbols is a clean tone at four times the per-symbol
        // phase increment. Iterated twice because ISI couples quadratically
        // with the rotation; the second pass removes the residue.
        let mut cfo = cfo;
        for _ in 0..2 {
            let mut acc = Sample::new(0.0, 0.0);
            for w in symbols.windows(2) {
                let a = w[1] * w[1] * w[1] * w[1];
                let b = w[0] * w[0] * w[0] * w[0];
                acc += a * b.conj();
            }
            let phase_per_sym = if acc.norm() > 0.0 { acc.arg() / 4.0 } else { 0.0 };
            for (s, r) in symbols.iter_mut().enumerate() {
                *r *= Sample::from_polar(1.0, -phase_per_sym * s as f64);
            }
            cfo += phase_per_sym / (TAU * self.sps as f64);
        }

        // Gain over the preamble: eq = sum(conj(p) r) / sum(|p|^2).
        let p = &self.preamble_syms;
        let mut num = Sample::new(0.0, 0.0);
        let mut den = 0.0;
        for (pi, ri) in p.iter().zip(&symbols) {
            num += pi.conj() * ri;
            den += pi.norm_sqr();
        }
        let eq_tap = num / den;
        if eq_tap.norm() < 1e-9 {
            return Err(PhyError::NoPeak {
                score: corr_peak,
                floor: self.corr_floor,
            });
        }

        let corrected: Vec<Sample> = if self.eq_taps == 1 {
            symbols.iter().map(|&r| r / eq_tap).collect()
        } else {
            let taps = ls_equalizer(&symbols[..p.len()], p, self.eq_taps);
            apply_fir(&symbols, &taps)
        };

        let noise_var = p
            .iter()
            .zip(&corrected)
            .map(|(pi, ri)| (ri - pi).norm_sqr())
            .sum::<f64>()
            / p.len() as f64;

        let estimate = SyncEstimate {
            cfo,
            timing: frac,
            eq_tap,
            corr_peak,
            preamble_index: peak_idx,
            noise_var: noise_var.max(1e-12),
        };
        Ok((corrected, estimate))
    }

    /// CFO candidates for QPSK: local maxima of the fourth-power
    /// periodogram (zero-padded 4x), each sharpened by parabolic
    /// interpolation and a long-lag delay-product refinement. Strongest
    /// first, at most four.
    fn cfo_candidates(&mut self, burst: &[Sample]) -> Vec<f64> {
        let z: Vec<Sample> = burst.iter().map(|s| s * s * s * s).collect();
        let m = (4 * z.len()).next_power_of_two();
        let fft: Arc<dyn Fft<f64>> = self.planner.plan_fft_forward(m);
        let mut buf = vec![Sample::new(0.0, 0.0); m];
        buf[..z.len()].copy_from_slice(&z);
        fft.process(&mut buf);
        let mags: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
        let at = |k: isize| mags[k.rem_euclid(m as isize) as usize];

        // Local maxima, strongest first, separated by at least one natural
        // resolution bin (the padding factor).
        let mut peaks: Vec<(usize, f64)> = (0..m)
            .filter(|&k| {
                let v = mags[k];
                v > 0.0 && v >= at(k as isize - 1) && v >= at(k as isize + 1)
            })
            .map(|k| (k, mags[k]))
            .collect();
        peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
        let min_sep = 8usize;
        let mut chosen: Vec<usize> = Vec::new();
        for (k, _) in peaks {
            if chosen.len() >= 4 {
                break;
            }
            if chosen.iter().all(|&c| {
                let d = c.abs_diff(k);
                d.min(m - d) >= min_sep
            }) {
                chosen.push(k);
            }
        }
        if chosen.is_empty() {
            return vec![0.0];
        }

        chosen
            .into_iter()
            .map(|k_max| {
                let alpha = at(k_max as isize - 1);
                let beta = at(k_max as isize);
                let gamma = at(k_max as isize + 1);
                let denom = alpha - 2.0 * beta + gamma;
                let delta = if denom.abs() > 1e-30 {
                    0.5 * (alpha - gamma) / denom
                } else {
                    0.0
                };
                let mut f4 = (k_max as f64 + delta) / m as f64;
                if f4 >= 0.5 {
                    f4 -= 1.0;
                }
                // Residual from the phase of a long-lag product of the
                // derotated fourth-power signal.
                let lag = (z.len() / 4).max(1);
                let mut acc = Sample::new(0.0, 0.0);
                for n in lag..z.len() {
                    let a = z[n] * Sample::from_polar(1.0, -TAU * (f4 * n as f64).fract());
                    let b = z[n - lag]
                        * Sample::from_polar(1.0, -TAU * (f4 * (n - lag) as f64).fract());
                    acc += a * b.conj();
                }
                if acc.norm() > 0.0 {
                    f4 += acc.arg() / (TAU * lag as f64);
                }
                f4 / 4.0
            })
            .collect()
    }

    /// Preamble symbol correlation magnitude for a candidate fractional
    /// timing offset, using the same linear interpolation as the output
    /// decimator.
    fn symbol_metric(&self, burst: &[Sample], peak_idx: usize, tau: f64) -> f64 {
        let first = peak_idx as f64 + self.sym_offset as f64 + tau;
        let mut acc = Sample::new(0.0, 0.0);
        for (s, p) in self.preamble_syms.iter().enumerate() {
            let pos = first + (s * self.sps) as f64;
            let i0 = pos.floor() as usize;
            if i0 + 1 >= burst.len() {
                break;
            }
            let f = pos - i0 as f64;
            let r = burst[i0] * (1.0 - f) + burst[i0 + 1] * f;
            acc += p.conj() * r;
        }
        acc.norm()
    }

    /// Fractional timing: coarse grid search of the symbol-level preamble
    /// correlation around the integer peak, then a ternary search. The
    /// metric is V-shaped around the optimum (linear interpolation blends
    /// toward mid-symbol samples), so a shrinking bracket beats a parabola.
    fn refine_timing(&self, burst: &[Sample], peak_idx: usize) -> f64 {
        let step = 0.15;
        let mut best = (0.0f64, f64::MIN);
        let mut tau = -0.45;
        while tau <= 0.45 + 1e-9 {
            let j = self.symbol_metric(burst, peak_idx, tau);
            if j > best.1 {
                best = (tau, j);
            }
            tau += step;
        }
        let mut lo = best.0 - step;
        let mut hi = best.0 + step;
        for _ in 0..24 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if self.symbol_metric(burst, peak_idx, m1)
                < self.symbol_metric(burst, peak_idx, m2)
            {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        (0.5 * (lo + hi)).clamp(-0.5, 0.5)
    }

    /// Cross-correlate against the reference preamble waveform; returns the
    /// integer peak and the normalized peak score.
    fn correlate_preamble(&self, burst: &[Sample]) -> (usize, f64) {
        let r = &self.ref_wave;
        let span = burst.len() - r.len() + 1;
        let mut scores = vec![0.0f64; span];
        // Sliding window energy for normalization.
        let mut win_energy: f64 = burst[..r.len()].iter().map(|s| s.norm_sqr()).sum();
        let mut global_max = 0.0f64;
        for k in 0..span {
            let mut dot = Sample::new(0.0, 0.0);
            for (i, ri) in r.iter().enumerate() {
                dot += ri.conj() * burst[k + i];
            }
            let denom = (self.ref_energy * win_energy).sqrt();
            let score = if denom > 1e-30 { dot.norm() / denom } else { 0.0 };
            scores[k] = score;
            global_max = global_max.max(score);
            if k + 1 < span {
                win_energy += burst[k + r.len()].norm_sqr() - burst[k].norm_sqr();
                win_energy = win_energy.max(0.0);
            }
        }
        // An extraction window can cover more than one burst; lock the
        // earliest credible preamble, not the strongest, so each event
        // decodes the burst its trigger aimed at.
        let accept = self.corr_floor.max(0.8 * global_max);
        let peak = (0..span)
            .find(|&k| {
                scores[k] >= accept
                    && (k == 0 || scores[k] >= scores[k - 1])
                    && (k + 1 == span || scores[k] >= scores[k + 1])
            })
            .unwrap_or(0);
        (peak, scores[peak])
    }
}

/// Least-squares FIR equalizer fitted over the preamble: minimizes
/// ||conv(taps, received) - known||^2, solved by normal equations.
fn ls_equalizer(received: &[Sample], known: &[Sample], l: usize) -> Vec<Sample> {
    let n = received.len();
    let mut a = vec![vec![Sample::new(0.0, 0.0); l]; l];
    let mut b = vec![Sample::new(0.0, 0.0); l];
    let at = |r: &[Sample], idx: isize| -> Sample {
        if idx >= 0 && (idx as usize) < n {
            r[idx as usize]
        } else {
            Sample::new(0.0, 0.0)
        }
    };
    for s in 0..n {
        for i in 0..l {
            let vi = at(received, s as isize - i as isize);
            b[i] += vi.conj() * known[s];
            for j in 0..l {
                let vj = at(received, s as isize - j as isize);
                a[i][j] += vi.conj() * vj;
            }
        }
    }
    solve_complex(&mut a, &mut b);
    b
}

/// In-place Gaussian elimination with partial pivoting for small complex
/// systems.
fn solve_complex(a: &mut [Vec<Sample>], b: &mut [Sample]) {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .expect("nonempty system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        if p.norm() < 1e-30 {
            continue;
        }
        for row in col + 1..n {
            let factor = a[row][col] / p;
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let bv = b[col];
            b[row] -= factor * bv;
        }
    }
    for col in (0..n).rev() {
        let p = a[col][col];
        if p.norm() < 1e-30 {
            b[col] = Sample::new(0.0, 0.0);
            continue;
        }
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * b[k];
        }
        b[col] = acc / p;
    }
}

fn apply_fir(x: &[Sample], taps: &[Sample]) -> Vec<Sample> {
    let mut out = Vec::with_capacity(x.len());
    for s in 0..x.len() {
        let mut acc = Sample::new(0.0, 0.0);
        for (j, &t) in taps.iter().enumerate() {
            if s >= j {
                acc += t * x[s - j];
            }
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::qpsk::qpsk_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Build a clean burst the same way the transmit chain does: preamble
    /// plus payload symbols, RRC-shaped, then passed through the RX matched
    /// filter equivalent (so the synchronizer sees its reference waveform).
    fn synth_burst(
        config: &BurstConfig,
        payload_syms: &[Sample],
        delay: usize,
        cfo: f64,
        gain: Sample,
    ) -> (Vec<Sample>, Vec<Sample>) {
        let rrc = design_rrc(config.sps, config.rrc_beta, config.rrc_span).unwrap();
        let mut syms = config.preamble_symbols();
        syms.extend_from_slice(payload_syms);
        // Flush the filter tails so every symbol instant lands in the output.
        let mut padded = syms.clone();
        padded.extend(vec![Sample::new(0.0, 0.0); config.rrc_span + 1]);
        let shaped = interpolate(&padded, &rrc, config.sps);
        let rx = fir_filter(&shaped, &rrc, 1);
        let mut burst = vec![Sample::new(0.0, 0.0); delay];
        burst.extend(rx);
        let burst: Vec<Sample> = burst
            .iter()
            .enumerate()
            .map(|(n, &s)| s * gain * Sample::from_polar(1.0, TAU * (cfo * n as f64).fract()))
            .collect();
        (burst, syms)
    }

    fn random_syms(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..=1) as u8).collect();
        qpsk_map(&bits).unwrap()
    }

    /// With a long pulse (span 41) the truncation ISI stays below 1e-3, so
    /// this verifies the synchronizer itself recovers symbols to 1e-3.
    #[test]
    fn clean_burst_with_cfo_recovers_symbols() {
        let mut config = BurstConfig::default();
        config.rrc_span = 41;
        let payload = random_syms(128, 1);
        let (burst, syms) = synth_burst(&config, &payload, 11, 0.01, Sample::new(1.0, 0.0));
        let mut sync = Synchronizer::new(&config).unwrap();
        let (out, est) = sync.synchronize(&burst).unwrap();
        assert!(
            (est.cfo - 0.01).abs() <= 1e-4,
            "cfo estimate {} vs truth 0.01",
            est.cfo
        );
        assert!(out.len() >= syms.len());
        for (i, (o, s)) in out.iter().zip(&syms).enumerate() {
            assert!(
                (o - s).norm() <= 1e-3,
                "symbol {i}: {o} vs {s} (err {})",
                (o - s).norm()
            );
        }
    }

    /// At the default span the truncated pulse itself injects a few 1e-3 of
    /// ISI; the recovered symbols must stay within 1e-2 RMS.
    #[test]
    fn default_span_symbols_within_1e2_rms() {
        let config = BurstConfig::default();
        let payload = random_syms(128, 7);
        let (burst, syms) = synth_burst(&config, &payload, 19, 0.005, Sample::new(1.0, 0.0));
        let mut sync = Synchronizer::new(&config).unwrap();
        let (out, _) = sync.synchronize(&burst).unwrap();
        let rms = (out
            .iter()
            .zip(&syms)
            .map(|(o, s)| (o - s).norm_sqr())
            .sum::<f64>()
            / syms.len() as f64)
            .sqrt();
        assert!(rms <= 1e-2, "symbol rms error {rms}");
    }

    #[test]
    fn integer_delay_reported_as_preamble_index() {
        let config = BurstConfig::default();
        let payload = random_syms(64, 2);
        let (burst, _) = synth_burst(&config, &payload, 37, 0.0, Sample::new(1.0, 0.0));
        let mut sync = Synchronizer::new(&config).unwrap();
        let (_, est) = sync.synchronize(&burst).unwrap();
        assert_eq!(est.preamble_index, 37);
        assert!(est.timing.abs() < 0.1, "timing {}", est.timing);
    }

    #[test]
    fn gain_and_phase_resolved_by_equalizer() {
        let mut config = BurstConfig::default();
        config.rrc_span = 41;
        let payload = random_syms(64, 3);
        let g = Sample::from_polar(0.1, std::f64::consts::PI / 3.0);
        let (burst, syms) = synth_burst(&config, &payload, 5, 0.0, g);
        let mut sync = Synchronizer::new(&config).unwrap();
        let (out, est) = sync.synchronize(&burst).unwrap();
        assert!(
            (est.eq_tap - g).norm() < 0.02 * g.norm().max(1.0),
            "eq_tap {} vs applied gain {g}",
            est.eq_tap
        );
        for (o, s) in out.iter().zip(&syms) {
            assert!((o - s).norm() <= 2e-3, "{o} vs {s}");
        }
    }

    #[test]
    fn cfo_estimates_across_range() {
        let config = BurstConfig::default();
        let payload = random_syms(128, 4);
        let mut sync = Synchronizer::new(&config).unwrap();
        for truth in [-0.02, 0.0, 0.005, 0.02] {
            let (burst, _) = synth_burst(&config, &payload, 7, truth, Sample::new(1.0, 0.0));
            let (_, est) = sync.synchronize(&burst).unwrap();
            assert!(
                (est.cfo - truth).abs() <= 1e-4,
                "truth {truth}: estimate {}",
                est.cfo
            );
        }
    }

    #[test]
    fn pure_noise_is_rejected() {
        let config = BurstConfig::default();
        let mut sync = Synchronizer::new(&config).unwrap();
        let mut gen = crate::dsp::GaussianGen::new(5);
        let noise: Vec<Sample> = (0..1500).map(|_| gen.next_complex(1.0)).collect();
        match sync.synchronize(&noise) {
            Err(PhyError::NoPeak { .. }) => {}
            other => panic!("expected NoPeak, got {other:?}"),
        }
    }

    #[test]
    fn multi_tap_equalizer_matches_single_tap_on_flat_channel() {
        let mut config = BurstConfig::default();
        config.eq_taps = 3;
        let payload = random_syms(64, 6);
        let g = Sample::from_polar(0.5, 1.0);
        let (burst, syms) = synth_burst(&config, &payload, 9, 0.0, g);
        let mut sync = Synchronizer::new(&config).unwrap();
        let (out, _) = sync.synchronize(&burst).unwrap();
        for (o, s) in out.iter().zip(&syms).take(syms.len()) {
            assert!((o - s).norm() <= 2e-2, "{o} vs {s}");
        }
    }
}
