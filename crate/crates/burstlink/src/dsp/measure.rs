//! Sliding-window measurements: moving average, power envelope, windowed
//! variance, and the normalized correlation metric.

use std::collections::VecDeque;

use crate::runtime::{propagate_tags, Block, BlockError, ItemKind, Signature, WorkIo};
use crate::Sample;

/// Division floor that keeps the correlation metric defined during all-zero
/// warm-up.
pub const METRIC_EPSILON: f64 = 1e-12;

/// y[n] = mean of the last N inputs, zeros assumed before the stream start.
pub struct MovingAverage {
    window: VecDeque<f64>,
    sum: f64,
    n: usize,
}

impl MovingAverage {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "window must be >= 1");
        MovingAverage {
            window: VecDeque::from(vec![0.0; n]),
            sum: 0.0,
            n,
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        self.sum += x - self.window.pop_front().expect("window prefilled");
        self.window.push_back(x);
        self.sum / self.n as f64
    }

    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>) {
        out.extend(input.iter().map(|&x| self.push(x)));
    }
}

/// Vector form of the moving average.
pub fn moving_average(input: &[f64], n: usize) -> Vec<f64> {
    let mut k = MovingAverage::new(n);
    let mut out = Vec::with_capacity(input.len());
    k.process(input, &mut out);
    out
}

/// Sliding mean power: moving_average(|x|^2, N).
pub fn power_envelope(input: &[Sample], n: usize) -> Vec<f64> {
    let p: Vec<f64> = input.iter().map(|s| s.norm_sqr()).collect();
    moving_average(&p, n)
}

/// Sliding population variance over the last N inputs (divide by N), zeros
/// assumed before the stream start.
pub struct WindowedVariance {
    window: VecDeque<f64>,
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl WindowedVariance {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "variance window must be >= 2");
        WindowedVariance {
            window: VecDeque::from(vec![0.0; n]),
            sum: 0.0,
            sum_sq: 0.0,
            n,
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        let old = self.window.pop_front().expect("window prefilled");
        self.sum += x - old;
        self.sum_sq += x * x - old * old;
        self.window.push_back(x);
        let mean = self.sum / self.n as f64;
        (self.sum_sq / self.n as f64 - mean * mean).max(0.0)
    }

    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>) {
        out.extend(input.iter().map(|&x| self.push(x)));
    }
}

/// Scale-invariant detection metric: |x[n]|^2 over its own local moving
/// average. Peaks stand out as multiples of the local floor regardless of
/// receive gain.
///
/// The epsilon guard scales with the instantaneous power so the metric stays
/// exactly gain-invariant while remaining defined through all-zero warm-up.
pub struct CorrelatorNormalize {
    ma: MovingAverage,
}

impl CorrelatorNormalize {
    pub fn new(avg_window: usize) -> Self {
        CorrelatorNormalize {
            ma: MovingAverage::new(avg_window),
        }
    }

    pub fn push(&mut self, x: Sample) -> f64 {
        let p = x.norm_sqr();
        let floor = self.ma.push(p);
        if p == 0.0 {
            0.0
        } else {
            p / (METRIC_EPSILON * p + floor)
        }
    }

    pub fn process(&mut self, input: &[Sample], out: &mut Vec<f64>) {
        out.extend(input.iter().map(|&x| self.push(x)));
    }
}

macro_rules! real_kernel_block {
    ($name:ident, $kernel:ty, $type_name:literal) => {
        pub struct $name {
            kernel: $kernel,
            scratch: Vec<f64>,
        }

        impl $name {
            pub fn new(window: usize) -> Self {
                Self {
                    kernel: <$kernel>::new(window),
                    scratch: Vec::new(),
                }
            }
        }

        impl Block for $name {
            fn type_name(&self) -> &'static str {
                $type_name
            }

            fn signature(&self) -> Signature {
                Signature::new()
                    .stream_in(ItemKind::Real)
                    .stream_out(ItemKind::Real)
            }

            fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
                let mut inp = io.reader(0);
                let mut out = io.writer(0);
                let n = inp.available().min(out.space());
                if n > 0 {
                    propagate_tags(&inp, &mut out, n);
                    self.scratch.clear();
                    self.kernel.process(&inp.real()[..n], &mut self.scratch);
                    out.push_real(&self.scratch);
                    inp.consume(n);
                }
                if inp.finished() && inp.available() == 0 {
                    io.finish();
                }
                Ok(())
            }
        }
    };
}

real_kernel_block!(MovingAverageBlock, MovingAverage, "moving_average");
real_kernel_block!(WindowedVarianceBlock, WindowedVariance, "windowed_variance");

/// Stream block computing the normalized correlation metric from a matched
/// filter output.
pub struct CorrelatorNormalizeBlock {
    kernel: CorrelatorNormalize,
    scratch: Vec<f64>,
}

impl CorrelatorNormalizeBlock {
    pub fn new(avg_window: usize) -> Self {
        CorrelatorNormalizeBlock {
            kernel: CorrelatorNormalize::new(avg_window),
            scratch: Vec::new(),
        }
    }
}

impl Block for CorrelatorNormalizeBlock {
    fn type_name(&self) -> &'static str {
        "correlator_normalize"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .stream_in(ItemKind::Complex)
            .stream_out(ItemKind::Real)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let mut out = io.writer(0);
        let n = inp.available().min(out.space());
        if n > 0 {
            propagate_tags(&inp, &mut out, n);
            self.scratch.clear();
            self.kernel.process(&inp.complex()[..n], &mut self.scratch);
            out.push_real(&self.scratch);
            inp.consume(n);
        }
        if inp.finished() && inp.available() == 0 {
            io.finish();
        }
        Ok(())
    }
}

/// Stream block computing the sliding mean power of a complex stream.
pub struct PowerEnvelopeBlock {
    ma: MovingAverage,
    scratch: Vec<f64>,
}

impl PowerEnvelopeBlock {
    pub fn new(window: usize) -> Self {
        PowerEnvelopeBlock {
            ma: MovingAverage::new(window),
            scratch: Vec::new(),
        }
    }
}

impl Block for PowerEnvelopeBlock {
    fn type_name(&self) -> &'static str {
        "power_envelope"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .stream_in(ItemKind::Complex)
            .stream_out(ItemKind::Real)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let mut out = io.writer(0);
        let n = inp.available().min(out.space());
        if n > 0 {
            propagate_tags(&inp, &mut out, n);
            self.scratch.clear();
            for s in &inp.complex()[..n] {
                self.scratch.push(self.ma.push(s.norm_sqr()));
            }
            out.push_real(&self.scratch);
            inp.consume(n);
        }
        if inp.finished() && inp.available() == 0 {
            io.finish();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moving_average_constant_reaches_c() {
        let y = moving_average(&[3.5; 40], 8);
        for v in &y[8..] {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_average_impulse_spreads_over_window() {
        let mut x = vec![1.0];
        x.extend(vec![0.0; 20]);
        let y = moving_average(&x, 5);
        for v in &y[..5] {
            assert!((v - 0.2).abs() < 1e-12);
        }
        for v in &y[5..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn moving_average_window_one_is_identity() {
        let x = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(moving_average(&x, 1), x);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        let mut k = WindowedVariance::new(16);
        let mut out = Vec::new();
        k.process(&[2.0; 64], &mut out);
        for v in &out[16..] {
            assert!(v.abs() < 1e-9, "variance {v}");
        }
    }

    #[test]
    fn variance_of_alternating_reaches_a_squared() {
        let a = 0.7;
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        let mut k = WindowedVariance::new(10);
        let mut out = Vec::new();
        k.process(&x, &mut out);
        for v in &out[10..] {
            assert!((v - a * a).abs() < 1e-9, "variance {v}");
        }
    }

    #[test]
    fn metric_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<Sample> = (0..500)
            .map(|_| Sample::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let reference: Vec<f64> = {
            let mut k = CorrelatorNormalize::new(32);
            let mut out = Vec::new();
            k.process(&x, &mut out);
            out
        };
        for g in [1e-3, 1.0, 1e3] {
            let scaled: Vec<Sample> = x.iter().map(|&s| s * g).collect();
            let mut k = CorrelatorNormalize::new(32);
            let mut out = Vec::new();
            k.process(&scaled, &mut out);
            for (i, (a, b)) in out.iter().zip(&reference).enumerate() {
                let denom = b.abs().max(1e-30);
                assert!(
                    ((a - b) / denom).abs() < 1e-9,
                    "gain {g} index {i}: {a} vs {b}"
                );
            }
        }
    }

    /// Statistical simulation oracle: on white noise the metric hovers
    /// around 1.
    #[test]
    fn metric_on_white_noise_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<Sample> = (0..100_000)
            .map(|_| {
                // Box-Muller pair.
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                let r = (-2.0 * u1.ln()).sqrt();
                Sample::new(
                    r * (2.0 * std::f64::consts::PI * u2).cos(),
                    r * (2.0 * std::f64::consts::PI * u2).sin(),
                )
            })
            .collect();
        let mut k = CorrelatorNormalize::new(64);
        let mut out = Vec::new();
        k.process(&x, &mut out);
        let mean: f64 = out[64..].iter().sum::<f64>() / (out.len() - 64) as f64;
        assert!((mean - 1.0).abs() < 0.1, "metric mean {mean}");
    }

    /// Synthetic spike oracle: an isolated spike of power P over a floor of
    /// mean power mu yields a peak metric close to P / (mu + P/N).
    #[test]
    fn metric_spike_matches_prediction() {
        let n_win = 64;
        let mu: f64 = 0.01;
        let amp = (mu).sqrt();
        let spike_power: f64 = 400.0 * mu;
        let mut x = vec![Sample::new(amp, 0.0); 500];
        x[300] = Sample::new(spike_power.sqrt(), 0.0);
        let mut k = CorrelatorNormalize::new(n_win);
        let mut out = Vec::new();
        k.process(&x, &mut out);
        let peak = out[300];
        // Window contains the spike itself, diluting the floor.
        let predicted = spike_power / (mu * (n_win - 1) as f64 / n_win as f64 + spike_power / n_win as f64);
        assert!(
            (peak - predicted).abs() / predicted < 0.05,
            "peak {peak} predicted {predicted}"
        );
    }

    #[test]
    fn power_envelope_constant_modulus() {
        let a = 1.3;
        let x: Vec<Sample> = (0..64)
            .map(|i| Sample::from_polar(a, 0.1 * i as f64))
            .collect();
        let env = power_envelope(&x, 8);
        for v in &env[8..] {
            assert!((v - a * a).abs() < 1e-12);
        }
    }

    #[test]
    fn power_envelope_zeros() {
        let env = power_envelope(&vec![Sample::new(0.0, 0.0); 32], 8);
        assert!(env.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_envelope_step_rises_over_window() {
        let n = 8;
        let a = 2.0;
        let mut x = vec![Sample::new(0.0, 0.0); 20];
        x.extend(vec![Sample::new(a, 0.0); 20]);
        let env = power_envelope(&x, n);
        assert!(env[19].abs() < 1e-12);
        // Linear ramp across the window transient.
        for k in 1..=n {
            let expect = a * a * k as f64 / n as f64;
            assert!((env[19 + k] - expect).abs() < 1e-12);
        }
        assert!((env[20 + n] - a * a).abs() < 1e-12);
    }
}
