//! Simulated transmission channel: AWGN, carrier frequency offset, fixed
//! phase, and integer delay.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::runtime::{propagate_tags, Block, BlockError, ItemKind, Signature, WorkIo};
use crate::Sample;

/// Seeded Gaussian pair generator (Box-Muller over ChaCha8).
pub struct GaussianGen {
    rng: ChaCha8Rng,
}

impl GaussianGen {
    pub fn new(seed: u64) -> Self {
        GaussianGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One pair of independent standard normal deviates.
    pub fn next_pair(&mut self) -> (f64, f64) {
        let u1: f64 = 1.0 - self.rng.random::<f64>(); // (0, 1]
        let u2: f64 = self.rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// One complex sample with the given per-component standard deviation.
    pub fn next_complex(&mut self, sigma: f64) -> Sample {
        let (a, b) = self.next_pair();
        Sample::new(sigma * a, sigma * b)
    }
}

#[derive(Debug, Clone)]
pub struct ChannelParams {
    /// Per-component standard deviation of the added complex Gaussian noise.
    pub noise_voltage: f64,
    /// Carrier frequency offset in cycles per sample.
    pub cfo: f64,
    /// Fixed phase rotation in radians.
    pub phase0: f64,
    /// Integer sample delay.
    pub integer_delay: usize,
    pub seed: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            noise_voltage: 0.0,
            cfo: 0.0,
            phase0: 0.0,
            integer_delay: 0,
            seed: 0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.noise_voltage >= 0.0 && self.noise_voltage.is_finite()) {
            return Err(format!("noise_voltage must be >= 0, got {}", self.noise_voltage));
        }
        if !(self.cfo.abs() < 0.5) {
            return Err(format!("|cfo| must be < 0.5 cycles/sample, got {}", self.cfo));
        }
        if !self.phase0.is_finite() {
            return Err("phase0 must be finite".into());
        }
        Ok(())
    }
}

/// y[n] = x[n - delay] * exp(j*(2*pi*cfo*n + phase0)) + w[n], with w seeded
/// complex Gaussian noise. 1:1 and deterministic for a given seed.
pub struct ChannelKernel {
    params: ChannelParams,
    delay_line: VecDeque<Sample>,
    noise: GaussianGen,
    /// Absolute output index of the next sample.
    n: u64,
}

impl ChannelKernel {
    pub fn new(params: ChannelParams) -> Self {
        params.validate().expect("invalid channel parameters");
        ChannelKernel {
            delay_line: VecDeque::from(vec![Sample::new(0.0, 0.0); params.integer_delay]),
            noise: GaussianGen::new(params.seed),
            params,
            n: 0,
        }
    }

    pub fn push(&mut self, x: Sample) -> Sample {
        self.delay_line.push_back(x);
        let delayed = self.delay_line.pop_front().expect("delay line prefilled");
        // Phase from the absolute index via the fractional cycle count, so
        // long runs do not lose precision to a large accumulated angle.
        let angle = TAU * (self.params.cfo * self.n as f64).fract() + self.params.phase0;
        self.n += 1;
        let rotated = delayed * Sample::from_polar(1.0, angle);
        if self.params.noise_voltage > 0.0 {
            rotated + self.noise.next_complex(self.params.noise_voltage)
        } else {
            rotated
        }
    }

    pub fn process(&mut self, input: &[Sample], out: &mut Vec<Sample>) {
        out.extend(input.iter().map(|&x| self.push(x)));
    }
}

/// Vector form of the channel.
pub fn channel(input: &[Sample], params: ChannelParams) -> Vec<Sample> {
    let mut k = ChannelKernel::new(params);
    let mut out = Vec::with_capacity(input.len());
    k.process(input, &mut out);
    out
}

pub struct ChannelBlock {
    kernel: ChannelKernel,
    scratch: Vec<Sample>,
}

impl ChannelBlock {
    pub fn new(params: ChannelParams) -> Self {
        ChannelBlock {
            kernel: ChannelKernel::new(params),
            scratch: Vec::new(),
        }
    }
}

impl Block for ChannelBlock {
    fn type_name(&self) -> &'static str {
        "channel"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .stream_in(ItemKind::Complex)
            .stream_out(ItemKind::Complex)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let mut out = io.writer(0);
        let n = inp.available().min(out.space());
        if n > 0 {
            propagate_tags(&inp, &mut out, n);
            self.scratch.clear();
            self.kernel.process(&inp.complex()[..n], &mut self.scratch);
            out.push_complex(&self.scratch);
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

    fn tone(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample::from_polar(1.0, 0.03 * i as f64))
            .collect()
    }

    #[test]
    fn clean_channel_is_identity() {
        let x = tone(100);
        let y = channel(&x, ChannelParams::default());
        assert_eq!(x, y);
    }

    #[test]
    fn cfo_rotates_by_definition() {
        let f = 0.01;
        let x = tone(200);
        let y = channel(
            &x,
            ChannelParams {
                cfo: f,
                ..ChannelParams::default()
            },
        );
        for (n, (a, b)) in x.iter().zip(&y).enumerate() {
            let expect = a * Sample::from_polar(1.0, TAU * (f * n as f64).fract());
            assert!((b - expect).norm() < 1e-12, "n {n}");
        }
    }

    #[test]
    fn integer_delay_shifts_with_zero_fill() {
        let x = tone(50);
        let y = channel(
            &x,
            ChannelParams {
                integer_delay: 7,
                ..ChannelParams::default()
            },
        );
        assert_eq!(y.len(), x.len());
        for v in &y[..7] {
            assert_eq!(*v, Sample::new(0.0, 0.0));
        }
        assert_eq!(&y[7..], &x[..43]);
    }

    /// Statistical estimate: measured per-component noise variance within 3%
    /// of sigma^2 over 1e6 samples.
    #[test]
    fn noise_variance_matches_sigma() {
        let sigma = 0.35;
        let zeros = vec![Sample::new(0.0, 0.0); 1_000_000];
        let y = channel(
            &zeros,
            ChannelParams {
                noise_voltage: sigma,
                seed: 99,
                ..ChannelParams::default()
            },
        );
        let var_re: f64 = y.iter().map(|s| s.re * s.re).sum::<f64>() / y.len() as f64;
        let var_im: f64 = y.iter().map(|s| s.im * s.im).sum::<f64>() / y.len() as f64;
        for v in [var_re, var_im] {
            assert!(
                (v - sigma * sigma).abs() / (sigma * sigma) < 0.03,
                "variance {v}, expected {}",
                sigma * sigma
            );
        }
    }

    #[test]
    fn seeded_channel_is_reproducible() {
        let x = tone(5000);
        let params = ChannelParams {
            noise_voltage: 0.5,
            cfo: 0.004,
            phase0: 1.0,
            integer_delay: 3,
            seed: 1234,
        };
        let a = channel(&x, params.clone());
        let b = channel(&x, params);
        assert_eq!(a, b);
    }
}
