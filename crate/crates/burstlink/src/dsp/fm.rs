//! Frequency modulation: quadrature discriminator and voltage-controlled
//! oscillator.

use std::f64::consts::TAU;

use crate::runtime::{propagate_tags, Block, BlockError, ItemKind, Signature, WorkIo};
use crate::Sample;

/// y[n] = gain * arg(x[n] * conj(x[n-1])); the first output is 0 because
/// x[-1] is taken as x[0].
pub struct QuadratureDemod {
    gain: f64,
    prev: Option<Sample>,
}

impl QuadratureDemod {
    pub fn new(gain: f64) -> Self {
        assert!(gain != 0.0, "gain must be nonzero");
        QuadratureDemod { gain, prev: None }
    }

    pub fn push(&mut self, x: Sample) -> f64 {
        let prev = self.prev.unwrap_or(x);
        self.prev = Some(x);
        let d = x * prev.conj();
        self.gain * d.im.atan2(d.re)
    }

    pub fn process(&mut self, input: &[Sample], out: &mut Vec<f64>) {
        out.extend(input.iter().map(|&x| self.push(x)));
    }
}

/// Vector form of the quadrature discriminator.
pub fn quadrature_demod(input: &[Sample], gain: f64) -> Vec<f64> {
    let mut k = QuadratureDemod::new(gain);
    let mut out = Vec::with_capacity(input.len());
    k.process(input, &mut out);
    out
}

/// Phase accumulator: y[n] = exp(j*phi[n]), phi[n] = phi[n-1] +
/// sensitivity * deviation[n], phi[-1] = 0.
pub struct Vco {
    sensitivity: f64,
    phase: f64,
}

impl Vco {
    pub fn new(sensitivity: f64) -> Self {
        assert!(sensitivity.is_finite(), "sensitivity must be finite");
        Vco {
            sensitivity,
            phase: 0.0,
        }
    }

    pub fn push(&mut self, deviation: f64) -> Sample {
        self.phase = (self.phase + self.sensitivity * deviation).rem_euclid(TAU);
        Sample::from_polar(1.0, self.phase)
    }

    pub fn process(&mut self, input: &[f64], out: &mut Vec<Sample>) {
        out.extend(input.iter().map(|&d| self.push(d)));
    }
}

/// Vector form of the VCO.
pub fn vco(deviation: &[f64], sensitivity: f64) -> Vec<Sample> {
    let mut k = Vco::new(sensitivity);
    let mut out = Vec::with_capacity(deviation.len());
    k.process(deviation, &mut out);
    out
}

pub struct QuadratureDemodBlock {
    kernel: QuadratureDemod,
    scratch: Vec<f64>,
}

impl QuadratureDemodBlock {
    pub fn new(gain: f64) -> Self {
        QuadratureDemodBlock {
            kernel: QuadratureDemod::new(gain),
            scratch: Vec::new(),
        }
    }
}

impl Block for QuadratureDemodBlock {
    fn type_name(&self) -> &'static str {
        "quadrature_demod"
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

pub struct VcoBlock {
    kernel: Vco,
    scratch: Vec<Sample>,
}

impl VcoBlock {
    pub fn new(sensitivity: f64) -> Self {
        VcoBlock {
            kernel: Vco::new(sensitivity),
            scratch: Vec::new(),
        }
    }
}

impl Block for VcoBlock {
    fn type_name(&self) -> &'static str {
        "vco"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .stream_in(ItemKind::Real)
            .stream_out(ItemKind::Complex)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let mut out = io.writer(0);
        let n = inp.available().min(out.space());
        if n > 0 {
            propagate_tags(&inp, &mut out, n);
            self.scratch.clear();
            self.kernel.process(&inp.real()[..n], &mut self.scratch);
            out.push_complex(&self.scratch);
            inp.consume(n);
        }
        if inp.finished() && inp.available() == 0 {
            io.finish();
        }
        Ok(())
    }
}

/// Zeroes samples outside event spans marked by `burst_len` tags. Keeps a
/// VCO's carrier from leaking into the zero-filled gaps between bursts.
pub struct BurstGate {
    /// Remaining items of the currently open span.
    open: u64,
}

impl BurstGate {
    pub fn new() -> Self {
        BurstGate { open: 0 }
    }
}

impl Default for BurstGate {
    fn default() -> Self {
        Self::new()
    }
}

impl Block for BurstGate {
    fn type_name(&self) -> &'static str {
        "burst_gate"
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
            let base = inp.abs_offset();
            let mut starts: Vec<(u64, u64)> = inp
                .tags()
                .filter(|t| t.key == crate::eventstream::source::BURST_LEN_TAG)
                .filter(|t| t.offset >= base && t.offset < base + n as u64)
                .filter_map(|t| t.value.as_u64().map(|len| (t.offset, len)))
                .collect();
            starts.sort_unstable();
            let mut gated = Vec::with_capacity(n);
            let mut next = starts.into_iter().peekable();
            let xs = inp.complex();
            for (k, &x) in xs[..n].iter().enumerate() {
                let off = base + k as u64;
                if let Some(&(t, len)) = next.peek() {
                    if off == t {
                        self.open = self.open.max(len);
                        next.next();
                    }
                }
                if self.open > 0 {
                    self.open -= 1;
                    gated.push(x);
                } else {
                    gated.push(Sample::new(0.0, 0.0));
                }
            }
            out.push_complex(&gated);
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
    use std::f64::consts::PI;

    #[test]
    fn demod_of_tone_is_constant_frequency() {
        let f = 0.1;
        let x: Vec<Sample> = (0..100)
            .map(|n| Sample::from_polar(1.0, TAU * f * n as f64))
            .collect();
        let y = quadrature_demod(&x, 1.0);
        assert_eq!(y[0], 0.0);
        for (n, &v) in y.iter().enumerate().skip(1) {
            assert!((v - TAU * f).abs() < 1e-9, "n {n}: {v}");
        }
    }

    #[test]
    fn demod_of_constant_is_zero() {
        let x = vec![Sample::new(0.3, -0.4); 10];
        let y = quadrature_demod(&x, 2.0);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn demod_of_negative_tone_negates() {
        let f = 0.05;
        let pos: Vec<Sample> = (0..50)
            .map(|n| Sample::from_polar(1.0, TAU * f * n as f64))
            .collect();
        let neg: Vec<Sample> = (0..50)
            .map(|n| Sample::from_polar(1.0, -TAU * f * n as f64))
            .collect();
        let yp = quadrature_demod(&pos, 1.0);
        let yn = quadrature_demod(&neg, 1.0);
        for (a, b) in yp.iter().zip(&yn).skip(1) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn vco_constant_deviation_is_tone() {
        let sens = TAU * 0.1;
        let y = vco(&[1.0; 64], sens);
        for (n, v) in y.iter().enumerate() {
            let expect = Sample::from_polar(1.0, (TAU * 0.1 * (n + 1) as f64).rem_euclid(TAU));
            assert!((v - expect).norm() < 1e-9, "n {n}");
        }
    }

    #[test]
    fn vco_zero_deviation_is_unity() {
        let y = vco(&[0.0; 16], 1.0);
        for v in y {
            assert!((v - Sample::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn vco_then_demod_recovers_deviation() {
        let sens = 0.3;
        let d: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.17).sin()).collect();
        assert!(d.iter().all(|&v| (sens * v).abs() < PI));
        let y = vco(&d, sens);
        let back = quadrature_demod(&y, 1.0 / sens);
        for (n, (a, b)) in back.iter().zip(&d).enumerate().skip(1) {
            assert!((a - b).abs() < 1e-9, "n {n}: {a} vs {b}");
        }
    }

    #[test]
    fn burst_gate_zeroes_untagged_spans() {
        use crate::runtime::{Flowgraph, Payload, Tag, Termination, VectorSink, VectorSource};
        let samples: Vec<Sample> = (0..20).map(|i| Sample::new(1.0 + i as f64, 0.0)).collect();
        let mut g = Flowgraph::new();
        let src = g.add(
            VectorSource::new(Payload::Complex(samples.clone())).with_tags(vec![Tag::new(
                5,
                crate::eventstream::source::BURST_LEN_TAG,
                4u64,
            )]),
        );
        let gate = g.add(BurstGate::new());
        let (sink, data) = VectorSink::new(ItemKind::Complex);
        let dst = g.add(sink);
        g.connect_stream(src, 0, gate, 0).unwrap();
        g.connect_stream(gate, 0, dst, 0).unwrap();
        g.run(Termination::SourceExhausted).unwrap();
        let out = data.lock().unwrap().payload.complex().unwrap().to_vec();
        for (i, v) in out.iter().enumerate() {
            if (5..9).contains(&i) {
                assert_eq!(*v, samples[i], "index {i} should pass");
            } else {
                assert_eq!(*v, Sample::new(0.0, 0.0), "index {i} should be gated");
            }
        }
    }
}
