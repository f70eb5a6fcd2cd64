//! Streaming FIR filtering with integer interpolation.

use crate::dsp::rrc::FirTaps;
use crate::runtime::{propagate_tags, Block, BlockError, ItemKind, Signature, WorkIo};
use crate::Sample;

/// Streaming convolution kernel. With interpolation `I` the output rate is
/// `I` times the input rate: conceptually zero-stuff then filter, implemented
/// as a polyphase bank.
pub struct FirKernel {
    phases: Vec<Vec<Sample>>,
    interp: usize,
    gain: f64,
    /// Delay line, newest first: `delay[j]` holds input `x[n-j]`.
    delay: Vec<Sample>,
}

impl FirKernel {
    pub fn new(taps: &FirTaps, interp: usize) -> Self {
        assert!(interp >= 1, "interpolation must be >= 1");
        let n_phases = interp;
        let mut phases = vec![Vec::new(); n_phases];
        for (k, &c) in taps.coeffs.iter().enumerate() {
            phases[k % interp].push(c);
        }
        let depth = phases.iter().map(Vec::len).max().unwrap_or(1);
        FirKernel {
            phases,
            interp,
            gain: taps.gain,
            delay: vec![Sample::new(0.0, 0.0); depth],
        }
    }

    pub fn interpolation(&self) -> usize {
        self.interp
    }

    /// Filter a chunk; produces `interp * input.len()` output samples.
    pub fn process(&mut self, input: &[Sample], out: &mut Vec<Sample>) {
        for &x in input {
            let last = self.delay.len() - 1;
            self.delay.copy_within(0..last, 1);
            self.delay[0] = x;
            for phase in &self.phases {
                let mut acc = Sample::new(0.0, 0.0);
                for (j, &h) in phase.iter().enumerate() {
                    acc += h * self.delay[j];
                }
                out.push(acc * self.gain);
            }
        }
    }
}

/// One-shot convolution of a finite vector (tail not flushed).
pub fn fir_filter(input: &[Sample], taps: &FirTaps, interp: usize) -> Vec<Sample> {
    let mut k = FirKernel::new(taps, interp);
    let mut out = Vec::with_capacity(input.len() * interp);
    k.process(input, &mut out);
    out
}

/// Upsample symbols to `sps` samples per symbol through a shaping filter
/// (zero-stuff then filter). With unit-energy taps this preserves
/// per-symbol energy, and the TX-shape/RX-matched-filter cascade returns
/// unit amplitude at the symbol instants.
pub fn interpolate(symbols: &[Sample], taps: &FirTaps, sps: usize) -> Vec<Sample> {
    fir_filter(symbols, taps, sps)
}

/// Stream block wrapping [`FirKernel`]. With interpolation 1 the block is
/// 1:1 and propagates tags at stable offsets; rate-changing instances drop
/// tags.
pub struct FirFilterBlock {
    kernel: FirKernel,
    scratch: Vec<Sample>,
}

impl FirFilterBlock {
    pub fn new(taps: &FirTaps, interp: usize) -> Self {
        FirFilterBlock {
            kernel: FirKernel::new(taps, interp),
            scratch: Vec::new(),
        }
    }
}

impl Block for FirFilterBlock {
    fn type_name(&self) -> &'static str {
        "fir_filter"
    }

    fn signature(&self) -> Signature {
        Signature::new()
            .stream_in(ItemKind::Complex)
            .stream_out(ItemKind::Complex)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let mut out = io.writer(0);
        let interp = self.kernel.interpolation();
        let n = inp.available().min(out.space() / interp);
        if n > 0 {
            if interp == 1 {
                propagate_tags(&inp, &mut out, n);
            }
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
