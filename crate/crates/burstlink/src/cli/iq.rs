//! Raw IQ sample files: interleaved complex pairs of 32-bit little-endian
//! IEEE-754 floats, no header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cli::CliError;
use crate::runtime::{Block, BlockError, ItemKind, Signature, WorkIo};
use crate::Sample;

/// Read a whole IQ file. A trailing odd 32-bit word means a truncated final
/// sample pair.
pub fn read_iq_file(path: &Path) -> Result<Vec<Sample>, CliError> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)
        .map_err(|e| CliError::Io(e.to_string()))?;
    if bytes.len() % 4 != 0 {
        return Err(CliError::MalformedFile(format!(
            "{}: length {} is not a whole number of 32-bit words",
            path.display(),
            bytes.len()
        )));
    }
    let words = bytes.len() / 4;
    if words % 2 != 0 {
        return Err(CliError::MalformedFile(format!(
            "{}: odd number of 32-bit words (truncated final sample pair)",
            path.display()
        )));
    }
    let mut out = Vec::with_capacity(words / 2);
    for pair in bytes.chunks_exact(8) {
        let re = f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]);
        let im = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]);
        out.push(Sample::new(re as f64, im as f64));
    }
    Ok(out)
}

pub fn write_iq_file(path: &Path, samples: &[Sample]) -> Result<(), CliError> {
    let mut f = BufWriter::new(
        File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
    );
    for s in samples {
        f.write_all(&(s.re as f32).to_le_bytes())
            .and_then(|_| f.write_all(&(s.im as f32).to_le_bytes()))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    f.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

/// Streams an IQ file into a flowgraph.
pub struct IqFileSource {
    reader: BufReader<File>,
    done: bool,
    carry: Vec<u8>,
}

impl IqFileSource {
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(IqFileSource {
            reader: BufReader::new(f),
            done: false,
            carry: Vec::new(),
        })
    }
}

impl Block for IqFileSource {
    fn type_name(&self) -> &'static str {
        "iq_file_source"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_out(ItemKind::Complex)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        if self.done {
            io.finish();
            return Ok(());
        }
        let mut out = io.writer(0);
        let space = out.space().min(16384);
        if space == 0 {
            return Ok(());
        }
        let want = space * 8 - self.carry.len();
        let mut buf = vec![0u8; want];
        let mut read = 0;
        while read < want {
            match self.reader.read(&mut buf[read..]) {
                Ok(0) => break,
                Ok(n) => read += n,
                Err(e) => return Err(BlockError::new(format!("iq read: {e}"))),
            }
        }
        buf.truncate(read);
        let mut bytes = std::mem::take(&mut self.carry);
        bytes.extend_from_slice(&buf);
        let whole = bytes.len() / 8 * 8;
        self.carry = bytes.split_off(whole);
        let mut samples = Vec::with_capacity(whole / 8);
        for pair in bytes.chunks_exact(8) {
            let re = f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]);
            let im = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]);
            samples.push(Sample::new(re as f64, im as f64));
        }
        out.push_complex(&samples);
        if read < want {
            self.done = true;
            if !self.carry.is_empty() {
                io.count("truncated_tail", 1);
                log::warn!("iq file ends mid-sample: {} stray bytes", self.carry.len());
            }
            io.finish();
        }
        Ok(())
    }
}

/// Writes a complex stream to an IQ file as it flows.
pub struct IqFileSink {
    writer: BufWriter<File>,
}

impl IqFileSink {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(IqFileSink {
            writer: BufWriter::new(f),
        })
    }
}

impl Block for IqFileSink {
    fn type_name(&self) -> &'static str {
        "iq_file_sink"
    }

    fn signature(&self) -> Signature {
        Signature::new().stream_in(ItemKind::Complex)
    }

    fn work(&mut self, io: &mut WorkIo) -> Result<(), BlockError> {
        let mut inp = io.reader(0);
        let n = inp.available();
        for s in &inp.complex()[..n] {
            self.writer
                .write_all(&(s.re as f32).to_le_bytes())
                .and_then(|_| self.writer.write_all(&(s.im as f32).to_le_bytes()))
                .map_err(|e| BlockError::new(format!("iq write: {e}")))?;
        }
        inp.consume(n);
        if inp.finished() {
            self.writer
                .flush()
                .map_err(|e| BlockError::new(format!("iq flush: {e}")))?;
        }
        Ok(())
    }
}
