//! Forward error correction: a pluggable block-codec interface with the
//! reference codecs (identity and repetition). LDPC is a declared codec id
//! reserved for external implementations.

use crate::phy::PhyError;

/// Block codec identifier as carried in configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodecId {
    /// n = k identity code.
    None { k: usize },
    /// Each bit repeated r times: n = r * k.
    Repetition { k: usize, r: usize },
    /// Reserved extension point; no implementation ships.
    Ldpc { name: String },
}

impl CodecId {
    /// Parse a config string such as `none`, `rep-2`, `rep-3`, `ldpc:<name>`.
    pub fn parse(s: &str, k: usize) -> Result<CodecId, PhyError> {
        if s == "none" {
            return Ok(CodecId::None { k });
        }
        if let Some(r) = s.strip_prefix("rep-") {
            let r: usize = r
                .parse()
                .map_err(|_| PhyError::UnknownCodec(s.to_string()))?;
            if r < 1 {
                return Err(PhyError::UnknownCodec(s.to_string()));
            }
            return Ok(CodecId::Repetition { k, r });
        }
        if let Some(name) = s.strip_prefix("ldpc:") {
            return Ok(CodecId::Ldpc { name: name.to_string() });
        }
        Err(PhyError::UnknownCodec(s.to_string()))
    }
}

/// A block code mapping k uncoded bits to n coded bits, decoded from soft
/// bits (LLRs, positive means bit 0).
pub trait Codec {
    /// Coded block size in bits.
    fn n(&self) -> usize;
    /// Uncoded block size in bits.
    fn k(&self) -> usize;
    /// Encode one k-bit block into one n-bit block.
    fn encode_block(&self, block: &[u8], out: &mut Vec<u8>);
    /// Decode one n-LLR block into k hard bits.
    fn decode_block(&self, llrs: &[f64], out: &mut Vec<u8>);
}

/// Instantiate the codec behind an id. LDPC ids resolve to
/// `PhyError::UnknownCodec` until an implementation is registered by the
/// embedding application.
pub fn codec_for(id: &CodecId) -> Result<Box<dyn Codec>, PhyError> {
    match id {
        CodecId::None { k } => {
            if *k < 1 {
                return Err(PhyError::UnknownCodec("none with k=0".into()));
            }
            Ok(Box::new(NoneCodec { k: *k }))
        }
        CodecId::Repetition { k, r } => {
            if *k < 1 || *r < 1 {
                return Err(PhyError::UnknownCodec("repetition with zero size".into()));
            }
            Ok(Box::new(RepetitionCodec { k: *k, r: *r }))
        }
        CodecId::Ldpc { name } => Err(PhyError::UnknownCodec(format!(
            "ldpc:{name} is a pluggable extension point; no LDPC codec ships"
        ))),
    }
}

/// Slice an LLR to a hard bit: positive means 0.
#[inline]
pub fn slice_llr(llr: f64) -> u8 {
    if llr > 0.0 {
        0
    } else if llr < 0.0 {
        1
    } else {
        0
    }
}

struct NoneCodec {
    k: usize,
}

impl Codec for NoneCodec {
    fn n(&self) -> usize {
        self.k
    }
    fn k(&self) -> usize {
        self.k
    }
    fn encode_block(&self, block: &[u8], out: &mut Vec<u8>) {
        out.extend_from_slice(block);
    }
    fn decode_block(&self, llrs: &[f64], out: &mut Vec<u8>) {
        out.extend(llrs.iter().map(|&l| slice_llr(l)));
    }
}

struct RepetitionCodec {
    k: usize,
    r: usize,
}

impl Codec for RepetitionCodec {
    fn n(&self) -> usize {
        self.k * self.r
    }
    fn k(&self) -> usize {
        self.k
    }
    fn encode_block(&self, block: &[u8], out: &mut Vec<u8>) {
        for &b in block {
            out.extend(std::iter::repeat(b).take(self.r));
        }
    }
    fn decode_block(&self, llrs: &[f64], out: &mut Vec<u8>) {
        for chunk in llrs.chunks(self.r) {
            let sum: f64 = chunk.iter().sum();
            out.push(slice_llr(sum));
        }
    }
}

/// Encode a bit vector that is a whole number of k-blocks.
pub fn fec_encode(bits: &[u8], id: &CodecId) -> Result<Vec<u8>, PhyError> {
    let codec = codec_for(id)?;
    if bits.len() % codec.k() != 0 {
        return Err(PhyError::LengthNotMultiple {
            len: bits.len(),
            block: codec.k(),
        });
    }
    let mut out = Vec::with_capacity(bits.len() / codec.k() * codec.n());
    for block in bits.chunks(codec.k()) {
        codec.encode_block(block, &mut out);
    }
    Ok(out)
}

/// Decode a soft-bit vector that is a whole number of n-blocks.
pub fn fec_decode(llrs: &[f64], id: &CodecId) -> Result<Vec<u8>, PhyError> {
    let codec = codec_for(id)?;
    if llrs.len() % codec.n() != 0 {
        return Err(PhyError::LengthNotMultiple {
            len: llrs.len(),
            block: codec.n(),
        });
    }
    let mut out = Vec::with_capacity(llrs.len() / codec.n() * codec.k());
    for block in llrs.chunks(codec.n()) {
        codec.decode_block(block, &mut out);
    }
    Ok(out)
}
