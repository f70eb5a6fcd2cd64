//! Message-domain data types: polymorphic values, PDUs, and stream tags.

use std::collections::BTreeMap;
use std::fmt;

use crate::Sample;

/// Scalar / string / vector value carried by tags and PDU metadata.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    U64(u64),
    I64(i64),
    F64(f64),
    Str(String),
    VecF64(Vec<f64>),
    VecU8(Vec<u8>),
}

impl Value {
    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            Value::U64(v) => Some(v),
            Value::I64(v) if v >= 0 => Some(v as u64),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::F64(v) => Some(v),
            Value::U64(v) => Some(v as f64),
            Value::I64(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(v) => write!(f, "{v}"),
            Value::U64(v) => write!(f, "{v}"),
            Value::I64(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v}"),
            Value::VecF64(v) => write!(f, "{v:?}"),
            Value::VecU8(v) => write!(f, "{v:?}"),
        }
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::U64(v)
    }
}
impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::I64(v)
    }
}
impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::F64(v)
    }
}
impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}
impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}
impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

/// Item kind flowing on a stream edge or stored in a PDU payload.
///
/// `Real` doubles as the soft-bit (LLR) kind in the message domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Complex,
    Real,
    Bit,
    Byte,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ItemKind::Complex => "complex",
            ItemKind::Real => "real",
            ItemKind::Bit => "bit",
            ItemKind::Byte => "byte",
        };
        f.write_str(s)
    }
}

/// Uniform payload vector with a declared element kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Unpacked bits, one per element, values 0/1.
    Bits(Vec<u8>),
    Bytes(Vec<u8>),
    /// Real values; used for soft bits (LLRs, positive means bit 0) and for
    /// real-valued sample chunks.
    Real(Vec<f64>),
    Complex(Vec<Sample>),
}

impl Payload {
    pub fn kind(&self) -> ItemKind {
        match self {
            Payload::Bits(_) => ItemKind::Bit,
            Payload::Bytes(_) => ItemKind::Byte,
            Payload::Real(_) => ItemKind::Real,
            Payload::Complex(_) => ItemKind::Complex,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::Bits(v) => v.len(),
            Payload::Bytes(v) => v.len(),
            Payload::Real(v) => v.len(),
            Payload::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bits(&self) -> Option<&[u8]> {
        match self {
            Payload::Bits(v) => Some(v),
            _ => None,
        }
    }

    pub fn real(&self) -> Option<&[f64]> {
        match self {
            Payload::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn complex(&self) -> Option<&[Sample]> {
        match self {
            Payload::Complex(v) => Some(v),
            _ => None,
        }
    }

    pub fn bytes(&self) -> Option<&[u8]> {
        match self {
            Payload::Bytes(v) => Some(v),
            _ => None,
        }
    }
}

/// Protocol data unit: a metadata dictionary plus a uniform payload vector.
///
/// PDUs are the unit of message-domain processing and the only message type
/// the runtime routes. Metadata keys are unique by construction (`BTreeMap`),
/// which also makes iteration order deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdu {
    pub meta: BTreeMap<String, Value>,
    pub payload: Payload,
}

impl Pdu {
    pub fn new(payload: Payload) -> Self {
        Pdu {
            meta: BTreeMap::new(),
            payload,
        }
    }

    pub fn bits(bits: Vec<u8>) -> Self {
        Pdu::new(Payload::Bits(bits))
    }

    pub fn bytes(bytes: Vec<u8>) -> Self {
        Pdu::new(Payload::Bytes(bytes))
    }

    pub fn real(vals: Vec<f64>) -> Self {
        Pdu::new(Payload::Real(vals))
    }

    pub fn complex(samples: Vec<Sample>) -> Self {
        Pdu::new(Payload::Complex(samples))
    }

    /// Empty-payload PDU; used for pure control messages.
    pub fn control() -> Self {
        Pdu::bits(Vec::new())
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<Value>) {
        self.meta.insert(key.to_string(), value.into());
    }

    pub fn meta_u64(&self, key: &str) -> Option<u64> {
        self.meta.get(key).and_then(Value::as_u64)
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(Value::as_f64)
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).and_then(Value::as_str)
    }

    pub fn meta_bool(&self, key: &str) -> Option<bool> {
        self.meta.get(key).and_then(Value::as_bool)
    }
}

/// Out-of-band annotation pinned to an absolute stream offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Tag {
    /// Absolute item index, counted from the start of the stream.
    pub offset: u64,
    pub key: String,
    pub value: Value,
}

impl Tag {
    pub fn new(offset: u64, key: &str, value: impl Into<Value>) -> Self {
        Tag {
            offset,
            key: key.to_string(),
            value: value.into(),
        }
    }
}
