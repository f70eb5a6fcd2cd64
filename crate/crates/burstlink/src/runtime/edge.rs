//! Stream edge: a bounded FIFO of items plus in-flight tags.

use std::collections::VecDeque;

use crate::runtime::pdu::{ItemKind, Tag};
use crate::Sample;

/// Default stream edge capacity, in items. Large enough for one maximum
/// burst plus guard.
pub const DEFAULT_EDGE_CAPACITY: usize = 65536;

#[derive(Debug)]
pub(crate) enum ItemBuf {
    Complex(VecDeque<Sample>),
    Real(VecDeque<f64>),
    Bit(VecDeque<u8>),
    Byte(VecDeque<u8>),
}

impl ItemBuf {
    fn new(kind: ItemKind) -> Self {
        match kind {
            ItemKind::Complex => ItemBuf::Complex(VecDeque::new()),
            ItemKind::Real => ItemBuf::Real(VecDeque::new()),
            ItemKind::Bit => ItemBuf::Bit(VecDeque::new()),
            ItemKind::Byte => ItemBuf::Byte(VecDeque::new()),
        }
    }

    fn len(&self) -> usize {
        match self {
            ItemBuf::Complex(b) => b.len(),
            ItemBuf::Real(b) => b.len(),
            ItemBuf::Bit(b) => b.len(),
            ItemBuf::Byte(b) => b.len(),
        }
    }
}

/// One stream connection between a producer port and a consumer port.
#[derive(Debug)]
pub(crate) struct StreamEdge {
    pub(crate) src_block: usize,
    pub(crate) dst_block: usize,
    pub(crate) capacity: usize,
    pub(crate) buf: ItemBuf,
    pub(crate) tags: VecDeque<Tag>,
    /// Absolute index of the first buffered item.
    pub(crate) read_abs: u64,
    /// Absolute index the next produced item will occupy.
    pub(crate) written_abs: u64,
    pub(crate) src_finished: bool,
    pub(crate) high_water: usize,
}

impl StreamEdge {
    pub(crate) fn new(kind: ItemKind, capacity: usize, src_block: usize, dst_block: usize) -> Self {
        StreamEdge {
            src_block,
            dst_block,
            capacity,
            buf: ItemBuf::new(kind),
            tags: VecDeque::new(),
            read_abs: 0,
            written_abs: 0,
            src_finished: false,
            high_water: 0,
        }
    }

    pub(crate) fn kind(&self) -> ItemKind {
        match self.buf {
            ItemBuf::Complex(_) => ItemKind::Complex,
            ItemBuf::Real(_) => ItemKind::Real,
            ItemBuf::Bit(_) => ItemKind::Bit,
            ItemBuf::Byte(_) => ItemKind::Byte,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.buf.len()
    }

    pub(crate) fn space(&self) -> usize {
        self.capacity.saturating_sub(self.buf.len())
    }

    pub(crate) fn make_contiguous(&mut self) {
        match &mut self.buf {
            ItemBuf::Complex(b) => {
                b.make_contiguous();
            }
            ItemBuf::Real(b) => {
                b.make_contiguous();
            }
            ItemBuf::Bit(b) => {
                b.make_contiguous();
            }
            ItemBuf::Byte(b) => {
                b.make_contiguous();
            }
        }
    }

    pub(crate) fn complex_slice(&self) -> &[Sample] {
        match &self.buf {
            ItemBuf::Complex(b) => b.as_slices().0,
            _ => panic!("stream edge is not complex"),
        }
    }

    pub(crate) fn real_slice(&self) -> &[f64] {
        match &self.buf {
            ItemBuf::Real(b) => b.as_slices().0,
            _ => panic!("stream edge is not real"),
        }
    }

    pub(crate) fn bit_slice(&self) -> &[u8] {
        match &self.buf {
            ItemBuf::Bit(b) => b.as_slices().0,
            _ => panic!("stream edge is not bit"),
        }
    }

    pub(crate) fn byte_slice(&self) -> &[u8] {
        match &self.buf {
            ItemBuf::Byte(b) => b.as_slices().0,
            _ => panic!("stream edge is not byte"),
        }
    }

    pub(crate) fn push_complex(&mut self, items: &[Sample]) {
        debug_assert!(
            items.iter().all(|s| s.re.is_finite() && s.im.is_finite()),
            "non-finite sample pushed on stream edge"
        );
        match &mut self.buf {
            ItemBuf::Complex(b) => b.extend(items.iter().copied()),
            _ => panic!("stream edge is not complex"),
        }
        self.after_push(items.len());
    }

    pub(crate) fn push_real(&mut self, items: &[f64]) {
        match &mut self.buf {
            ItemBuf::Real(b) => b.extend(items.iter().copied()),
            _ => panic!("stream edge is not real"),
        }
        self.after_push(items.len());
    }

    pub(crate) fn push_bits(&mut self, items: &[u8]) {
        debug_assert!(items.iter().all(|&b| b <= 1), "bit stream item not 0/1");
        match &mut self.buf {
            ItemBuf::Bit(b) => b.extend(items.iter().copied()),
            _ => panic!("stream edge is not bit"),
        }
        self.after_push(items.len());
    }

    pub(crate) fn push_bytes(&mut self, items: &[u8]) {
        match &mut self.buf {
            ItemBuf::Byte(b) => b.extend(items.iter().copied()),
            _ => panic!("stream edge is not byte"),
        }
        self.after_push(items.len());
    }

    fn after_push(&mut self, n: usize) {
        self.written_abs += n as u64;
        let len = self.buf.len();
        assert!(
            len <= self.capacity,
            "stream buffer overflow: {} > capacity {}",
            len,
            self.capacity
        );
        if len > self.high_water {
            self.high_water = len;
        }
    }

    pub(crate) fn consume(&mut self, n: usize) {
        assert!(n <= self.buf.len(), "consumed more items than available");
        match &mut self.buf {
            ItemBuf::Complex(b) => {
                b.drain(..n);
            }
            ItemBuf::Real(b) => {
                b.drain(..n);
            }
            ItemBuf::Bit(b) => {
                b.drain(..n);
            }
            ItemBuf::Byte(b) => {
                b.drain(..n);
            }
        }
        self.read_abs += n as u64;
        while self
            .tags
            .front()
            .is_some_and(|t| t.offset < self.read_abs)
        {
            self.tags.pop_front();
        }
    }
}
