use crate::device::{Device, CACHELINE};
use crate::error::{Error, Result};

pub const HEADER_BYTES: usize = 64;
/// head and tail each own one cacheline ahead of the cells.
pub const CONTROL_BYTES: usize = 2 * CACHELINE;
pub const MIN_CELL_SIZE: usize = 4096;

/// Per-cell header. Encoded little-endian:
///
/// | off | field       | type |
/// |-----|-------------|------|
/// | 0   | src_rank    | u32  |
/// | 4   | dst_rank    | u32  |
/// | 8   | tag         | u64  |
/// | 16  | total_len   | u64  |
/// | 24  | chunk_index | u32  |
/// | 28  | chunk_count | u32  |
/// | 32  | payload_len | u32  |
/// | 40  | checksum    | u64  | (payload checksum in debug builds, else 0)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MessageHeader {
    pub src_rank: u32,
    pub dst_rank: u32,
    pub tag: u64,
    pub total_len: u64,
    pub chunk_index: u32,
    pub chunk_count: u32,
    pub payload_len: u32,
    pub checksum: u64,
}

impl MessageHeader {
    pub fn encode(&self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0..4].copy_from_slice(&self.src_rank.to_le_bytes());
        b[4..8].copy_from_slice(&self.dst_rank.to_le_bytes());
        b[8..16].copy_from_slice(&self.tag.to_le_bytes());
        b[16..24].copy_from_slice(&self.total_len.to_le_bytes());
        b[24..28].copy_from_slice(&self.chunk_index.to_le_bytes());
        b[28..32].copy_from_slice(&self.chunk_count.to_le_bytes());
        b[32..36].copy_from_slice(&self.payload_len.to_le_bytes());
        b[40..48].copy_from_slice(&self.checksum.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8; HEADER_BYTES]) -> Self {
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        MessageHeader {
            src_rank: u32_at(0),
            dst_rank: u32_at(4),
            tag: u64_at(8),
            total_len: u64_at(16),
            chunk_index: u32_at(24),
            chunk_count: u32_at(28),
            payload_len: u32_at(32),
            checksum: u64_at(40),
        }
    }
}

/// Number of cells a `total_len`-byte message occupies; zero-length
/// messages still take one cell.
pub fn chunk_count(total_len: usize, payload_capacity: usize) -> usize {
    total_len.div_ceil(payload_capacity).max(1)
}

pub fn validate_cell_size(cell_size: usize) -> Result<()> {
    if cell_size < MIN_CELL_SIZE || !cell_size.is_power_of_two() {
        return Err(Error::InvalidCellSize(cell_size));
    }
    Ok(())
}

pub fn validate_depth(depth: usize) -> Result<()> {
    if depth < 2 || !depth.is_power_of_two() {
        return Err(Error::DepthNotPowerOfTwo(depth));
    }
    Ok(())
}

/// One single-producer single-consumer ring of fixed-size cells.
///
/// `head` is written only by the consumer, `tail` only by the producer,
/// both with nt stores. The ring is empty when `head == tail` and full when
/// `(tail + 1) % depth == head`, so it holds at most `depth - 1` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingQueue {
    pub base: usize,
    pub depth: usize,
    pub cell_size: usize,
}

impl RingQueue {
    pub fn bytes(depth: usize, cell_size: usize) -> usize {
        CONTROL_BYTES + depth * cell_size
    }

    pub fn head_offset(&self) -> usize {
        self.base
    }

    pub fn tail_offset(&self) -> usize {
        self.base + CACHELINE
    }

    pub fn cell_offset(&self, index: usize) -> usize {
        self.base + CONTROL_BYTES + index * self.cell_size
    }

    pub fn payload_capacity(&self) -> usize {
        self.cell_size - HEADER_BYTES
    }

    /// Cells currently queued.
    pub fn len(&self, dev: &Device) -> Result<usize> {
        dev.fence();
        let head = dev.nt_load_u64(self.head_offset())? as usize;
        let tail = dev.nt_load_u64(self.tail_offset())? as usize;
        Ok((tail + self.depth - head) % self.depth)
    }

    pub fn is_empty(&self, dev: &Device) -> Result<bool> {
        Ok(self.len(dev)? == 0)
    }

    /// Producer side. Returns `false` when the ring is full.
    pub fn try_enqueue(&self, dev: &Device, header: &MessageHeader, payload: &[u8]) -> Result<bool> {
        if payload.len() > self.payload_capacity() {
            return Err(Error::PayloadTooLarge {
                len: payload.len(),
                capacity: self.payload_capacity(),
            });
        }
        dev.fence();
        let tail = dev.nt_load_u64(self.tail_offset())? as usize;
        let head = dev.nt_load_u64(self.head_offset())? as usize;
        let next = (tail + 1) % self.depth;
        if next == head {
            return Ok(false);
        }
        let mut h = *header;
        h.payload_len = payload.len() as u32;
        h.checksum = if cfg!(debug_assertions) {
            crate::checksum::checksum(payload)
        } else {
            0
        };
        let cell = self.cell_offset(tail);
        dev.write_bytes(cell, &h.encode())?;
        dev.write_bytes(cell + HEADER_BYTES, payload)?;
        dev.flush_range(cell, HEADER_BYTES + payload.len())?;
        dev.fence();
        dev.nt_store_u64(self.tail_offset(), next as u64)?;
        dev.fence();
        Ok(true)
    }

    /// Consumer side: header of the oldest cell, if any, with its index.
    pub fn peek(&self, dev: &Device) -> Result<Option<(usize, MessageHeader)>> {
        dev.fence();
        let tail = dev.nt_load_u64(self.tail_offset())? as usize;
        let head = dev.nt_load_u64(self.head_offset())? as usize;
        if head == tail {
            return Ok(None);
        }
        let mut raw = [0u8; HEADER_BYTES];
        dev.fetch_into(self.cell_offset(head), &mut raw)?;
        let h = MessageHeader::decode(&raw);
        if h.payload_len as usize > self.payload_capacity() {
            return Err(Error::Corrupt(format!(
                "cell payload_len {} exceeds capacity {}",
                h.payload_len,
                self.payload_capacity()
            )));
        }
        Ok(Some((head, h)))
    }

    /// Consumer side: copies the payload of the cell returned by [`peek`]
    /// into `out` (exactly `payload_len` bytes) and releases the cell.
    ///
    /// [`peek`]: RingQueue::peek
    pub fn consume(&self, dev: &Device, index: usize, header: &MessageHeader, out: &mut [u8]) -> Result<()> {
        debug_assert_eq!(out.len(), header.payload_len as usize);
        dev.fetch_into(self.cell_offset(index) + HEADER_BYTES, out)?;
        if cfg!(debug_assertions) && crate::checksum::checksum(out) != header.checksum {
            return Err(Error::Corrupt(format!(
                "payload checksum mismatch in chunk {}/{} from rank {}",
                header.chunk_index, header.chunk_count, header.src_rank
            )));
        }
        dev.fence();
        dev.nt_store_u64(self.head_offset(), ((index + 1) % self.depth) as u64)?;
        dev.fence();
        Ok(())
    }

    pub fn try_dequeue(&self, dev: &Device) -> Result<Option<(MessageHeader, Vec<u8>)>> {
        let Some((index, h)) = self.peek(dev)? else {
            return Ok(None);
        };
        let mut payload = vec![0u8; h.payload_len as usize];
        self.consume(dev, index, &h, &mut payload)?;
        Ok(Some((h, payload)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{CoherenceMode, DeviceConfig};

    fn ring(mode: CoherenceMode, depth: usize) -> (tempfile::TempDir, Device, Device, RingQueue) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DeviceConfig::new(dir.path().join("d")).capacity(4 << 20).mode(mode);
        let q = RingQueue {
            base: 4096,
            depth,
            cell_size: 4096,
        };
        (dir, Device::open(cfg.clone()).unwrap(), Device::open(cfg).unwrap(), q)
    }

    fn hdr(tag: u64) -> MessageHeader {
        MessageHeader {
            tag,
            chunk_count: 1,
            ..Default::default()
        }
    }

    #[test]
    fn header_round_trip() {
        let h = MessageHeader {
            src_rank: 3,
            dst_rank: 1,
            tag: u64::MAX - 1,
            total_len: 1 << 40,
            chunk_index: 2,
            chunk_count: 9,
            payload_len: 65_472,
            checksum: 0xdead_beef,
        };
        assert_eq!(MessageHeader::decode(&h.encode()), h);
    }

    #[test]
    fn chunk_counts() {
        assert_eq!(chunk_count(0, 16_320), 1);
        assert_eq!(chunk_count(1, 65_472), 1);
        // ceil(102_400 / 65_472)
        assert_eq!(chunk_count(102_400, 65_472), 2);
        assert_eq!(chunk_count(8 * 1024, 16 * 1024 - 64), 1);
        assert_eq!(chunk_count(65_472, 65_472), 1);
        assert_eq!(chunk_count(65_473, 65_472), 2);
    }

    #[test]
    fn validation() {
        assert!(validate_depth(3).is_err());
        assert!(validate_depth(1).is_err());
        assert!(validate_depth(8).is_ok());
        assert!(validate_cell_size(2048).is_err());
        assert!(validate_cell_size(12 * 1024).is_err());
        assert!(validate_cell_size(16 * 1024).is_ok());
    }

    #[test]
    fn empty_then_round_trip() {
        let (_d, p, c, q) = ring(CoherenceMode::IncoherentEmulated, 8);
        assert!(c.nt_load_u64(q.head_offset()).is_ok());
        assert!(q.try_dequeue(&c).unwrap().is_none());
        assert!(q.try_enqueue(&p, &hdr(5), b"hello").unwrap());
        let (h, payload) = q.try_dequeue(&c).unwrap().unwrap();
        assert_eq!((h.tag, h.payload_len, payload.as_slice()), (5, 5, &b"hello"[..]));
        assert!(q.try_dequeue(&c).unwrap().is_none());
    }

    #[test]
    fn holds_depth_minus_one() {
        let (_d, p, c, q) = ring(CoherenceMode::Coherent, 8);
        for i in 0..7 {
            assert!(q.try_enqueue(&p, &hdr(i), &[i as u8]).unwrap());
        }
        assert!(!q.try_enqueue(&p, &hdr(7), &[7]).unwrap());
        assert_eq!(q.len(&c).unwrap(), 7);
        for i in 0..7 {
            assert_eq!(q.try_dequeue(&c).unwrap().unwrap().0.tag, i);
        }
    }

    #[test]
    fn fifo_across_wraparound() {
        let (_d, p, c, q) = ring(CoherenceMode::IncoherentEmulated, 4);
        let mut next_out = 0u64;
        for i in 0..50u64 {
            while !q.try_enqueue(&p, &hdr(i), &i.to_le_bytes()).unwrap() {
                let (h, body) = q.try_dequeue(&c).unwrap().unwrap();
                assert_eq!(h.tag, next_out);
                assert_eq!(body, next_out.to_le_bytes());
                next_out += 1;
            }
        }
        while let Some((h, _)) = q.try_dequeue(&c).unwrap() {
            assert_eq!(h.tag, next_out);
            next_out += 1;
        }
        assert_eq!(next_out, 50);
    }

    #[test]
    fn payload_over_capacity_is_rejected() {
        let (_d, p, _c, q) = ring(CoherenceMode::Coherent, 4);
        assert!(matches!(
            q.try_enqueue(&p, &hdr(0), &vec![0; 4096 - 63]),
            Err(Error::PayloadTooLarge { .. })
        ));
        assert!(q.try_enqueue(&p, &hdr(0), &vec![0; 4096 - 64]).unwrap());
    }

    #[test]
    fn incoherent_cell_invisible_until_tail_store() {
        let (_d, p, c, q) = ring(CoherenceMode::IncoherentEmulated, 4);
        // producer writes the cell but has not flushed nor advanced tail
        p.write_bytes(q.cell_offset(0), &hdr(9).encode()).unwrap();
        assert!(q.peek(&c).unwrap().is_none());
        assert!(q.try_enqueue(&p, &hdr(9), b"x").unwrap());
        assert_eq!(q.peek(&c).unwrap().unwrap().1.tag, 9);
    }

    #[cfg(debug_assertions)]
    #[test]
    fn corrupted_payload_is_detected() {
        let (_d, p, c, q) = ring(CoherenceMode::Coherent, 4);
        assert!(q.try_enqueue(&p, &hdr(1), b"payload").unwrap());
        p.write_bytes(q.cell_offset(0) + HEADER_BYTES, b"X").unwrap();
        assert!(matches!(q.try_dequeue(&c), Err(Error::Corrupt(_))));
    }
}
