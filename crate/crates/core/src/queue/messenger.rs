use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use crate::device::Device;
use crate::error::{Error, Result};
use crate::sync::Backoff;

use super::matrix::QueueMatrix;
use super::ring::{chunk_count, MessageHeader, RingQueue};

/// Completion information for a received message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Status {
    pub source: usize,
    pub tag: u64,
    pub len: usize,
    /// Cells the message occupied in the ring.
    pub chunks: usize,
}

/// A message pulled off a ring before anyone asked for it.
#[derive(Debug)]
struct Pending {
    tag: u64,
    chunks: usize,
    received: usize,
    data: Vec<u8>,
}

impl Pending {
    fn complete(&self) -> bool {
        self.received == self.chunks
    }
}

/// Two-sided message engine of one rank: blocking tagged send/recv over
/// the queue matrix, with a private unexpected-message list per source.
#[derive(Debug)]
pub struct Messenger {
    dev: Arc<Device>,
    matrix: QueueMatrix,
    rank: usize,
    pending: Vec<VecDeque<Pending>>,
    timeout: Option<Duration>,
}

impl Messenger {
    pub fn new(dev: Arc<Device>, matrix: QueueMatrix, rank: usize) -> Self {
        let pending = (0..matrix.nranks).map(|_| VecDeque::new()).collect();
        Messenger {
            dev,
            matrix,
            rank,
            pending,
            timeout: None,
        }
    }

    /// Bounds every blocking wait; `None` waits forever.
    pub fn set_timeout(&mut self, timeout: Option<Duration>) {
        self.timeout = timeout;
    }

    pub fn matrix(&self) -> &QueueMatrix {
        &self.matrix
    }

    pub fn payload_capacity(&self) -> usize {
        self.matrix.cell_size - super::ring::HEADER_BYTES
    }

    fn check_rank(&self, r: usize) -> Result<()> {
        if r >= self.matrix.nranks {
            return Err(Error::InvalidRank {
                rank: r,
                nranks: self.matrix.nranks,
            });
        }
        Ok(())
    }

    /// Blocking send. The message is split into cell-sized chunks which are
    /// enqueued in order; while the ring is full, inbound rings are drained
    /// so that two ranks sending to each other cannot deadlock.
    pub fn send(&mut self, dst: usize, tag: u64, data: &[u8]) -> Result<()> {
        self.check_rank(dst)?;
        let ring = self.matrix.queue(self.rank, dst);
        let cap = ring.payload_capacity();
        let count = chunk_count(data.len(), cap);
        let mut header = MessageHeader {
            src_rank: self.rank as u32,
            dst_rank: dst as u32,
            tag,
            total_len: data.len() as u64,
            chunk_count: count as u32,
            ..Default::default()
        };
        let mut backoff = Backoff::new(self.timeout);
        for k in 0..count {
            let chunk = &data[(k * cap).min(data.len())..((k + 1) * cap).min(data.len())];
            header.chunk_index = k as u32;
            while !ring.try_enqueue(&self.dev, &header, chunk)? {
                if !self.progress()? {
                    backoff.snooze("send queue space")?;
                }
            }
            backoff.reset();
        }
        Ok(())
    }

    /// Blocking receive of the next message from `src` carrying `tag`.
    /// Messages with other tags are set aside for later receives. When the
    /// matching message is larger than `buf` it is consumed and
    /// [`Error::BufferTooSmall`] reports its length.
    pub fn recv(&mut self, src: usize, tag: u64, buf: &mut [u8]) -> Result<Status> {
        self.check_rank(src)?;
        let ring = self.matrix.queue(src, self.rank);
        let mut backoff = Backoff::new(self.timeout);
        loop {
            if let Some(i) = self.pending[src].iter().position(|p| p.complete() && p.tag == tag) {
                let p = self.pending[src].remove(i).unwrap();
                if p.data.len() > buf.len() {
                    return Err(Error::BufferTooSmall {
                        len: p.data.len(),
                        buf: buf.len(),
                    });
                }
                buf[..p.data.len()].copy_from_slice(&p.data);
                return Ok(Status {
                    source: src,
                    tag,
                    len: p.data.len(),
                    chunks: p.chunks,
                });
            }
            let partial = self.pending[src].back().is_some_and(|p| !p.complete());
            if !partial {
                if let Some((index, h)) = ring.peek(&self.dev)? {
                    if h.chunk_index == 0 && h.tag == tag && h.total_len as usize <= buf.len() {
                        return self.recv_direct(&ring, src, index, h, buf);
                    }
                }
            }
            if self.pump(src)? {
                backoff.reset();
            } else {
                backoff.snooze("incoming message")?;
            }
        }
    }

    /// Receives a message of unknown length.
    pub fn recv_vec(&mut self, src: usize, tag: u64) -> Result<(Status, Vec<u8>)> {
        self.check_rank(src)?;
        let mut backoff = Backoff::new(self.timeout);
        loop {
            if let Some(i) = self.pending[src].iter().position(|p| p.complete() && p.tag == tag) {
                let p = self.pending[src].remove(i).unwrap();
                let status = Status {
                    source: src,
                    tag,
                    len: p.data.len(),
                    chunks: p.chunks,
                };
                return Ok((status, p.data));
            }
            if self.pump(src)? {
                backoff.reset();
            } else {
                backoff.snooze("incoming message")?;
            }
        }
    }

    fn validate(&self, src: usize, h: &MessageHeader, expect_index: usize) -> Result<()> {
        let cap = self.payload_capacity();
        let chunks = chunk_count(h.total_len as usize, cap);
        let k = h.chunk_index as usize;
        let expected_len = (h.total_len as usize).saturating_sub(k * cap).min(cap);
        if h.src_rank as usize != src
            || h.dst_rank as usize != self.rank
            || h.chunk_count as usize != chunks
            || k != expect_index
            || h.payload_len as usize != expected_len
        {
            return Err(Error::Corrupt(format!(
                "unexpected cell on ring {src}->{}: {h:?} (wanted chunk {expect_index})",
                self.rank
            )));
        }
        Ok(())
    }

    fn recv_direct(
        &mut self,
        ring: &RingQueue,
        src: usize,
        mut index: usize,
        mut h: MessageHeader,
        buf: &mut [u8],
    ) -> Result<Status> {
        let cap = ring.payload_capacity();
        let count = h.chunk_count as usize;
        let mut backoff = Backoff::new(self.timeout);
        for k in 0..count {
            if k > 0 {
                loop {
                    if let Some(next) = ring.peek(&self.dev)? {
                        (index, h) = next;
                        break;
                    }
                    backoff.snooze("next message chunk")?;
                }
                backoff.reset();
            }
            self.validate(src, &h, k)?;
            let start = k * cap;
            ring.consume(&self.dev, index, &h, &mut buf[start..start + h.payload_len as usize])?;
        }
        Ok(Status {
            source: src,
            tag: h.tag,
            len: h.total_len as usize,
            chunks: count,
        })
    }

    /// Moves one cell from ring (src → self) into the pending list.
    fn pump(&mut self, src: usize) -> Result<bool> {
        let ring = self.matrix.queue(src, self.rank);
        let Some((index, h)) = ring.peek(&self.dev)? else {
            return Ok(false);
        };
        let cap = ring.payload_capacity();
        let partial = self.pending[src].back().is_some_and(|p| !p.complete());
        if !partial {
            self.validate(src, &h, 0)?;
            self.pending[src].push_back(Pending {
                tag: h.tag,
                chunks: h.chunk_count as usize,
                received: 0,
                data: vec![0u8; h.total_len as usize],
            });
        }
        let expect = self.pending[src].back().unwrap().received;
        self.validate(src, &h, expect)?;
        let p = self.pending[src].back_mut().unwrap();
        if h.tag != p.tag {
            return Err(Error::Corrupt(format!(
                "chunk tag {} inside message tag {}",
                h.tag, p.tag
            )));
        }
        let start = expect * cap;
        ring.consume(&self.dev, index, &h, &mut p.data[start..start + h.payload_len as usize])?;
        p.received += 1;
        Ok(true)
    }

    /// Drains every inbound ring into the pending lists. Returns whether
    /// anything moved.
    pub fn progress(&mut self) -> Result<bool> {
        let mut moved = false;
        for src in 0..self.matrix.nranks {
            while self.pump(src)? {
                moved = true;
            }
        }
        Ok(moved)
    }

    /// Messages (complete or partial) held in the unexpected lists.
    pub fn unexpected(&self) -> usize {
        self.pending.iter().map(|p| p.len()).sum()
    }
}
