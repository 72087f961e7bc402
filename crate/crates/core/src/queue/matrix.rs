use std::time::Duration;

use crate::arena::{Arena, ObjHandle};
use crate::error::{Error, Result};
use crate::sync::Backoff;

use super::ring::{validate_cell_size, validate_depth, RingQueue};

pub const DEFAULT_CELL_SIZE: usize = 16 * 1024;
pub const DEFAULT_DEPTH: usize = 64;

/// `nranks²` rings laid out back to back in one arena object. The ring
/// carrying messages from `sender` to `receiver` sits at index
/// `receiver * nranks + sender`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueMatrix {
    pub handle: ObjHandle,
    /// Absolute device offset of ring 0.
    pub base: usize,
    pub nranks: usize,
    pub depth: usize,
    pub cell_size: usize,
}

impl QueueMatrix {
    pub fn object_name(comm: &str) -> String {
        format!("comm.{comm}.queues")
    }

    pub fn object_bytes(nranks: usize, depth: usize, cell_size: usize) -> usize {
        nranks * nranks * RingQueue::bytes(depth, cell_size)
    }

    /// Offset of ring (sender → receiver) relative to the matrix base.
    pub fn ring_offset(nranks: usize, depth: usize, cell_size: usize, sender: usize, receiver: usize) -> usize {
        (receiver * nranks + sender) * RingQueue::bytes(depth, cell_size)
    }

    /// Collective: rank 0 creates the object, the other ranks open it,
    /// retrying until it appears or `timeout` passes.
    pub fn create(
        arena: &Arena,
        comm: &str,
        nranks: usize,
        cell_size: usize,
        depth: usize,
        rank: usize,
        timeout: Option<Duration>,
    ) -> Result<QueueMatrix> {
        validate_cell_size(cell_size)?;
        validate_depth(depth)?;
        if rank >= nranks {
            return Err(Error::InvalidRank { rank, nranks });
        }
        let name = Self::object_name(comm);
        let bytes = Self::object_bytes(nranks, depth, cell_size) as u64;
        let handle = if rank == 0 {
            arena.create(&name, bytes)?
        } else {
            open_when_present(arena, &name, bytes, timeout)?
        };
        Ok(QueueMatrix {
            base: arena.abs_offset(&handle),
            handle,
            nranks,
            depth,
            cell_size,
        })
    }

    pub fn queue(&self, sender: usize, receiver: usize) -> RingQueue {
        assert!(sender < self.nranks && receiver < self.nranks);
        RingQueue {
            base: self.base + Self::ring_offset(self.nranks, self.depth, self.cell_size, sender, receiver),
            depth: self.depth,
            cell_size: self.cell_size,
        }
    }
}

/// Opens `name`, spinning until another rank has created it, and checks
/// its size against the caller's expectation.
pub(crate) fn open_when_present(arena: &Arena, name: &str, bytes: u64, timeout: Option<Duration>) -> Result<ObjHandle> {
    let mut backoff = Backoff::new(timeout);
    let handle = loop {
        match arena.open(name) {
            Ok(h) => break h,
            Err(Error::NotFound(_)) => backoff.snooze("shared object creation")?,
            Err(e) => return Err(e),
        }
    };
    let expected = bytes.div_ceil(64) * 64;
    if handle.size != expected {
        return Err(Error::SizeMismatch {
            name: name.into(),
            expected,
            actual: handle.size,
        });
    }
    Ok(handle)
}
