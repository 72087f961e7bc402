use std::time::Duration;

use crate::device::{Device, CACHELINE};
use crate::error::Result;

use super::backoff::Backoff;

/// Sequence-number barrier: one cacheline per rank, each written only by
/// its owner and never decreasing.
#[derive(Debug)]
pub struct SeqBarrier {
    base: usize,
    nranks: usize,
    rank: usize,
    local: u64,
}

impl SeqBarrier {
    pub const fn bytes(max_ranks: usize) -> usize {
        max_ranks * CACHELINE
    }

    /// `base` is the absolute device offset of `seq[0]`.
    pub fn new(base: usize, nranks: usize, rank: usize) -> Self {
        assert!(rank < nranks);
        SeqBarrier {
            base,
            nranks,
            rank,
            local: 0,
        }
    }

    pub fn seq_offset(&self, r: usize) -> usize {
        self.base + r * CACHELINE
    }

    pub fn local_seq(&self) -> u64 {
        self.local
    }

    pub fn wait(&mut self, dev: &Device, timeout: Option<Duration>) -> Result<()> {
        self.local += 1;
        let target = self.local;
        dev.nt_store_u64(self.seq_offset(self.rank), target)?;
        dev.fence();
        // Ranks already seen at the target need not be polled again.
        let mut r = 0;
        Backoff::new(timeout).until("barrier peers", || {
            while r < self.nranks {
                dev.fence();
                if dev.nt_load_u64(self.seq_offset(r))? < target {
                    return Ok(false);
                }
                r += 1;
            }
            Ok(true)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceConfig;

    #[test]
    fn single_rank_returns_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let dev = Device::open(DeviceConfig::new(dir.path().join("d")).capacity(4096)).unwrap();
        let mut b = SeqBarrier::new(0, 1, 0);
        b.wait(&dev, Some(Duration::from_millis(10))).unwrap();
        b.wait(&dev, Some(Duration::from_millis(10))).unwrap();
        assert_eq!(b.local_seq(), 2);
        assert_eq!(dev.nt_load_u64(0).unwrap(), 2);
    }

    #[test]
    fn missing_peer_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let dev = Device::open(DeviceConfig::new(dir.path().join("d")).capacity(4096)).unwrap();
        let mut b = SeqBarrier::new(0, 2, 0);
        assert!(b.wait(&dev, Some(Duration::from_millis(20))).is_err());
    }
}
