//! Post-Start-Complete-Wait flags and per-target window locks.

use std::time::Duration;

use crate::device::{Device, CACHELINE};
use crate::error::Result;

use super::backoff::Backoff;
use super::bakery::BakeryLock;

/// Flag array allocated alongside an RMA window.
///
/// Layout, one cacheline per word, `n` = number of ranks:
/// - `post(o, t)` at line `o*n + t`: set by target `t`, reset by origin `o`
/// - `complete(o, t)` at line `n*n + o*n + t`: set by `o`, reset by `t`
/// - lock cells of target `t` at line `2*n*n + 2*n*t`: `n` choosing words
///   then `n` ticket words
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncArray {
    pub base: usize,
    pub nranks: usize,
}

impl SyncArray {
    pub const fn bytes(nranks: usize) -> usize {
        4 * nranks * nranks * CACHELINE
    }

    pub fn post_flag(&self, origin: usize, target: usize) -> usize {
        self.base + (origin * self.nranks + target) * CACHELINE
    }

    pub fn complete_flag(&self, origin: usize, target: usize) -> usize {
        let n = self.nranks;
        self.base + (n * n + origin * n + target) * CACHELINE
    }

    pub fn lock(&self, target: usize) -> BakeryLock {
        let n = self.nranks;
        BakeryLock {
            base: self.base + (2 * n * n + 2 * n * target) * CACHELINE,
            participants: n,
            stride: CACHELINE,
        }
    }

    /// Target side: opens an exposure epoch for `origins`.
    pub fn post(&self, dev: &Device, me: usize, origins: &[usize]) -> Result<()> {
        dev.fence();
        for &o in origins {
            dev.nt_store_u64(self.post_flag(o, me), 1)?;
        }
        dev.fence();
        Ok(())
    }

    /// Target side: waits for every origin's Complete, then resets the flags.
    pub fn wait(&self, dev: &Device, me: usize, origins: &[usize], timeout: Option<Duration>) -> Result<()> {
        self.spin_all(
            dev,
            origins.iter().map(|&o| self.complete_flag(o, me)),
            timeout,
            "complete flags",
        )?;
        for &o in origins {
            dev.nt_store_u64(self.complete_flag(o, me), 0)?;
        }
        dev.fence();
        Ok(())
    }

    /// Origin side: waits for every target's Post, then resets the flags.
    pub fn start(&self, dev: &Device, me: usize, targets: &[usize], timeout: Option<Duration>) -> Result<()> {
        self.spin_all(
            dev,
            targets.iter().map(|&t| self.post_flag(me, t)),
            timeout,
            "post flags",
        )?;
        for &t in targets {
            dev.nt_store_u64(self.post_flag(me, t), 0)?;
        }
        dev.fence();
        Ok(())
    }

    /// Origin side: closes the access epoch. Put data was already flushed
    /// by each put; the fence orders it before the flag stores.
    pub fn complete(&self, dev: &Device, me: usize, targets: &[usize]) -> Result<()> {
        dev.fence();
        for &t in targets {
            dev.nt_store_u64(self.complete_flag(me, t), 1)?;
        }
        dev.fence();
        Ok(())
    }

    fn spin_all(
        &self,
        dev: &Device,
        flags: impl Iterator<Item = usize>,
        timeout: Option<Duration>,
        what: &'static str,
    ) -> Result<()> {
        let flags: Vec<usize> = flags.collect();
        let mut seen = 0;
        Backoff::new(timeout).until(what, || {
            while seen < flags.len() {
                dev.fence();
                if dev.nt_load_u64(flags[seen])? == 0 {
                    return Ok(false);
                }
                seen += 1;
            }
            Ok(true)
        })
    }
}
