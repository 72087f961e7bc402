//! One-sided communication: a window is one arena object holding every
//! rank's segment back to back, plus a companion PSCW/lock flag array.
//! put and get are plain copies into and out of a peer's segment, wrapped
//! in the flush/fence discipline.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use crate::arena::{Arena, ObjHandle};
use crate::device::{Device, CACHELINE};
use crate::error::{Error, Result};
use crate::queue::open_when_present;
use crate::sync::SyncArray;

/// Fault injection read from `CMPI_FAULT` (comma separated). Used only to
/// prove that the end-to-end tests notice a broken coherence discipline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    pub skip_put_flush: bool,
}

impl Faults {
    pub fn from_env() -> Faults {
        let faults = std::env::var("CMPI_FAULT").unwrap_or_default();
        Faults {
            skip_put_flush: faults.split(',').any(|f| f.trim() == "skip-put-flush"),
        }
    }
}

pub fn window_object_name(win_name: &str) -> String {
    format!("win.{win_name}")
}

pub fn sync_object_name(win_name: &str) -> String {
    format!("win.{win_name}.sync")
}

#[derive(Debug)]
pub struct Window {
    dev: Arc<Device>,
    name: String,
    rank: usize,
    nranks: usize,
    seg_size: usize,
    handle: ObjHandle,
    base: usize,
    sync: SyncArray,
    sync_handle: ObjHandle,
    access: Option<Vec<usize>>,
    exposure: Option<Vec<usize>>,
    locks: BTreeSet<usize>,
    timeout: Option<Duration>,
    faults: Faults,
}

impl Window {
    /// Rank 0 creates the window and flag objects; other ranks open them
    /// by name. The caller is responsible for the closing barrier.
    pub fn allocate(
        arena: &Arena,
        win_name: &str,
        nranks: usize,
        rank: usize,
        seg_size: usize,
        timeout: Option<Duration>,
    ) -> Result<Window> {
        if rank >= nranks {
            return Err(Error::InvalidRank { rank, nranks });
        }
        if seg_size == 0 {
            return Err(Error::ZeroSize);
        }
        let seg_size = seg_size.next_multiple_of(CACHELINE);
        let bytes = (nranks * seg_size) as u64;
        let sync_bytes = SyncArray::bytes(nranks) as u64;
        let (wname, sname) = (window_object_name(win_name), sync_object_name(win_name));
        let (handle, sync_handle) = if rank == 0 {
            (arena.create(&wname, bytes)?, arena.create(&sname, sync_bytes)?)
        } else {
            (
                open_when_present(arena, &wname, bytes, timeout)?,
                open_when_present(arena, &sname, sync_bytes, timeout)?,
            )
        };
        Ok(Window {
            dev: arena.device().clone(),
            name: win_name.into(),
            rank,
            nranks,
            seg_size,
            base: arena.abs_offset(&handle),
            handle,
            sync: SyncArray {
                base: arena.abs_offset(&sync_handle),
                nranks,
            },
            sync_handle,
            access: None,
            exposure: None,
            locks: BTreeSet::new(),
            timeout,
            faults: Faults::from_env(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn seg_size(&self) -> usize {
        self.seg_size
    }

    pub fn handle(&self) -> ObjHandle {
        self.handle
    }

    pub fn sync_handle(&self) -> ObjHandle {
        self.sync_handle
    }

    pub fn sync_array(&self) -> SyncArray {
        self.sync
    }

    /// Absolute device offset of rank `r`'s segment.
    pub fn segment_offset(&self, r: usize) -> usize {
        self.base + r * self.seg_size
    }

    pub fn set_timeout(&mut self, timeout: Option<Duration>) {
        self.timeout = timeout;
    }

    pub fn inject_skip_put_flush(&mut self, on: bool) {
        self.faults.skip_put_flush = on;
    }

    fn check_target(&self, target: usize, disp: usize, len: usize) -> Result<usize> {
        if target >= self.nranks {
            return Err(Error::InvalidRank {
                rank: target,
                nranks: self.nranks,
            });
        }
        let in_epoch = self.access.as_ref().is_some_and(|t| t.contains(&target)) || self.locks.contains(&target);
        if !in_epoch {
            return Err(Error::NoEpoch(target));
        }
        if disp.checked_add(len).is_none_or(|end| end > self.seg_size) {
            return Err(Error::OutOfSegment {
                disp,
                len,
                seg_size: self.seg_size,
            });
        }
        Ok(self.segment_offset(target) + disp)
    }

    pub fn put(&mut self, target: usize, disp: usize, data: &[u8]) -> Result<()> {
        let at = self.check_target(target, disp, data.len())?;
        self.dev.write_bytes(at, data)?;
        if !self.faults.skip_put_flush {
            self.dev.flush_range(at, data.len())?;
        }
        self.dev.fence();
        Ok(())
    }

    pub fn get(&mut self, target: usize, disp: usize, buf: &mut [u8]) -> Result<()> {
        let at = self.check_target(target, disp, buf.len())?;
        self.dev.fetch_into(at, buf)
    }

    pub fn get_vec(&mut self, target: usize, disp: usize, len: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.get(target, disp, &mut buf)?;
        Ok(buf)
    }

    /// Reads this rank's own segment (local load; no epoch needed).
    pub fn read_local(&self, disp: usize, buf: &mut [u8]) -> Result<()> {
        self.local_bounds(disp, buf.len())?;
        self.dev.fetch_into(self.segment_offset(self.rank) + disp, buf)
    }

    /// Writes this rank's own segment and publishes it.
    pub fn write_local(&self, disp: usize, data: &[u8]) -> Result<()> {
        self.local_bounds(disp, data.len())?;
        self.dev.publish(self.segment_offset(self.rank) + disp, data)
    }

    fn local_bounds(&self, disp: usize, len: usize) -> Result<()> {
        if disp.checked_add(len).is_none_or(|end| end > self.seg_size) {
            return Err(Error::OutOfSegment {
                disp,
                len,
                seg_size: self.seg_size,
            });
        }
        Ok(())
    }

    fn check_group(&self, group: &[usize]) -> Result<()> {
        match group.iter().find(|&&r| r >= self.nranks) {
            Some(&r) => Err(Error::InvalidRank {
                rank: r,
                nranks: self.nranks,
            }),
            None => Ok(()),
        }
    }

    /// Target: exposes the window to `origins`.
    pub fn post(&mut self, origins: &[usize]) -> Result<()> {
        if self.exposure.is_some() {
            return Err(Error::EpochMisuse("post while an exposure epoch is open"));
        }
        self.check_group(origins)?;
        self.sync.post(&self.dev, self.rank, origins)?;
        self.exposure = Some(origins.to_vec());
        Ok(())
    }

    /// Target: blocks until every origin of the exposure epoch completed.
    pub fn wait(&mut self) -> Result<()> {
        let origins = self
            .exposure
            .take()
            .ok_or(Error::EpochMisuse("wait without a matching post"))?;
        self.sync.wait(&self.dev, self.rank, &origins, self.timeout)
    }

    /// Origin: opens an access epoch towards `targets`.
    pub fn start(&mut self, targets: &[usize]) -> Result<()> {
        if self.access.is_some() {
            return Err(Error::EpochMisuse("start while an access epoch is open"));
        }
        self.check_group(targets)?;
        self.sync.start(&self.dev, self.rank, targets, self.timeout)?;
        self.access = Some(targets.to_vec());
        Ok(())
    }

    /// Origin: closes the access epoch, making its puts visible.
    pub fn complete(&mut self) -> Result<()> {
        let targets = self
            .access
            .take()
            .ok_or(Error::EpochMisuse("complete without a matching start"))?;
        self.sync.complete(&self.dev, self.rank, &targets)
    }

    /// Exclusive lock on `target`'s window.
    pub fn lock(&mut self, target: usize) -> Result<()> {
        self.check_group(&[target])?;
        if self.locks.contains(&target) {
            return Err(Error::LockReentrant(target));
        }
        self.sync.lock(target).acquire(&self.dev, self.rank, self.timeout)?;
        self.locks.insert(target);
        Ok(())
    }

    pub fn unlock(&mut self, target: usize) -> Result<()> {
        if !self.locks.remove(&target) {
            return Err(Error::LockNotHeld(target));
        }
        self.dev.fence();
        self.sync.lock(target).release(&self.dev, self.rank)
    }

    pub fn holds_lock(&self, target: usize) -> bool {
        self.locks.contains(&target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::HashGeometry;
    use crate::device::{CoherenceMode, DeviceConfig};

    fn setup(mode: CoherenceMode) -> (tempfile::TempDir, Arena, Arena) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d");
        let cfg = DeviceConfig::new(&path).capacity(4 << 20).mode(mode);
        let d0 = Arc::new(Device::open(cfg.clone()).unwrap());
        let a0 = Arena::format(d0, HashGeometry::new(vec![31, 29]).unwrap()).unwrap();
        let d1 = Arc::new(Device::open(cfg).unwrap());
        let a1 = Arena::attach(d1).unwrap().with_rank(1);
        (dir, a0, a1)
    }

    #[test]
    fn pscw_put_is_visible_after_wait() {
        let (_dir, a0, a1) = setup(CoherenceMode::IncoherentEmulated);
        let mut w0 = Window::allocate(&a0, "w", 2, 0, 100, None).unwrap();
        let mut w1 = Window::allocate(&a1, "w", 2, 1, 100, None).unwrap();
        assert_eq!(w0.seg_size(), 128);
        assert_eq!(w1.segment_offset(1), w0.segment_offset(0) + 128);

        w1.post(&[0]).unwrap();
        w0.start(&[1]).unwrap();
        w0.put(1, 8, b"hello").unwrap();
        w0.complete().unwrap();
        w1.wait().unwrap();
        let mut got = [0u8; 5];
        w1.read_local(8, &mut got).unwrap();
        assert_eq!(&got, b"hello");
    }

    #[test]
    fn skipped_flush_leaves_target_stale() {
        let (_dir, a0, a1) = setup(CoherenceMode::IncoherentEmulated);
        let mut w0 = Window::allocate(&a0, "w", 2, 0, 64, None).unwrap();
        let mut w1 = Window::allocate(&a1, "w", 2, 1, 64, None).unwrap();
        w0.inject_skip_put_flush(true);
        w1.post(&[0]).unwrap();
        w0.start(&[1]).unwrap();
        w0.put(1, 0, b"lost").unwrap();
        w0.complete().unwrap();
        w1.wait().unwrap();
        let mut got = [0u8; 4];
        w1.read_local(0, &mut got).unwrap();
        assert_eq!(got, [0; 4]);
    }

    #[test]
    fn epoch_rules() {
        let (_dir, a0, a1) = setup(CoherenceMode::Coherent);
        let mut w0 = Window::allocate(&a0, "w", 2, 0, 64, None).unwrap();
        let _w1 = Window::allocate(&a1, "w", 2, 1, 64, None).unwrap();
        assert!(matches!(w0.put(1, 0, b"x"), Err(Error::NoEpoch(1))));
        assert!(matches!(w0.complete(), Err(Error::EpochMisuse(_))));
        assert!(matches!(w0.wait(), Err(Error::EpochMisuse(_))));
        assert!(matches!(w0.unlock(1), Err(Error::LockNotHeld(1))));
        assert!(matches!(w0.start(&[5]), Err(Error::InvalidRank { rank: 5, .. })));

        w0.lock(1).unwrap();
        assert!(matches!(w0.lock(1), Err(Error::LockReentrant(1))));
        assert!(matches!(w0.put(1, 60, b"12345"), Err(Error::OutOfSegment { .. })));
        w0.put(1, 0, b"ok").unwrap();
        assert_eq!(w0.get_vec(1, 0, 2).unwrap(), b"ok");
        w0.unlock(1).unwrap();
        assert!(!w0.holds_lock(1));
    }

    #[test]
    fn object_names() {
        assert_eq!(window_object_name("grid"), "win.grid");
        assert_eq!(sync_object_name("grid"), "win.grid.sync");
    }
}
