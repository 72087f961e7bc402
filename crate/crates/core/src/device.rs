//! Emulated pooled-memory device.
//!
//! A [`Device`] is a shared mapping of a zero-filled backing file. Every rank
//! maps the same file, so offsets mean the same thing in every process.
//!
//! Two coherence modes are supported. In [`CoherenceMode::Coherent`] plain
//! stores land in the shared mapping directly. In
//! [`CoherenceMode::IncoherentEmulated`] each attached handle keeps a private
//! line overlay that plays the role of a non-coherent CPU cache: plain writes
//! stay in the overlay until [`Device::flush_range`] writes them back, and
//! plain reads are served from cached copies until they are invalidated.
//! Code that follows the flush-after-write / fence+invalidate-before-read
//! discipline behaves identically in both modes; code that does not is
//! caught by the incoherent mode.
//!
//! The 8-byte [`Device::nt_store_u64`] / [`Device::nt_load_u64`] pair
//! bypasses the overlay in both modes and is the only way flags and ring
//! indices are accessed.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::atomic::{fence, AtomicU64, Ordering};
use std::sync::Mutex;

use memmap2::MmapRaw;

use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const CACHELINE: usize = 64;
pub const DEFAULT_CAPACITY: u64 = 1 << 30;

/// Clean overlay lines retained before the overlay drops all of them.
/// Dirty lines are never evicted: an unflushed write stays private forever.
const CLEAN_LINE_LIMIT: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoherenceMode {
    #[default]
    Coherent,
    IncoherentEmulated,
}

#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub backing_path: PathBuf,
    pub capacity: u64,
    pub mode: CoherenceMode,
    /// Record every nt store made through this handle (see [`Device::take_nt_log`]).
    pub trace_nt: bool,
}

impl DeviceConfig {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        DeviceConfig {
            backing_path: path.into(),
            capacity: DEFAULT_CAPACITY,
            mode: CoherenceMode::Coherent,
            trace_nt: false,
        }
    }

    pub fn capacity(mut self, capacity: u64) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn mode(mut self, mode: CoherenceMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn incoherent(self, on: bool) -> Self {
        self.mode(if on {
            CoherenceMode::IncoherentEmulated
        } else {
            CoherenceMode::Coherent
        })
    }

    pub fn trace_nt(mut self, on: bool) -> Self {
        self.trace_nt = on;
        self
    }

    pub const fn cacheline(&self) -> usize {
        CACHELINE
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || !self.capacity.is_multiple_of(CACHELINE as u64) {
            return Err(Error::CapacityNotAligned(self.capacity));
        }
        Ok(())
    }
}

/// One recorded nt store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NtWrite {
    pub offset: usize,
    pub value: u64,
}

#[derive(Clone)]
struct Line {
    data: [u8; CACHELINE],
    /// Bit i set when byte i was written since the line was filled.
    dirty: u64,
}

#[derive(Default)]
struct Overlay {
    lines: HashMap<usize, Line>,
    clean: usize,
}

pub struct Device {
    config: DeviceConfig,
    file: File,
    map: MmapRaw,
    len: usize,
    overlay: Option<Mutex<Overlay>>,
    nt_log: Option<Mutex<Vec<NtWrite>>>,
}

// SAFETY: the mapping is shared memory that other processes mutate
// concurrently anyway; all access goes through raw copies and atomics, and
// the overlay and log are behind mutexes.
unsafe impl Sync for Device {}
unsafe impl Send for Device {}

impl std::fmt::Debug for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Device")
            .field("path", &self.config.backing_path)
            .field("len", &self.len)
            .field("mode", &self.config.mode)
            .finish()
    }
}

impl Device {
    /// Maps the backing file, creating and zero-filling it when absent.
    pub fn open(config: DeviceConfig) -> Result<Device> {
        config.validate()?;
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&config.backing_path)?;
        let actual = file.metadata()?.len();
        if actual == 0 {
            // Racing creators all extend to the same length.
            file.set_len(config.capacity)?;
        } else if actual < config.capacity {
            return Err(Error::BackingTooSmall {
                path: config.backing_path.clone(),
                actual,
                required: config.capacity,
            });
        }
        let len =
            usize::try_from(config.capacity).map_err(|_| Error::Config("capacity exceeds address space".into()))?;
        let map = memmap2::MmapOptions::new().len(len).map_raw(&file)?;
        let overlay = match config.mode {
            CoherenceMode::Coherent => None,
            CoherenceMode::IncoherentEmulated => Some(Mutex::new(Overlay::default())),
        };
        let nt_log = config.trace_nt.then(|| Mutex::new(Vec::new()));
        Ok(Device {
            config,
            file,
            map,
            len,
            overlay,
            nt_log,
        })
    }

    /// Opens an existing backing file at its current length.
    pub fn attach(path: impl AsRef<Path>, mode: CoherenceMode) -> Result<Device> {
        let path = path.as_ref();
        let len = std::fs::metadata(path)?.len();
        Device::open(DeviceConfig::new(path).capacity(len).mode(mode))
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mode(&self) -> CoherenceMode {
        self.config.mode
    }

    fn check(&self, offset: usize, len: usize) -> Result<()> {
        match offset.checked_add(len) {
            Some(end) if end <= self.len => Ok(()),
            _ => Err(Error::OutOfBounds {
                offset,
                len,
                limit: self.len,
            }),
        }
    }

    fn base(&self) -> *mut u8 {
        self.map.as_mut_ptr()
    }

    fn backing_read(&self, offset: usize, out: &mut [u8]) {
        // SAFETY: bounds were checked by the caller.
        unsafe { ptr::copy_nonoverlapping(self.base().add(offset), out.as_mut_ptr(), out.len()) }
    }

    fn backing_write(&self, offset: usize, data: &[u8]) {
        // SAFETY: bounds were checked by the caller.
        unsafe { ptr::copy_nonoverlapping(data.as_ptr(), self.base().add(offset), data.len()) }
    }

    fn fill_line(&self, line: usize) -> Line {
        let mut data = [0u8; CACHELINE];
        self.backing_read(line, &mut data);
        Line { data, dirty: 0 }
    }

    fn write_back(&self, line: usize, l: &Line) {
        if l.dirty == u64::MAX {
            self.backing_write(line, &l.data);
            return;
        }
        let mut mask = l.dirty;
        while mask != 0 {
            let start = mask.trailing_zeros() as usize;
            let run = (mask >> start).trailing_ones() as usize;
            self.backing_write(line + start, &l.data[start..start + run]);
            mask &= !(((1u128 << (start + run)) - 1) as u64);
        }
    }

    /// Plain stores. Visible to other ranks immediately in coherent mode,
    /// and only after [`Device::flush_range`] in incoherent-emulated mode.
    pub fn write_bytes(&self, offset: usize, data: &[u8]) -> Result<()> {
        self.check(offset, data.len())?;
        let Some(overlay) = &self.overlay else {
            self.backing_write(offset, data);
            return Ok(());
        };
        let mut ov = overlay.lock().unwrap();
        let mut pos = 0;
        while pos < data.len() {
            let addr = offset + pos;
            let line = addr & !(CACHELINE - 1);
            let within = addr - line;
            let n = (CACHELINE - within).min(data.len() - pos);
            let Overlay { lines, clean } = &mut *ov;
            let entry = lines.entry(line).or_insert_with(|| {
                *clean += 1;
                self.fill_line(line)
            });
            if entry.dirty == 0 {
                *clean -= 1;
            }
            entry.data[within..within + n].copy_from_slice(&data[pos..pos + n]);
            entry.dirty |= if n == 64 { u64::MAX } else { ((1u64 << n) - 1) << within };
            pos += n;
        }
        Ok(())
    }

    /// Plain loads into `out`. With `invalidate_first` any clean cached copy
    /// of the range is dropped before reading, so the bytes come from the
    /// backing store unless this handle holds unflushed writes to them.
    pub fn read_into(&self, offset: usize, out: &mut [u8], invalidate_first: bool) -> Result<()> {
        self.check(offset, out.len())?;
        let Some(overlay) = &self.overlay else {
            self.backing_read(offset, out);
            return Ok(());
        };
        let mut ov = overlay.lock().unwrap();
        if invalidate_first {
            Self::drop_lines(&mut ov, offset, out.len(), false);
        }
        let mut pos = 0;
        while pos < out.len() {
            let addr = offset + pos;
            let line = addr & !(CACHELINE - 1);
            let within = addr - line;
            let n = (CACHELINE - within).min(out.len() - pos);
            if !ov.lines.contains_key(&line) {
                if ov.clean >= CLEAN_LINE_LIMIT {
                    ov.lines.retain(|_, l| l.dirty != 0);
                    ov.clean = 0;
                }
                let filled = self.fill_line(line);
                ov.lines.insert(line, filled);
                ov.clean += 1;
            }
            out[pos..pos + n].copy_from_slice(&ov.lines[&line].data[within..within + n]);
            pos += n;
        }
        Ok(())
    }

    pub fn read_bytes(&self, offset: usize, len: usize, invalidate_first: bool) -> Result<Vec<u8>> {
        let mut out = vec![0u8; len];
        self.read_into(offset, &mut out, invalidate_first)?;
        Ok(out)
    }

    fn drop_lines(ov: &mut Overlay, offset: usize, len: usize, dirty_too: bool) {
        if len == 0 || ov.lines.is_empty() {
            return;
        }
        let first = offset & !(CACHELINE - 1);
        let end = offset + len;
        let nlines = (end - first).div_ceil(CACHELINE);
        let Overlay { lines, clean } = ov;
        let mut drop = |line: usize, lines: &mut HashMap<usize, Line>| {
            if let Some(l) = lines.get(&line) {
                if l.dirty == 0 {
                    lines.remove(&line);
                    *clean -= 1;
                } else if dirty_too {
                    lines.remove(&line);
                }
            }
        };
        if nlines <= lines.len() {
            for i in 0..nlines {
                drop(first + i * CACHELINE, lines);
            }
        } else {
            let hit: Vec<usize> = lines.keys().copied().filter(|&k| k >= first && k < end).collect();
            for k in hit {
                drop(k, lines);
            }
        }
    }

    /// Writes back every dirty overlay line intersecting the range and
    /// evicts the lines. A no-op in coherent mode.
    pub fn flush_range(&self, offset: usize, len: usize) -> Result<()> {
        self.check(offset, len)?;
        let Some(overlay) = &self.overlay else {
            return Ok(());
        };
        let mut ov = overlay.lock().unwrap();
        if len == 0 || ov.lines.is_empty() {
            return Ok(());
        }
        let first = offset & !(CACHELINE - 1);
        let end = offset + len;
        let nlines = (end - first).div_ceil(CACHELINE);
        let targets: Vec<usize> = if nlines <= ov.lines.len() {
            (0..nlines)
                .map(|i| first + i * CACHELINE)
                .filter(|k| ov.lines.contains_key(k))
                .collect()
        } else {
            ov.lines.keys().copied().filter(|&k| k >= first && k < end).collect()
        };
        for line in targets {
            let l = ov.lines.remove(&line).unwrap();
            if l.dirty == 0 {
                ov.clean -= 1;
            } else {
                self.write_back(line, &l);
            }
        }
        Ok(())
    }

    /// Drops clean cached copies of the range.
    pub fn invalidate_range(&self, offset: usize, len: usize) -> Result<()> {
        self.check(offset, len)?;
        if let Some(overlay) = &self.overlay {
            Self::drop_lines(&mut overlay.lock().unwrap(), offset, len, false);
        }
        Ok(())
    }

    /// Orders every device operation issued before it by this handle before
    /// every operation issued after it. nt operations are never buffered,
    /// so there is nothing further to publish in either mode.
    pub fn fence(&self) {
        fence(Ordering::SeqCst);
    }

    fn nt_cell(&self, offset: usize) -> Result<&AtomicU64> {
        if !offset.is_multiple_of(8) {
            return Err(Error::Misaligned(offset));
        }
        self.check(offset, 8)?;
        // SAFETY: aligned, in bounds, and the mapping outlives `self`.
        Ok(unsafe { &*(self.base().add(offset) as *const AtomicU64) })
    }

    /// Store that bypasses the overlay and reaches the backing store at once.
    pub fn nt_store_u64(&self, offset: usize, value: u64) -> Result<()> {
        let cell = self.nt_cell(offset)?;
        if let Some(overlay) = &self.overlay {
            let mut ov = overlay.lock().unwrap();
            let line = offset & !(CACHELINE - 1);
            if let Some(l) = ov.lines.remove(&line) {
                if l.dirty == 0 {
                    ov.clean -= 1;
                } else {
                    self.write_back(line, &l);
                }
            }
        }
        cell.store(value, Ordering::SeqCst);
        if let Some(log) = &self.nt_log {
            log.lock().unwrap().push(NtWrite { offset, value });
        }
        Ok(())
    }

    /// Load that always reads the backing store.
    pub fn nt_load_u64(&self, offset: usize) -> Result<u64> {
        Ok(self.nt_cell(offset)?.load(Ordering::SeqCst))
    }

    /// Bulk zeroing with non-temporal semantics: the range is cleared in the
    /// backing store and any overlay lines (dirty or not) are discarded.
    pub fn zero_range(&self, offset: usize, len: usize) -> Result<()> {
        self.zero_range_with(Exec::Parallel, offset, len)
    }

    pub fn zero_range_with(&self, exec: Exec, offset: usize, len: usize) -> Result<()> {
        self.check(offset, len)?;
        if let Some(overlay) = &self.overlay {
            Self::drop_lines(&mut overlay.lock().unwrap(), offset, len, true);
        }
        let page = 4096;
        let hole_start = offset.next_multiple_of(page);
        let hole_end = (offset + len) / page * page;
        let punched = hole_end > hole_start && hole_end - hole_start >= 1 << 20 && {
            // SAFETY: plain syscall on an owned descriptor.
            let rc = unsafe {
                libc::fallocate(
                    self.file.as_raw_fd(),
                    libc::FALLOC_FL_PUNCH_HOLE | libc::FALLOC_FL_KEEP_SIZE,
                    hole_start as libc::off_t,
                    (hole_end - hole_start) as libc::off_t,
                )
            };
            rc == 0
        };
        if punched {
            self.memset_zero(exec, offset, hole_start - offset);
            self.memset_zero(exec, hole_end, offset + len - hole_end);
        } else {
            self.memset_zero(exec, offset, len);
        }
        fence(Ordering::SeqCst);
        Ok(())
    }

    fn memset_zero(&self, exec: Exec, offset: usize, len: usize) {
        if len == 0 {
            return;
        }
        // SAFETY: bounds checked by zero_range_with; the slice is only used
        // for this call.
        let region = unsafe { std::slice::from_raw_parts_mut(self.base().add(offset), len) };
        par::for_each_chunk_mut(exec, region, 1 << 20, |_, c| c.fill(0));
    }

    /// Write, flush and fence: the publication recipe for plain data.
    pub fn publish(&self, offset: usize, data: &[u8]) -> Result<()> {
        self.write_bytes(offset, data)?;
        self.flush_range(offset, data.len())?;
        self.fence();
        Ok(())
    }

    /// Fence, invalidate and read: the acquisition recipe for plain data.
    pub fn fetch_into(&self, offset: usize, out: &mut [u8]) -> Result<()> {
        self.fence();
        self.read_into(offset, out, true)
    }

    pub fn fetch(&self, offset: usize, len: usize) -> Result<Vec<u8>> {
        let mut out = vec![0u8; len];
        self.fetch_into(offset, &mut out)?;
        Ok(out)
    }

    /// Lines currently held privately by this handle.
    pub fn overlay_lines(&self) -> (usize, usize) {
        match &self.overlay {
            None => (0, 0),
            Some(ov) => {
                let ov = ov.lock().unwrap();
                (ov.lines.len() - ov.clean, ov.clean)
            }
        }
    }

    pub fn take_nt_log(&self) -> Vec<NtWrite> {
        self.nt_log
            .as_ref()
            .map(|l| std::mem::take(&mut *l.lock().unwrap()))
            .unwrap_or_default()
    }

    pub fn sync_to_disk(&self) -> Result<()> {
        self.map.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(mode: CoherenceMode) -> (tempfile::TempDir, Device, Device) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DeviceConfig::new(dir.path().join("dev.img"))
            .capacity(1 << 20)
            .mode(mode);
        let a = Device::open(cfg.clone()).unwrap();
        let b = Device::open(cfg).unwrap();
        (dir, a, b)
    }

    #[test]
    fn capacity_must_be_cacheline_multiple() {
        let dir = tempfile::tempdir().unwrap();
        let err = Device::open(DeviceConfig::new(dir.path().join("x")).capacity(1000)).unwrap_err();
        assert!(matches!(err, Error::CapacityNotAligned(1000)));
    }

    #[test]
    fn existing_file_smaller_than_capacity_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small");
        std::fs::write(&path, vec![0u8; 4096]).unwrap();
        let err = Device::open(DeviceConfig::new(&path).capacity(8192)).unwrap_err();
        assert!(matches!(err, Error::BackingTooSmall { actual: 4096, .. }));
    }

    #[test]
    fn unwritable_path_fails() {
        let err = Device::open(DeviceConfig::new("/nonexistent-dir/x/dev.img").capacity(4096));
        assert!(matches!(err, Err(Error::Io(_))));
    }

    #[test]
    fn fresh_region_reads_zero() {
        let (_d, a, _) = pair(CoherenceMode::Coherent);
        assert_eq!(a.read_bytes(4096, 16, true).unwrap(), vec![0; 16]);
        assert_eq!(a.nt_load_u64(64).unwrap(), 0);
        assert!(a.read_bytes(17, 0, false).unwrap().is_empty());
    }

    #[test]
    fn read_own_write() {
        for mode in [CoherenceMode::Coherent, CoherenceMode::IncoherentEmulated] {
            let (_d, a, _) = pair(mode);
            a.write_bytes(4096, &[1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
            assert_eq!(a.read_bytes(4096, 8, false).unwrap(), vec![1, 2, 3, 4, 5, 6, 7, 8]);
            assert_eq!(a.read_bytes(4096, 8, true).unwrap(), vec![1, 2, 3, 4, 5, 6, 7, 8]);
        }
    }

    #[test]
    fn coherent_writes_are_visible_immediately() {
        let (_d, a, b) = pair(CoherenceMode::Coherent);
        a.write_bytes(0, &[0x5A]).unwrap();
        assert_eq!(b.read_bytes(0, 1, false).unwrap(), vec![0x5A]);
    }

    #[test]
    fn incoherent_unflushed_write_is_invisible() {
        let (_d, a, b) = pair(CoherenceMode::IncoherentEmulated);
        a.write_bytes(0, &[0x5A]).unwrap();
        assert_eq!(b.read_bytes(0, 1, true).unwrap(), vec![0]);
    }

    #[test]
    fn incoherent_discipline_round_trip() {
        let (_d, a, b) = pair(CoherenceMode::IncoherentEmulated);
        // b caches the old line first
        assert_eq!(b.read_bytes(0, 1, false).unwrap(), vec![0]);
        a.write_bytes(0, &[0x5A]).unwrap();
        a.flush_range(0, 1).unwrap();
        a.fence();
        // without invalidation b still sees its stale copy
        assert_eq!(b.read_bytes(0, 1, false).unwrap(), vec![0]);
        b.fence();
        assert_eq!(b.read_bytes(0, 1, true).unwrap(), vec![0x5A]);
    }

    #[test]
    fn flush_of_clean_range_is_noop() {
        let (_d, a, _) = pair(CoherenceMode::IncoherentEmulated);
        a.flush_range(0, 4096).unwrap();
        a.read_bytes(0, 128, false).unwrap();
        a.flush_range(0, 128).unwrap();
        assert_eq!(a.overlay_lines(), (0, 0));
    }

    #[test]
    fn flush_updates_only_the_dirty_line() {
        let (_d, a, b) = pair(CoherenceMode::IncoherentEmulated);
        a.write_bytes(128, &[9; 64]).unwrap();
        a.write_bytes(256, &[7; 4]).unwrap();
        a.flush_range(128, 64).unwrap();
        assert_eq!(b.read_bytes(128, 64, true).unwrap(), vec![9; 64]);
        assert_eq!(b.read_bytes(256, 4, true).unwrap(), vec![0; 4]);
        assert_eq!(a.overlay_lines().0, 1);
    }

    #[test]
    fn full_range_flush_covers_every_dirty_line() {
        let (_d, a, b) = pair(CoherenceMode::IncoherentEmulated);
        for i in 0..10 {
            a.write_bytes(i * 10_000, &[i as u8 + 1; 3]).unwrap();
        }
        a.flush_range(0, a.len()).unwrap();
        for i in 0..10 {
            assert_eq!(b.read_bytes(i * 10_000, 3, true).unwrap(), vec![i as u8 + 1; 3]);
        }
        assert_eq!(a.overlay_lines(), (0, 0));
    }

    #[test]
    fn disjoint_bytes_in_one_line_merge_on_flush() {
        let (_d, a, b) = pair(CoherenceMode::IncoherentEmulated);
        a.write_bytes(0, &[1; 8]).unwrap();
        b.write_bytes(8, &[2; 8]).unwrap();
        a.flush_range(0, 64).unwrap();
        b.flush_range(0, 64).unwrap();
        let mut expect = vec![1u8; 8];
        expect.extend([2u8; 8]);
        assert_eq!(a.read_bytes(0, 16, true).unwrap(), expect);
    }

    #[test]
    fn nt_ops_bypass_overlay() {
        let (_d, a, b) = pair(CoherenceMode::IncoherentEmulated);
        a.nt_store_u64(512, 7).unwrap();
        assert_eq!(b.nt_load_u64(512).unwrap(), 7);
    }

    #[test]
    fn nt_misaligned_and_out_of_bounds() {
        let (_d, a, _) = pair(CoherenceMode::Coherent);
        assert!(matches!(a.nt_store_u64(12, 1), Err(Error::Misaligned(12))));
        assert!(matches!(a.nt_load_u64(12), Err(Error::Misaligned(12))));
        assert!(matches!(a.nt_load_u64(1 << 20), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn out_of_bounds_access() {
        let (_d, a, _) = pair(CoherenceMode::Coherent);
        let end = a.len();
        assert!(matches!(
            a.write_bytes(end - 4, &[0; 8]),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(a.read_bytes(end, 1, true), Err(Error::OutOfBounds { .. })));
        assert!(matches!(a.flush_range(end, 1), Err(Error::OutOfBounds { .. })));
        assert!(a.read_bytes(end, 0, true).is_ok());
    }

    #[test]
    fn zero_range_clears_backing_and_overlay() {
        let (_d, a, b) = pair(CoherenceMode::IncoherentEmulated);
        a.publish(100, &[5; 300]).unwrap();
        a.write_bytes(2000, &[3; 10]).unwrap();
        b.zero_range(0, 1 << 20).unwrap();
        assert_eq!(a.fetch(100, 300).unwrap(), vec![0; 300]);
        a.zero_range(0, 4096).unwrap();
        assert_eq!(a.overlay_lines().0, 0);
    }

    #[test]
    fn zero_range_punches_large_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let dev = Device::open(DeviceConfig::new(dir.path().join("d")).capacity(8 << 20)).unwrap();
        dev.write_bytes(10, &[1; 6 << 20]).unwrap();
        dev.zero_range(10, (6 << 20) - 20).unwrap();
        let back = dev.read_bytes(0, 6 << 20, true).unwrap();
        assert!(back[..(6 << 20) - 10].iter().all(|&x| x == 0));
        assert!(back[(6 << 20) - 10..(6 << 20) + 10 - 10].iter().all(|&x| x == 1));
    }

    #[test]
    fn clean_lines_are_bounded() {
        let (_d, a, _) = pair(CoherenceMode::IncoherentEmulated);
        a.read_bytes(0, 1 << 20, false).unwrap();
        a.read_bytes(0, 1 << 20, false).unwrap();
        assert!(a.overlay_lines().1 <= CLEAN_LINE_LIMIT);
    }

    #[test]
    fn nt_log_records_stores() {
        let dir = tempfile::tempdir().unwrap();
        let dev = Device::open(DeviceConfig::new(dir.path().join("d")).capacity(4096).trace_nt(true)).unwrap();
        dev.nt_store_u64(8, 1).unwrap();
        dev.nt_store_u64(16, 2).unwrap();
        assert_eq!(
            dev.take_nt_log(),
            vec![NtWrite { offset: 8, value: 1 }, NtWrite { offset: 16, value: 2 }]
        );
        assert!(dev.take_nt_log().is_empty());
    }
}
