//! Shared-object arena: a fixed multi-level hash of metadata slots followed
//! by a bump-allocated object region. The byte layout is documented in
//! `docs/arena-format.md` at the repository root.

mod geometry;

pub use geometry::{level_hash, prime_levels, HashGeometry, DEFAULT_LEVELS, DEFAULT_LEVEL_CAP, MAX_LEVELS};

use std::sync::Arc;
use std::time::Duration;

use crate::device::{Device, CACHELINE};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::sync::BakeryLock;

/// "CMPIARN" followed by the format version.
pub const MAGIC: u64 = u64::from_le_bytes(*b"CMPIARN\x01");
pub const HEADER_BYTES: usize = 4096;
pub const SLOT_BYTES: usize = 128;
pub const NAME_BYTES: usize = 64;
pub const MAX_NAME_LEN: usize = NAME_BYTES - 1;
/// Participants of the arena creation lock. The last index is reserved for
/// out-of-band tools such as `cmpi-arena`.
pub const MAX_RANKS: usize = 64;
pub const TOOL_RANK: usize = MAX_RANKS - 1;

const H_MAGIC: usize = 0;
const H_SLOT_BYTES: usize = 8;
const H_LEVELS: usize = 16;
const H_META_OFF: usize = 24;
const H_META_LEN: usize = 32;
const H_OBJ_OFF: usize = 40;
const H_OBJ_LEN: usize = 48;
const H_SESSION: usize = 64;
const H_CURSOR: usize = 128;
const H_PRIMES: usize = 256;
const H_LOCK: usize = 1024;

const S_STATE: usize = 0;
const S_OFFSET: usize = 8;
const S_SIZE: usize = 16;
const S_NAME: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Free,
    Claiming { owner: usize },
    Used { owner: usize },
}

impl SlotState {
    fn encode(self) -> u64 {
        match self {
            SlotState::Free => 0,
            SlotState::Claiming { owner } => 1 | ((owner as u64) << 32),
            SlotState::Used { owner } => 2 | ((owner as u64) << 32),
        }
    }

    fn decode(w: u64) -> SlotState {
        let owner = (w >> 32) as usize;
        match w & 0xff {
            1 => SlotState::Claiming { owner },
            2 => SlotState::Used { owner },
            _ => SlotState::Free,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArenaHeader {
    pub geometry: HashGeometry,
    pub metadata_off: u64,
    pub metadata_len: u64,
    pub objects_off: u64,
    pub objects_len: u64,
}

impl ArenaHeader {
    /// Region split for a device of `device_len` bytes.
    pub fn layout(device_len: u64, geometry: HashGeometry) -> Result<ArenaHeader> {
        let metadata_off = HEADER_BYTES as u64;
        let metadata_len = geometry.slot_total() * SLOT_BYTES as u64;
        let objects_off = metadata_off + metadata_len;
        let needed = objects_off + CACHELINE as u64;
        if device_len < needed {
            return Err(Error::RegionTooSmall {
                device: device_len,
                needed,
            });
        }
        let objects_len = (device_len - objects_off) / CACHELINE as u64 * CACHELINE as u64;
        Ok(ArenaHeader {
            geometry,
            metadata_off,
            metadata_len,
            objects_off,
            objects_len,
        })
    }
}

/// Location of a live object relative to the object region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjHandle {
    pub slot_index: u64,
    pub offset: u64,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectInfo {
    pub name: String,
    pub owner: usize,
    pub handle: ObjHandle,
}

fn check_name(name: &str) -> Result<[u8; NAME_BYTES]> {
    if name.is_empty() {
        return Err(Error::EmptyName);
    }
    if name.len() > MAX_NAME_LEN {
        return Err(Error::NameTooLong(name.len()));
    }
    let mut buf = [0u8; NAME_BYTES];
    buf[..name.len()].copy_from_slice(name.as_bytes());
    Ok(buf)
}

fn align_up(v: u64) -> u64 {
    v.div_ceil(CACHELINE as u64) * CACHELINE as u64
}

fn word(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

#[derive(Debug, Clone)]
pub struct Arena {
    dev: Arc<Device>,
    header: ArenaHeader,
    rank: usize,
    lock_timeout: Option<Duration>,
}

impl Arena {
    /// Formats the device, or attaches when it already holds an arena with
    /// the same geometry.
    pub fn format(dev: Arc<Device>, geometry: HashGeometry) -> Result<Arena> {
        match Arena::attach(dev.clone()) {
            Ok(a) if a.header.geometry == geometry => return Ok(a),
            Ok(_) => return Err(Error::GeometryMismatch),
            Err(Error::NotFormatted) => {}
            Err(e) => return Err(e),
        }
        let header = ArenaHeader::layout(dev.len() as u64, geometry)?;
        let arena = Arena {
            dev,
            header,
            rank: 0,
            lock_timeout: None,
        };
        arena.write_fresh()?;
        Ok(arena)
    }

    fn write_fresh(&self) -> Result<()> {
        let dev = &self.dev;
        let h = &self.header;
        dev.nt_store_u64(H_MAGIC, 0)?;
        dev.zero_range(0, HEADER_BYTES)?;
        dev.zero_range(h.metadata_off as usize, h.metadata_len as usize)?;
        let mut buf = vec![0u8; H_LOCK];
        let mut put = |at: usize, v: u64| buf[at..at + 8].copy_from_slice(&v.to_le_bytes());
        put(H_SLOT_BYTES, SLOT_BYTES as u64);
        put(H_LEVELS, h.geometry.levels() as u64);
        put(H_META_OFF, h.metadata_off);
        put(H_META_LEN, h.metadata_len);
        put(H_OBJ_OFF, h.objects_off);
        put(H_OBJ_LEN, h.objects_len);
        for (i, &p) in h.geometry.level_primes().iter().enumerate() {
            put(H_PRIMES + 8 * i, p);
        }
        // The magic word is published last, with an nt store.
        dev.publish(8, &buf[8..])?;
        dev.nt_store_u64(H_MAGIC, MAGIC)?;
        dev.fence();
        Ok(())
    }

    /// Attaches to an already formatted device.
    pub fn attach(dev: Arc<Device>) -> Result<Arena> {
        if dev.len() < HEADER_BYTES {
            return Err(Error::NotFormatted);
        }
        if dev.nt_load_u64(H_MAGIC)? != MAGIC {
            return Err(Error::NotFormatted);
        }
        let raw = dev.fetch(0, H_LOCK)?;
        let levels = word(&raw, H_LEVELS) as usize;
        if levels == 0 || levels > MAX_LEVELS || word(&raw, H_SLOT_BYTES) != SLOT_BYTES as u64 {
            return Err(Error::InvalidGeometry("corrupt arena header".into()));
        }
        let primes = (0..levels).map(|i| word(&raw, H_PRIMES + 8 * i)).collect();
        let geometry = HashGeometry::new(primes)?;
        let header = ArenaHeader {
            geometry,
            metadata_off: word(&raw, H_META_OFF),
            metadata_len: word(&raw, H_META_LEN),
            objects_off: word(&raw, H_OBJ_OFF),
            objects_len: word(&raw, H_OBJ_LEN),
        };
        if header.objects_off + header.objects_len > dev.len() as u64 {
            return Err(Error::InvalidGeometry("arena larger than device".into()));
        }
        Ok(Arena {
            dev,
            header,
            rank: 0,
            lock_timeout: None,
        })
    }

    /// Rank identity used for slot ownership and the creation lock.
    pub fn with_rank(mut self, rank: usize) -> Self {
        assert!(rank < MAX_RANKS, "rank {rank} exceeds arena lock capacity");
        self.rank = rank;
        self
    }

    pub fn with_lock_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.lock_timeout = timeout;
        self
    }

    pub fn device(&self) -> &Arc<Device> {
        &self.dev
    }

    pub fn header(&self) -> &ArenaHeader {
        &self.header
    }

    pub fn geometry(&self) -> &HashGeometry {
        &self.header.geometry
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Raw header bytes, for comparing attachments.
    pub fn header_bytes(&self) -> Result<Vec<u8>> {
        self.dev.fetch(0, HEADER_BYTES)
    }

    pub fn alloc_cursor(&self) -> Result<u64> {
        self.dev.nt_load_u64(H_CURSOR)
    }

    pub fn session(&self) -> Result<u64> {
        self.dev.nt_load_u64(H_SESSION)
    }

    pub fn set_session(&self, session: u64) -> Result<()> {
        self.dev.nt_store_u64(H_SESSION, session)?;
        self.dev.fence();
        Ok(())
    }

    /// Forgets every object: zeroes all slots, rewinds the allocator and
    /// clears the creation lock.
    pub fn reset(&self) -> Result<()> {
        let h = &self.header;
        self.dev.zero_range(h.metadata_off as usize, h.metadata_len as usize)?;
        self.dev.zero_range(H_LOCK, BakeryLock::bytes(MAX_RANKS, 8))?;
        self.dev.nt_store_u64(H_CURSOR, 0)?;
        self.dev.fence();
        Ok(())
    }

    fn creation_lock(&self) -> BakeryLock {
        BakeryLock {
            base: H_LOCK,
            participants: MAX_RANKS,
            stride: 8,
        }
    }

    fn slot_offset(&self, slot: u64) -> usize {
        (self.header.metadata_off + slot * SLOT_BYTES as u64) as usize
    }

    fn slot_state(&self, slot: u64) -> Result<SlotState> {
        self.dev.fence();
        Ok(SlotState::decode(
            self.dev.nt_load_u64(self.slot_offset(slot) + S_STATE)?,
        ))
    }

    fn read_slot(&self, slot: u64) -> Result<(SlotState, [u8; NAME_BYTES], u64, u64)> {
        let state = self.slot_state(slot)?;
        let raw = self.dev.fetch(self.slot_offset(slot), SLOT_BYTES)?;
        let mut name = [0u8; NAME_BYTES];
        name.copy_from_slice(&raw[S_NAME..S_NAME + NAME_BYTES]);
        Ok((state, name, word(&raw, S_OFFSET), word(&raw, S_SIZE)))
    }

    /// Absolute device offset of an object's first byte.
    pub fn abs_offset(&self, h: &ObjHandle) -> usize {
        (self.header.objects_off + h.offset) as usize
    }

    fn find(&self, name: &[u8; NAME_BYTES]) -> Result<Option<(u64, SlotState, u64, u64)>> {
        let key = &name[..name.iter().position(|&b| b == 0).unwrap_or(NAME_BYTES)];
        for level in 0..self.geometry().levels() {
            let slot = self.geometry().slot_for(key, level);
            if let SlotState::Used { .. } = self.slot_state(slot)? {
                let (state, stored, offset, size) = self.read_slot(slot)?;
                if matches!(state, SlotState::Used { .. }) && &stored == name {
                    return Ok(Some((slot, state, offset, size)));
                }
            }
        }
        Ok(None)
    }

    /// Claims a FREE slot using only nt stores and loads. Concurrent
    /// claimants of the same slot settle on the lower rank.
    fn claim(&self, slot: u64) -> Result<bool> {
        let at = self.slot_offset(slot);
        let mine = SlotState::Claiming { owner: self.rank }.encode();
        loop {
            match SlotState::decode(self.dev.nt_load_u64(at)?) {
                SlotState::Free => {}
                SlotState::Claiming { owner } if owner > self.rank => {}
                SlotState::Claiming { owner } if owner == self.rank => {}
                _ => return Ok(false),
            }
            self.dev.nt_store_u64(at, mine)?;
            self.dev.fence();
            for _ in 0..64 {
                std::hint::spin_loop();
            }
            self.dev.fence();
            let seen = self.dev.nt_load_u64(at)?;
            if seen == mine {
                return Ok(true);
            }
            match SlotState::decode(seen) {
                SlotState::Claiming { owner } if owner > self.rank => continue,
                _ => return Ok(false),
            }
        }
    }

    /// Exclusive creation of a zeroed object of at least `size` bytes.
    pub fn create(&self, name: &str, size: u64) -> Result<ObjHandle> {
        let key = check_name(name)?;
        if size == 0 {
            return Err(Error::ZeroSize);
        }
        let lock = self.creation_lock();
        lock.acquire(&self.dev, self.rank, self.lock_timeout)?;
        let out = self.create_locked(name, &key, size);
        lock.release(&self.dev, self.rank)?;
        out
    }

    fn create_locked(&self, name: &str, key: &[u8; NAME_BYTES], size: u64) -> Result<ObjHandle> {
        if self.find(key)?.is_some() {
            return Err(Error::NameExists(name.into()));
        }
        let mut claimed = None;
        for level in 0..self.geometry().levels() {
            let slot = self.geometry().slot_for(name.as_bytes(), level);
            if self.slot_state(slot)? == SlotState::Free && self.claim(slot)? {
                claimed = Some(slot);
                break;
            }
        }
        let slot = claimed.ok_or_else(|| Error::MetadataFull(name.into()))?;
        let at = self.slot_offset(slot);

        let rounded = align_up(size);
        let cursor = self.dev.nt_load_u64(H_CURSOR)?;
        let available = self.header.objects_len - cursor;
        if rounded > available {
            self.dev.nt_store_u64(at, SlotState::Free.encode())?;
            return Err(Error::ObjectRegionFull {
                requested: rounded,
                available,
            });
        }
        let handle = ObjHandle {
            slot_index: slot,
            offset: cursor,
            size: rounded,
        };
        self.dev.zero_range(self.abs_offset(&handle), rounded as usize)?;

        let mut body = [0u8; SLOT_BYTES - 8];
        body[S_OFFSET - 8..S_OFFSET].copy_from_slice(&cursor.to_le_bytes());
        body[S_SIZE - 8..S_SIZE].copy_from_slice(&rounded.to_le_bytes());
        body[S_NAME - 8..].copy_from_slice(key);
        self.dev.publish(at + 8, &body)?;
        self.dev.nt_store_u64(H_CURSOR, cursor + rounded)?;
        self.dev
            .nt_store_u64(at, SlotState::Used { owner: self.rank }.encode())?;
        self.dev.fence();
        Ok(handle)
    }

    pub fn open(&self, name: &str) -> Result<ObjHandle> {
        let key = check_name(name)?;
        match self.find(&key)? {
            Some((slot, _, offset, size)) => Ok(ObjHandle {
                slot_index: slot,
                offset,
                size,
            }),
            None => Err(Error::NotFound(name.into())),
        }
    }

    /// Looks an object up with its owner rank.
    pub fn stat(&self, name: &str) -> Result<ObjectInfo> {
        let key = check_name(name)?;
        match self.find(&key)? {
            Some((slot, SlotState::Used { owner }, offset, size)) => Ok(ObjectInfo {
                name: name.into(),
                owner,
                handle: ObjHandle {
                    slot_index: slot,
                    offset,
                    size,
                },
            }),
            _ => Err(Error::NotFound(name.into())),
        }
    }

    /// Frees the slot. Object bytes are not reclaimed.
    pub fn unlink(&self, name: &str) -> Result<()> {
        let key = check_name(name)?;
        let lock = self.creation_lock();
        lock.acquire(&self.dev, self.rank, self.lock_timeout)?;
        let out = (|| {
            let (slot, ..) = self.find(&key)?.ok_or_else(|| Error::NotFound(name.into()))?;
            let at = self.slot_offset(slot);
            self.dev.nt_store_u64(at, SlotState::Free.encode())?;
            self.dev.fence();
            self.dev.publish(at + 8, &[0u8; SLOT_BYTES - 8])
        })();
        lock.release(&self.dev, self.rank)?;
        out
    }

    /// (level, bucket) where `name` currently lives.
    pub fn placement(&self, name: &str) -> Result<(usize, u64)> {
        let h = self.open(name)?;
        Ok(self.geometry().locate(h.slot_index))
    }

    /// Every USED slot in slot order.
    pub fn list(&self) -> Result<Vec<ObjectInfo>> {
        self.list_with(Exec::Parallel)
    }

    pub fn list_with(&self, exec: Exec) -> Result<Vec<ObjectInfo>> {
        let total = self.geometry().slot_total() as usize;
        self.dev.fence();
        let used: Vec<u64> = par::map_blocks(exec, total, 1 << 14, |r| {
            r.filter(|&s| {
                let w = self.dev.nt_load_u64(self.slot_offset(s as u64)).unwrap_or(0);
                matches!(SlotState::decode(w), SlotState::Used { .. })
            })
            .map(|s| s as u64)
            .collect()
        });
        let mut out = Vec::with_capacity(used.len());
        for slot in used {
            let (state, name, offset, size) = self.read_slot(slot)?;
            let SlotState::Used { owner } = state else {
                continue;
            };
            let len = name.iter().position(|&b| b == 0).unwrap_or(NAME_BYTES);
            out.push(ObjectInfo {
                name: String::from_utf8_lossy(&name[..len]).into_owned(),
                owner,
                handle: ObjHandle {
                    slot_index: slot,
                    offset,
                    size,
                },
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{CoherenceMode, DeviceConfig};

    fn small(mode: CoherenceMode, primes: Vec<u64>) -> (tempfile::TempDir, Arena) {
        let dir = tempfile::tempdir().unwrap();
        let dev = Device::open(DeviceConfig::new(dir.path().join("d")).capacity(1 << 20).mode(mode)).unwrap();
        let arena = Arena::format(Arc::new(dev), HashGeometry::new(primes).unwrap()).unwrap();
        (dir, arena)
    }

    #[test]
    fn default_layout_arithmetic() {
        // header 4096, 1,999,260 slots of 128 bytes
        let h = ArenaHeader::layout(1 << 30, HashGeometry::default()).unwrap();
        assert_eq!(h.metadata_len, 255_905_280);
        assert_eq!(h.objects_off, 255_909_376);
        assert_eq!(h.objects_len, 817_832_448);
        assert!(matches!(
            ArenaHeader::layout(4096, HashGeometry::default()),
            Err(Error::RegionTooSmall { .. })
        ));
    }

    #[test]
    fn first_create_starts_at_region_base() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        let h = a.create("w", 4096).unwrap();
        assert_eq!((h.offset, h.size), (0, 4096));
        let h2 = a.create("x", 100).unwrap();
        assert_eq!((h2.offset, h2.size), (4096, 128));
        assert_eq!(a.alloc_cursor().unwrap(), 4224);
    }

    #[test]
    fn create_is_exclusive() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        a.create("w", 64).unwrap();
        assert!(matches!(a.create("w", 64), Err(Error::NameExists(_))));
    }

    #[test]
    fn name_and_size_validation() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        assert!(matches!(a.create("", 64), Err(Error::EmptyName)));
        assert!(matches!(a.create(&"n".repeat(64), 64), Err(Error::NameTooLong(64))));
        assert!(a.create(&"n".repeat(63), 64).is_ok());
        assert!(matches!(a.create("z", 0), Err(Error::ZeroSize)));
    }

    #[test]
    fn open_round_trip_and_not_found() {
        let (_d, a) = small(CoherenceMode::IncoherentEmulated, vec![11, 7]);
        assert!(matches!(a.open("w"), Err(Error::NotFound(_))));
        let h = a.create("w", 300).unwrap();
        assert_eq!(a.open("w").unwrap(), h);
    }

    #[test]
    fn unlink_lifecycle_leaks_space() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        let first = a.create("A", 64).unwrap();
        a.unlink("A").unwrap();
        assert!(matches!(a.open("A"), Err(Error::NotFound(_))));
        assert!(matches!(a.unlink("A"), Err(Error::NotFound(_))));
        let again = a.create("A", 64).unwrap();
        assert_ne!(first.offset, again.offset);
    }

    #[test]
    fn colliding_names_fall_through_levels() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![7, 5]);
        // brute-force two names sharing their level-0 bucket
        let bucket = |n: &str| level_hash(n.as_bytes(), 0) % 7;
        let first = "n0".to_string();
        let second = (1..)
            .map(|i| format!("n{i}"))
            .find(|n| bucket(n) == bucket(&first))
            .unwrap();
        a.create(&first, 64).unwrap();
        a.create(&second, 64).unwrap();
        assert_eq!(a.placement(&first).unwrap().0, 0);
        assert_eq!(a.placement(&second).unwrap().0, 1);
        assert_eq!(a.open(&second).unwrap().offset, 64);
    }

    #[test]
    fn single_level_fills_exactly() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![7]);
        let mut names = Vec::new();
        let mut buckets = std::collections::HashSet::new();
        for i in 0.. {
            let n = format!("obj{i}");
            if buckets.insert(level_hash(n.as_bytes(), 0) % 7) {
                names.push(n);
            }
            if names.len() == 7 {
                break;
            }
        }
        for n in &names {
            a.create(n, 64).unwrap();
        }
        let extra = (0..).map(|i| format!("extra{i}")).next().unwrap();
        assert!(matches!(a.create(&extra, 64), Err(Error::MetadataFull(_))));
        assert_eq!(a.list().unwrap().len(), 7);
    }

    #[test]
    fn object_region_full() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        let avail = a.header().objects_len;
        assert!(matches!(
            a.create("big", avail + 1),
            Err(Error::ObjectRegionFull { .. })
        ));
        // the failed create leaves its slot free
        a.create("big", avail).unwrap();
        assert!(matches!(a.create("more", 1), Err(Error::ObjectRegionFull { .. })));
    }

    #[test]
    fn objects_are_zeroed() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        let h = a.create("a", 128).unwrap();
        a.device().publish(a.abs_offset(&h), &[0xff; 128]).unwrap();
        a.unlink("a").unwrap();
        // after a reset the allocator hands out the dirtied bytes again
        a.reset().unwrap();
        let h2 = a.create("b", 128).unwrap();
        assert_eq!(h2.offset, h.offset);
        assert_eq!(a.device().fetch(a.abs_offset(&h2), 128).unwrap(), vec![0; 128]);
    }

    #[test]
    fn reformat_is_idempotent_and_detects_mismatch() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        a.create("keep", 64).unwrap();
        let before = a.header_bytes().unwrap();
        let again = Arena::format(a.device().clone(), HashGeometry::new(vec![11, 7]).unwrap()).unwrap();
        assert_eq!(again.header_bytes().unwrap(), before);
        assert!(again.open("keep").is_ok());
        assert!(matches!(
            Arena::format(a.device().clone(), HashGeometry::new(vec![13, 7]).unwrap()),
            Err(Error::GeometryMismatch)
        ));
    }

    #[test]
    fn attach_unformatted_fails() {
        let dir = tempfile::tempdir().unwrap();
        let dev = Device::open(DeviceConfig::new(dir.path().join("d")).capacity(1 << 16)).unwrap();
        assert!(matches!(Arena::attach(Arc::new(dev)), Err(Error::NotFormatted)));
    }

    #[test]
    fn list_sequential_and_parallel_agree() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![101, 97]);
        for i in 0..40 {
            a.create(&format!("o{i}"), 64 * (i + 1)).unwrap();
        }
        let s = a.list_with(Exec::Sequential).unwrap();
        assert_eq!(s, a.list_with(Exec::Parallel).unwrap());
        assert_eq!(s.len(), 40);
        assert!(s.windows(2).all(|w| w[0].handle.slot_index < w[1].handle.slot_index));
    }

    #[test]
    fn lower_rank_wins_a_contested_claim() {
        let (_d, a) = small(CoherenceMode::Coherent, vec![11, 7]);
        let low = a.clone().with_rank(1);
        let high = a.clone().with_rank(5);
        let at = a.slot_offset(3);
        // the higher rank's claim is already in place
        a.device()
            .nt_store_u64(at, SlotState::Claiming { owner: 5 }.encode())
            .unwrap();
        assert!(low.claim(3).unwrap());
        assert!(!high.claim(3).unwrap());
        assert_eq!(
            SlotState::decode(a.device().nt_load_u64(at).unwrap()),
            SlotState::Claiming { owner: 1 }
        );
    }

    #[test]
    fn state_word_round_trip() {
        for s in [
            SlotState::Free,
            SlotState::Claiming { owner: 0 },
            SlotState::Used { owner: 63 },
        ] {
            assert_eq!(SlotState::decode(s.encode()), s);
        }
    }
}
