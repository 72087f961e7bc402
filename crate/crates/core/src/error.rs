use std::path::PathBuf;
use std::time::Duration;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("device capacity {0} is not a multiple of the 64-byte cacheline")]
    CapacityNotAligned(u64),
    #[error("backing file {path:?} holds {actual} bytes, {required} required")]
    BackingTooSmall { path: PathBuf, actual: u64, required: u64 },
    #[error("access of {len} bytes at offset {offset} exceeds region of {limit} bytes")]
    OutOfBounds { offset: usize, len: usize, limit: usize },
    #[error("offset {0} is not 8-byte aligned")]
    Misaligned(usize),

    #[error("only {found} primes <= {cap}, {wanted} requested")]
    NotEnoughPrimes { cap: u64, wanted: usize, found: usize },
    #[error("invalid hash geometry: {0}")]
    InvalidGeometry(String),
    #[error("device of {device} bytes cannot hold an arena needing {needed} bytes")]
    RegionTooSmall { device: u64, needed: u64 },
    #[error("device already holds an arena with a different geometry")]
    GeometryMismatch,
    #[error("device holds no formatted arena")]
    NotFormatted,

    #[error("object name is empty")]
    EmptyName,
    #[error("object name is {0} bytes, at most 63 allowed")]
    NameTooLong(usize),
    #[error("object size must be positive")]
    ZeroSize,
    #[error("object {0:?} already exists")]
    NameExists(String),
    #[error("object {0:?} not found")]
    NotFound(String),
    #[error("every candidate metadata slot for {0:?} is taken")]
    MetadataFull(String),
    #[error("object region exhausted: {requested} bytes requested, {available} available")]
    ObjectRegionFull { requested: u64, available: u64 },
    #[error("object {name:?} has size {actual}, expected {expected}")]
    SizeMismatch { name: String, expected: u64, actual: u64 },

    #[error("queue depth {0} is not a power of two >= 2")]
    DepthNotPowerOfTwo(usize),
    #[error("cell size {0} is not a power of two >= 4096")]
    InvalidCellSize(usize),
    #[error("payload of {len} bytes exceeds cell capacity {capacity}")]
    PayloadTooLarge { len: usize, capacity: usize },
    #[error("rank {rank} out of range for {nranks} ranks")]
    InvalidRank { rank: usize, nranks: usize },
    #[error("receive buffer of {buf} bytes too small for {len}-byte message")]
    BufferTooSmall { len: usize, buf: usize },
    #[error("corrupt message stream: {0}")]
    Corrupt(String),

    #[error("access of {len} bytes at displacement {disp} leaves the {seg_size}-byte segment")]
    OutOfSegment { disp: usize, len: usize, seg_size: usize },
    #[error("no access epoch open towards rank {0}")]
    NoEpoch(usize),
    #[error("epoch misuse: {0}")]
    EpochMisuse(&'static str),
    #[error("window lock on rank {0} is already held by this rank")]
    LockReentrant(usize),
    #[error("window lock on rank {0} is not held by this rank")]
    LockNotHeld(usize),

    #[error("timed out after {0:?} waiting for {1}")]
    Timeout(Duration, &'static str),
    #[error("rank context already finalized")]
    Finalized,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("launch failed: {0}")]
    Launch(String),
}
