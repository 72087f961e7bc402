//! Rank bootstrap: device attach, arena format/attach, deterministic object
//! naming, the initialization barrier and the default queue matrix.
//!
//! Rank 0 owns setup. On every launch it (re)initializes the arena, creates
//! the barrier and queue objects and finally publishes the launch's session
//! id in the arena header. The other ranks wait for that session id before
//! touching anything, so leftovers from an earlier run on the same backing
//! file are never mistaken for the current one.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use crate::arena::{Arena, HashGeometry, MAX_RANKS, TOOL_RANK};
use crate::device::{Device, DeviceConfig, DEFAULT_CAPACITY};
use crate::error::{Error, Result};
use crate::queue::{open_when_present, Messenger, QueueMatrix, Status, DEFAULT_CELL_SIZE, DEFAULT_DEPTH};
use crate::rma::Window;
use crate::sync::{Backoff, SeqBarrier};
use crate::units::parse_size;

pub const DEFAULT_COMM: &str = "world";
pub const DEFAULT_INIT_TIMEOUT: Duration = Duration::from_secs(30);

pub fn barrier_object_name(comm: &str) -> String {
    format!("comm.{comm}.barrier")
}

pub fn default_device_path() -> PathBuf {
    std::env::temp_dir().join("cmpi-device.img")
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub device: DeviceConfig,
    pub geometry: HashGeometry,
    pub cell_size: usize,
    pub depth: usize,
    /// Identifies one launch; must be non-zero and equal on every rank.
    pub session: u64,
    pub init_timeout: Duration,
    /// Bound on every later blocking wait (send, recv, epochs, barriers).
    pub op_timeout: Option<Duration>,
    /// Remove the backing file at finalize.
    pub cleanup: bool,
}

impl RuntimeConfig {
    pub fn new(device: DeviceConfig) -> Self {
        RuntimeConfig {
            device,
            geometry: HashGeometry::default(),
            cell_size: DEFAULT_CELL_SIZE,
            depth: DEFAULT_DEPTH,
            session: 1,
            init_timeout: DEFAULT_INIT_TIMEOUT,
            op_timeout: None,
            cleanup: false,
        }
    }

    /// Rank, rank count and configuration from the `CMPI_*` environment
    /// variables set by the launcher.
    pub fn from_env() -> Result<(usize, usize, RuntimeConfig)> {
        fn var(name: &str) -> Option<String> {
            std::env::var(name).ok().filter(|v| !v.is_empty())
        }
        fn num(name: &str) -> Result<Option<u64>> {
            var(name)
                .map(|v| parse_size(&v).map_err(|e| Error::Config(format!("{name}: {e}"))))
                .transpose()
        }
        fn flag(name: &str) -> bool {
            var(name).is_some_and(|v| v != "0" && v != "false")
        }
        let rank = num("CMPI_RANK")?.unwrap_or(0) as usize;
        let nranks = num("CMPI_NRANKS")?.unwrap_or(1) as usize;
        let path = var("CMPI_DEVICE")
            .map(PathBuf::from)
            .unwrap_or_else(default_device_path);
        let device = DeviceConfig::new(path)
            .capacity(num("CMPI_DEVICE_SIZE")?.unwrap_or(DEFAULT_CAPACITY))
            .incoherent(flag("CMPI_INCOHERENT"));
        let mut cfg = RuntimeConfig::new(device);
        if let Some(c) = num("CMPI_CELL_SIZE")? {
            cfg.cell_size = c as usize;
        }
        if let Some(d) = num("CMPI_QUEUE_DEPTH")? {
            cfg.depth = d as usize;
        }
        if let Some(s) = var("CMPI_SESSION") {
            cfg.session = s
                .parse()
                .map_err(|_| Error::Config(format!("CMPI_SESSION: invalid value {s:?}")))?;
        }
        if let Some(ms) = num("CMPI_TIMEOUT_MS")? {
            cfg.init_timeout = Duration::from_millis(ms);
        }
        cfg.cleanup = flag("CMPI_CLEANUP");
        Ok((rank, nranks, cfg))
    }
}

/// One process's view of the job.
#[derive(Debug)]
pub struct RankContext {
    rank: usize,
    nranks: usize,
    dev: Arc<Device>,
    arena: Arena,
    barrier: SeqBarrier,
    messenger: Messenger,
    config: RuntimeConfig,
    finalized: bool,
}

impl RankContext {
    pub fn init(rank: usize, nranks: usize, config: RuntimeConfig) -> Result<RankContext> {
        if nranks == 0 || nranks > TOOL_RANK {
            return Err(Error::Config(format!("rank count {nranks} outside 1..={TOOL_RANK}")));
        }
        if rank >= nranks {
            return Err(Error::InvalidRank { rank, nranks });
        }
        if config.session == 0 {
            return Err(Error::Config("session id must be non-zero".into()));
        }
        let dev = Arc::new(Device::open(config.device.clone())?);
        let timeout = Some(config.init_timeout);
        let barrier_name = barrier_object_name(DEFAULT_COMM);
        let barrier_bytes = SeqBarrier::bytes(MAX_RANKS) as u64;

        let (arena, barrier_handle, matrix) = if rank == 0 {
            let arena = match Arena::attach(dev.clone()) {
                Ok(a) if *a.geometry() != config.geometry => return Err(Error::GeometryMismatch),
                Ok(a) => {
                    a.set_session(0)?;
                    a.reset()?;
                    a
                }
                Err(Error::NotFormatted) => Arena::format(dev.clone(), config.geometry.clone())?,
                Err(e) => return Err(e),
            }
            .with_rank(rank)
            .with_lock_timeout(timeout);
            let bh = arena.create(&barrier_name, barrier_bytes)?;
            let m = QueueMatrix::create(
                &arena,
                DEFAULT_COMM,
                nranks,
                config.cell_size,
                config.depth,
                rank,
                timeout,
            )?;
            arena.set_session(config.session)?;
            (arena, bh, Some(m))
        } else {
            let mut backoff = Backoff::new(timeout);
            let arena = loop {
                match Arena::attach(dev.clone()) {
                    Ok(a) if a.session()? == config.session => break a,
                    Ok(_) | Err(Error::NotFormatted) => backoff.snooze("rank 0 to initialize the arena")?,
                    Err(e) => return Err(e),
                }
            };
            if *arena.geometry() != config.geometry {
                return Err(Error::GeometryMismatch);
            }
            let arena = arena.with_rank(rank).with_lock_timeout(timeout);
            let bh = open_when_present(&arena, &barrier_name, barrier_bytes, timeout)?;
            (arena, bh, None)
        };

        let mut barrier = SeqBarrier::new(arena.abs_offset(&barrier_handle), nranks, rank);
        barrier.wait(&dev, timeout)?;
        let matrix = match matrix {
            Some(m) => m,
            None => QueueMatrix::create(
                &arena,
                DEFAULT_COMM,
                nranks,
                config.cell_size,
                config.depth,
                rank,
                timeout,
            )?,
        };
        let arena = arena.with_lock_timeout(config.op_timeout);
        let mut messenger = Messenger::new(dev.clone(), matrix, rank);
        messenger.set_timeout(config.op_timeout);
        Ok(RankContext {
            rank,
            nranks,
            dev,
            arena,
            barrier,
            messenger,
            config,
            finalized: false,
        })
    }

    fn live(&self) -> Result<()> {
        if self.finalized {
            Err(Error::Finalized)
        } else {
            Ok(())
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nranks(&self) -> usize {
        self.nranks
    }

    pub fn device(&self) -> &Arc<Device> {
        &self.dev
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn messenger(&mut self) -> &mut Messenger {
        &mut self.messenger
    }

    pub fn set_op_timeout(&mut self, timeout: Option<Duration>) {
        self.config.op_timeout = timeout;
        self.messenger.set_timeout(timeout);
    }

    pub fn barrier(&mut self) -> Result<()> {
        self.live()?;
        self.barrier.wait(&self.dev, self.config.op_timeout)
    }

    pub fn barrier_seq(&self) -> u64 {
        self.barrier.local_seq()
    }

    pub fn send(&mut self, dst: usize, tag: u64, data: &[u8]) -> Result<()> {
        self.live()?;
        self.messenger.send(dst, tag, data)
    }

    pub fn recv(&mut self, src: usize, tag: u64, buf: &mut [u8]) -> Result<Status> {
        self.live()?;
        self.messenger.recv(src, tag, buf)
    }

    pub fn recv_vec(&mut self, src: usize, tag: u64) -> Result<(Status, Vec<u8>)> {
        self.live()?;
        self.messenger.recv_vec(src, tag)
    }

    /// Collective window allocation; returns after every rank has opened it.
    pub fn win_allocate_shared(&mut self, win_name: &str, seg_size: usize) -> Result<Window> {
        self.live()?;
        let mut win = Window::allocate(
            &self.arena,
            win_name,
            self.nranks,
            self.rank,
            seg_size,
            Some(self.config.init_timeout),
        )?;
        win.set_timeout(self.config.op_timeout);
        self.barrier()?;
        Ok(win)
    }

    /// Collective: releases the window's arena objects once every rank is
    /// done with it.
    pub fn win_free(&mut self, win: Window) -> Result<()> {
        self.barrier()?;
        if self.rank == 0 {
            self.arena.unlink(&crate::rma::window_object_name(win.name()))?;
            self.arena.unlink(&crate::rma::sync_object_name(win.name()))?;
        }
        Ok(())
    }

    /// Final barrier; afterwards every operation fails with
    /// [`Error::Finalized`].
    pub fn finalize(&mut self) -> Result<()> {
        self.live()?;
        self.barrier.wait(&self.dev, Some(self.config.init_timeout))?;
        self.finalized = true;
        self.dev.sync_to_disk().ok();
        if self.config.cleanup && self.rank == 0 {
            std::fs::remove_file(&self.config.device.backing_path).ok();
        }
        Ok(())
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }
}
