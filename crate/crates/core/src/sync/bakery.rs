//! Lamport's bakery lock over plain 64-bit loads and stores.
//!
//! The acquire path is written as an explicit state machine so that the
//! same transition code drives both the real lock (over device memory) and
//! the exhaustive interleaving checker in [`super::model`].

use std::time::Duration;

use crate::device::Device;
use crate::error::Result;

use super::backoff::Backoff;

/// Word addressing for the lock's shared state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Word {
    Choosing(usize),
    Ticket(usize),
}

/// Shared memory seen by one participant.
pub trait BakeryMemory {
    fn load(&self, w: Word) -> u64;
    fn store(&mut self, w: Word, v: u64);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    Choosing,
    Scan { j: u16, max: u64 },
    Ticket { t: u64 },
    Chosen,
    WaitChoosing { j: u16 },
    WaitTicket { j: u16 },
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Progress,
    Spin,
    Acquired,
}

/// One participant's position in the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Machine {
    pub me: u16,
    pub n: u16,
    pub phase: Phase,
    pub ticket: u64,
    /// Skips the choosing handshake. Only for demonstrating that the model
    /// checker catches the classic bakery bug; never used by the real lock.
    pub skip_choosing: bool,
}

impl Machine {
    pub fn new(me: usize, n: usize) -> Self {
        Machine {
            me: me as u16,
            n: n as u16,
            phase: Phase::Idle,
            ticket: 0,
            skip_choosing: false,
        }
    }

    fn next_peer(&self, from: u16) -> Option<u16> {
        (from..self.n).find(|&j| j != self.me)
    }

    fn after_scan(&self) -> Phase {
        match self.next_peer(0) {
            None => Phase::Critical,
            Some(j) if self.skip_choosing => Phase::WaitTicket { j },
            Some(j) => Phase::WaitChoosing { j },
        }
    }

    /// Executes one shared-memory access of the acquire protocol.
    pub fn step(&mut self, mem: &mut dyn BakeryMemory) -> Step {
        let me = self.me as usize;
        match self.phase {
            Phase::Idle => {
                self.phase = if self.skip_choosing {
                    Phase::Scan { j: 0, max: 0 }
                } else {
                    Phase::Choosing
                };
                self.step(mem)
            }
            Phase::Choosing => {
                mem.store(Word::Choosing(me), 1);
                self.phase = Phase::Scan { j: 0, max: 0 };
                Step::Progress
            }
            Phase::Scan { j, max } => {
                let t = mem.load(Word::Ticket(j as usize));
                let max = max.max(t);
                self.phase = if j + 1 < self.n {
                    Phase::Scan { j: j + 1, max }
                } else {
                    Phase::Ticket { t: max + 1 }
                };
                Step::Progress
            }
            Phase::Ticket { t } => {
                mem.store(Word::Ticket(me), t);
                self.ticket = t;
                self.phase = if self.skip_choosing {
                    self.after_scan()
                } else {
                    Phase::Chosen
                };
                self.done_if_critical()
            }
            Phase::Chosen => {
                mem.store(Word::Choosing(me), 0);
                self.phase = self.after_scan();
                self.done_if_critical()
            }
            Phase::WaitChoosing { j } => {
                if mem.load(Word::Choosing(j as usize)) != 0 {
                    return Step::Spin;
                }
                self.phase = Phase::WaitTicket { j };
                Step::Progress
            }
            Phase::WaitTicket { j } => {
                let t = mem.load(Word::Ticket(j as usize));
                if t != 0 && (t, j) < (self.ticket, self.me) {
                    return Step::Spin;
                }
                self.phase = match self.next_peer(j + 1) {
                    None => Phase::Critical,
                    Some(k) if self.skip_choosing => Phase::WaitTicket { j: k },
                    Some(k) => Phase::WaitChoosing { j: k },
                };
                self.done_if_critical()
            }
            Phase::Critical => Step::Acquired,
        }
    }

    fn done_if_critical(&self) -> Step {
        if self.phase == Phase::Critical {
            Step::Acquired
        } else {
            Step::Progress
        }
    }

    pub fn release(&mut self, mem: &mut dyn BakeryMemory) {
        mem.store(Word::Ticket(self.me as usize), 0);
        self.ticket = 0;
        self.phase = Phase::Idle;
    }
}

/// Bakery lock cells in device memory: `participants` choosing words
/// followed by `participants` ticket words, `stride` bytes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BakeryLock {
    pub base: usize,
    pub participants: usize,
    pub stride: usize,
}

struct DeviceCells<'a> {
    dev: &'a Device,
    lock: BakeryLock,
}

impl DeviceCells<'_> {
    fn offset(&self, w: Word) -> usize {
        let idx = match w {
            Word::Choosing(i) => i,
            Word::Ticket(i) => self.lock.participants + i,
        };
        self.lock.base + idx * self.lock.stride
    }
}

impl BakeryMemory for DeviceCells<'_> {
    fn load(&self, w: Word) -> u64 {
        self.dev.fence();
        self.dev.nt_load_u64(self.offset(w)).expect("lock cell in bounds")
    }

    fn store(&mut self, w: Word, v: u64) {
        self.dev.nt_store_u64(self.offset(w), v).expect("lock cell in bounds");
        self.dev.fence();
    }
}

impl BakeryLock {
    pub const fn bytes(participants: usize, stride: usize) -> usize {
        2 * participants * stride
    }

    pub fn acquire(&self, dev: &Device, me: usize, timeout: Option<Duration>) -> Result<()> {
        assert!(me < self.participants, "participant {me} out of range");
        // Validate the cell range once so the memory adapter can't fail.
        dev.nt_load_u64(self.base)?;
        dev.nt_load_u64(self.base + (Self::bytes(self.participants, self.stride) - self.stride))?;
        let mut cells = DeviceCells { dev, lock: *self };
        let mut m = Machine::new(me, self.participants);
        let mut backoff = Backoff::new(timeout);
        loop {
            match m.step(&mut cells) {
                Step::Acquired => return Ok(()),
                Step::Progress => backoff.reset(),
                Step::Spin => {
                    if let Err(e) = backoff.snooze("bakery lock") {
                        // Withdraw so peers are not blocked by our ticket.
                        m.release(&mut cells);
                        return Err(e);
                    }
                }
            }
        }
    }

    pub fn release(&self, dev: &Device, me: usize) -> Result<()> {
        let mut cells = DeviceCells { dev, lock: *self };
        let mut m = Machine::new(me, self.participants);
        m.release(&mut cells);
        Ok(())
    }
}
