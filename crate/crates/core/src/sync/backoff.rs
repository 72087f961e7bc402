use std::time::{Duration, Instant};

use crate::error::{Error, Result};

const SPIN_STEPS: u32 = 4;
const YIELD_STEPS: u32 = 24;
const MAX_SLEEP: Duration = Duration::from_millis(1);

/// Spin-wait policy: a few pause hints, then yields, then sleeps doubling
/// from 1 µs up to 1 ms. Optionally bounded by a deadline.
#[derive(Debug)]
pub struct Backoff {
    step: u32,
    sleep: Duration,
    deadline: Option<(Instant, Duration)>,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff::new(None)
    }
}

impl Backoff {
    pub fn new(timeout: Option<Duration>) -> Self {
        Backoff {
            step: 0,
            sleep: Duration::from_micros(1),
            deadline: timeout.map(|t| (Instant::now() + t, t)),
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        self.sleep = Duration::from_micros(1);
    }

    /// Waits one round; fails once the deadline has passed.
    pub fn snooze(&mut self, what: &'static str) -> Result<()> {
        if let Some((deadline, total)) = self.deadline {
            if Instant::now() >= deadline {
                return Err(Error::Timeout(total, what));
            }
        }
        if self.step < SPIN_STEPS {
            for _ in 0..(1 << self.step) {
                std::hint::spin_loop();
            }
        } else if self.step < SPIN_STEPS + YIELD_STEPS {
            std::thread::yield_now();
        } else {
            std::thread::sleep(self.sleep);
            self.sleep = (self.sleep * 2).min(MAX_SLEEP);
        }
        self.step = self.step.saturating_add(1);
        Ok(())
    }

    /// Spins until `cond` holds.
    pub fn until<F>(mut self, what: &'static str, mut cond: F) -> Result<()>
    where
        F: FnMut() -> Result<bool>,
    {
        while !cond()? {
            self.snooze(what)?;
        }
        Ok(())
    }
}
