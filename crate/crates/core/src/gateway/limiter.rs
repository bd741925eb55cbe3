//! Clock abstraction, counting semaphore, and sliding-window rate limiter.
//!
//! Everything that waits goes through [`Clock`], so throttling logic is
//! testable against a virtual clock without real sleeps.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Monotonic milliseconds since some fixed origin.
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

/// Real time.
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }
    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

/// Test clock: sleeping advances time instantly.
pub struct VirtualClock {
    now: Mutex<u64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self { now: Mutex::new(0) }
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        *self.now.lock().unwrap()
    }
    fn sleep_ms(&self, ms: u64) {
        *self.now.lock().unwrap() += ms;
    }
}

/// Plain counting semaphore; the guard releases on drop.
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        SemaphoreGuard { sem: self }
    }
}

pub struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut p = self.sem.permits.lock().unwrap();
        *p += 1;
        self.sem.cv.notify_one();
    }
}

/// Sliding-window rate limiter: at most `cap` acquisitions in any trailing
/// `window_ms` window.
pub struct RateLimiter {
    cap: usize,
    window_ms: u64,
    stamps: Mutex<VecDeque<u64>>,
}

impl RateLimiter {
    pub fn per_minute(cap: usize) -> Self {
        Self::new(cap, 60_000)
    }

    pub fn new(cap: usize, window_ms: u64) -> Self {
        Self {
            cap: cap.max(1),
            window_ms,
            stamps: Mutex::new(VecDeque::new()),
        }
    }

    /// Block (via the clock) until an acquisition fits in the window.
    pub fn acquire(&self, clock: &dyn Clock) {
        loop {
            let now = clock.now_ms();
            let wait = {
                let mut stamps = self.stamps.lock().unwrap();
                while let Some(&t) = stamps.front() {
                    if now.saturating_sub(t) >= self.window_ms {
                        stamps.pop_front();
                    } else {
                        break;
                    }
                }
                if stamps.len() < self.cap {
                    stamps.push_back(now);
                    return;
                }
                let oldest = *stamps.front().expect("non-empty at cap");
                self.window_ms - (now - oldest)
            };
            clock.sleep_ms(wait.max(1));
        }
    }
}
