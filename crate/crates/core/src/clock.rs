//! Time sources for stage timing.
//!
//! Ledgers are built from differences of [`Clock::now`] readings. The
//! virtual clock advances by a fixed tick on every reading, which makes
//! ledgers (and anything serialized from them) reproducible.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

pub trait Clock: Send + Sync {
    /// Seconds since an arbitrary origin; never decreases.
    fn now(&self) -> f64;

    /// Runs `f` and returns its result with the elapsed seconds.
    fn time<T>(&self, f: impl FnOnce() -> T) -> (T, f64)
    where
        Self: Sized,
    {
        let start = self.now();
        let out = f();
        (out, self.now() - start)
    }
}

/// Wall-clock time from [`Instant`].
#[derive(Debug)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Deterministic clock: each reading returns the previous one plus `tick`.
#[derive(Debug)]
pub struct VirtualClock {
    ticks: AtomicU64,
    tick: f64,
}

impl VirtualClock {
    pub fn new(tick: f64) -> Self {
        Self {
            ticks: AtomicU64::new(0),
            tick,
        }
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        n as f64 * self.tick
    }
}

/// Which clock to create for an independent unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    Monotonic,
    /// Virtual clock with the given tick in seconds.
    Virtual(f64),
}

impl ClockKind {
    pub fn make(self) -> Box<dyn Clock> {
        match self {
            ClockKind::Monotonic => Box::new(MonotonicClock::new()),
            ClockKind::Virtual(tick) => Box::new(VirtualClock::new(tick)),
        }
    }
}

/// Lets `&dyn Clock` use the generic helper.
pub fn time_dyn<T>(clock: &dyn Clock, f: impl FnOnce() -> T) -> (T, f64) {
    let start = clock.now();
    let out = f();
    (out, clock.now() - start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_deterministic() {
        let c = VirtualClock::new(0.5);
        assert_eq!(c.now(), 0.0);
        assert_eq!(c.now(), 0.5);
        let (_, dt) = c.time(|| ());
        assert_eq!(dt, 0.5);
    }

    #[test]
    fn monotonic_clock_never_decreases() {
        let c = MonotonicClock::new();
        let a = c.now();
        let b = c.now();
        assert!(b >= a);
    }
}
