//! How a thread waits, and how it is woken.
//!
//! Every wait in this crate is spurious-wakeup tolerant: callers snapshot a
//! word, re-check their condition, then wait for the word to move, looping
//! until the condition holds.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::thread::{self, Thread};

use crate::addr::{self, WaitWord};

/// Default number of polite spins before a [`WaitStrategy::SpinThenPark`]
/// waiter blocks.
pub const DEFAULT_SPIN_BOUND: u32 = 1000;

/// Consecutive fruitless polls after which a polite spin loop hands its time
/// slice back to the scheduler once.
pub const PAUSES_PER_YIELD: u32 = 256;

/// Issues the processor's spin-wait hint (`PAUSE` on x86, `YIELD`/`ISB` on
/// Arm), or nothing where the platform has none.
#[inline(always)]
pub fn polite_pause() {
    std::hint::spin_loop();
}

/// Poll-loop helper for busy-waiting.
#[derive(Debug, Default)]
pub struct Spinner {
    polls: u32,
}

impl Spinner {
    pub fn new() -> Self {
        Spinner { polls: 0 }
    }

    #[inline]
    pub fn spin(&mut self) {
        self.polls = self.polls.wrapping_add(1);
        if self.polls.is_multiple_of(PAUSES_PER_YIELD) {
            thread::yield_now();
        } else {
            polite_pause();
        }
    }

    pub fn polls(&self) -> u32 {
        self.polls
    }
}

/// Spins politely until `done` returns true.
#[inline]
pub fn spin_until(mut done: impl FnMut() -> bool) {
    let mut spinner = Spinner::new();
    while !done() {
        spinner.spin();
    }
}

/// Blocks the calling thread until its park permit is available, consuming
/// it. Behaves as a bounded binary per-thread semaphore; may return
/// spuriously.
pub fn park() {
    thread::park();
}

/// Makes `target`'s park permit available, waking it if it is parked.
/// Repeated unparks before a park collapse into one permit.
pub fn unpark(target: &Thread) {
    target.unpark();
}

/// The waiting discipline used by a semaphore.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum WaitStrategy {
    /// Poll with the processor spin hint.
    PauseSpin,
    /// Poll with `sched_yield` between checks.
    YieldSpin,
    /// Block on the word's address (futex where available).
    #[default]
    AddressWait,
    /// Poll up to `spin_bound` times, then block. For words the blocking step
    /// is an address wait; for chain elements it is a thread park.
    SpinThenPark { spin_bound: u32 },
}

impl WaitStrategy {
    pub const fn spin_then_park() -> Self {
        WaitStrategy::SpinThenPark { spin_bound: DEFAULT_SPIN_BOUND }
    }

    /// Whether waiters may be descheduled (and so need an explicit wake).
    pub fn blocks(&self) -> bool {
        matches!(self, WaitStrategy::AddressWait | WaitStrategy::SpinThenPark { .. })
    }

    /// Short name as used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            WaitStrategy::PauseSpin => "pause",
            WaitStrategy::YieldSpin => "yield",
            WaitStrategy::AddressWait => "addr",
            WaitStrategy::SpinThenPark { .. } => "spinpark",
        }
    }

    /// Waits while `word` holds `expected`. May return spuriously.
    pub fn wait_word<W: WaitWord + ?Sized>(&self, word: &W, expected: u32) {
        match *self {
            WaitStrategy::PauseSpin => spin_until(|| word.load_word() != expected),
            WaitStrategy::YieldSpin => {
                while word.load_word() == expected {
                    thread::yield_now();
                }
            }
            WaitStrategy::AddressWait => addr::address_wait(word, expected),
            WaitStrategy::SpinThenPark { spin_bound } => {
                for _ in 0..spin_bound {
                    if word.load_word() != expected {
                        return;
                    }
                    polite_pause();
                }
                addr::address_wait(word, expected);
            }
        }
    }

    /// Wakes waiters of `word`. A no-op for the pure spinning strategies.
    #[inline]
    pub fn wake_word<W: WaitWord + ?Sized>(&self, word: &W) {
        if self.blocks() {
            addr::address_wake_all(word);
        }
    }

    /// Waits until a chain gate opens (becomes non-zero).
    pub(crate) fn wait_gate(&self, gate: &AtomicU32) {
        match *self {
            WaitStrategy::SpinThenPark { spin_bound } => {
                for _ in 0..spin_bound {
                    if gate.load(Ordering::SeqCst) != 0 {
                        return;
                    }
                    polite_pause();
                }
                while gate.load(Ordering::SeqCst) == 0 {
                    park();
                }
            }
            _ => {
                while gate.load(Ordering::SeqCst) == 0 {
                    self.wait_word(gate, 0);
                }
            }
        }
    }
}

impl fmt::Display for WaitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error returned when parsing an unknown strategy name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownStrategy(pub String);

impl fmt::Display for UnknownStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown wait strategy `{}` (expected pause, yield, addr or spinpark)", self.0)
    }
}

impl std::error::Error for UnknownStrategy {}

impl FromStr for WaitStrategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pause" => Ok(WaitStrategy::PauseSpin),
            "yield" => Ok(WaitStrategy::YieldSpin),
            "addr" => Ok(WaitStrategy::AddressWait),
            "spinpark" => Ok(WaitStrategy::spin_then_park()),
            other => Err(UnknownStrategy(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::time::{Duration, Instant};

    const ALL: [WaitStrategy; 4] = [
        WaitStrategy::PauseSpin,
        WaitStrategy::YieldSpin,
        WaitStrategy::AddressWait,
        WaitStrategy::SpinThenPark { spin_bound: DEFAULT_SPIN_BOUND },
    ];

    #[test]
    fn names_round_trip() {
        for s in ALL {
            assert_eq!(s.name().parse::<WaitStrategy>().unwrap(), s);
        }
        assert!("futex".parse::<WaitStrategy>().is_err());
        assert_eq!(WaitStrategy::default(), WaitStrategy::AddressWait);
    }

    #[test]
    fn pause_loop_terminates() {
        let mut n = 0u32;
        spin_until(|| {
            n += 1;
            n == 1_000_000
        });
        assert_eq!(n, 1_000_000);
    }

    #[test]
    fn every_strategy_wakes_on_change() {
        for s in ALL {
            let w = Arc::new(AtomicU32::new(0));
            let w2 = w.clone();
            let h = thread::spawn(move || {
                while w2.load(Ordering::SeqCst) == 0 {
                    s.wait_word(&*w2, 0);
                }
            });
            thread::sleep(Duration::from_millis(10));
            w.store(1, Ordering::SeqCst);
            s.wake_word(&*w);
            h.join().unwrap();
        }
    }

    #[test]
    fn stale_expected_returns_at_once() {
        for s in ALL {
            let w = AtomicU32::new(4);
            s.wait_word(&w, 3);
        }
    }

    #[test]
    fn unpark_before_park_is_consumed() {
        unpark(&thread::current());
        let start = Instant::now();
        park();
        assert!(start.elapsed() < Duration::from_secs(1));
    }

    #[test]
    fn parked_thread_resumes_on_unpark() {
        let flag = Arc::new(AtomicU32::new(0));
        let f2 = flag.clone();
        let h = thread::spawn(move || {
            while f2.load(Ordering::SeqCst) == 0 {
                park();
            }
        });
        thread::sleep(Duration::from_millis(20));
        flag.store(1, Ordering::SeqCst);
        unpark(h.thread());
        h.join().unwrap();
    }

    #[test]
    fn park_permit_is_binary() {
        let me = thread::current();
        unpark(&me);
        unpark(&me);
        park();
        let start = Instant::now();
        thread::park_timeout(Duration::from_millis(150));
        assert!(start.elapsed() >= Duration::from_millis(100), "second park must block");
    }

    #[test]
    fn gate_wait_all_strategies() {
        for s in ALL {
            let gate = Arc::new(AtomicU32::new(0));
            let g2 = gate.clone();
            let h = thread::spawn(move || s.wait_gate(&g2));
            thread::sleep(Duration::from_millis(10));
            gate.store(1, Ordering::SeqCst);
            match s {
                WaitStrategy::SpinThenPark { .. } => unpark(h.thread()),
                _ => s.wake_word(&*gate),
            }
            h.join().unwrap();
        }
    }
}
