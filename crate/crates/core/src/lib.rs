//! FIFO counting semaphores built from ticket locks.
//!
//! [`TicketSemaphore`] is the direct translation of a ticket lock into a
//! semaphore: a fetch-and-add `ticket`, an atomically incremented `grant`, and
//! admission once `grant > ticket`. It is compact and has very low latency,
//! but every waiter watches the same word.
//!
//! [`TwaSemaphore`] keeps the same two counters and the same admission order,
//! but only waiters near the front watch `grant`; the rest wait on slots of a
//! shared [`WaitingArray`], hashed by semaphore and ticket. Slots are either
//! notification counters or lock-free chains of per-waiter elements, and
//! waiting itself is pluggable through [`WaitStrategy`].
//!
//! ```
//! use twasem::{Semaphore, TwaSemaphore};
//!
//! let sem = TwaSemaphore::new(1);
//! sem.take();
//! sem.post();
//! ```

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

pub mod addr;
pub mod chain;
pub mod counters;
pub mod pad;
pub mod probe;
pub mod strategy;
pub mod twa;
pub mod waiting_array;

pub use counters::{CoreSnapshot, SemaphoreCore, TicketSemaphore};
pub use probe::{AdmissionLog, AdmissionRecord, Probe, SpinGauge};
pub use strategy::WaitStrategy;
pub use twa::{SlotVariant, TwaOptions, TwaSemaphore};
pub use waiting_array::WaitingArray;

/// A counting semaphore.
pub trait Semaphore: Send + Sync {
    /// Waits for a permit and consumes it.
    fn take(&self);

    /// Adds one permit, admitting the longest-waiting taker if there is one.
    fn post(&self);

    /// Consumes a permit if one is available right now.
    fn try_take(&self) -> Result<(), WouldBlock>;
}

/// No permit was available.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WouldBlock;

impl fmt::Display for WouldBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("no permit available")
    }
}

impl std::error::Error for WouldBlock {}

/// Identity of a semaphore, stable and unique for the life of the process.
/// Feeds the waiting-array hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SemId(u64);

impl SemId {
    /// Never assigned to a semaphore.
    pub const NONE: SemId = SemId(0);

    pub fn fresh() -> SemId {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        SemId(NEXT.fetch_add(1, Ordering::Relaxed))
    }

    pub const fn from_raw(raw: u64) -> SemId {
        SemId(raw)
    }

    pub const fn get(self) -> u64 {
        self.0
    }
}
