//! The ticket/grant counter pair and the baseline ticket semaphore.
//!
//! Arrivals draw a ticket with fetch-and-add; a holder of ticket `t` is
//! admitted once `grant > t`. Both counters are 64-bit and monotonic: at one
//! increment per nanosecond they would take centuries to wrap, so no
//! wrap-around handling exists anywhere.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Arc;

use crate::pad::SectorPadded;
use crate::probe::Probe;
use crate::strategy::WaitStrategy;
use crate::{SemId, Semaphore, WouldBlock};

/// Compare-and-swap attempts made by `try_claim` before giving up.
pub const TRY_TAKE_RETRIES: u32 = 16;

/// Paired monotonic `ticket` and `grant` counters, each on its own sector.
pub struct SemaphoreCore {
    ticket: SectorPadded<AtomicU64>,
    grant: SectorPadded<AtomicU64>,
}

/// A point-in-time reading of both counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoreSnapshot {
    pub ticket: u64,
    pub grant: u64,
}

impl SemaphoreCore {
    /// A core with `initial` permits: `ticket = 0`, `grant = initial`.
    pub fn new(initial: u64) -> Self {
        SemaphoreCore {
            ticket: SectorPadded::new(AtomicU64::new(0)),
            grant: SectorPadded::new(AtomicU64::new(initial)),
        }
    }

    /// Draws the next ticket.
    #[inline]
    pub fn arrive(&self) -> u64 {
        self.ticket.fetch_add(1, SeqCst)
    }

    /// Enables one more admission, returning the new grant value.
    #[inline]
    pub fn release(&self) -> u64 {
        self.grant.fetch_add(1, SeqCst) + 1
    }

    /// Whether some thread has drawn `ticket_value`. Read after
    /// [`release`](Self::release), a `false` means any later holder of that
    /// ticket will see the new grant, so nobody needs waking for it.
    #[inline]
    pub fn drawn(&self, ticket_value: u64) -> bool {
        self.ticket.load(SeqCst) > ticket_value
    }

    #[inline]
    pub fn grant(&self) -> u64 {
        self.grant.load(SeqCst)
    }

    #[inline]
    pub fn ticket(&self) -> u64 {
        self.ticket.load(SeqCst)
    }

    /// The grant word itself, for waiters that block on its address.
    #[inline]
    pub fn grant_word(&self) -> &AtomicU64 {
        &self.grant
    }

    /// Reads grant first, then ticket.
    pub fn snapshot(&self) -> CoreSnapshot {
        let grant = self.grant();
        let ticket = self.ticket();
        CoreSnapshot { ticket, grant }
    }

    /// Claims a ticket only if it is already admitted.
    ///
    /// Uses compare-and-swap on `ticket` so a failed attempt leaves no trace.
    /// Under contention this may report [`WouldBlock`] even though a permit
    /// was momentarily available.
    pub fn try_claim(&self) -> Result<u64, WouldBlock> {
        let mut t = self.ticket.load(SeqCst);
        for _ in 0..TRY_TAKE_RETRIES {
            if self.grant.load(SeqCst) <= t {
                return Err(WouldBlock);
            }
            match self.ticket.compare_exchange(t, t + 1, SeqCst, SeqCst) {
                Ok(_) => return Ok(t),
                Err(actual) => t = actual,
            }
        }
        Err(WouldBlock)
    }
}

impl fmt::Debug for SemaphoreCore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.snapshot();
        f.debug_struct("SemaphoreCore")
            .field("ticket", &s.ticket)
            .field("grant", &s.grant)
            .finish()
    }
}

/// Counting semaphore built straight on the ticket/grant pair.
///
/// Every waiter watches `grant`, so admission is strictly first-come
/// first-enabled but all waiters spin (or block) on the same word.
pub struct TicketSemaphore {
    core: SemaphoreCore,
    strategy: WaitStrategy,
    id: SemId,
    probe: Option<Arc<Probe>>,
}

impl TicketSemaphore {
    pub fn new(initial: u64) -> Self {
        Self::with_strategy(initial, WaitStrategy::PauseSpin)
    }

    pub fn with_strategy(initial: u64, strategy: WaitStrategy) -> Self {
        TicketSemaphore { core: SemaphoreCore::new(initial), strategy, id: SemId::fresh(), probe: None }
    }

    /// Attaches conformance instrumentation.
    pub fn instrumented(mut self, probe: Arc<Probe>) -> Self {
        self.probe = Some(probe);
        self
    }

    pub fn core(&self) -> &SemaphoreCore {
        &self.core
    }

    pub fn id(&self) -> SemId {
        self.id
    }

    pub fn strategy(&self) -> WaitStrategy {
        self.strategy
    }

    /// Blocks until admitted and returns the ticket that was admitted.
    pub fn take_ticket(&self) -> u64 {
        let t = self.core.arrive();
        let grant = self.core.grant_word();
        loop {
            let g = grant.load(SeqCst);
            if g > t {
                break;
            }
            self.strategy.wait_word(grant, g as u32);
        }
        if let Some(p) = &self.probe {
            p.admitted(t);
        }
        t
    }

    pub fn post(&self) {
        let g = self.core.release();
        // Anyone still waiting, or admitted just now, holds a ticket >= g - 1.
        // Skip the wake syscall when nobody does.
        if self.core.drawn(g - 1) {
            self.strategy.wake_word(self.core.grant_word());
        }
    }

    pub fn try_take_ticket(&self) -> Result<u64, WouldBlock> {
        let t = self.core.try_claim()?;
        if let Some(p) = &self.probe {
            p.admitted(t);
        }
        Ok(t)
    }
}

impl Semaphore for TicketSemaphore {
    fn take(&self) {
        self.take_ticket();
    }

    fn post(&self) {
        TicketSemaphore::post(self);
    }

    fn try_take(&self) -> Result<(), WouldBlock> {
        self.try_take_ticket().map(drop)
    }
}

impl fmt::Debug for TicketSemaphore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TicketSemaphore")
            .field("id", &self.id)
            .field("core", &self.core)
            .field("strategy", &self.strategy)
            .finish()
    }
}
