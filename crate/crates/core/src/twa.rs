//! The waiting-array semaphore.
//!
//! Admission is exactly the ticket semaphore's: draw a ticket, wait for
//! `grant > ticket`. What changes is where threads wait. A waiter within
//! `threshold` of the front spins on grant; everyone further back waits on a
//! waiting-array slot chosen by hashing `(semaphore, ticket)`. Each post bumps
//! grant, which the front spinner sees directly, and then notifies the slot of
//! the ticket that has just come within `threshold`, moving that one waiter up
//! to spin on grant.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering::Relaxed, Ordering::SeqCst};
use std::sync::Arc;

use crate::chain::{self, ChainExit, WaitElement};
use crate::counters::SemaphoreCore;
use crate::probe::Probe;
use crate::strategy::{Spinner, WaitStrategy};
use crate::waiting_array::WaitingArray;
use crate::{SemId, Semaphore, WouldBlock};

/// Default distance from the front below which waiters spin on grant.
pub const DEFAULT_THRESHOLD: u64 = 1;

/// What a waiting-array slot holds for this semaphore's long-term waiters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SlotVariant {
    /// Slots are notification counters; waiters watch the counter.
    #[default]
    Counter,
    /// Slots are chains of per-waiter elements; notifiers open their gates.
    Chain,
}

/// Construction options for [`TwaSemaphore`].
#[derive(Clone, Debug)]
pub struct TwaOptions {
    pub threshold: u64,
    pub variant: SlotVariant,
    pub strategy: WaitStrategy,
    /// Array to wait on; the process-wide array when `None`.
    pub array: Option<Arc<WaitingArray>>,
    pub probe: Option<Arc<Probe>>,
}

impl Default for TwaOptions {
    fn default() -> Self {
        TwaOptions {
            threshold: DEFAULT_THRESHOLD,
            variant: SlotVariant::Counter,
            strategy: WaitStrategy::default(),
            array: None,
            probe: None,
        }
    }
}

impl TwaOptions {
    pub fn threshold(mut self, threshold: u64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn variant(mut self, variant: SlotVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn strategy(mut self, strategy: WaitStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn array(mut self, array: Arc<WaitingArray>) -> Self {
        self.array = Some(array);
        self
    }

    pub fn probe(mut self, probe: Arc<Probe>) -> Self {
        self.probe = Some(probe);
        self
    }
}

/// Scalable FIFO counting semaphore.
pub struct TwaSemaphore {
    core: SemaphoreCore,
    id: SemId,
    threshold: u64,
    variant: SlotVariant,
    strategy: WaitStrategy,
    array: Arc<WaitingArray>,
    probe: Option<Arc<Probe>>,
    suppress_notify: AtomicBool,
}

impl TwaSemaphore {
    /// Counter slots, threshold 1, default strategy, shared array.
    pub fn new(initial: u64) -> Self {
        Self::with_options(initial, TwaOptions::default())
    }

    pub fn with_options(initial: u64, opts: TwaOptions) -> Self {
        TwaSemaphore {
            core: SemaphoreCore::new(initial),
            id: SemId::fresh(),
            threshold: opts.threshold,
            variant: opts.variant,
            strategy: opts.strategy,
            array: opts.array.unwrap_or_else(WaitingArray::global),
            probe: opts.probe,
            suppress_notify: AtomicBool::new(false),
        }
    }

    pub fn core(&self) -> &SemaphoreCore {
        &self.core
    }

    pub fn id(&self) -> SemId {
        self.id
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn variant(&self) -> SlotVariant {
        self.variant
    }

    pub fn strategy(&self) -> WaitStrategy {
        self.strategy
    }

    pub fn array(&self) -> &Arc<WaitingArray> {
        &self.array
    }

    /// The ticket whose long-term waiter a post raising grant to `grant`
    /// notifies: the one that just came within `threshold` of the front.
    #[inline]
    pub fn notify_target(&self, grant: u64) -> u64 {
        grant.wrapping_add(self.threshold).wrapping_sub(1)
    }

    /// Blocks until admitted and returns the admitted ticket.
    #[inline]
    pub fn take_ticket(&self) -> u64 {
        let t = self.core.arrive();
        if self.core.grant() > t {
            if let Some(p) = &self.probe {
                p.admitted(t);
            }
            return t;
        }
        self.wait_for_admission(t);
        t
    }

    #[cold]
    fn wait_for_admission(&self, t: u64) {
        let grant = self.core.grant_word();
        let mut short_term = false;
        let mut element: Option<WaitElement> = None;
        loop {
            let g = grant.load(SeqCst);
            if g > t {
                break;
            }
            if t - g < self.threshold {
                if !short_term {
                    short_term = true;
                    if let Some(p) = &self.probe {
                        p.short_term_entry(t, g);
                    }
                }
                let mut spinner = Spinner::new();
                while grant.load(SeqCst) == g {
                    spinner.spin();
                }
                continue;
            }

            match self.variant {
                SlotVariant::Counter => {
                    let index = self.array.index(self.id, t);
                    let slot = self.array.slot(index);
                    let seq = slot.seq();
                    // Re-check after the snapshot: a notify that raced ahead of
                    // it is caught here rather than lost.
                    if grant.load(SeqCst) != g {
                        continue;
                    }
                    slot.wait_for_change(seq, self.strategy);
                }
                SlotVariant::Chain => {
                    let element = element.get_or_insert_with(WaitElement::new);
                    let slot = self.array.slot_for(self.id, t);
                    let exit =
                        chain::chain_wait(slot, element, self.id, t, self.threshold, grant, self.strategy);
                    if let ChainExit::Admitted { .. } = exit {
                        break;
                    }
                }
            }
        }
        if let Some(p) = &self.probe {
            p.admitted(t);
        }
    }

    #[inline]
    pub fn post(&self) {
        let g = self.core.release();
        if self.suppress_notify.load(Relaxed) {
            return;
        }
        self.notify(g);
    }

    fn notify(&self, g: u64) {
        let target = self.notify_target(g);
        if !self.core.drawn(target) {
            return;
        }
        match self.variant {
            SlotVariant::Counter => self.array.notify(self.id, target, self.strategy),
            SlotVariant::Chain => {
                chain::detach_all(self.array.slot_for(self.id, target)).wake_all(self.id, g);
            }
        }
    }

    /// Posts `n` times. Each post notifies on its own.
    pub fn post_n(&self, n: u64) {
        for _ in 0..n {
            self.post();
        }
    }

    pub fn try_take_ticket(&self) -> Result<u64, WouldBlock> {
        let t = self.core.try_claim()?;
        if let Some(p) = &self.probe {
            p.admitted(t);
        }
        Ok(t)
    }

    /// Fault injection: while set, posts advance grant but notify nobody.
    #[doc(hidden)]
    pub fn set_suppress_notify(&self, on: bool) {
        self.suppress_notify.store(on, SeqCst);
    }

    /// Recovers from suppressed notifications: wakes every slot of the array
    /// so stranded waiters re-check.
    #[doc(hidden)]
    pub fn renotify_all(&self) {
        self.array.notify_all();
    }
}

impl Semaphore for TwaSemaphore {
    fn take(&self) {
        self.take_ticket();
    }

    fn post(&self) {
        TwaSemaphore::post(self);
    }

    fn try_take(&self) -> Result<(), WouldBlock> {
        self.try_take_ticket().map(drop)
    }
}

impl fmt::Debug for TwaSemaphore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwaSemaphore")
            .field("id", &self.id)
            .field("core", &self.core)
            .field("threshold", &self.threshold)
            .field("variant", &self.variant)
            .field("strategy", &self.strategy)
            .finish()
    }
}
