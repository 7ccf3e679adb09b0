//! The process-wide waiting array used for long-term waiting.
//!
//! Long-term waiters hash `(semaphore, ticket)` to a slot and wait there
//! instead of on the semaphore's grant word. A post hashes the ticket that just
//! moved into short-term range and notifies only that slot. Different
//! semaphores share the array, so a slot may be shared by unrelated waiters;
//! the resulting wakeups are spurious and waiters simply re-check grant.

use std::fmt;
use std::sync::atomic::{AtomicPtr, AtomicU32, Ordering::SeqCst};
use std::sync::{Arc, OnceLock};

use crate::chain::WaitElement;
use crate::pad::SectorPadded;
use crate::strategy::WaitStrategy;
use crate::SemId;

/// Default slot count of the shared array (512 KiB of padded slots).
pub const DEFAULT_SLOTS: usize = 4096;

/// 64-bit multiplicative mixing constant (2^64 / golden ratio).
pub const MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Maps `(semaphore identity, ticket)` to a slot of an array with
/// `2^log2_len` slots.
///
/// Consecutive tickets of one semaphore land on unrelated slots, so a queue
/// of long-term waiters spreads over the whole array.
#[inline]
pub fn slot_index(sem_identity: u64, ticket_value: u64, log2_len: u32) -> usize {
    if log2_len == 0 {
        return 0;
    }
    let mixed = (sem_identity ^ ticket_value.wrapping_mul(MIX)).wrapping_mul(MIX);
    (mixed >> (64 - log2_len)) as usize
}

/// One waiting-array slot: a notification counter and a chain head.
///
/// A semaphore uses one of the two depending on its slot variant.
#[derive(Default)]
pub struct WaitSlot {
    notify_seq: AtomicU32,
    pub(crate) chain_head: AtomicPtr<WaitElement>,
}

impl WaitSlot {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn seq(&self) -> u32 {
        self.notify_seq.load(SeqCst)
    }

    /// The notification counter, for address-based waiting.
    pub fn seq_word(&self) -> &AtomicU32 {
        &self.notify_seq
    }

    /// Bumps the counter and wakes whoever blocks on it.
    #[inline]
    pub fn notify(&self, strategy: WaitStrategy) {
        self.notify_seq.fetch_add(1, SeqCst);
        strategy.wake_word(&self.notify_seq);
    }

    /// Waits until the counter no longer equals `observed`. May return
    /// spuriously.
    #[inline]
    pub fn wait_for_change(&self, observed: u32, strategy: WaitStrategy) {
        strategy.wait_word(&self.notify_seq, observed);
    }
}

impl fmt::Debug for WaitSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaitSlot")
            .field("notify_seq", &self.seq())
            .field("chain_head", &self.chain_head.load(SeqCst))
            .finish()
    }
}

/// Error for an invalid array length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BadArrayLength(pub usize);

impl fmt::Display for BadArrayLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "waiting array length {} is not a non-zero power of two", self.0)
    }
}

impl std::error::Error for BadArrayLength {}

/// Fixed-size array of sector-padded slots.
pub struct WaitingArray {
    slots: Box<[SectorPadded<WaitSlot>]>,
    log2_len: u32,
}

impl WaitingArray {
    pub fn new(len: usize) -> Result<Self, BadArrayLength> {
        if len == 0 || !len.is_power_of_two() {
            return Err(BadArrayLength(len));
        }
        Ok(WaitingArray {
            slots: (0..len).map(|_| SectorPadded::new(WaitSlot::new())).collect(),
            log2_len: len.trailing_zeros(),
        })
    }

    /// The array shared by every semaphore that is not given its own.
    pub fn global() -> Arc<WaitingArray> {
        static GLOBAL: OnceLock<Arc<WaitingArray>> = OnceLock::new();
        GLOBAL
            .get_or_init(|| Arc::new(WaitingArray::new(DEFAULT_SLOTS).expect("default length")))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mask(&self) -> usize {
        self.slots.len() - 1
    }

    #[inline]
    pub fn index(&self, sem: SemId, ticket_value: u64) -> usize {
        slot_index(sem.get(), ticket_value, self.log2_len)
    }

    #[inline]
    pub fn slot(&self, index: usize) -> &WaitSlot {
        &self.slots[index]
    }

    #[inline]
    pub fn slot_for(&self, sem: SemId, ticket_value: u64) -> &WaitSlot {
        self.slot(self.index(sem, ticket_value))
    }

    /// Notifies the slot that `target_ticket`'s long-term waiter watches.
    #[inline]
    pub fn notify(&self, sem: SemId, target_ticket: u64, strategy: WaitStrategy) {
        self.slot_for(sem, target_ticket).notify(strategy);
    }

    #[inline]
    pub fn wait_for_change(&self, index: usize, observed: u32, strategy: WaitStrategy) {
        self.slot(index).wait_for_change(observed, strategy);
    }

    /// Notifies every slot and releases every chain, whatever strategy the
    /// waiters use. All of them see a spurious wakeup and re-check.
    pub fn notify_all(&self) {
        for slot in self.slots.iter() {
            slot.notify(WaitStrategy::AddressWait);
            crate::chain::detach_all(slot).wake_all(SemId::NONE, 0);
        }
    }
}

impl fmt::Debug for WaitingArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaitingArray").field("len", &self.len()).finish()
    }
}
