//! Lock-free waiting chains.
//!
//! Each waiting-array slot can hold a stack of [`WaitElement`]s. A waiter
//! pushes its element with a single atomic exchange on the slot head and then
//! fills in its `next` link; a notifier swaps the head with null, detaching the
//! whole chain, and opens every gate on it. Elements usually live in the
//! waiter's own stack frame: the waiter does not return until its gate has
//! been opened, and the opener never touches an element after opening it.
//!
//! Between a pusher's exchange and its link store, `next` holds the
//! [`unlinked`] marker. A traverser that meets it waits for the pusher to
//! finish; that window is two instructions long.

use std::fmt;
use std::marker::PhantomData;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU32, AtomicU64, AtomicU8, Ordering::SeqCst};
use std::thread::{self, Thread};

use crate::addr;
use crate::strategy::{self, Spinner, WaitStrategy};
use crate::waiting_array::WaitSlot;
use crate::SemId;

const GATE_WAITING: u32 = 0;
const GATE_RELEASED: u32 = 1;

// How the element's owner waits on its gate, so any notifier can wake it.
const WAKE_NONE: u8 = 0;
const WAKE_ADDRESS: u8 = 1;
const WAKE_UNPARK: u8 = 2;

fn wake_mode(strategy: WaitStrategy) -> u8 {
    match strategy {
        WaitStrategy::PauseSpin | WaitStrategy::YieldSpin => WAKE_NONE,
        WaitStrategy::AddressWait => WAKE_ADDRESS,
        WaitStrategy::SpinThenPark { .. } => WAKE_UNPARK,
    }
}

/// Marker stored in `next` while a push is between its exchange and its link.
#[inline]
pub fn unlinked() -> *mut WaitElement {
    ptr::dangling_mut()
}

/// A waiter's entry in a slot chain.
pub struct WaitElement {
    gate: AtomicU32,
    next: AtomicPtr<WaitElement>,
    waiter: Thread,
    wake: AtomicU8,
    payload_sem: AtomicU64,
    payload_grant: AtomicU64,
}

impl WaitElement {
    /// A fresh element owned by the calling thread.
    pub fn new() -> Self {
        Self::for_thread(thread::current())
    }

    pub fn for_thread(waiter: Thread) -> Self {
        WaitElement {
            gate: AtomicU32::new(GATE_WAITING),
            next: AtomicPtr::new(unlinked()),
            waiter,
            wake: AtomicU8::new(WAKE_NONE),
            payload_sem: AtomicU64::new(0),
            payload_grant: AtomicU64::new(0),
        }
    }

    /// Prepares the element for a new episode in which its owner waits with
    /// `strategy`. Must not be on any chain.
    pub fn reset(&self, strategy: WaitStrategy) {
        self.wake.store(wake_mode(strategy), SeqCst);
        self.payload_sem.store(0, SeqCst);
        self.payload_grant.store(0, SeqCst);
        self.next.store(unlinked(), SeqCst);
        self.gate.store(GATE_WAITING, SeqCst);
    }

    pub fn is_released(&self) -> bool {
        self.gate.load(SeqCst) != GATE_WAITING
    }

    pub fn gate(&self) -> &AtomicU32 {
        &self.gate
    }

    pub fn waiter(&self) -> &Thread {
        &self.waiter
    }

    /// The `(semaphore, grant)` pair left by whoever opened the gate.
    pub fn payload(&self) -> (SemId, u64) {
        (SemId::from_raw(self.payload_sem.load(SeqCst)), self.payload_grant.load(SeqCst))
    }

    /// Waits until the gate opens.
    pub fn wait(&self, strategy: WaitStrategy) {
        strategy.wait_gate(&self.gate);
    }

    /// Reads `next`, waiting out an in-flight push.
    fn resolved_next(&self) -> *mut WaitElement {
        let mut spinner = Spinner::new();
        loop {
            let next = self.next.load(SeqCst);
            if next != unlinked() {
                return next;
            }
            spinner.spin();
        }
    }
}

impl Default for WaitElement {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for WaitElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaitElement")
            .field("gate", &self.gate.load(SeqCst))
            .field("waiter", &self.waiter.id())
            .field("payload", &self.payload())
            .finish()
    }
}

/// The first half of a push: the element is on the chain but its `next` is
/// still [`unlinked`]. Dropping it completes the push.
#[must_use = "a pending push must be linked"]
pub struct PendingLink<'a> {
    element: &'a WaitElement,
    prev_head: *mut WaitElement,
}

impl PendingLink<'_> {
    /// Stores the old head into the element's `next`.
    pub fn link(self) {
        drop(self)
    }
}

impl Drop for PendingLink<'_> {
    fn drop(&mut self) {
        self.element.next.store(self.prev_head, SeqCst);
    }
}

/// Exchanges `element` in as the slot's head, leaving `next` unlinked.
///
/// # Safety
///
/// `element` must have been [`reset`](WaitElement::reset), must not be on any
/// chain, and must stay alive until its gate has been opened.
pub unsafe fn begin_push<'a>(slot: &WaitSlot, element: &'a WaitElement) -> PendingLink<'a> {
    let prev_head = slot.chain_head.swap(element as *const _ as *mut _, SeqCst);
    PendingLink { element, prev_head }
}

/// Pushes `element` onto the slot's chain.
///
/// # Safety
///
/// Same contract as [`begin_push`].
pub unsafe fn push(slot: &WaitSlot, element: &WaitElement) {
    begin_push(slot, element).link();
}

/// Atomically takes the whole chain off the slot.
pub fn detach_all(slot: &WaitSlot) -> DetachedChain<'_> {
    // A null head needs no swap; skipping it keeps idle posts read-only on
    // the slot.
    let head = if slot.chain_head.load(SeqCst).is_null() {
        ptr::null_mut()
    } else {
        slot.chain_head.swap(ptr::null_mut(), SeqCst)
    };
    DetachedChain { head, _slot: PhantomData }
}

/// A chain taken off a slot, owned by the detaching thread.
pub struct DetachedChain<'a> {
    head: *mut WaitElement,
    _slot: PhantomData<&'a WaitSlot>,
}

impl DetachedChain<'_> {
    pub fn is_empty(&self) -> bool {
        self.head.is_null()
    }

    /// Visits every element in LIFO order.
    ///
    /// Each element's `next` is read before `visit` runs, so `visit` may hand
    /// the element back to its owner.
    pub fn drain(self, mut visit: impl FnMut(&WaitElement)) -> usize {
        let mut n = 0;
        let mut cur = self.head;
        while !cur.is_null() {
            // SAFETY: pushers keep elements alive until their gate opens, and
            // only the detaching thread opens gates of a detached chain.
            let element = unsafe { &*cur };
            cur = element.resolved_next();
            visit(element);
            n += 1;
        }
        n
    }

    /// Opens every gate on the chain, leaving `(sem, grant)` as payload, and
    /// wakes each waiter the way it asked to be woken. Returns the number of
    /// elements woken.
    pub fn wake_all(self, sem: SemId, grant: u64) -> usize {
        self.drain(|e| release(e, sem, grant))
    }
}

fn release(element: &WaitElement, sem: SemId, grant: u64) {
    element.payload_sem.store(sem.get(), SeqCst);
    element.payload_grant.store(grant, SeqCst);
    // Everything needed after the gate store is copied out first: the owner
    // may reclaim the element the moment the gate opens.
    match element.wake.load(SeqCst) {
        WAKE_UNPARK => {
            let waiter = element.waiter.clone();
            element.gate.store(GATE_RELEASED, SeqCst);
            strategy::unpark(&waiter);
        }
        WAKE_ADDRESS => {
            let key = element.gate.as_ptr() as *const u32;
            element.gate.store(GATE_RELEASED, SeqCst);
            addr::address_wake_all_raw(key);
        }
        _ => element.gate.store(GATE_RELEASED, SeqCst),
    }
}

/// How a long-term chain wait ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainExit {
    /// The ticket is admitted. `via_payload` is true when the notifier's
    /// payload proved it, without reading grant.
    Admitted { via_payload: bool },
    /// Grant has advanced to within the short-term threshold of the ticket,
    /// but not past it.
    ShortTerm,
}

/// Long-term wait of `ticket` on its chain slot.
///
/// Returns once the ticket is admitted or has moved into short-term range
/// (`ticket - grant < threshold`). Each episode pushes `element`, re-checks
/// grant, and either waits for the gate or, if the re-check already shows
/// progress, detaches and wakes the slot's chain itself so no element is left
/// behind. A woken waiter that is still long-term starts a new episode.
pub fn chain_wait(
    slot: &WaitSlot,
    element: &WaitElement,
    sem: SemId,
    ticket: u64,
    threshold: u64,
    grant: &AtomicU64,
    strategy: WaitStrategy,
) -> ChainExit {
    let classify = |g: u64, via_payload: bool| {
        if ticket < g {
            Some(ChainExit::Admitted { via_payload })
        } else if ticket - g < threshold {
            Some(ChainExit::ShortTerm)
        } else {
            None
        }
    };
    loop {
        element.reset(strategy);
        // SAFETY: the element is reset and off-chain, and this function does
        // not return before its gate has been opened.
        unsafe { push(slot, element) };

        let g = grant.load(SeqCst);
        if let Some(exit) = classify(g, false) {
            detach_all(slot).wake_all(sem, g);
            // Someone else may have detached us first; wait for them too.
            element.wait(strategy);
            return exit;
        }

        element.wait(strategy);
        let (payload_sem, payload_grant) = element.payload();
        if payload_sem == sem && ticket < payload_grant {
            return ChainExit::Admitted { via_payload: true };
        }
        if let Some(exit) = classify(grant.load(SeqCst), false) {
            return exit;
        }
    }
}
