//! Conformance instrumentation.
//!
//! Semaphores built without a [`Probe`] pay one branch per admission and
//! nothing else. With a probe attached they stamp every admission and record
//! every entry into short-term spinning so the harness can check admission
//! order and the global-spinning bound after the fact.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;

/// One admission: the ticket the arrival fetch-and-add returned, and the
/// position at which the admission was stamped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AdmissionRecord {
    pub ticket_value: u64,
    pub admit_order: u64,
}

/// Fixed-capacity, lock-free admission log.
#[derive(Debug)]
pub struct AdmissionLog {
    next: AtomicU64,
    tickets: Box<[AtomicU64]>,
}

const UNWRITTEN: u64 = u64::MAX;

impl AdmissionLog {
    pub fn with_capacity(capacity: usize) -> Self {
        AdmissionLog {
            next: AtomicU64::new(0),
            tickets: (0..capacity).map(|_| AtomicU64::new(UNWRITTEN)).collect(),
        }
    }

    pub(crate) fn stamp(&self, ticket_value: u64) {
        let order = self.next.fetch_add(1, Ordering::SeqCst);
        if let Some(cell) = self.tickets.get(order as usize) {
            cell.store(ticket_value, Ordering::SeqCst);
        }
    }

    /// Number of admissions stamped so far, including any past capacity.
    pub fn stamped(&self) -> u64 {
        self.next.load(Ordering::SeqCst)
    }

    /// Number of admissions stamped beyond capacity (not retained).
    pub fn overflowed(&self) -> u64 {
        self.stamped().saturating_sub(self.tickets.len() as u64)
    }

    /// Retained records in admission order. Call once the run has quiesced.
    pub fn records(&self) -> Vec<AdmissionRecord> {
        let n = (self.stamped() as usize).min(self.tickets.len());
        self.tickets[..n]
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let ticket_value = t.load(Ordering::SeqCst);
                (ticket_value != UNWRITTEN)
                    .then_some(AdmissionRecord { ticket_value, admit_order: i as u64 })
            })
            .collect()
    }
}

/// Counts short-term spinners per grant epoch.
///
/// A thread that decides to spin on grant after reading grant `g` while
/// holding ticket `t` occupies every epoch in `g..=t`: it is spinning for as
/// long as grant sits anywhere in that range. The peak occupancy over all
/// epochs is the peak number of unadmitted threads spinning on grant at once.
#[derive(Debug)]
pub struct SpinGauge {
    ring: Box<[AtomicU64]>,
    peak: AtomicU32,
    entries: AtomicU64,
    lost: AtomicU64,
}

const GAUGE_RING: usize = 4096;
const COUNT_BITS: u32 = 24;
const COUNT_MASK: u64 = (1 << COUNT_BITS) - 1;

impl Default for SpinGauge {
    fn default() -> Self {
        Self::new()
    }
}

impl SpinGauge {
    pub fn new() -> Self {
        SpinGauge {
            ring: (0..GAUGE_RING).map(|_| AtomicU64::new(0)).collect(),
            peak: AtomicU32::new(0),
            entries: AtomicU64::new(0),
            lost: AtomicU64::new(0),
        }
    }

    pub(crate) fn enter(&self, ticket: u64, grant_seen: u64) {
        self.entries.fetch_add(1, Ordering::Relaxed);
        for epoch in grant_seen..=ticket {
            self.bump(epoch);
        }
    }

    fn bump(&self, epoch: u64) {
        let cell = &self.ring[epoch as usize % GAUGE_RING];
        let mut cur = cell.load(Ordering::SeqCst);
        loop {
            let (tag, count) = (cur >> COUNT_BITS, cur & COUNT_MASK);
            let tag_want = epoch & ((1 << (64 - COUNT_BITS)) - 1);
            let next_count = if tag == tag_want {
                count + 1
            } else if tag < tag_want || cur == 0 {
                1
            } else {
                // The ring has already moved a full lap past this epoch.
                self.lost.fetch_add(1, Ordering::Relaxed);
                return;
            };
            let next = (tag_want << COUNT_BITS) | next_count;
            match cell.compare_exchange_weak(cur, next, Ordering::SeqCst, Ordering::SeqCst) {
                Ok(_) => {
                    self.peak.fetch_max(next_count as u32, Ordering::SeqCst);
                    return;
                }
                Err(actual) => cur = actual,
            }
        }
    }

    /// Highest number of simultaneous short-term spinners observed.
    pub fn peak(&self) -> u32 {
        self.peak.load(Ordering::SeqCst)
    }

    /// Number of transitions into the short-term phase.
    pub fn entries(&self) -> u64 {
        self.entries.load(Ordering::Relaxed)
    }

    /// Epoch bumps dropped because the ring had already lapped them.
    pub fn lost(&self) -> u64 {
        self.lost.load(Ordering::Relaxed)
    }
}

/// Instrumentation attached to a semaphore.
#[derive(Debug, Default)]
pub struct Probe {
    pub admissions: Option<AdmissionLog>,
    pub spinners: Option<SpinGauge>,
}

impl Probe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_admission_log(mut self, capacity: usize) -> Self {
        self.admissions = Some(AdmissionLog::with_capacity(capacity));
        self
    }

    pub fn with_spin_gauge(mut self) -> Self {
        self.spinners = Some(SpinGauge::new());
        self
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    #[inline]
    pub(crate) fn admitted(&self, ticket: u64) {
        if let Some(log) = &self.admissions {
            log.stamp(ticket);
        }
    }

    #[inline]
    pub(crate) fn short_term_entry(&self, ticket: u64, grant_seen: u64) {
        if let Some(g) = &self.spinners {
            g.enter(ticket, grant_seen);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_keeps_order_and_counts_overflow() {
        let log = AdmissionLog::with_capacity(3);
        for t in [0, 1, 2, 3] {
            log.stamp(t);
        }
        assert_eq!(log.stamped(), 4);
        assert_eq!(log.overflowed(), 1);
        let r = log.records();
        assert_eq!(r.len(), 3);
        assert_eq!(r[2], AdmissionRecord { ticket_value: 2, admit_order: 2 });
    }

    #[test]
    fn gauge_counts_overlapping_spinners() {
        let g = SpinGauge::new();
        // grant 10: ticket 10 spins on epoch 10 only.
        g.enter(10, 10);
        assert_eq!(g.peak(), 1);
        // ticket 11 read grant 10: occupies epochs 10 and 11.
        g.enter(11, 10);
        assert_eq!(g.peak(), 2);
        // ticket 12 read grant 12 (10 and 11 already admitted): epoch 12 alone.
        g.enter(12, 12);
        assert_eq!(g.peak(), 2);
        assert_eq!(g.entries(), 3);
    }

    #[test]
    fn gauge_ring_reuse_resets_old_epochs() {
        let g = SpinGauge::new();
        g.enter(5, 5);
        g.enter(5 + GAUGE_RING as u64, 5 + GAUGE_RING as u64);
        assert_eq!(g.peak(), 1);
        // A straggler from the lapped epoch is dropped, not miscounted.
        g.enter(5, 5);
        assert_eq!(g.peak(), 1);
        assert_eq!(g.lost(), 1);
    }
}
