use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Arc;
use std::thread;

use proptest::prelude::*;
use twasem::{
    Probe, Semaphore, SlotVariant, TicketSemaphore, TwaOptions, TwaSemaphore, WaitStrategy, WaitingArray,
    WouldBlock,
};

fn all_kinds(initial: u64, array: &Arc<WaitingArray>) -> Vec<Box<dyn Semaphore>> {
    let mut v: Vec<Box<dyn Semaphore>> = vec![Box::new(TicketSemaphore::new(initial))];
    for variant in [SlotVariant::Counter, SlotVariant::Chain] {
        for k in [0, 1, 3] {
            let opts = TwaOptions::default().variant(variant).threshold(k).array(array.clone());
            v.push(Box::new(TwaSemaphore::with_options(initial, opts)));
        }
    }
    v
}

#[derive(Clone, Debug)]
enum Op {
    TryTake,
    Post,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![Just(Op::TryTake), Just(Op::Post)]
}

proptest! {
    // Single-threaded, a semaphore is a plain counter: try_take succeeds
    // exactly when the count is positive.
    #[test]
    fn single_thread_matches_counter(initial in 0u64..4, ops in prop::collection::vec(op(), 0..40)) {
        let array = Arc::new(WaitingArray::new(16).unwrap());
        for sem in all_kinds(initial, &array) {
            let mut count = initial;
            for op in &ops {
                match op {
                    Op::Post => {
                        sem.post();
                        count += 1;
                    }
                    Op::TryTake => {
                        let got = sem.try_take();
                        if count > 0 {
                            prop_assert_eq!(got, Ok(()));
                            count -= 1;
                        } else {
                            prop_assert_eq!(got, Err(WouldBlock));
                        }
                    }
                }
            }
            for _ in 0..count {
                sem.take();
            }
            prop_assert_eq!(sem.try_take(), Err(WouldBlock));
        }
    }

    #[test]
    fn available_permits_hand_out_consecutive_tickets(initial in 0u64..8, posts in 0u64..8) {
        let s = TwaSemaphore::new(initial);
        s.post_n(posts);
        for t in 0..initial + posts {
            prop_assert_eq!(s.take_ticket(), t);
        }
        prop_assert_eq!(s.try_take_ticket(), Err(WouldBlock));
    }
}

/// Two semaphores forced onto one slot must still each admit in ticket
/// order; cross-semaphore notifications are only spurious wakeups.
#[test]
fn semaphores_sharing_every_slot_stay_fifo() {
    for variant in [SlotVariant::Counter, SlotVariant::Chain] {
        for strategy in [WaitStrategy::AddressWait, WaitStrategy::spin_then_park(), WaitStrategy::YieldSpin] {
            let array = Arc::new(WaitingArray::new(1).unwrap());
            let sems: Vec<(Arc<TwaSemaphore>, Arc<Probe>)> = (0..2)
                .map(|_| {
                    let probe = Probe::new().with_admission_log(20_000).shared();
                    let opts = TwaOptions::default()
                        .variant(variant)
                        .strategy(strategy)
                        .threshold(0)
                        .array(array.clone())
                        .probe(probe.clone());
                    (Arc::new(TwaSemaphore::with_options(1, opts)), probe)
                })
                .collect();
            let handles: Vec<_> = (0..8)
                .map(|i| {
                    let sem = sems[i % 2].0.clone();
                    thread::spawn(move || {
                        for _ in 0..2_000 {
                            sem.take();
                            sem.post();
                        }
                    })
                })
                .collect();
            for h in handles {
                h.join().unwrap();
            }
            for (_, probe) in &sems {
                let tickets: Vec<u64> =
                    probe.admissions.as_ref().unwrap().records().iter().map(|r| r.ticket_value).collect();
                assert_eq!(tickets, (0..8_000).collect::<Vec<_>>(), "{variant:?} {strategy}");
            }
        }
    }
}

/// Counting use with several permits: never more than `permits` holders at
/// once.
#[test]
fn holders_never_exceed_permits() {
    let array = Arc::new(WaitingArray::new(64).unwrap());
    for permits in [1u64, 3] {
        for sem in all_kinds(permits, &array) {
            let sem: Arc<dyn Semaphore> = Arc::from(sem);
            let inside = Arc::new(AtomicU64::new(0));
            let peak = Arc::new(AtomicU64::new(0));
            let handles: Vec<_> = (0..6)
                .map(|_| {
                    let (sem, inside, peak) = (sem.clone(), inside.clone(), peak.clone());
                    thread::spawn(move || {
                        for _ in 0..1_000 {
                            sem.take();
                            let n = inside.fetch_add(1, SeqCst) + 1;
                            peak.fetch_max(n, SeqCst);
                            thread::yield_now();
                            inside.fetch_sub(1, SeqCst);
                            sem.post();
                        }
                    })
                })
                .collect();
            for h in handles {
                h.join().unwrap();
            }
            assert!(peak.load(SeqCst) <= permits);
            assert!(peak.load(SeqCst) >= 1);
        }
    }
}
