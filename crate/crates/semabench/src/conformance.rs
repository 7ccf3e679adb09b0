//! Invariant checks run against live semaphores.
//!
//! Each check drives a workload, watches it through side counters or the
//! semaphore's [`Probe`], and returns a [`Check`] with pass/fail and the
//! counters behind the verdict. [`run_conformance`] strings them together for
//! one configuration.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, AtomicUsize, Ordering::SeqCst};
use std::sync::mpsc;
use std::sync::{Arc, Barrier, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use twasem::chain::{self, WaitElement};
use twasem::waiting_array::WaitSlot;
use twasem::{Probe, Semaphore, WaitStrategy, WaitingArray};

use crate::algo::{Algo, AnySemaphore, SemSpec};
use crate::bench::{run_benchmark, BenchConfig};
use crate::prng::{prng_advance, Rng};
use crate::BenchError;

/// Outcome of one invariant check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }

    fn error(name: impl Into<String>, err: impl fmt::Display) -> Self {
        Check::new(name, false, format!("error: {err}"))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn label(spec: &SemSpec) -> String {
    if spec.algo.uses_array() {
        format!("{}/{}/k={}", spec.algo, spec.strategy, spec.threshold)
    } else {
        format!("{}/{}", spec.algo, spec.strategy)
    }
}

/// Polls until every handle has finished or the deadline passes. On timeout
/// the unfinished threads are left running, detached.
fn join_all_by<T>(handles: Vec<JoinHandle<T>>, deadline: Instant) -> Option<Vec<T>> {
    while !handles.iter().all(|h| h.is_finished()) {
        if Instant::now() >= deadline {
            return None;
        }
        thread::sleep(Duration::from_millis(1));
    }
    Some(handles.into_iter().map(|h| h.join().expect("worker panicked")).collect())
}

/// Waits for `cond` with a deadline, yielding in between.
fn await_cond(deadline: Instant, mut cond: impl FnMut() -> bool) -> bool {
    let mut polls = 0u32;
    while !cond() {
        if Instant::now() >= deadline {
            return false;
        }
        polls += 1;
        if polls < 64 {
            thread::yield_now();
        } else {
            thread::sleep(Duration::from_micros(50));
        }
    }
    true
}

/// Ungates stranded waiters after a failed liveness check so threads can
/// finish: lifts fault injection, wakes every slot, and adds permits.
fn rescue(sem: &AnySemaphore, extra_posts: u64) {
    if let Some(twa) = sem.as_twa() {
        twa.set_suppress_notify(false);
        twa.renotify_all();
    }
    for _ in 0..extra_posts {
        sem.post();
    }
}

/// Mixed take/post workload; checks that takes returned never exceed initial
/// permits plus posts started, at every take return and at every sample.
///
/// Each thread runs pairs of operations: usually take-then-post, sometimes
/// post-then-take. With at least one initial permit this can never deadlock.
pub fn counting_semantics(spec: &SemSpec, threads: usize, ops: u64, seed: u64, timeout: Duration) -> Check {
    let name = format!("counting {}", label(spec));
    let initial = spec.permits;
    let sem = match spec.build() {
        Ok(s) => Arc::new(s),
        Err(e) => return Check::error(name, e),
    };
    let returned = Arc::new(AtomicU64::new(0));
    let posts = Arc::new(AtomicU64::new(0));
    let violations = Arc::new(AtomicU64::new(0));
    let done = Arc::new(AtomicBool::new(false));
    let pairs_total = ops / 2;

    let sampler = {
        let (returned, posts, violations, done) = (returned.clone(), posts.clone(), violations.clone(), done.clone());
        thread::spawn(move || {
            let mut samples = 0u64;
            while !done.load(SeqCst) {
                let r = returned.load(SeqCst);
                let p = posts.load(SeqCst);
                if r > initial + p {
                    violations.fetch_add(1, SeqCst);
                }
                samples += 1;
                thread::yield_now();
            }
            samples
        })
    };

    let handles: Vec<_> = (0..threads)
        .map(|i| {
            let (sem, returned, posts, violations) = (sem.clone(), returned.clone(), posts.clone(), violations.clone());
            let pairs = pairs_total / threads as u64 + u64::from((i as u64) < pairs_total % threads as u64);
            let mut rng = Rng::new(seed ^ (i as u64 + 1) << 32);
            thread::spawn(move || {
                let take = || {
                    sem.take();
                    let r = returned.fetch_add(1, SeqCst) + 1;
                    if r > initial + posts.load(SeqCst) {
                        violations.fetch_add(1, SeqCst);
                    }
                };
                let post = || {
                    posts.fetch_add(1, SeqCst);
                    sem.post();
                };
                for _ in 0..pairs {
                    if rng.below(4) == 0 {
                        post();
                        take();
                    } else {
                        take();
                        post();
                    }
                }
            })
        })
        .collect();

    let finished = join_all_by(handles, Instant::now() + timeout).is_some();
    done.store(true, SeqCst);
    let samples = sampler.join().unwrap_or(0);
    if !finished {
        rescue(&sem, threads as u64);
        return Check::new(name, false, format!("workers did not finish within {timeout:?}"));
    }

    let r = returned.load(SeqCst);
    let p = posts.load(SeqCst);
    let v = violations.load(SeqCst);
    let mut balanced = r == pairs_total && p == pairs_total;
    if let Some(core) = sem.core() {
        let s = core.snapshot();
        balanced &= s.ticket == r && s.grant == initial + p;
    }
    Check::new(
        name,
        v == 0 && balanced,
        format!("takes={r} posts={p} samples={samples} violations={v} balanced={balanced}"),
    )
}

/// Lock-like use of an instrumented semaphore; the admission log sorted by
/// ticket must equal the log in admission order.
pub fn fife_admission(spec: &SemSpec, threads: usize, admissions: u64, timeout: Duration) -> Check {
    let name = format!("fife {}", label(spec));
    let probe = Probe::new().with_admission_log(admissions as usize).shared();
    let sem = match spec.clone().permits(1).probe(probe.clone()).build() {
        Ok(s) => Arc::new(s),
        Err(e) => return Check::error(name, e),
    };
    let remaining = Arc::new(AtomicI64::new(admissions as i64));
    let handles: Vec<_> = (0..threads)
        .map(|_| {
            let (sem, remaining) = (sem.clone(), remaining.clone());
            thread::spawn(move || {
                while remaining.fetch_sub(1, SeqCst) > 0 {
                    sem.take();
                    sem.post();
                }
            })
        })
        .collect();
    if join_all_by(handles, Instant::now() + timeout).is_none() {
        rescue(&sem, threads as u64);
        return Check::new(name, false, format!("workers did not finish within {timeout:?}"));
    }

    let log = probe.admissions.as_ref().expect("admission log");
    let records = log.records();
    let by_order: Vec<u64> = records.iter().map(|r| r.ticket_value).collect();
    let mut by_ticket = by_order.clone();
    by_ticket.sort_unstable();
    let complete = records.len() as u64 == admissions && by_ticket.iter().copied().eq(0..admissions);
    let out_of_order = by_order.windows(2).filter(|w| w[0] > w[1]).count();
    Check::new(
        name,
        complete && by_order == by_ticket,
        format!("admissions={} out_of_order_pairs={out_of_order} complete={complete}", records.len()),
    )
}

/// Stresses each semaphore spec concurrently for `duration` and checks the peak number
/// of simultaneous short-term spinners against its threshold.
pub fn spin_bound(specs: &[SemSpec], threads_each: usize, duration: Duration) -> Vec<Check> {
    let stop = Arc::new(AtomicBool::new(false));
    let mut running = vec![];
    for spec in specs {
        let probe = Probe::new().with_spin_gauge().shared();
        let sem = match spec.clone().permits(1).probe(probe.clone()).build() {
            Ok(s) => Arc::new(s),
            Err(e) => {
                running.push((spec.clone(), probe, None, vec![], Some(e)));
                continue;
            }
        };
        let handles: Vec<_> = (0..threads_each)
            .map(|_| {
                let (sem, stop) = (sem.clone(), stop.clone());
                thread::spawn(move || {
                    let mut n = 0u64;
                    while !stop.load(SeqCst) {
                        sem.take();
                        sem.post();
                        n += 1;
                    }
                    n
                })
            })
            .collect();
        running.push((spec.clone(), probe, Some(sem), handles, None));
    }
    thread::sleep(duration);
    stop.store(true, SeqCst);

    let deadline = Instant::now() + Duration::from_secs(30);
    running
        .into_iter()
        .map(|(spec, probe, sem, handles, err)| {
            let name = format!("spin-bound {}", label(&spec));
            if let Some(e) = err {
                return Check::error(name, e);
            }
            let Some(counts) = join_all_by(handles, deadline) else {
                if let Some(sem) = sem {
                    rescue(&sem, threads_each as u64);
                }
                return Check::new(name, false, "workers did not stop");
            };
            let gauge = probe.spinners.as_ref().expect("spin gauge");
            let peak = u64::from(gauge.peak());
            // The bound only means something if the short-term path ran and
            // every entry was counted.
            let exercised = spec.threshold == 0 || gauge.entries() > 0;
            Check::new(
                name,
                peak <= spec.threshold && gauge.lost() == 0 && exercised,
                format!(
                    "peak={peak} bound={} entries={} iterations={} lost_epochs={}",
                    spec.threshold,
                    gauge.entries(),
                    counts.iter().sum::<u64>(),
                    gauge.lost()
                ),
            )
        })
        .collect()
}

/// Concurrent pushers and a detacher on one slot: the detached multiset must
/// equal the pushed multiset.
pub fn chain_conservation(threads: usize, pushes_per_thread: usize) -> Check {
    let slot = Arc::new(WaitSlot::new());
    let pushers_done = Arc::new(AtomicUsize::new(0));
    let pushers: Vec<_> = (0..threads)
        .map(|_| {
            let (slot, pushers_done) = (slot.clone(), pushers_done.clone());
            thread::spawn(move || {
                let mut log = Vec::with_capacity(pushes_per_thread);
                for _ in 0..pushes_per_thread {
                    let e: &'static WaitElement = Box::leak(Box::new(WaitElement::new()));
                    log.push(e as *const WaitElement as usize);
                    // SAFETY: leaked, so alive until reclaimed below.
                    unsafe { chain::push(&slot, e) };
                }
                pushers_done.fetch_add(1, SeqCst);
                log
            })
        })
        .collect();
    let detacher = {
        let (slot, pushers_done) = (slot.clone(), pushers_done.clone());
        thread::spawn(move || {
            let mut got = vec![];
            let mut detaches = 0u64;
            loop {
                let last = pushers_done.load(SeqCst) == threads;
                chain::detach_all(&slot).drain(|e| got.push(e as *const WaitElement as usize));
                detaches += 1;
                if last {
                    return (got, detaches);
                }
                thread::yield_now();
            }
        })
    };
    let pushed: Vec<usize> = pushers.into_iter().flat_map(|h| h.join().unwrap()).collect();
    let (got, detaches) = detacher.join().unwrap();

    let mut a = pushed.clone();
    let mut b = got.clone();
    a.sort_unstable();
    b.sort_unstable();
    let equal = a == b;
    for p in pushed {
        // SAFETY: every element was collected exactly once (or the check
        // fails) and nobody references them any more.
        drop(unsafe { Box::from_raw(p as *mut WaitElement) });
    }
    Check::new(
        format!("chain-conservation {threads}x{pushes_per_thread}"),
        equal,
        format!("pushed={} collected={} detaches={detaches}", a.len(), b.len()),
    )
}

/// Races one push against one detach, holding the push's exchange-to-link
/// window open on alternate trials. The pushed element must end up in exactly
/// one of the racing detach or a follow-up detach.
pub fn unlinked_window(trials: u32, seed: u64) -> Check {
    let slot = Arc::new(WaitSlot::new());
    let elements: Arc<[WaitElement; 2]> = Arc::new([WaitElement::new(), WaitElement::new()]);
    let start = Arc::new(Barrier::new(2));
    let end = Arc::new(Barrier::new(2));
    let exchanged = Arc::new(AtomicBool::new(false));

    let pusher = {
        let (slot, elements, start, end, exchanged) =
            (slot.clone(), elements.clone(), start.clone(), end.clone(), exchanged.clone());
        thread::spawn(move || {
            let mut rng = Rng::new(seed);
            let mut windows_held = 0u32;
            for trial in 0..trials {
                let [base, top] = &*elements;
                base.reset(WaitStrategy::PauseSpin);
                top.reset(WaitStrategy::PauseSpin);
                // SAFETY: both elements outlive the trial (held by the Arc),
                // and the end barrier orders all traversal before the next reset.
                unsafe { chain::push(&slot, base) };
                start.wait();
                for _ in 0..rng.below(64) {
                    std::hint::spin_loop();
                }
                let pending = unsafe { chain::begin_push(&slot, top) };
                exchanged.store(true, SeqCst);
                if trial % 2 == 0 {
                    windows_held += 1;
                    for _ in 0..4 {
                        thread::yield_now();
                    }
                }
                pending.link();
                end.wait();
                end.wait();
            }
            windows_held
        })
    };

    let mut lost = 0u32;
    let mut duplicated = 0u32;
    let mut caught_in_window = 0u32;
    for _ in 0..trials {
        start.wait();
        let mut got: Vec<usize> = vec![];
        chain::detach_all(&slot).drain(|e| got.push(e as *const WaitElement as usize));
        let first = got.len();
        end.wait();
        if exchanged.swap(false, SeqCst) && first == 2 {
            caught_in_window += 1;
        }
        chain::detach_all(&slot).drain(|e| got.push(e as *const WaitElement as usize));
        let want: HashSet<usize> = elements.iter().map(|e| e as *const WaitElement as usize).collect();
        let seen: HashSet<usize> = got.iter().copied().collect();
        if seen.len() != got.len() {
            duplicated += 1;
        }
        if seen != want {
            lost += 1;
        }
        end.wait();
    }
    let windows_held = pusher.join().unwrap();
    Check::new(
        format!("unlinked-window x{trials}"),
        lost == 0 && duplicated == 0,
        format!(
            "lost={lost} duplicated={duplicated} windows_held={windows_held} both_in_racing_detach={caught_in_window}"
        ),
    )
}

/// Lock-like load that must finish within `timeout`. The semaphore starts
/// with no permits and the single permit is posted only once every thread
/// has queued, so the run starts with a full queue of waiters. With
/// `suppress_notify` the semaphore is built broken (posts never notify the
/// waiting array).
pub fn liveness(
    spec: &SemSpec,
    threads: usize,
    iterations_per_thread: u64,
    timeout: Duration,
    suppress_notify: bool,
) -> Check {
    let name = format!(
        "liveness {} T={threads}{}",
        label(spec),
        if suppress_notify { " (notify suppressed)" } else { "" }
    );
    let sem = match spec.clone().permits(0).build() {
        Ok(s) => Arc::new(s),
        Err(e) => return Check::error(name, e),
    };
    if let Some(twa) = sem.as_twa() {
        twa.set_suppress_notify(suppress_notify);
    }
    let started = Instant::now();
    let deadline = started + timeout;
    let handles: Vec<_> = (0..threads)
        .map(|_| {
            let sem = sem.clone();
            thread::spawn(move || {
                for _ in 0..iterations_per_thread {
                    sem.take();
                    sem.post();
                }
            })
        })
        .collect();
    let queued = match sem.core() {
        Some(core) => await_cond(deadline, || core.ticket() == threads as u64),
        None => {
            thread::sleep(Duration::from_millis(20));
            true
        }
    };
    sem.post();
    match join_all_by(handles, deadline) {
        Some(_) if queued => Check::new(name, true, format!("all admitted in {:?}", started.elapsed())),
        Some(_) => Check::new(name, false, "threads never queued up"),
        None => {
            let state = sem.core().map(|c| format!(" at {:?}", c.snapshot())).unwrap_or_default();
            rescue(&sem, threads as u64);
            Check::new(name, false, format!("waiters still blocked after {timeout:?}{state}"))
        }
    }
}

/// Fixed-budget benchmark twice with the same seed: both runs must leave the
/// shared PRNG at the seed advanced by exactly the total iteration count.
pub fn determinism(config: &BenchConfig, iterations_per_thread: u64) -> Check {
    let cfg = BenchConfig { runs: 2, fixed_iterations: Some(iterations_per_thread), ..config.clone() };
    let name = format!("determinism {} T={}", cfg.algo, cfg.threads);
    let r = match run_benchmark(&cfg) {
        Ok(r) => r,
        Err(e) => return Check::error(name, e),
    };
    let total = iterations_per_thread * cfg.threads as u64;
    let want = prng_advance(cfg.seed, total);
    let ok = r.outcomes.iter().all(|o| o.iterations == total && o.witness == total && o.shared_state == want);
    Check::new(
        name,
        ok,
        format!(
            "iterations={:?} final_states={:x?} expected={want:x}",
            r.per_run_iterations,
            r.outcomes.iter().map(|o| o.shared_state).collect::<Vec<_>>()
        ),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Take,
    Post,
}

/// A small randomized schedule and what a FIFO counting semaphore does with it.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub threads: usize,
    pub initial: u64,
    pub steps: Vec<(usize, Op)>,
    /// `(thread, ticket)` in admission order, per the sequential model.
    pub admissions: Vec<(usize, u64)>,
    /// Admissions the model has made after each step.
    pub admitted_after: Vec<usize>,
    /// Threads still blocked at the end.
    pub blocked_at_end: usize,
}

/// Sequential FIFO counting semaphore: a permit count and a queue of waiters.
#[derive(Debug, Default)]
struct SequentialModel {
    permits: u64,
    queue: VecDeque<(usize, u64)>,
    next_ticket: u64,
    admissions: Vec<(usize, u64)>,
}

impl SequentialModel {
    /// Returns whether the taker blocked.
    fn take(&mut self, thread: usize) -> bool {
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        if self.permits > 0 && self.queue.is_empty() {
            self.permits -= 1;
            self.admissions.push((thread, ticket));
            false
        } else {
            self.queue.push_back((thread, ticket));
            true
        }
    }

    /// Returns the thread that was admitted, if any.
    fn post(&mut self) -> Option<usize> {
        match self.queue.pop_front() {
            Some(w) => {
                self.admissions.push(w);
                Some(w.0)
            }
            None => {
                self.permits += 1;
                None
            }
        }
    }
}

/// Draws a schedule of at most `max_threads` threads and `max_ops`
/// operations. Blocked threads are never scheduled; generation stops early if
/// every thread is blocked.
pub fn random_schedule(rng: &mut Rng, max_threads: usize, max_ops: usize) -> Schedule {
    let threads = 1 + rng.below(max_threads as u64) as usize;
    let ops = 1 + rng.below(max_ops as u64) as usize;
    let initial = rng.below(3);
    let mut model = SequentialModel { permits: initial, ..Default::default() };
    let mut blocked = vec![false; threads];
    let mut steps = vec![];
    let mut admitted_after = vec![];
    for _ in 0..ops {
        let ready: Vec<usize> = (0..threads).filter(|&t| !blocked[t]).collect();
        if ready.is_empty() {
            break;
        }
        let thread = *rng.pick(&ready);
        let op = if rng.below(2) == 0 { Op::Take } else { Op::Post };
        match op {
            Op::Take => blocked[thread] = model.take(thread),
            Op::Post => {
                if let Some(t) = model.post() {
                    blocked[t] = false;
                }
            }
        }
        steps.push((thread, op));
        admitted_after.push(model.admissions.len());
    }
    Schedule {
        threads,
        initial,
        steps,
        admissions: model.admissions,
        admitted_after,
        blocked_at_end: blocked.iter().filter(|&&b| b).count(),
    }
}

enum Cmd {
    Run(Op),
    Exit,
}

/// Replays `schedule` on a fresh semaphore, one step at a time: each take is
/// released only once the previous step has fully settled, so arrivals happen
/// in schedule order. Returns the observed admissions or a description of
/// the first divergence from the model.
pub fn replay(spec: &SemSpec, schedule: &Schedule, step_timeout: Duration) -> Result<Vec<(usize, u64)>, String> {
    let sem = Arc::new(spec.clone().permits(schedule.initial).build().map_err(|e| e.to_string())?);
    if sem.core().is_none() {
        return Err(format!("{} does not expose tickets", spec.algo));
    }
    let log: Arc<Mutex<Vec<(usize, u64)>>> = Arc::default();
    let posts_done = Arc::new(AtomicU64::new(0));
    let mut senders = vec![];
    let mut handles = vec![];
    for me in 0..schedule.threads {
        let (tx, rx) = mpsc::channel::<Cmd>();
        let (sem, log, posts_done) = (sem.clone(), log.clone(), posts_done.clone());
        handles.push(thread::spawn(move || {
            while let Ok(Cmd::Run(op)) = rx.recv() {
                match op {
                    Op::Take => {
                        let t = sem.take_ticket().expect("ticket");
                        log.lock().unwrap().push((me, t));
                    }
                    Op::Post => {
                        sem.post();
                        posts_done.fetch_add(1, SeqCst);
                    }
                }
            }
        }));
        senders.push(tx);
    }

    let core = || sem.core().expect("core");
    let observed = || log.lock().unwrap().clone();
    let mut takes = 0u64;
    let mut posts = 0u64;
    let mut outcome = Ok(());
    for (i, &(thread, op)) in schedule.steps.iter().enumerate() {
        let deadline = Instant::now() + step_timeout;
        senders[thread].send(Cmd::Run(op)).expect("worker alive");
        let settled = match op {
            Op::Take => {
                takes += 1;
                await_cond(deadline, || core().ticket() == takes)
            }
            Op::Post => {
                posts += 1;
                await_cond(deadline, || posts_done.load(SeqCst) == posts)
            }
        };
        let want = schedule.admitted_after[i];
        let settled = settled && await_cond(deadline, || log.lock().unwrap().len() >= want);
        let got = observed();
        if !settled || got[..] != schedule.admissions[..want] {
            outcome = Err(format!("step {i} ({thread}, {op:?}): expected {:?}, got {got:?}", &schedule.admissions[..want]));
            break;
        }
    }
    if outcome.is_ok() {
        // Nobody still blocked may sneak in late.
        thread::sleep(Duration::from_micros(200));
        let got = observed();
        if got != schedule.admissions {
            outcome = Err(format!("late admission: expected {:?}, got {got:?}", schedule.admissions));
        }
    }

    // Release whoever is still blocked, then shut down.
    let result = observed();
    for _ in 0..(takes + schedule.threads as u64) {
        sem.post();
    }
    drop(senders.drain(..).map(|tx| tx.send(Cmd::Exit)).collect::<Vec<_>>());
    if join_all_by(handles, Instant::now() + step_timeout).is_none() {
        rescue(&sem, schedule.threads as u64);
        return Err("workers did not shut down".into());
    }
    outcome.map(|()| result)
}

/// Replays `schedules` random schedules for `algo`, varying the wait
/// strategy and threshold per schedule, and compares admitted-ticket
/// sequences against the sequential model.
pub fn sequential_oracle(algo: Algo, schedules: u32, seed: u64, strategies: &[WaitStrategy]) -> Check {
    let name = format!("sequential-oracle {algo} x{schedules}");
    let mut rng = Rng::new(seed);
    let mut steps = 0usize;
    let mut blocked_left = 0usize;
    for n in 0..schedules {
        let schedule = random_schedule(&mut rng, 4, 12);
        let spec = SemSpec::new(algo).strategy(*rng.pick(strategies)).threshold(*rng.pick(&[0, 1, 4]));
        steps += schedule.steps.len();
        blocked_left += schedule.blocked_at_end;
        if let Err(e) = replay(&spec, &schedule, Duration::from_secs(10)) {
            return Check::new(name, false, format!("schedule {n} {}: {e}; schedule={schedule:?}", label(&spec)));
        }
    }
    Check::new(name, true, format!("schedules={schedules} steps={steps} blocked_at_end={blocked_left}"))
}

/// Parameters for [`run_conformance`].
#[derive(Clone, Debug)]
pub struct ConformanceConfig {
    pub algo: Algo,
    pub threads: usize,
    pub ops: u64,
    pub threshold: u64,
    pub strategy: WaitStrategy,
    pub array_slots: usize,
    pub seed: u64,
    pub spin_duration: Duration,
    pub liveness_timeout: Duration,
    pub schedules: u32,
    /// Fault injection: build twa semaphores whose posts never notify.
    pub suppress_notify: bool,
}

impl Default for ConformanceConfig {
    fn default() -> Self {
        ConformanceConfig {
            algo: Algo::TwaCounter,
            threads: 4,
            ops: 100_000,
            threshold: 1,
            strategy: WaitStrategy::default(),
            array_slots: twasem::waiting_array::DEFAULT_SLOTS,
            seed: 1,
            spin_duration: Duration::from_secs(2),
            liveness_timeout: Duration::from_secs(10),
            schedules: 200,
            suppress_notify: false,
        }
    }
}

/// Runs every applicable invariant check for one configuration.
pub fn run_conformance(cfg: &ConformanceConfig) -> Result<Report, BenchError> {
    let array = Arc::new(
        WaitingArray::new(cfg.array_slots).map_err(|e| BenchError::Config(e.to_string()))?,
    );
    let spec = SemSpec::new(cfg.algo).strategy(cfg.strategy).threshold(cfg.threshold).array(array);
    let mut report = Report::default();
    let budget = cfg.liveness_timeout.max(Duration::from_secs(60));

    report.push(counting_semantics(&spec.clone().permits(2), cfg.threads, cfg.ops, cfg.seed, budget));
    if cfg.algo.is_fifo() {
        report.push(fife_admission(&spec, cfg.threads, cfg.ops, budget));
    }
    if cfg.algo.uses_array() {
        report.extend(spin_bound(std::slice::from_ref(&spec), cfg.threads, cfg.spin_duration));
    }
    if cfg.algo == Algo::TwaChain {
        report.push(chain_conservation(4, 10_000));
        report.push(unlinked_window(10_000, cfg.seed));
    }
    let per_thread = (cfg.ops / cfg.threads as u64).max(1);
    report.push(liveness(&spec, cfg.threads, per_thread, cfg.liveness_timeout, cfg.suppress_notify));
    if cfg.algo.is_fifo() {
        report.push(sequential_oracle(cfg.algo, cfg.schedules, cfg.seed, &[cfg.strategy]));
    }
    let bench = BenchConfig {
        algo: cfg.algo,
        threads: cfg.threads,
        threshold: cfg.threshold,
        array_slots: cfg.array_slots,
        wait_strategy: cfg.strategy,
        seed: cfg.seed,
        ..BenchConfig::default()
    };
    report.push(determinism(&bench, per_thread.min(10_000)));
    Ok(report)
}

impl Extend<Check> for Report {
    fn extend<I: IntoIterator<Item = Check>>(&mut self, iter: I) {
        self.checks.extend(iter);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_is_fifo() {
        let mut m = SequentialModel { permits: 1, ..Default::default() };
        assert!(!m.take(0));
        assert!(m.take(1));
        assert!(m.take(2));
        assert_eq!(m.post(), Some(1));
        assert_eq!(m.post(), Some(2));
        assert_eq!(m.post(), None);
        assert!(!m.take(0));
        assert_eq!(m.admissions, vec![(0, 0), (1, 1), (2, 2), (0, 3)]);
    }

    #[test]
    fn schedules_respect_limits() {
        let mut rng = Rng::new(7);
        for _ in 0..500 {
            let s = random_schedule(&mut rng, 4, 12);
            assert!((1..=4).contains(&s.threads));
            assert!(s.steps.len() <= 12);
            assert_eq!(s.admitted_after.len(), s.steps.len());
            assert_eq!(*s.admitted_after.last().unwrap_or(&0), s.admissions.len());
        }
    }

    #[test]
    fn replay_matches_model_for_a_fixed_schedule() {
        let mut rng = Rng::new(3);
        for algo in Algo::FIFO {
            for _ in 0..20 {
                let s = random_schedule(&mut rng, 4, 12);
                let spec = SemSpec::new(algo).strategy(WaitStrategy::AddressWait);
                assert_eq!(replay(&spec, &s, Duration::from_secs(10)).unwrap(), s.admissions);
            }
        }
    }

    #[test]
    fn small_checks_pass() {
        let spec = SemSpec::new(Algo::TwaChain).strategy(WaitStrategy::AddressWait).threshold(1);
        let long = Duration::from_secs(60);
        assert!(counting_semantics(&spec.clone().permits(2), 4, 2_000, 1, long).passed);
        assert!(fife_admission(&spec, 4, 2_000, long).passed);
        assert!(liveness(&spec, 4, 500, long, false).passed);
        assert!(chain_conservation(2, 500).passed);
        assert!(unlinked_window(200, 9).passed);
    }

    #[test]
    fn report_display_counts_failures() {
        let mut r = Report::default();
        r.push(Check::new("a", true, "ok"));
        r.push(Check::new("b", false, "bad"));
        assert!(!r.passed());
        let text = r.to_string();
        assert!(text.contains("[PASS] a: ok"));
        assert!(text.contains("[FAIL] b: bad"));
        assert!(text.ends_with("2 checks, 1 failed"));
    }
}
