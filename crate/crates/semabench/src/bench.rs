//! The throughput benchmark.
//!
//! T threads loop over: take the central semaphore, advance a shared PRNG one
//! step, post, advance a thread-private PRNG one step. The semaphore starts
//! with zero permits and is posted `permits` times (once by default, so it
//! behaves as a lock) before any worker starts. After the measurement
//! interval the aggregate iteration count is the score; the reported figure
//! is the median over several independent runs.

use std::hint::black_box;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering::Relaxed, Ordering::SeqCst};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use twasem::{Semaphore, WaitStrategy, WaitingArray};

use crate::algo::{Algo, SemSpec};
use crate::prng::prng_step;
use crate::BenchError;

pub const DEFAULT_DURATION_SECS: f64 = 10.0;
pub const DEFAULT_RUNS: usize = 11;
pub const DEFAULT_BUDGET_SECS: f64 = 3600.0;

pub const ENV_ARRAY_SLOTS: &str = "TWA_ARRAY_SLOTS";
pub const ENV_THRESHOLD: &str = "TWA_LONGTERM_THRESHOLD";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub algo: Algo,
    pub threads: usize,
    pub duration_secs: f64,
    pub runs: usize,
    pub threshold: u64,
    pub array_slots: usize,
    pub wait_strategy: WaitStrategy,
    pub seed: u64,
    /// Posts made before the workers start.
    pub permits: u64,
    pub pin: bool,
    /// Upper bound on `duration_secs * runs`.
    pub budget_secs: f64,
    /// Conformance mode: each worker runs exactly this many iterations
    /// instead of running against the clock.
    pub fixed_iterations: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            algo: Algo::TwaCounter,
            threads: 1,
            duration_secs: DEFAULT_DURATION_SECS,
            runs: DEFAULT_RUNS,
            threshold: twasem::twa::DEFAULT_THRESHOLD,
            array_slots: twasem::waiting_array::DEFAULT_SLOTS,
            wait_strategy: WaitStrategy::default(),
            seed: 1,
            permits: 1,
            pin: false,
            budget_secs: DEFAULT_BUDGET_SECS,
            fixed_iterations: None,
        }
    }
}

impl BenchConfig {
    /// Defaults, with `TWA_ARRAY_SLOTS` and `TWA_LONGTERM_THRESHOLD` applied.
    pub fn from_env() -> Result<Self, BenchError> {
        let mut c = BenchConfig::default();
        if let Some(v) = env_u64(ENV_ARRAY_SLOTS)? {
            c.array_slots = v as usize;
        }
        if let Some(v) = env_u64(ENV_THRESHOLD)? {
            c.threshold = v;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.threads == 0 {
            return Err(BenchError::Config("threads must be positive".into()));
        }
        if self.runs == 0 {
            return Err(BenchError::Config("runs must be positive".into()));
        }
        if !(self.array_slots.is_power_of_two()) {
            return Err(BenchError::Config(format!(
                "array slots must be a power of two, got {}",
                self.array_slots
            )));
        }
        if self.fixed_iterations.is_none() {
            if self.duration_secs.is_nan() || self.duration_secs <= 0.0 {
                return Err(BenchError::Config("duration must be positive".into()));
            }
            let total = self.duration_secs * self.runs as f64;
            if total > self.budget_secs {
                return Err(BenchError::Config(format!(
                    "{} runs x {} s = {total} s exceeds the {} s budget",
                    self.runs, self.duration_secs, self.budget_secs
                )));
            }
        }
        Ok(())
    }

    fn sem_spec(&self, array: &Arc<WaitingArray>) -> SemSpec {
        SemSpec::new(self.algo)
            .threshold(self.threshold)
            .strategy(self.wait_strategy)
            .array(array.clone())
    }
}

fn env_u64(name: &str) -> Result<Option<u64>, BenchError> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| BenchError::Config(format!("{name}={v} is not a non-negative integer"))),
        Err(_) => Ok(None),
    }
}

/// What one run produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub iterations: u64,
    /// Critical-section entries, counted with plain (non-RMW) updates inside
    /// the critical section. Equals `iterations` only under mutual exclusion.
    pub witness: u64,
    /// Final state of the shared PRNG.
    pub shared_state: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub config_echo: BenchConfig,
    pub outcomes: Vec<RunOutcome>,
    pub per_run_iterations: Vec<u64>,
    pub median_iterations: u64,
}

impl BenchResult {
    fn from_outcomes(config: BenchConfig, outcomes: Vec<RunOutcome>) -> Self {
        let per_run_iterations: Vec<u64> = outcomes.iter().map(|o| o.iterations).collect();
        let median_iterations = per_run_iterations[median_run(&per_run_iterations)];
        BenchResult { config_echo: config, outcomes, per_run_iterations, median_iterations }
    }

    /// Index of the run holding the median.
    pub fn median_run(&self) -> usize {
        median_run(&self.per_run_iterations)
    }
}

/// Index of the lower median: the run at sorted position `(n - 1) / 2`, ties
/// broken by run index.
pub fn median_run(values: &[u64]) -> usize {
    assert!(!values.is_empty(), "median of no runs");
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| (values[i], i));
    order[(values.len() - 1) / 2]
}

pub fn run_benchmark(config: &BenchConfig) -> Result<BenchResult, BenchError> {
    config.validate()?;
    let array = Arc::new(WaitingArray::new(config.array_slots).map_err(|e| BenchError::Config(e.to_string()))?);
    let mut outcomes = Vec::with_capacity(config.runs);
    for _ in 0..config.runs {
        outcomes.push(run_once(config, &array)?);
    }
    Ok(BenchResult::from_outcomes(config.clone(), outcomes))
}

/// One independent run on a fresh semaphore.
pub fn run_once(config: &BenchConfig, array: &Arc<WaitingArray>) -> Result<RunOutcome, BenchError> {
    let sem = config.sem_spec(array).build()?;
    for _ in 0..config.permits {
        sem.post();
    }

    let shared = AtomicU64::new(config.seed);
    let witness = AtomicU64::new(0);
    let go = AtomicBool::new(false);
    let stop = AtomicBool::new(false);
    let cpus = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);

    let iterations = thread::scope(|scope| -> Result<u64, BenchError> {
        let mut handles = Vec::with_capacity(config.threads);
        for idx in 0..config.threads {
            let (sem, shared, witness, go, stop) = (&sem, &shared, &witness, &go, &stop);
            let fixed = config.fixed_iterations;
            let pin = config.pin.then_some(idx % cpus);
            let private_seed = config.seed ^ (idx as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
            let spawned = thread::Builder::new().name(format!("semabench-{idx}")).spawn_scoped(scope, move || {
                if let Some(cpu) = pin {
                    pin_to_cpu(cpu);
                }
                while !go.load(SeqCst) {
                    thread::yield_now();
                }
                let mut private = private_seed;
                let mut n = 0u64;
                loop {
                    match fixed {
                        Some(budget) if n == budget => break,
                        None if stop.load(Relaxed) => break,
                        _ => {}
                    }
                    sem.take();
                    shared.store(prng_step(shared.load(Relaxed)), Relaxed);
                    witness.store(witness.load(Relaxed) + 1, Relaxed);
                    sem.post();
                    private = prng_step(private);
                    n += 1;
                }
                black_box(private);
                n
            });
            match spawned {
                Ok(h) => handles.push(h),
                Err(e) => {
                    // Release the workers already spawned so the scope can end.
                    stop.store(true, SeqCst);
                    go.store(true, SeqCst);
                    return Err(BenchError::Spawn(e));
                }
            }
        }
        go.store(true, SeqCst);
        if config.fixed_iterations.is_none() {
            thread::sleep(Duration::from_secs_f64(config.duration_secs));
            stop.store(true, SeqCst);
        }
        let mut total = 0;
        for h in handles {
            total += h.join().map_err(|_| BenchError::WorkerPanicked)?;
        }
        Ok(total)
    })?;

    Ok(RunOutcome { iterations, witness: witness.into_inner(), shared_state: shared.into_inner() })
}

#[cfg(target_os = "linux")]
fn pin_to_cpu(cpu: usize) {
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to_cpu(_cpu: usize) {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_median() {
        assert_eq!(median_run(&[5]), 0);
        assert_eq!(median_run(&[3, 1, 2]), 2);
        assert_eq!(median_run(&[4, 1, 3, 2]), 3);
        assert_eq!(median_run(&[7, 7, 7]), 1);
    }

    #[test]
    fn validation() {
        let ok = BenchConfig::default();
        assert!(ok.validate().is_ok());
        assert!(BenchConfig { threads: 0, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { runs: 0, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { array_slots: 1000, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { duration_secs: 0.0, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { budget_secs: 100.0, ..ok.clone() }.validate().is_err());
        let fixed = BenchConfig { duration_secs: 0.0, fixed_iterations: Some(10), ..ok };
        assert!(fixed.validate().is_ok());
    }

    #[test]
    fn single_thread_run_is_consistent() {
        let cfg = BenchConfig { algo: Algo::Ticket, duration_secs: 0.2, runs: 3, ..Default::default() };
        let r = run_benchmark(&cfg).unwrap();
        assert_eq!(r.per_run_iterations.len(), 3);
        for o in &r.outcomes {
            assert!(o.iterations > 0);
            assert_eq!(o.iterations, o.witness);
        }
        assert!(r.per_run_iterations.contains(&r.median_iterations));
    }

    #[test]
    fn fixed_budget_run_counts_exactly() {
        for algo in Algo::ALL {
            let cfg = BenchConfig { algo, threads: 3, fixed_iterations: Some(500), runs: 1, ..Default::default() };
            let r = match run_benchmark(&cfg) {
                Ok(r) => r,
                Err(BenchError::Unsupported(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            assert_eq!(r.outcomes[0].iterations, 1500);
            assert_eq!(r.outcomes[0].witness, 1500);
        }
    }
}
