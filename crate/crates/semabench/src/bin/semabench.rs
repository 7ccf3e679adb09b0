use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Parser;

use semabench::algo::Algo;
use semabench::bench::{self, BenchConfig, BenchResult};
use semabench::conformance::{run_conformance, ConformanceConfig};
use semabench::report::emit_csv;
use twasem::WaitStrategy;

/// Semaphore throughput benchmark: T threads take a central semaphore,
/// advance a shared PRNG, post, then advance a private PRNG.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Algorithms to run, comma separated (ticket, twa-counter, twa-chain, os-baseline).
    #[arg(long, value_delimiter = ',', default_value = "twa-counter")]
    algo: Vec<Algo>,

    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Thread counts to sweep, as `A..B` (inclusive). Overrides --threads.
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<Sweep>,

    /// Measurement interval per run, in seconds.
    #[arg(long, default_value_t = bench::DEFAULT_DURATION_SECS)]
    duration: f64,

    #[arg(long, default_value_t = bench::DEFAULT_RUNS)]
    runs: usize,

    /// Short-term spinning threshold.
    #[arg(long, env = bench::ENV_THRESHOLD, default_value_t = twasem::twa::DEFAULT_THRESHOLD)]
    threshold: u64,

    /// Waiting-array length (a power of two).
    #[arg(long, env = bench::ENV_ARRAY_SLOTS, default_value_t = twasem::waiting_array::DEFAULT_SLOTS)]
    array_slots: usize,

    /// Wait strategy: pause, yield, addr or spinpark.
    #[arg(long, default_value = "addr")]
    wait: WaitStrategy,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Posts made before the workers start (1 makes the semaphore a lock).
    #[arg(long, default_value_t = 1)]
    permits: u64,

    /// Pin worker i to CPU i mod N.
    #[arg(long)]
    pin: bool,

    /// Upper bound on duration x runs, in seconds.
    #[arg(long, default_value_t = bench::DEFAULT_BUDGET_SECS)]
    budget: f64,

    /// Write per-run rows to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Run the invariant checks instead of the benchmark.
    #[arg(long)]
    conformance: bool,

    /// Operations per conformance workload.
    #[arg(long, default_value_t = 100_000)]
    ops: u64,

    /// Randomized schedules for the sequential-model comparison.
    #[arg(long, default_value_t = 200)]
    schedules: u32,

    /// Seconds each conformance liveness check may take.
    #[arg(long, default_value_t = 60.0)]
    liveness_timeout: f64,

    /// Fault injection for conformance mode: posts never notify the waiting array.
    #[arg(long, hide = true)]
    suppress_notify: bool,
}

#[derive(Clone, Copy, Debug)]
struct Sweep {
    from: usize,
    to: usize,
}

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let from = usize::from_str(a.trim()).map_err(|e| format!("bad sweep start `{a}`: {e}"))?;
    let to = usize::from_str(b.trim()).map_err(|e| format!("bad sweep end `{b}`: {e}"))?;
    if from == 0 || from > to {
        return Err(format!("sweep must satisfy 1 <= A <= B, got {from}..{to}"));
    }
    Ok(Sweep { from, to })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = if cli.conformance { conformance(&cli) } else { benchmark(&cli) };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("semabench: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn benchmark(cli: &Cli) -> Result<bool> {
    let threads: Vec<usize> = match cli.sweep {
        Some(s) => (s.from..=s.to).collect(),
        None => vec![cli.threads],
    };
    let mut results: Vec<BenchResult> = vec![];
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{:<12} {:>7} {:>5} {:>9} {:>14}  per-run", "algo", "threads", "k", "wait", "median")?;
    for &algo in &cli.algo {
        for &t in &threads {
            let cfg = BenchConfig {
                algo,
                threads: t,
                duration_secs: cli.duration,
                runs: cli.runs,
                threshold: cli.threshold,
                array_slots: cli.array_slots,
                wait_strategy: cli.wait,
                seed: cli.seed,
                permits: cli.permits,
                pin: cli.pin,
                budget_secs: cli.budget,
                fixed_iterations: None,
            };
            let r = bench::run_benchmark(&cfg).with_context(|| format!("{algo} with {t} threads"))?;
            writeln!(
                out,
                "{:<12} {:>7} {:>5} {:>9} {:>14}  {:?}",
                algo.name(),
                t,
                cli.threshold,
                cli.wait.name(),
                r.median_iterations,
                r.per_run_iterations
            )?;
            out.flush()?;
            results.push(r);
        }
    }
    if let Some(path) = &cli.csv {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        emit_csv(&results, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(true)
}

fn conformance(cli: &Cli) -> Result<bool> {
    if cli.liveness_timeout.is_nan() || cli.liveness_timeout <= 0.0 {
        bail!("--liveness-timeout must be positive");
    }
    let mut all_passed = true;
    for &algo in &cli.algo {
        let cfg = ConformanceConfig {
            algo,
            threads: cli.threads,
            ops: cli.ops,
            threshold: cli.threshold,
            strategy: cli.wait,
            array_slots: cli.array_slots,
            seed: cli.seed,
            liveness_timeout: Duration::from_secs_f64(cli.liveness_timeout),
            schedules: cli.schedules,
            suppress_notify: cli.suppress_notify,
            ..ConformanceConfig::default()
        };
        println!("== conformance: {algo}, {} threads, k={}, wait={}", cli.threads, cli.threshold, cli.wait);
        let report = run_conformance(&cfg)?;
        println!("{report}");
        all_passed &= report.passed();
    }
    println!("{}", if all_passed { "conformance: PASS" } else { "conformance: FAIL" });
    Ok(all_passed)
}
