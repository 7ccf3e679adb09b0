//! Benchmark and conformance harness for the `twasem` semaphores.

use std::io;

pub mod algo;
pub mod bench;
pub mod conformance;
pub mod prng;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown algorithm `{0}` (expected ticket, twa-counter, twa-chain or os-baseline)")]
    UnknownAlgo(String),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("failed to spawn worker: {0}")]
    Spawn(io::Error),
    #[error("a worker thread panicked")]
    WorkerPanicked,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
