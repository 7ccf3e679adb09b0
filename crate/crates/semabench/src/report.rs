//! CSV output: one header row, then one row per (configuration, run).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bench::BenchResult;
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algo: String,
    pub threads: usize,
    pub duration_secs: f64,
    pub run_index: usize,
    pub iterations: u64,
    pub median_flag: u8,
    pub threshold: u64,
    pub array_slots: usize,
    pub wait_strategy: String,
    pub seed: u64,
}

pub fn rows(results: &[BenchResult]) -> Vec<CsvRow> {
    let mut out = vec![];
    for r in results {
        let c = &r.config_echo;
        let median = r.median_run();
        for (run_index, &iterations) in r.per_run_iterations.iter().enumerate() {
            out.push(CsvRow {
                algo: c.algo.to_string(),
                threads: c.threads,
                duration_secs: c.duration_secs,
                run_index,
                iterations,
                median_flag: u8::from(run_index == median),
                threshold: c.threshold,
                array_slots: c.array_slots,
                wait_strategy: c.wait_strategy.to_string(),
                seed: c.seed,
            });
        }
    }
    out
}

pub const HEADER: [&str; 10] = [
    "algo",
    "threads",
    "duration_secs",
    "run_index",
    "iterations",
    "median_flag",
    "threshold",
    "array_slots",
    "wait_strategy",
    "seed",
];

pub fn emit_csv<W: Write>(results: &[BenchResult], out: W) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    // Written explicitly so an empty result set still gets its header.
    w.write_record(HEADER)?;
    for row in rows(results) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

/// Median iterations per configuration, read back from the flagged rows.
pub fn medians(rows: &[CsvRow]) -> BTreeMap<(String, usize, String, u64), u64> {
    rows.iter()
        .filter(|r| r.median_flag == 1)
        .map(|r| ((r.algo.clone(), r.threads, r.wait_strategy.clone(), r.threshold), r.iterations))
        .collect()
}
