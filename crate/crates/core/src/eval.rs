//! Benchmark harness: the mean-distance error, repeated seeded runs, and
//! the CSV reports they produce.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{train, Method, Timing, TrainConfig};
use crate::pareto::MetricSet;
use crate::testbench::Problem;

/// Largest tolerated share of failed runs before a summary is flagged.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Mean distance of `generated` to the problem's true front.
pub fn compute_err(p: &Problem, generated: &MetricSet) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Domain("cannot score an empty generated set".into()));
    }
    let mut total = 0.0;
    for f in generated.iter() {
        total += p.distance_to_true_pf(f)?;
    }
    Ok(total / generated.len() as f64)
}

/// Generated-point count per problem: 1000 for 2-metric fronts, 8000 for 3-metric.
pub fn default_n_pf(p: &Problem) -> usize {
    if p.m() == 2 {
        1000
    } else {
        8000
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub n_max: Vec<usize>,
    pub repeats: usize,
    /// Points generated per trained model; problem default when absent.
    pub n_pf: Option<usize>,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            methods: Method::ALL.to_vec(),
            n_max: vec![5, 10, 15, 20, 25, 30],
            repeats: 50,
            n_pf: None,
            threads: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() || self.n_max.is_empty() {
            return Err(Error::Config("benchmark needs at least one method and one n_max".into()));
        }
        if self.n_pf == Some(0) || self.threads == Some(0) {
            return Err(Error::Config("n_pf and threads must be positive".into()));
        }
        Ok(())
    }
}

/// One successful training-generation-scoring run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub problem: String,
    pub n_max: usize,
    pub seed: u64,
    pub err: f64,
    pub acquisition: f64,
    pub query_overhead: f64,
    pub fitting: f64,
    pub n_generated: usize,
}

impl RunReport {
    pub fn timing(&self) -> Timing {
        Timing { acquisition: self.acquisition, query_overhead: self.query_overhead, fitting: self.fitting }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub method: Method,
    pub n_max: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub problem: String,
    pub n_max: usize,
    pub mean_err: f64,
    /// Sample standard deviation; absent with fewer than two runs.
    pub std_err: Option<f64>,
    /// Successful runs the statistics are over.
    pub repeats: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Default)]
pub struct BenchmarkSummary {
    pub rows: Vec<SummaryRow>,
    pub reports: Vec<RunReport>,
    pub failures: Vec<RunFailure>,
}

impl BenchmarkSummary {
    pub fn row(&self, method: Method, n_max: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.n_max == n_max)
    }

    pub fn failure_rate(&self) -> f64 {
        let total = self.reports.len() + self.failures.len();
        if total == 0 {
            0.0
        } else {
            self.failures.len() as f64 / total as f64
        }
    }

    /// True when more than [`MAX_FAILURE_RATE`] of the runs failed.
    pub fn flagged(&self) -> bool {
        self.failure_rate() > MAX_FAILURE_RATE
    }

    pub fn check(&self) -> Result<()> {
        if self.flagged() {
            return Err(Error::FailureRate {
                failed: self.failures.len(),
                total: self.reports.len() + self.failures.len(),
            });
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.rows)
    }

    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.reports)
    }
}

impl fmt::Display for BenchmarkSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:<6} {:>6} {:>12} {:>12} {:>5} {:>6}",
            "method", "prob", "n_max", "mean_err", "std_err", "runs", "failed"
        )?;
        for r in &self.rows {
            let std = r.std_err.map_or_else(|| "-".to_string(), |s| format!("{s:.6}"));
            writeln!(
                f,
                "{:<8} {:<6} {:>6} {:>12.6} {:>12} {:>5} {:>6}",
                r.method, r.problem, r.n_max, r.mean_err, std, r.repeats, r.failed
            )?;
        }
        Ok(())
    }
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    read_rows(input)
}

pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunReport>> {
    read_rows(input)
}

/// Mean and sample standard deviation, summed in the given order.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

/// Trains, generates `n_pf` points and scores them.
pub fn run_once(p: &Problem, cfg: &TrainConfig, n_pf: usize) -> Result<RunReport> {
    let out = train(p, cfg)?;
    let generated = out.model.generate(n_pf, cfg.seed)?;
    let err = compute_err(p, &generated)?;
    Ok(RunReport {
        method: cfg.method,
        problem: p.name().to_string(),
        n_max: cfg.n_max,
        seed: cfg.seed,
        err,
        acquisition: out.timing.acquisition,
        query_overhead: out.timing.query_overhead,
        fitting: out.timing.fitting,
        n_generated: generated.len(),
    })
}

/// Every (method, n_max, repeat) run with seed `base.seed + r`, fanned out
/// over a worker pool. Aggregation happens in job order, so the statistics
/// do not depend on the thread count.
pub fn run_benchmark(p: &Problem, base: &TrainConfig, bench: &BenchmarkConfig) -> Result<BenchmarkSummary> {
    bench.validate()?;
    let n_pf = bench.n_pf.unwrap_or_else(|| default_n_pf(p));
    let mut jobs = Vec::new();
    for &method in &bench.methods {
        for &n_max in &bench.n_max {
            for r in 0..bench.repeats {
                let mut cfg = base.clone();
                cfg.method = method;
                cfg.n_max = n_max;
                cfg.seed = base.seed.wrapping_add(r as u64);
                cfg.validate()?;
                jobs.push(cfg);
            }
        }
    }
    let work = || -> Vec<std::result::Result<RunReport, RunFailure>> {
        jobs.par_iter()
            .map(|cfg| {
                run_once(p, cfg, n_pf).map_err(|e| {
                    log::warn!("{} n_max={} seed={} failed: {e}", cfg.method, cfg.n_max, cfg.seed);
                    RunFailure { method: cfg.method, n_max: cfg.n_max, seed: cfg.seed, error: e.to_string() }
                })
            })
            .collect()
    };
    let results = match bench.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut summary = BenchmarkSummary::default();
    for r in results {
        match r {
            Ok(rep) => summary.reports.push(rep),
            Err(f) => summary.failures.push(f),
        }
    }
    for &method in &bench.methods {
        for &n_max in &bench.n_max {
            let errs: Vec<f64> =
                summary.reports.iter().filter(|r| r.method == method && r.n_max == n_max).map(|r| r.err).collect();
            let failed = summary.failures.iter().filter(|f| f.method == method && f.n_max == n_max).count();
            if errs.is_empty() {
                continue;
            }
            let (mean_err, std_err) = mean_std(&errs);
            summary.rows.push(SummaryRow {
                method,
                problem: p.name().to_string(),
                n_max,
                mean_err,
                std_err,
                repeats: errs.len(),
                failed,
            });
        }
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub problem: String,
    pub n_max: usize,
    pub runs: usize,
    /// Per-run means in seconds.
    pub acquisition: f64,
    pub query_overhead: f64,
    pub fitting: f64,
    pub total: f64,
}

/// Mean per-run time split by method, problem and budget, in first-seen order.
pub fn timing_report(reports: &[RunReport]) -> Vec<TimingRow> {
    let mut rows: Vec<TimingRow> = Vec::new();
    for r in reports {
        let i = match rows.iter().position(|t| t.method == r.method && t.problem == r.problem && t.n_max == r.n_max) {
            Some(i) => i,
            None => {
                rows.push(TimingRow {
                    method: r.method,
                    problem: r.problem.clone(),
                    n_max: r.n_max,
                    runs: 0,
                    acquisition: 0.0,
                    query_overhead: 0.0,
                    fitting: 0.0,
                    total: 0.0,
                });
                rows.len() - 1
            }
        };
        let t = &mut rows[i];
        t.runs += 1;
        t.acquisition += r.acquisition;
        t.query_overhead += r.query_overhead;
        t.fitting += r.fitting;
    }
    for t in &mut rows {
        let n = t.runs as f64;
        t.acquisition /= n;
        t.query_overhead /= n;
        t.fitting /= n;
        t.total = t.acquisition + t.query_overhead + t.fitting;
    }
    rows
}

pub fn write_timing_csv<W: Write>(out: W, rows: &[TimingRow]) -> Result<()> {
    write_rows(out, rows)
}

/// Writes a metric set with header `f1,...,fm`.
pub fn write_metric_csv<W: Write>(out: W, set: &MetricSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = set.dim().unwrap_or(0);
    w.write_record((1..=m).map(|i| format!("f{i}")))?;
    for f in set.iter() {
        w.write_record(f.as_slice().iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric_csv<R: Read>(input: R) -> Result<MetricSet> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Corrupt(format!("bad number `{s}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    MetricSet::from_rows(rows)
}
