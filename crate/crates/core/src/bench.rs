//! Timing sweep over pool size for the closed-form search and the baseline.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baseline::{solve_numerical, SolverConfig};
use crate::error::{ArbError, Result};
use crate::signature::SignatureSearch;
use crate::sim::trials::{generate_trial, TrialConfig};

pub const MIN_INSTANCES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Baseline,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed_form",
            Method::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n_tokens: usize,
    pub method: Method,
    pub threads: usize,
    #[serde(rename = "median_time_s", with = "secs")]
    pub median_time: Duration,
    #[serde(rename = "p95_time_s", with = "secs")]
    pub p95_time: Duration,
    pub instances: usize,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub instances: usize,
    /// Thread counts for the closed-form search; 0 = available parallelism.
    pub threads: Vec<usize>,
    pub methods: Vec<Method>,
    /// Each instance is timed this many times and the fastest run kept.
    pub repeats: usize,
    pub seed: u64,
    pub baseline: SolverConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_min: 2,
            n_max: 7,
            instances: 50,
            threads: vec![1, 0],
            methods: vec![Method::ClosedForm, Method::Baseline],
            repeats: 3,
            seed: 0,
            baseline: SolverConfig::default(),
        }
    }
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)]
}

/// Runs the sweep. Baseline rows are single-threaded regardless of `threads`.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.instances < MIN_INSTANCES {
        return Err(ArbError::invalid(
            "instances",
            format!("{} is below the minimum of {MIN_INSTANCES}", cfg.instances),
        ));
    }
    if cfg.n_min < 2 || cfg.n_min > cfg.n_max {
        return Err(ArbError::invalid("n_min", "need 2 <= n_min <= n_max"));
    }
    let repeats = cfg.repeats.max(1);
    let mut out = Vec::new();
    for n in cfg.n_min..=cfg.n_max {
        let trial_cfg = TrialConfig {
            n_tokens: n,
            seed: cfg.seed,
            fee_gamma: 0.997,
            ..TrialConfig::default()
        };
        let instances: Vec<_> = (0..cfg.instances as u64)
            .map(|id| generate_trial(&trial_cfg, id))
            .collect::<Result<_>>()?;
        for &method in &cfg.methods {
            let thread_counts: Vec<usize> = match method {
                Method::ClosedForm => cfg.threads.clone(),
                Method::Baseline => vec![1],
            };
            for &threads in &thread_counts {
                let search = SignatureSearch::new(n, threads)?;
                let mut times = Vec::with_capacity(instances.len());
                for (pool, prices) in &instances {
                    let mut fastest = Duration::MAX;
                    for _ in 0..repeats {
                        let t0 = Instant::now();
                        match method {
                            Method::ClosedForm => {
                                std::hint::black_box(search.find_best(pool, prices)?);
                            }
                            Method::Baseline => {
                                std::hint::black_box(solve_numerical(pool, prices, &cfg.baseline)?);
                            }
                        }
                        fastest = fastest.min(t0.elapsed());
                    }
                    times.push(fastest.max(Duration::from_nanos(1)));
                }
                times.sort();
                out.push(BenchRecord {
                    n_tokens: n,
                    method,
                    threads: search.threads(),
                    median_time: percentile(&times, 0.5),
                    p95_time: percentile(&times, 0.95),
                    instances: times.len(),
                });
            }
        }
    }
    Ok(out)
}

/// Least-squares slope of `ln(median time)` against `n` for one method/thread row set.
pub fn log_growth_per_token(records: &[BenchRecord]) -> f64 {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.n_tokens as f64, r.median_time.as_secs_f64().ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn write_bench_csv<W: std::io::Write>(records: &[BenchRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| ArbError::Io(e.to_string());
    out.write_record(["n_tokens", "method", "threads", "median_time_s", "p95_time_s", "instances"])
        .map_err(err)?;
    for r in records {
        out.write_record([
            r.n_tokens.to_string(),
            r.method.to_string(),
            r.threads.to_string(),
            r.median_time.as_secs_f64().to_string(),
            r.p95_time.as_secs_f64().to_string(),
            r.instances.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| ArbError::Io(e.to_string()))
}
