//! Independent synthetic arbitrage trials.
//!
//! Each trial starts from a pool at equilibrium with market prices
//! `m ~ Uniform(0,1)` and reserves `R = V₀ w / m`, then shocks the prices to
//! `m* = m + a u` with `u ~ Uniform(0,1)` and asks both solvers for the best trade.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{solve_numerical, SolverConfig};
use crate::error::{ArbError, Result};
use crate::pool::{MarketPrices, PoolState};
use crate::signature::SignatureSearch;

/// Closed form "weakly dominates" when `gap ≥ −DOMINANCE_TOL · V₀`.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub n_tokens: usize,
    pub n_trials: usize,
    /// Initial pool value in the price numéraire.
    pub v0: f64,
    /// Price shock scale `a`.
    pub shock_scale: f64,
    pub fee_gamma: f64,
    /// Relative deviation from uniform weights: `w_i ∝ (1 + jitter·u_i)/N`, `u_i ~ U(−1,1)`.
    pub weight_jitter: f64,
    pub seed: u64,
    pub baseline: SolverConfig,
    /// Worker threads across trials; 0 = available parallelism.
    pub threads: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            n_tokens: 3,
            n_trials: 5000,
            v0: 1_000_000.0,
            shock_scale: 0.05,
            fee_gamma: 0.95,
            weight_jitter: 0.1,
            seed: 0,
            baseline: SolverConfig::default(),
            threads: 0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::signature::MAX_ENUMERATE).contains(&self.n_tokens) {
            return Err(ArbError::OutOfRange {
                n: self.n_tokens,
                min: 2,
                max: crate::signature::MAX_ENUMERATE,
            });
        }
        if self.n_trials == 0 {
            return Err(ArbError::invalid("n_trials", "must be at least 1"));
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(ArbError::invalid("v0", "must be positive"));
        }
        if !(self.shock_scale >= 0.0 && self.shock_scale.is_finite()) {
            return Err(ArbError::invalid("shock_scale", "must be non-negative"));
        }
        if !(self.fee_gamma > 0.0 && self.fee_gamma <= 1.0) {
            return Err(ArbError::invalid("fee_gamma", "must lie in (0,1]"));
        }
        if !(0.0..1.0).contains(&self.weight_jitter) {
            return Err(ArbError::invalid(
                "weight_jitter",
                "must lie in [0,1) so weights stay inside (0,1)",
            ));
        }
        self.baseline.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub closed_form_profit: f64,
    pub baseline_profit: f64,
    pub profit_gap: f64,
    #[serde(with = "secs")]
    pub closed_form_time: Duration,
    #[serde(with = "secs")]
    pub baseline_time: Duration,
    /// Number of tokens the closed-form trade touches (0 for no trade).
    pub closed_form_active: usize,
    pub baseline_converged: bool,
    pub error: Option<String>,
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

/// RNG for one trial: the config seed keys the generator and the trial id
/// selects the stream, so distinct `(seed, trial_id)` pairs never share draws.
fn trial_rng(seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_id);
    rng
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x: f64 = rng.gen();
        if x > 0.0 {
            return x;
        }
    }
}

/// Equilibrium pool and shocked prices for one trial.
pub fn generate_trial(cfg: &TrialConfig, trial_id: u64) -> Result<(PoolState, MarketPrices)> {
    cfg.validate()?;
    let n = cfg.n_tokens;
    let mut rng = trial_rng(cfg.seed, trial_id);

    let base: Vec<f64> = (0..n).map(|_| open_unit(&mut rng)).collect();
    let raw: Vec<f64> = (0..n)
        .map(|_| (1.0 + cfg.weight_jitter * rng.gen_range(-1.0..1.0)) / n as f64)
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let reserves: Vec<f64> = weights.iter().zip(&base).map(|(w, m)| cfg.v0 * w / m).collect();
    let shocked: Vec<f64> = base
        .iter()
        .map(|m| m + cfg.shock_scale * rng.gen::<f64>())
        .collect();

    let pool = PoolState::new(reserves, weights, cfg.fee_gamma)?;
    Ok((pool, MarketPrices::new(shocked)?))
}

/// The pre-shock prices of a trial, at which the generated pool is in equilibrium.
pub fn equilibrium_prices(cfg: &TrialConfig, trial_id: u64) -> Result<MarketPrices> {
    let mut rng = trial_rng(cfg.seed, trial_id);
    MarketPrices::new((0..cfg.n_tokens).map(|_| open_unit(&mut rng)).collect())
}

fn run_one(cfg: &TrialConfig, search: &SignatureSearch, trial_id: u64) -> TrialRecord {
    let failed = |e: ArbError| TrialRecord {
        trial_id,
        closed_form_profit: f64::NAN,
        baseline_profit: f64::NAN,
        profit_gap: f64::NAN,
        closed_form_time: Duration::ZERO,
        baseline_time: Duration::ZERO,
        closed_form_active: 0,
        baseline_converged: false,
        error: Some(e.to_string()),
    };
    let (pool, prices) = match generate_trial(cfg, trial_id) {
        Ok(x) => x,
        Err(e) => return failed(e),
    };

    let t0 = Instant::now();
    let closed = search.find_best(&pool, &prices);
    let closed_form_time = t0.elapsed();
    let t1 = Instant::now();
    let baseline = solve_numerical(&pool, &prices, &cfg.baseline);
    let baseline_time = t1.elapsed();

    match (closed, baseline) {
        (Ok(c), Ok(b)) => TrialRecord {
            trial_id,
            closed_form_profit: c.best.profit,
            baseline_profit: b.solution.profit,
            profit_gap: c.best.profit - b.solution.profit,
            closed_form_time,
            baseline_time,
            closed_form_active: c.best.signature.as_ref().map_or(0, |s| s.n_active()),
            baseline_converged: b.converged,
            error: None,
        },
        (Err(e), _) | (_, Err(e)) => failed(e),
    }
}

/// Runs every trial; records come back ordered by trial id.
pub fn run_trials(cfg: &TrialConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let search = SignatureSearch::new(cfg.n_tokens, 1)?;
    let ids: Vec<u64> = (0..cfg.n_trials as u64).collect();
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.threads
    };
    if threads == 1 {
        return Ok(ids.iter().map(|&id| run_one(cfg, &search, id)).collect());
    }
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ArbError::invalid("threads", e.to_string()))?;
    Ok(workers.install(|| ids.par_iter().map(|&id| run_one(cfg, &search, id)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n_tokens: usize,
    pub n_trials: usize,
    pub failed: usize,
    pub mean_closed_form_profit: f64,
    pub mean_baseline_profit: f64,
    pub mean_profit_gap: f64,
    pub gap_quantiles: Quantiles,
    /// Share of trials with `gap ≥ −DOMINANCE_TOL · V₀`.
    pub closed_form_dominance_rate: f64,
    /// Share of trials where the closed form is strictly better by more than the tolerance.
    pub closed_form_win_rate: f64,
    pub no_trade_rate: f64,
    pub median_closed_form_time_s: f64,
    pub median_baseline_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles; NaN for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if v.is_empty() {
                f64::NAN
            } else {
                v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)]
            }
        };
        Quantiles {
            p05: q(0.05),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
        }
    }
}

pub fn summarize_trials(cfg: &TrialConfig, records: &[TrialRecord]) -> TrialSummary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let count = ok.len().max(1) as f64;
    let mean = |f: fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / count;
    let tol = DOMINANCE_TOL * cfg.v0;
    let gaps: Vec<f64> = ok.iter().map(|r| r.profit_gap).collect();
    let rate = |pred: &dyn Fn(&TrialRecord) -> bool| ok.iter().filter(|r| pred(r)).count() as f64 / count;
    TrialSummary {
        n_tokens: cfg.n_tokens,
        n_trials: records.len(),
        failed: records.len() - ok.len(),
        mean_closed_form_profit: mean(|r| r.closed_form_profit),
        mean_baseline_profit: mean(|r| r.baseline_profit),
        mean_profit_gap: mean(|r| r.profit_gap),
        gap_quantiles: Quantiles::of(&gaps),
        closed_form_dominance_rate: rate(&|r| r.profit_gap >= -tol),
        closed_form_win_rate: rate(&|r| r.profit_gap > tol),
        no_trade_rate: rate(&|r| r.closed_form_profit == 0.0 && r.baseline_profit == 0.0),
        median_closed_form_time_s: Quantiles::of(
            &ok.iter().map(|r| r.closed_form_time.as_secs_f64()).collect::<Vec<_>>(),
        )
        .p50,
        median_baseline_time_s: Quantiles::of(&ok.iter().map(|r| r.baseline_time.as_secs_f64()).collect::<Vec<_>>())
            .p50,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::quote_ratios;

    fn cfg() -> TrialConfig {
        TrialConfig {
            n_trials: 20,
            threads: 1,
            ..TrialConfig::default()
        }
    }

    #[test]
    fn initial_pool_is_worth_v0_and_at_equilibrium() {
        let c = cfg();
        for id in 0..10 {
            let (pool, _) = generate_trial(&c, id).unwrap();
            let m = equilibrium_prices(&c, id).unwrap();
            assert!((pool.value(&m) - c.v0).abs() <= 1e-9 * c.v0);
            for l in quote_ratios(&pool, &m).unwrap() {
                assert!((l - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn no_shock_means_no_arb() {
        let c = TrialConfig {
            n_trials: 1,
            shock_scale: 0.0,
            ..cfg()
        };
        let (pool, prices) = generate_trial(&c, 0).unwrap();
        assert_eq!(prices, equilibrium_prices(&c, 0).unwrap());
        let recs = run_trials(&c).unwrap();
        assert_eq!(recs[0].closed_form_profit, 0.0);
        assert_eq!(recs[0].baseline_profit, 0.0);
        assert_eq!(pool.n_tokens(), 3);
    }

    #[test]
    fn seeded_runs_repeat() {
        let c = cfg();
        let a = run_trials(&c).unwrap();
        let b = run_trials(&c).unwrap();
        let key = |r: &TrialRecord| (r.trial_id, r.closed_form_profit.to_bits(), r.baseline_profit.to_bits());
        assert_eq!(a.iter().map(key).collect::<Vec<_>>(), b.iter().map(key).collect::<Vec<_>>());
        assert!(a.iter().enumerate().all(|(i, r)| r.trial_id == i as u64));
    }

    #[test]
    fn distinct_trials_differ() {
        let c = cfg();
        let (p0, m0) = generate_trial(&c, 0).unwrap();
        let (p1, m1) = generate_trial(&c, 1).unwrap();
        assert_ne!(p0.reserves(), p1.reserves());
        assert_ne!(m0, m1);
        let other = TrialConfig { seed: 1, ..c.clone() };
        assert_ne!(generate_trial(&other, 0).unwrap().0.reserves(), p0.reserves());
    }

    #[test]
    fn rejects_bad_jitter() {
        let c = TrialConfig {
            weight_jitter: 1.0,
            ..cfg()
        };
        assert!(generate_trial(&c, 0).is_err());
    }

    #[test]
    fn quantiles_nearest_rank() {
        let q = Quantiles::of(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((q.p05, q.p50, q.p95), (1.0, 3.0, 5.0));
    }
}
