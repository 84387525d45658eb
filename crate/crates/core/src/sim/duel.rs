//! Duelling arbitrageurs: two strategies trade against one live pool.
//!
//! At each price update the arbitrageurs act in a fixed order. Each computes its
//! best trade against the current reserves and executes it if it is still
//! valid, moving the pool to `R + γΔ − Λ`. The fee share `(1 − γ)Δ` leaves the
//! pool and is tracked separately, so the pool stays on its invariant level set.

use serde::{Deserialize, Serialize};

use crate::baseline::{solve_numerical, SolverConfig};
use crate::error::{ArbError, Result};
use crate::pool::{raw_invariant_slack, split_phi, trade_profit, MarketPrices, PoolState, TradeSolution};
use crate::signature::SignatureSearch;
use crate::sim::series::PriceSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arbitrageur {
    ClosedForm,
    Baseline,
}

impl Arbitrageur {
    pub fn other(self) -> Self {
        match self {
            Arbitrageur::ClosedForm => Arbitrageur::Baseline,
            Arbitrageur::Baseline => Arbitrageur::ClosedForm,
        }
    }
}

impl std::fmt::Display for Arbitrageur {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arbitrageur::ClosedForm => "closed_form",
            Arbitrageur::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuelConfig {
    /// Who trades first at every step.
    pub priority: Arbitrageur,
    /// Solver settings for the baseline arbitrageur. Its `convergence_tol` sets
    /// the smallest opportunity, relative to pool value, that it acts on.
    pub baseline: SolverConfig,
}

/// Solver accuracy used by the duelling baseline: `1e-4` relative, the usual
/// default accuracy of first-order conic solvers.
pub const DUEL_BASELINE_TOL: f64 = 1e-4;

impl Default for DuelConfig {
    fn default() -> Self {
        DuelConfig {
            priority: Arbitrageur::Baseline,
            baseline: SolverConfig {
                convergence_tol: DUEL_BASELINE_TOL,
                ..SolverConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelRecord {
    pub step: usize,
    pub timestamp: i64,
    /// Cumulative profits as fractions of the initial pool value.
    pub closed_form_profit: f64,
    pub baseline_profit: f64,
    pub closed_form_traded: bool,
    pub baseline_traded: bool,
    /// Pool value at this step's prices, after the trades.
    pub pool_value: f64,
    /// Cumulative fee value paid out of the pool, in numéraire.
    pub fees_value: f64,
    pub pool_reserves_after: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelSummary {
    pub steps: usize,
    pub order: Vec<Arbitrageur>,
    pub initial_pool_value: f64,
    pub final_closed_form_profit: f64,
    pub final_baseline_profit: f64,
    pub closed_form_trades: usize,
    pub baseline_trades: usize,
    pub skipped_trades: usize,
}

struct Trader<'a> {
    search: SignatureSearch,
    baseline: &'a SolverConfig,
}

impl Trader<'_> {
    fn propose(&self, who: Arbitrageur, pool: &PoolState, prices: &MarketPrices) -> Result<TradeSolution> {
        match who {
            Arbitrageur::ClosedForm => Ok(self.search.find_best(pool, prices)?.best),
            Arbitrageur::Baseline => Ok(solve_numerical(pool, prices, self.baseline)?.solution),
        }
    }
}

/// Applies `Φ` to real reserves, `R + γΔ − Λ`, after re-checking it against
/// the live pool. `None` when the trade is no longer acceptable.
pub fn execute(pool: &PoolState, phi: &[f64]) -> Option<Vec<f64>> {
    if raw_invariant_slack(pool, phi).ok()? < -1e-9 {
        return None;
    }
    let (delta, lambda) = split_phi(phi);
    let gamma = pool.fee_gamma();
    let next: Vec<f64> = pool
        .reserves()
        .iter()
        .zip(delta.iter().zip(&lambda))
        .map(|(r, (d, l))| r + gamma * d - l)
        .collect();
    next.iter().all(|r| *r > 0.0).then_some(next)
}

/// Runs the arbitrageurs in `order` at every step of `series`.
pub fn simulate(
    series: &PriceSeries,
    pool: &PoolState,
    order: &[Arbitrageur],
    baseline: &SolverConfig,
) -> Result<(Vec<DuelRecord>, DuelSummary)> {
    if series.n_tokens() != pool.n_tokens() {
        return Err(ArbError::DimensionMismatch {
            what: "price series",
            got: series.n_tokens(),
            expected: pool.n_tokens(),
        });
    }
    if series.is_empty() {
        return Err(ArbError::invalid("price series", "no rows"));
    }
    baseline.validate()?;
    let trader = Trader {
        search: SignatureSearch::new(pool.n_tokens(), 1)?,
        baseline,
    };
    let gamma = pool.fee_gamma();
    let initial_value = pool.value(&series.row(0)?);
    let mut pool = pool.clone();
    let mut cum = [0.0f64; 2];
    let mut trades = [0usize; 2];
    let mut skipped = 0;
    let mut fees = 0.0;
    let mut records = Vec::with_capacity(series.len());
    let slot = |a: Arbitrageur| match a {
        Arbitrageur::ClosedForm => 0,
        Arbitrageur::Baseline => 1,
    };

    for t in 0..series.len() {
        let prices = series.row(t)?;
        let mut traded = [false; 2];
        for &who in order {
            let sol = trader.propose(who, &pool, &prices)?;
            if !(sol.valid && sol.profit > 0.0) {
                continue;
            }
            match execute(&pool, &sol.phi) {
                Some(next) => {
                    let profit = trade_profit(&prices, &sol.phi);
                    let (delta, _) = split_phi(&sol.phi);
                    fees += (1.0 - gamma) * delta.iter().zip(prices.as_slice()).map(|(d, m)| d * m).sum::<f64>();
                    cum[slot(who)] += profit;
                    trades[slot(who)] += 1;
                    traded[slot(who)] = true;
                    pool = pool.with_reserves(next)?;
                }
                None => skipped += 1,
            }
        }
        records.push(DuelRecord {
            step: t,
            timestamp: series.timestamps[t],
            closed_form_profit: cum[0] / initial_value,
            baseline_profit: cum[1] / initial_value,
            closed_form_traded: traded[0],
            baseline_traded: traded[1],
            pool_value: pool.value(&prices),
            fees_value: fees,
            pool_reserves_after: pool.reserves().to_vec(),
        });
    }
    let summary = DuelSummary {
        steps: series.len(),
        order: order.to_vec(),
        initial_pool_value: initial_value,
        final_closed_form_profit: cum[0] / initial_value,
        final_baseline_profit: cum[1] / initial_value,
        closed_form_trades: trades[0],
        baseline_trades: trades[1],
        skipped_trades: skipped,
    };
    Ok((records, summary))
}

/// Both arbitrageurs on one pool, `cfg.priority` first at every step.
pub fn run_duel(series: &PriceSeries, pool: &PoolState, cfg: &DuelConfig) -> Result<(Vec<DuelRecord>, DuelSummary)> {
    simulate(series, pool, &[cfg.priority, cfg.priority.other()], &cfg.baseline)
}

/// A single arbitrageur with the pool to itself.
pub fn run_standalone(
    series: &PriceSeries,
    pool: &PoolState,
    who: Arbitrageur,
    cfg: &DuelConfig,
) -> Result<(Vec<DuelRecord>, DuelSummary)> {
    simulate(series, pool, &[who], &cfg.baseline)
}

/// Pool with `weights`, worth `value` at `prices` and in equilibrium with them.
pub fn equilibrium_pool(prices: &[f64], weights: &[f64], value: f64, fee_gamma: f64) -> Result<PoolState> {
    let reserves = weights.iter().zip(prices).map(|(w, m)| value * w / m).collect();
    PoolState::new(reserves, weights.to_vec(), fee_gamma)
}
