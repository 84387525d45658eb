//! Numerical baseline: maximise `Σ m (Λ − Δ)` over `Δ, Λ ≥ 0` subject to the
//! inequality form of the trading function.
//!
//! The problem is solved in reserve-normalised coordinates `x = Δ / (ν R)`,
//! `y = Λ / (ν R)` with the objective divided by the virtual pool value, so the
//! same step sizes work for any pool scale. The constraint
//! `g(x, y) = Σ w_i ln(1 + γ x_i − y_i) ≥ 0` is handled with an augmented
//! Lagrangian; each inner problem is solved by projected gradient ascent with
//! Armijo backtracking. The final iterate is pulled back onto the feasible set
//! by shrinking the outflows, so every returned trade satisfies the raw
//! invariant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArbError, Result};
use crate::pool::{raw_invariant_slack, reduced_residual, signs_of, trade_profit, MarketPrices, PoolState, TradeSignature, TradeSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Total projected-gradient iterations across all multiplier updates.
    pub max_iterations: usize,
    /// Initial step in normalised coordinates; adapted by backtracking.
    pub step_size: f64,
    /// Augmented-Lagrangian penalty `ρ`.
    pub penalty_weight: f64,
    /// Stationarity / feasibility tolerance. Also the smallest profit, as a
    /// fraction of pool value, that the solver reports as a trade.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 5000,
            step_size: 1.0,
            penalty_weight: 50.0,
            convergence_tol: 1e-9,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(ArbError::invalid("max_iterations", "must be positive"));
        }
        if !(self.step_size > 0.0) {
            return Err(ArbError::invalid("step_size", "must be positive"));
        }
        if !(self.penalty_weight > 0.0) {
            return Err(ArbError::invalid("penalty_weight", "must be positive"));
        }
        if !(self.convergence_tol >= 1e-12) {
            return Err(ArbError::invalid("convergence_tol", "must be at least 1e-12"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalSolution {
    pub solution: TradeSolution,
    pub iterations: usize,
    /// False when the iteration budget ran out before the tolerances were met.
    pub converged: bool,
}

/// Cap on gradient steps between multiplier updates.
const INNER_ITERATIONS: usize = 200;

struct Problem {
    n: usize,
    gamma: f64,
    weights: Vec<f64>,
    /// `m_i ν R_i / Σ_j m_j ν R_j`
    shares: Vec<f64>,
    /// Largest admissible `y_i − γ x_i`, keeping real reserves positive.
    max_draw: f64,
}

impl Problem {
    fn new(pool: &PoolState, prices: &MarketPrices) -> Self {
        let n = pool.n_tokens();
        let value: Vec<f64> = (0..n).map(|i| prices.as_slice()[i] * pool.virtual_reserve(i)).collect();
        let total: f64 = value.iter().sum();
        Problem {
            n,
            gamma: pool.fee_gamma(),
            weights: pool.weights().to_vec(),
            shares: value.iter().map(|v| v / total).collect(),
            max_draw: 1.0 / pool.amplification(),
        }
    }

    fn in_domain(&self, z: &[f64]) -> bool {
        (0..self.n).all(|i| self.gamma * z[i] - z[self.n + i] + self.max_draw > 0.0)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        (0..self.n).map(|i| self.shares[i] * (z[self.n + i] - z[i])).sum()
    }

    fn constraint(&self, z: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| self.weights[i] * (self.gamma * z[i] - z[self.n + i]).ln_1p())
            .sum()
    }

    /// Augmented Lagrangian for `g ≥ 0` under maximisation.
    fn lagrangian(&self, z: &[f64], lambda: f64, rho: f64) -> f64 {
        let g = self.constraint(z);
        let mult = (lambda - rho * g).max(0.0);
        self.objective(z) - (mult * mult - lambda * lambda) / (2.0 * rho)
    }

    fn gradient(&self, z: &[f64], lambda: f64, rho: f64, out: &mut [f64]) {
        let mult = (lambda - rho * self.constraint(z)).max(0.0);
        for i in 0..self.n {
            let inv = 1.0 / (1.0 + self.gamma * z[i] - z[self.n + i]);
            out[i] = -self.shares[i] + mult * self.weights[i] * self.gamma * inv;
            out[self.n + i] = self.shares[i] - mult * self.weights[i] * inv;
        }
    }

    /// Shrinks outflows until the constraint holds.
    fn restore(&self, z: &mut [f64]) {
        if self.constraint(z) >= 0.0 {
            return;
        }
        let outflow: Vec<f64> = z[self.n..].to_vec();
        let apply = |z: &mut [f64], theta: f64| {
            for i in 0..self.n {
                z[self.n + i] = outflow[i] * theta;
            }
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            apply(z, mid);
            if self.constraint(z) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        apply(z, lo);
    }
}

/// Numerically maximises arbitrage profit. Always returns a feasible trade;
/// `converged` reports whether the tolerances were reached in budget.
pub fn solve_numerical(pool: &PoolState, prices: &MarketPrices, cfg: &SolverConfig) -> Result<NumericalSolution> {
    cfg.validate()?;
    pool.check_prices(prices)?;
    let prob = Problem::new(pool, prices);
    let n = prob.n;
    let rho = cfg.penalty_weight;
    let tol = cfg.convergence_tol;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z: Vec<f64> = (0..2 * n).map(|_| 1e-9 * rng.gen::<f64>()).collect();
    let mut lambda = 1.0;
    let mut step;
    let mut grad = vec![0.0; 2 * n];
    let mut trial = vec![0.0; 2 * n];

    let mut best_feasible: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;

    let mut inner_tol = 1e-3f64.max(tol);
    'outer: while iterations < cfg.max_iterations {
        // inner: maximise the augmented Lagrangian at fixed λ
        let mut stationary = false;
        let mut stalled = false;
        let inner_start = iterations;
        step = cfg.step_size;
        while iterations < cfg.max_iterations && iterations - inner_start < INNER_ITERATIONS {
            iterations += 1;
            let current = prob.lagrangian(&z, lambda, rho);
            prob.gradient(&z, lambda, rho, &mut grad);
            let mut moved = None;
            for _ in 0..60 {
                for k in 0..2 * n {
                    trial[k] = (z[k] + step * grad[k]).max(0.0);
                }
                if prob.in_domain(&trial) {
                    let gain: f64 = (0..2 * n).map(|k| grad[k] * (trial[k] - z[k])).sum();
                    if prob.lagrangian(&trial, lambda, rho) >= current + 1e-4 * gain {
                        moved = Some((0..2 * n).map(|k| (trial[k] - z[k]).abs()).fold(0.0, f64::max));
                        break;
                    }
                }
                step *= 0.5;
            }
            // no ascent step exists at working precision
            let Some(moved) = moved else {
                stalled = true;
                break;
            };
            std::mem::swap(&mut z, &mut trial);
            if prob.constraint(&z) >= 0.0 {
                let f = prob.objective(&z);
                if best_feasible.as_ref().map_or(true, |(b, _)| f > *b) {
                    best_feasible = Some((f, z.clone()));
                }
            }
            // gradient-mapping norm
            if moved / step <= inner_tol {
                stationary = inner_tol <= tol;
                break;
            }
            step = (step * 2.0).min(cfg.step_size);
        }
        let g = prob.constraint(&z);
        let next = (lambda - rho * g).max(0.0);
        let settled = (next - lambda).abs() <= tol * lambda.max(1.0);
        lambda = next;
        inner_tol = (inner_tol * 0.1).max(tol);
        let feasible = g.min(0.0).abs() <= tol;
        if (stationary && settled && feasible) || (stalled && feasible) {
            converged = true;
            break 'outer;
        }
    }

    let mut last = z.clone();
    prob.restore(&mut last);
    let mut candidate = (prob.objective(&last), last);
    if let Some((f, zb)) = best_feasible {
        if f > candidate.0 {
            candidate = (f, zb);
        }
    }
    let z = candidate.1;

    // net each token and convert back to token units
    let phi: Vec<f64> = (0..n).map(|i| (z[i] - z[n + i]) * pool.virtual_reserve(i)).collect();
    let solution = finish(pool, prices, phi, tol);
    Ok(NumericalSolution {
        solution,
        iterations,
        converged,
    })
}

/// Classifies a feasible net trade. Trades worth no more than `min_profit_frac`
/// of the pool value are reported as the zero trade.
fn finish(pool: &PoolState, prices: &MarketPrices, phi: Vec<f64>, min_profit_frac: f64) -> TradeSolution {
    let n = pool.n_tokens();
    let profit = trade_profit(prices, &phi);
    let value: f64 = (0..n).map(|i| prices.as_slice()[i] * pool.virtual_reserve(i)).sum();
    let signs = signs_of(&phi);
    let Ok(signature) = TradeSignature::new(signs.clone()) else {
        return TradeSolution::zero(n);
    };
    if !(profit > min_profit_frac * value) {
        return TradeSolution::zero(n);
    }
    let feasible = raw_invariant_slack(pool, &phi).map_or(false, |s| s >= -1e-9);
    let residual = reduced_residual(pool, &phi, &signs).unwrap_or(f64::NAN);
    TradeSolution {
        phi,
        signature: Some(signature),
        profit,
        invariant_residual: residual,
        valid: feasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::find_best_trade;

    #[test]
    fn worked_instance_matches_closed_form() {
        let pool = PoolState::new(vec![100.0, 100.0], vec![0.5, 0.5], 1.0).unwrap();
        let prices = MarketPrices::new(vec![1.1, 1.0]).unwrap();
        let exact = find_best_trade(&pool, &prices).unwrap().best.profit;
        let num = solve_numerical(&pool, &prices, &SolverConfig::default()).unwrap();
        assert!(num.solution.valid);
        assert!(((num.solution.profit - exact) / exact).abs() < 1e-4, "{} vs {exact}", num.solution.profit);
        assert!(num.solution.profit <= exact + 1e-12);
    }

    #[test]
    fn equilibrium_gives_nothing() {
        let third = 1.0 / 3.0;
        let pool = PoolState::new(vec![100.0, 200.0, 400.0], vec![third, third, 1.0 - 2.0 * third], 0.997).unwrap();
        let prices = MarketPrices::new(vec![4.0, 2.0, 1.0]).unwrap();
        let num = solve_numerical(&pool, &prices, &SolverConfig::default()).unwrap();
        assert!(num.solution.profit <= 1e-6 * pool.value(&prices));
        assert!(num.solution.is_zero());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig {
            convergence_tol: 1e-13,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            penalty_weight: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_fills_defaults() {
        let cfg: SolverConfig = serde_json::from_str(r#"{"max_iterations": 10}"#).unwrap();
        assert_eq!(cfg.max_iterations, 10);
        assert_eq!(cfg.penalty_weight, SolverConfig::default().penalty_weight);
    }
}
