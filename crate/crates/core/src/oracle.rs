//! Dense grid search over trade space for pools with at most three tokens.
//!
//! For each signature the first `|A| − 1` active tokens are swept over a grid
//! in their signed direction, `|Φ_i| ∈ [0, box_fraction · R_i]`, and the last
//! active token is solved from the reduced trading function so every grid point
//! lies on the level set. The last token's factor has an exact solution in log
//! space, `ln f_last = −Σ_free w̆_i ln f_i / w̆_last`, so no root finding is needed.
//! Nothing here uses the optimality conditions.

use serde::{Deserialize, Serialize};

use crate::error::{ArbError, Result};
use crate::pool::{
    reduced_residual, signs_of, MarketPrices, PoolState, TradeSignature, TradeSolution, RESIDUAL_TOL,
};
use crate::signature::enumerate_signatures;

pub const MAX_ORACLE_TOKENS: usize = 3;
pub const MAX_GRID_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOracle {
    pub grid_points: usize,
    /// Re-grid once around the best cell of the winning signature.
    pub refine: bool,
    pub box_fraction: f64,
}

impl Default for GridOracle {
    fn default() -> Self {
        GridOracle {
            grid_points: MAX_GRID_POINTS,
            refine: true,
            box_fraction: 0.5,
        }
    }
}

/// Grid search with the default box and one refinement pass.
pub fn solve_grid_oracle(pool: &PoolState, prices: &MarketPrices, grid_points: usize) -> Result<TradeSolution> {
    GridOracle {
        grid_points,
        ..GridOracle::default()
    }
    .solve(pool, prices)
}

struct Best {
    profit: f64,
    phi: Vec<f64>,
    sig: Option<TradeSignature>,
    /// grid coordinate per free dimension, and the cell width used
    coords: Vec<f64>,
    cell: Vec<f64>,
}

impl GridOracle {
    pub fn solve(&self, pool: &PoolState, prices: &MarketPrices) -> Result<TradeSolution> {
        let n = pool.n_tokens();
        if n > MAX_ORACLE_TOKENS {
            return Err(ArbError::OutOfRange {
                n,
                min: 2,
                max: MAX_ORACLE_TOKENS,
            });
        }
        if !(2..=MAX_GRID_POINTS).contains(&self.grid_points) {
            return Err(ArbError::invalid(
                "grid_points",
                format!("{} outside 2..={MAX_GRID_POINTS}", self.grid_points),
            ));
        }
        if !(self.box_fraction > 0.0 && self.box_fraction < 1.0) {
            return Err(ArbError::invalid("box_fraction", "must lie in (0,1)"));
        }
        pool.check_prices(prices)?;

        let mut best = Best {
            profit: 0.0,
            phi: vec![0.0; n],
            sig: None,
            coords: Vec::new(),
            cell: Vec::new(),
        };
        for sig in enumerate_signatures(n)?.signatures() {
            let ranges: Vec<(f64, f64)> = free_tokens(sig)
                .iter()
                .map(|&i| (0.0, self.box_fraction * pool.reserves()[i]))
                .collect();
            self.sweep(pool, prices, sig, &ranges, &mut best);
        }

        if self.refine {
            if let Some(sig) = best.sig.clone() {
                let limits: Vec<f64> = free_tokens(&sig)
                    .iter()
                    .map(|&i| self.box_fraction * pool.reserves()[i])
                    .collect();
                let ranges: Vec<(f64, f64)> = best
                    .coords
                    .iter()
                    .zip(&best.cell)
                    .zip(&limits)
                    .map(|((c, h), lim)| ((c - h).max(0.0), (c + h).min(*lim)))
                    .collect();
                self.sweep(pool, prices, &sig, &ranges, &mut best);
            }
        }

        let Some(sig) = best.sig else {
            return Ok(TradeSolution::zero(n));
        };
        let residual = reduced_residual(pool, &best.phi, sig.entries()).unwrap_or(f64::NAN);
        let signs = signs_of(&best.phi);
        Ok(TradeSolution {
            signature: TradeSignature::new(signs).ok().or(Some(sig)),
            profit: best.profit,
            invariant_residual: residual,
            valid: residual.abs() <= RESIDUAL_TOL && best.profit > 0.0,
            phi: best.phi,
        })
    }

    fn sweep(&self, pool: &PoolState, prices: &MarketPrices, sig: &TradeSignature, ranges: &[(f64, f64)], best: &mut Best) {
        let s = sig.entries();
        let gamma = pool.fee_gamma();
        let m = prices.as_slice();
        let free = free_tokens(sig);
        let last = *sig.active_indices().collect::<Vec<_>>().last().expect("signature has active tokens");
        let active_total: f64 = sig.active_indices().map(|i| pool.weights()[i]).sum();
        let wb = |i: usize| pool.weights()[i] / active_total;
        let fee = |i: usize| if s[i] == 1 { gamma } else { 1.0 };
        let g = self.grid_points;

        // per free dimension: grid coordinate, Φ value, w̆ ln f, −m Φ
        let axes: Vec<Vec<(f64, f64, f64, f64)>> = free
            .iter()
            .zip(ranges)
            .map(|(&i, &(lo, hi))| {
                (0..g)
                    .map(|k| {
                        let t = lo + (hi - lo) * k as f64 / (g - 1) as f64;
                        let phi = f64::from(s[i]) * t;
                        let rel = fee(i) * phi / pool.virtual_reserve(i);
                        let lf = if rel > -1.0 { wb(i) * rel.ln_1p() } else { f64::NAN };
                        (t, phi, lf, -m[i] * phi)
                    })
                    .collect()
            })
            .collect();
        let cells: Vec<f64> = ranges.iter().map(|(lo, hi)| (hi - lo) / (g - 1) as f64).collect();

        let w_last = wb(last);
        let scale_last = pool.virtual_reserve(last) / fee(last);
        let s_last = f64::from(s[last]);
        let mut visit = |picks: &[usize]| {
            let mut lf = 0.0;
            let mut profit = 0.0;
            for (axis, &k) in axes.iter().zip(picks) {
                lf += axis[k].2;
                profit += axis[k].3;
            }
            if !lf.is_finite() {
                return;
            }
            let phi_last = scale_last * (-lf / w_last).exp_m1();
            if s_last * phi_last < 0.0 {
                return;
            }
            if pool.reserves()[last] + fee(last) * phi_last <= 0.0 {
                return;
            }
            profit -= m[last] * phi_last;
            if profit > best.profit {
                let mut phi = vec![0.0; s.len()];
                for ((&i, axis), &k) in free.iter().zip(&axes).zip(picks) {
                    phi[i] = axis[k].1;
                }
                phi[last] = phi_last;
                best.profit = profit;
                best.phi = phi;
                best.sig = Some(sig.clone());
                best.coords = axes.iter().zip(picks).map(|(a, &k)| a[k].0).collect();
                best.cell = cells.clone();
            }
        };

        match free.len() {
            1 => (0..g).for_each(|a| visit(&[a])),
            2 => (0..g).for_each(|a| (0..g).for_each(|b| visit(&[a, b]))),
            _ => unreachable!("at most three tokens"),
        }
    }
}

fn free_tokens(sig: &TradeSignature) -> Vec<usize> {
    let active: Vec<usize> = sig.active_indices().collect();
    active[..active.len() - 1].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> (PoolState, MarketPrices) {
        (
            PoolState::new(vec![100.0, 100.0], vec![0.5, 0.5], 1.0).unwrap(),
            MarketPrices::new(vec![1.1, 1.0]).unwrap(),
        )
    }

    #[test]
    fn worked_instance_profit() {
        let (pool, prices) = worked();
        let sol = solve_grid_oracle(&pool, &prices, 2001).unwrap();
        // value of the optimum computed by hand: 100 (2.1 − 2 √1.1)
        let exact = 100.0 * (2.1 - 2.0 * 1.1f64.sqrt());
        assert!((sol.profit - exact).abs() < 1e-5, "{}", sol.profit);
        assert!(sol.profit <= exact + 1e-12);
        assert!(sol.valid);
        assert_eq!(sol.signature.unwrap().entries(), &[-1, 1]);
    }

    #[test]
    fn equilibrium_is_zero_trade() {
        let third = 1.0 / 3.0;
        let pool = PoolState::new(vec![100.0, 200.0, 400.0], vec![third, third, 1.0 - 2.0 * third], 0.997).unwrap();
        let prices = MarketPrices::new(vec![4.0, 2.0, 1.0]).unwrap();
        let sol = solve_grid_oracle(&pool, &prices, 201).unwrap();
        assert!(sol.is_zero());
        assert_eq!(sol.profit, 0.0);
    }

    #[test]
    fn refinement_is_monotone_on_nested_grids() {
        let pool = PoolState::new(vec![80.0, 120.0, 60.0], vec![0.3, 0.3, 0.4], 0.997).unwrap();
        let prices = MarketPrices::new(vec![1.4, 0.9, 1.7]).unwrap();
        let coarse = |g| {
            GridOracle {
                grid_points: g,
                refine: false,
                box_fraction: 0.5,
            }
            .solve(&pool, &prices)
            .unwrap()
            .profit
        };
        let (a, b, c) = (coarse(101), coarse(501), coarse(2001));
        assert!(a <= b && b <= c, "{a} {b} {c}");
        let refined = solve_grid_oracle(&pool, &prices, 2001).unwrap().profit;
        assert!(refined >= c);
    }

    #[test]
    fn rejects_large_pools_and_grids() {
        let pool = PoolState::new(vec![1.0; 4], vec![0.25; 4], 1.0).unwrap();
        let prices = MarketPrices::new(vec![1.0; 4]).unwrap();
        assert!(solve_grid_oracle(&pool, &prices, 11).is_err());
        let (pool, prices) = worked();
        assert!(solve_grid_oracle(&pool, &prices, 2002).is_err());
        assert!(solve_grid_oracle(&pool, &prices, 1).is_err());
    }
}
