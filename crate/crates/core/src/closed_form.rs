//! Closed-form optimal trade for a fixed trade signature.
//!
//! For active tokens `i ∈ A`
//!
//! ```text
//! Φ_i = γ^{−d_i} ( ν̆ k̆ (w̆_i γ^{d_i} / m_i)^{1−w̆_i} ∏_{j≠i} (m_j / (w̆_j γ^{d_j}))^{w̆_j} − ν R_i )
//! ```
//!
//! with `ν̆ = ν^{Σ_{A} w̆}` (which is just `ν`, the renormalised weights summing
//! to one) and `k̆ = ∏_{A} R_i^{w̆_i}`. The symmetric variant factors `ν R_i` out
//! of the bracket and is kept as an independent route for cross-checking.

use crate::error::{ArbError, Result};
use crate::pool::{
    reduced_residual, trade_profit, MarketPrices, PoolState, TradeSignature, TradeSolution, RESIDUAL_TOL,
    ZERO_TOL_REL,
};

/// Log-space inputs shared by every signature evaluated against one
/// `(pool, prices)` pair.
#[derive(Debug, Clone)]
pub struct ClosedForm<'a> {
    pool: &'a PoolState,
    prices: &'a MarketPrices,
    /// `ln(ν R_j)`: amplification enters only through the virtual reserves.
    ln_reserves: Vec<f64>,
    ln_prices: Vec<f64>,
    ln_gamma: f64,
}

impl<'a> ClosedForm<'a> {
    pub fn new(pool: &'a PoolState, prices: &'a MarketPrices) -> Result<Self> {
        pool.check_prices(prices)?;
        Ok(ClosedForm {
            pool,
            prices,
            ln_reserves: (0..pool.n_tokens()).map(|j| pool.virtual_reserve(j).ln()).collect(),
            ln_prices: prices.as_slice().iter().map(|m| m.ln()).collect(),
            ln_gamma: pool.fee_gamma().ln(),
        })
    }

    pub fn pool(&self) -> &PoolState {
        self.pool
    }

    /// Raw `Φ` for the signature, without any validity bookkeeping.
    pub fn phi(&self, sig: &[i8]) -> Vec<f64> {
        let n = sig.len();
        let weights = self.pool.weights();
        let gamma = self.pool.fee_gamma();

        let active_total: f64 = (0..n).filter(|&i| sig[i] != 0).map(|i| weights[i]).sum();
        let ln_active_total = active_total.ln();

        // ln ν̆ + ln k̆ = Σ_{j∈A} w̆_j ln(ν R_j), with ν̆ = ν^{Σ w̆}, and
        // Σ_{j∈A} w̆_j (ln m_j − ln w̆_j − d_j ln γ)
        let mut ln_k = 0.0;
        let mut acc = 0.0;
        for j in 0..n {
            if sig[j] == 0 {
                continue;
            }
            let wb = weights[j] / active_total;
            ln_k += wb * self.ln_reserves[j];
            acc += wb * self.price_term(j, sig[j], ln_active_total);
        }
        let mut phi = vec![0.0; n];
        for i in 0..n {
            if sig[i] == 0 {
                continue;
            }
            let wb = weights[i] / active_total;
            let a_i = self.price_term(i, sig[i], ln_active_total);
            let ln_target = ln_k - (1.0 - wb) * a_i + (acc - wb * a_i);
            let net = ln_target.exp() - self.pool.virtual_reserve(i);
            phi[i] = if sig[i] == 1 { net / gamma } else { net };
        }
        phi
    }

    /// `ln m_j − ln w̆_j − d_j ln γ`
    #[inline]
    fn price_term(&self, j: usize, s: i8, ln_active_total: f64) -> f64 {
        let ln_wb = self.pool.weights()[j].ln() - ln_active_total;
        let fee = if s == 1 { self.ln_gamma } else { 0.0 };
        self.ln_prices[j] - ln_wb - fee
    }

    /// Evaluates the closed form and classifies the result.
    pub fn solve(&self, sig: &TradeSignature) -> TradeSolution {
        let phi = self.phi(sig.entries());
        assess(self.pool, self.prices, sig, phi)
    }
}

/// Fills in profit, residual and validity for a candidate `Φ` with signature `sig`.
pub(crate) fn assess(pool: &PoolState, prices: &MarketPrices, sig: &TradeSignature, phi: Vec<f64>) -> TradeSolution {
    let gamma = pool.fee_gamma();
    let profit = trade_profit(prices, &phi);
    let residual = reduced_residual(pool, &phi, sig.entries()).unwrap_or(f64::NAN);

    let sign_ok = sig.entries().iter().zip(&phi).zip(pool.reserves()).all(|((s, p), r)| match s {
        0 => *p == 0.0,
        _ => f64::from(*s) * p > ZERO_TOL_REL * r,
    });
    let reserves_ok = phi.iter().zip(pool.reserves()).all(|(p, r)| {
        let scaled = if *p > 0.0 { gamma * p } else { *p };
        r + scaled > 0.0
    });
    let valid = sign_ok && reserves_ok && residual.abs() <= RESIDUAL_TOL && profit > 0.0;

    TradeSolution {
        phi,
        signature: Some(sig.clone()),
        profit,
        invariant_residual: residual,
        valid,
    }
}

/// Optimal trade for a fixed signature.
pub fn optimal_phi(pool: &PoolState, prices: &MarketPrices, sig: &TradeSignature) -> Result<TradeSolution> {
    check_signature(pool, sig)?;
    Ok(ClosedForm::new(pool, prices)?.solve(sig))
}

/// Same optimum via the symmetric form, `Φ_i = γ^{−d_i} ν R_i (bracket − 1)`.
pub fn optimal_phi_symmetric(
    pool: &PoolState,
    prices: &MarketPrices,
    sig: &TradeSignature,
) -> Result<TradeSolution> {
    check_signature(pool, sig)?;
    pool.check_prices(prices)?;
    let n = pool.n_tokens();
    let s = sig.entries();
    let gamma = pool.fee_gamma();
    let m = prices.as_slice();
    let active_total: f64 = sig.active_indices().map(|i| pool.weights()[i]).sum();

    // ln(m_j ν R_j / (w̆_j γ^{d_j}))
    let term = |j: usize| -> f64 {
        let wb = pool.weights()[j] / active_total;
        let fee = if s[j] == 1 { gamma } else { 1.0 };
        (m[j] * pool.virtual_reserve(j)).ln() - (wb * fee).ln()
    };

    let mut phi = vec![0.0; n];
    for i in sig.active_indices() {
        let wb = pool.weights()[i] / active_total;
        let others: f64 = sig
            .active_indices()
            .filter(|&j| j != i)
            .map(|j| pool.weights()[j] / active_total * term(j))
            .sum();
        let ln_bracket = -(1.0 - wb) * term(i) + others;
        let net = pool.virtual_reserve(i) * ln_bracket.exp_m1();
        phi[i] = if s[i] == 1 { net / gamma } else { net };
    }
    Ok(assess(pool, prices, sig, phi))
}

/// First-order optimality residual: the largest relative mismatch over active
/// pairs between `m_i R'_i / (w̆_i γ^{d_i})` values, with `R'_i = ν R_i + γ^{d_i} Φ_i`.
pub fn post_trade_price_alignment(pool: &PoolState, prices: &MarketPrices, sol: &TradeSolution) -> f64 {
    let Some(sig) = &sol.signature else {
        return 0.0;
    };
    let gamma = pool.fee_gamma();
    let m = prices.as_slice();
    // ln(m_i R'_i / (w_i γ^{d_i})); the active-weight normaliser cancels in ratios
    let marginal: Vec<(usize, f64)> = sig
        .active_indices()
        .map(|i| {
            let fee = if sig.pays_fee(i) { gamma } else { 1.0 };
            let after = pool.virtual_reserve(i) + fee * sol.phi[i];
            (i, (m[i] * after).ln() - (pool.weights()[i] * fee).ln())
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (a, &(_, li)) in marginal.iter().enumerate() {
        for &(_, lj) in &marginal[a + 1..] {
            let r = (lj - li).exp_m1().abs().max((li - lj).exp_m1().abs());
            worst = worst.max(r);
        }
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}

fn check_signature(pool: &PoolState, sig: &TradeSignature) -> Result<()> {
    if sig.len() != pool.n_tokens() {
        return Err(ArbError::DimensionMismatch {
            what: "signature",
            got: sig.len(),
            expected: pool.n_tokens(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[i8]) -> TradeSignature {
        TradeSignature::new(v.to_vec()).unwrap()
    }

    fn worked_instance() -> (PoolState, MarketPrices) {
        (
            PoolState::new(vec![100.0, 100.0], vec![0.5, 0.5], 1.0).unwrap(),
            MarketPrices::new(vec![1.1, 1.0]).unwrap(),
        )
    }

    #[test]
    fn two_token_worked_instance() {
        let (pool, prices) = worked_instance();
        let sol = optimal_phi(&pool, &prices, &sig(&[-1, 1])).unwrap();
        let phi1 = 100.0 / 1.1f64.sqrt() - 100.0;
        let phi2 = 100.0 * 1.1f64.sqrt() - 100.0;
        assert!((sol.phi[0] - phi1).abs() < 1e-12, "{:?}", sol.phi);
        assert!((sol.phi[1] - phi2).abs() < 1e-12, "{:?}", sol.phi);
        assert!(sol.valid);
        assert!((sol.profit - 0.2380952380952).abs() < 1e-3);
        // reverse direction cannot be sign-consistent
        assert!(!optimal_phi(&pool, &prices, &sig(&[1, -1])).unwrap().valid);
    }

    #[test]
    fn zero_fee_alignment_matches_market_ratio() {
        let (pool, prices) = worked_instance();
        let sol = optimal_phi(&pool, &prices, &sig(&[-1, 1])).unwrap();
        let r1 = 100.0 + sol.phi[0];
        let r2 = 100.0 + sol.phi[1];
        let quoted = (0.5 / r1) / (0.5 / r2);
        assert!((quoted - 1.1).abs() < 1e-12, "{quoted}");
        assert!(post_trade_price_alignment(&pool, &prices, &sol) < 1e-12);
    }

    #[test]
    fn symmetric_form_agrees_on_worked_instance() {
        let (pool, prices) = worked_instance();
        let a = optimal_phi(&pool, &prices, &sig(&[-1, 1])).unwrap();
        let b = optimal_phi_symmetric(&pool, &prices, &sig(&[-1, 1])).unwrap();
        for (x, y) in a.phi.iter().zip(&b.phi) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_has_no_valid_signature() {
        let third = 1.0 / 3.0;
        let pool = PoolState::new(vec![100.0, 200.0, 400.0], vec![third, third, 1.0 - 2.0 * third], 0.997).unwrap();
        let prices = MarketPrices::new(vec![4.0, 2.0, 1.0]).unwrap();
        for s in crate::signature::enumerate_signatures(3).unwrap().signatures() {
            let sol = optimal_phi(&pool, &prices, s).unwrap();
            assert!(!sol.valid, "{s} -> {:?}", sol);
        }
    }

    #[test]
    fn inactive_tokens_stay_untouched() {
        let pool = PoolState::new(vec![10.0, 20.0, 30.0], vec![0.3, 0.3, 0.4], 0.99).unwrap();
        let prices = MarketPrices::new(vec![2.0, 0.4, 1.0]).unwrap();
        let a = optimal_phi(&pool, &prices, &sig(&[1, 0, -1])).unwrap();
        let b = optimal_phi_symmetric(&pool, &prices, &sig(&[1, 0, -1])).unwrap();
        assert_eq!(a.phi[1], 0.0);
        assert_eq!(b.phi[1], 0.0);
    }

    #[test]
    fn perturbation_breaks_alignment() {
        let pool = PoolState::new(vec![100.0, 150.0, 80.0], vec![0.3, 0.3, 0.4], 0.997).unwrap();
        let prices = MarketPrices::new(vec![1.3, 0.6, 1.0]).unwrap();
        let best = crate::signature::find_best_trade(&pool, &prices).unwrap().best;
        assert!(best.valid);
        assert!(post_trade_price_alignment(&pool, &prices, &best) <= 1e-9);
        let i = best.phi.iter().position(|p| *p != 0.0).unwrap();
        let mut bumped = best.clone();
        bumped.phi[i] *= 1.01;
        assert!(post_trade_price_alignment(&pool, &prices, &bumped) > 1e-4);
    }

    #[test]
    fn amplified_pool_trades_on_virtual_reserves() {
        let pool = PoolState::with_amplification(vec![50.0, 80.0, 20.0], vec![0.2, 0.5, 0.3], 0.99, 2.0).unwrap();
        let virt = PoolState::new(vec![100.0, 160.0, 40.0], vec![0.2, 0.5, 0.3], 0.99).unwrap();
        let prices = MarketPrices::new(vec![1.5, 0.4, 2.0]).unwrap();
        let s = sig(&[1, -1, -1]);
        let a = optimal_phi(&pool, &prices, &s).unwrap();
        let b = optimal_phi(&virt, &prices, &s).unwrap();
        for (x, y) in a.phi.iter().zip(&b.phi) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
}
