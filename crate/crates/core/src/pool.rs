//! Pool, price and trade types plus the geometric-mean trading function.
//!
//! A pool with reserves `R`, weights `w`, fee parameter `γ` and amplification
//! `ν` accepts a trade `(Δ, Λ)` when
//!
//! ```text
//! ∏ (ν R_i + γ Δ_i − Λ_i)^{w_i} ≥ ν ∏ R_i^{w_i}
//! ```
//!
//! Trades are carried as the net vector `Φ = Δ − Λ`. With `d_i = 1` for tokens
//! flowing into the pool the same condition restricted to the active tokens
//! reads `∏_{i∈A} (1 + γ^{d_i} Φ_i / (ν R_i))^{w̆_i} ≥ 1`, where `w̆` are the
//! weights renormalised over the active set. Every product of powers here is
//! evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{ArbError, Result};

/// Allowed deviation of `Σ w` from one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Tolerance on the reduced invariant residual for a trade to count as valid.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// `|Φ_i| ≤ ZERO_TOL_REL · R_i` counts as no trade on token `i`.
pub const ZERO_TOL_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoolStateRepr")]
pub struct PoolState {
    reserves: Vec<f64>,
    weights: Vec<f64>,
    fee_gamma: f64,
    amplification: f64,
}

#[derive(Deserialize)]
struct PoolStateRepr {
    reserves: Vec<f64>,
    weights: Vec<f64>,
    fee_gamma: f64,
    #[serde(default = "default_amplification")]
    amplification: f64,
}

fn default_amplification() -> f64 {
    1.0
}

impl TryFrom<PoolStateRepr> for PoolState {
    type Error = ArbError;

    fn try_from(r: PoolStateRepr) -> Result<Self> {
        PoolState::with_amplification(r.reserves, r.weights, r.fee_gamma, r.amplification)
    }
}

impl PoolState {
    pub fn new(reserves: Vec<f64>, weights: Vec<f64>, fee_gamma: f64) -> Result<Self> {
        Self::with_amplification(reserves, weights, fee_gamma, 1.0)
    }

    pub fn with_amplification(
        reserves: Vec<f64>,
        weights: Vec<f64>,
        fee_gamma: f64,
        amplification: f64,
    ) -> Result<Self> {
        let n = reserves.len();
        if n < 2 {
            return Err(ArbError::invalid("reserves", format!("need at least 2 tokens, got {n}")));
        }
        if weights.len() != n {
            return Err(ArbError::DimensionMismatch {
                what: "weights",
                got: weights.len(),
                expected: n,
            });
        }
        if let Some((i, r)) = reserves.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(ArbError::invalid("reserves", format!("entry {i} = {r} is not strictly positive")));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0 && **w < 1.0))
        {
            return Err(ArbError::invalid("weights", format!("entry {i} = {w} is outside (0,1)")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(ArbError::invalid("weights", format!("sum to {sum}, expected 1")));
        }
        if !(fee_gamma > 0.0 && fee_gamma <= 1.0) {
            return Err(ArbError::invalid("fee_gamma", format!("{fee_gamma} is outside (0,1]")));
        }
        if !(amplification.is_finite() && amplification >= 1.0) {
            return Err(ArbError::invalid("amplification", format!("{amplification} is below 1")));
        }
        Ok(PoolState {
            reserves,
            weights,
            fee_gamma,
            amplification,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.reserves.len()
    }

    pub fn reserves(&self) -> &[f64] {
        &self.reserves
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn fee_gamma(&self) -> f64 {
        self.fee_gamma
    }

    pub fn amplification(&self) -> f64 {
        self.amplification
    }

    /// Reserve `i` as seen by the trading function, `ν R_i`.
    pub fn virtual_reserve(&self, i: usize) -> f64 {
        self.amplification * self.reserves[i]
    }

    /// Same pool with different reserves. Used when replaying trades.
    pub fn with_reserves(&self, reserves: Vec<f64>) -> Result<Self> {
        Self::with_amplification(reserves, self.weights.clone(), self.fee_gamma, self.amplification)
    }

    /// Pool value `Σ m_i R_i` at the given prices.
    pub fn value(&self, prices: &MarketPrices) -> f64 {
        self.reserves
            .iter()
            .zip(prices.as_slice())
            .map(|(r, m)| r * m)
            .sum()
    }

    pub(crate) fn check_prices(&self, prices: &MarketPrices) -> Result<()> {
        if prices.len() != self.n_tokens() {
            return Err(ArbError::DimensionMismatch {
                what: "prices",
                got: prices.len(),
                expected: self.n_tokens(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarketPricesRepr")]
pub struct MarketPrices {
    prices: Vec<f64>,
}

#[derive(Deserialize)]
struct MarketPricesRepr {
    prices: Vec<f64>,
}

impl TryFrom<MarketPricesRepr> for MarketPrices {
    type Error = ArbError;

    fn try_from(r: MarketPricesRepr) -> Result<Self> {
        MarketPrices::new(r.prices)
    }
}

impl MarketPrices {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if let Some((i, p)) = prices.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            return Err(ArbError::invalid("prices", format!("entry {i} = {p} is not strictly positive")));
        }
        if prices.is_empty() {
            return Err(ArbError::invalid("prices", "empty price vector"));
        }
        Ok(MarketPrices { prices })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }
}

/// Per-token trade direction: `+1` into the pool, `-1` out of it, `0` untouched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct TradeSignature {
    entries: Vec<i8>,
}

impl TryFrom<Vec<i8>> for TradeSignature {
    type Error = ArbError;

    fn try_from(entries: Vec<i8>) -> Result<Self> {
        TradeSignature::new(entries)
    }
}

impl From<TradeSignature> for Vec<i8> {
    fn from(s: TradeSignature) -> Self {
        s.entries
    }
}

impl TradeSignature {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !matches!(e, -1..=1)) {
            return Err(ArbError::invalid("signature", format!("entry {e} is not in {{-1,0,1}}")));
        }
        if !entries.contains(&1) || !entries.contains(&-1) {
            return Err(ArbError::invalid(
                "signature",
                "needs at least one +1 and at least one -1 entry",
            ));
        }
        Ok(TradeSignature { entries })
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.entries[i] != 0
    }

    /// `d_i`: whether the fee applies to token `i` (it flows into the pool).
    pub fn pays_fee(&self, i: usize) -> bool {
        self.entries[i] == 1
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != 0)
            .map(|(i, _)| i)
    }

    pub fn n_active(&self) -> usize {
        self.entries.iter().filter(|s| **s != 0).count()
    }
}

impl std::fmt::Display for TradeSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<&str> = self
            .entries
            .iter()
            .map(|s| match s {
                1 => "+1",
                -1 => "-1",
                _ => "0",
            })
            .collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A net trade against a pool. `signature` is `None` only for the zero trade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeSolution {
    pub phi: Vec<f64>,
    pub signature: Option<TradeSignature>,
    pub profit: f64,
    pub invariant_residual: f64,
    pub valid: bool,
}

impl TradeSolution {
    /// The no-trade solution, returned in the no-arb region.
    pub fn zero(n: usize) -> Self {
        TradeSolution {
            phi: vec![0.0; n],
            signature: None,
            profit: 0.0,
            invariant_residual: 0.0,
            valid: false,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.phi.iter().all(|p| *p == 0.0)
    }

    /// Ternary signs actually carried by `phi`.
    pub fn signs(&self) -> Vec<i8> {
        signs_of(&self.phi)
    }
}

pub fn signs_of(phi: &[f64]) -> Vec<i8> {
    phi.iter()
        .map(|p| {
            if *p > 0.0 {
                1
            } else if *p < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Weights renormalised over the active set, with the active geometric mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveWeights {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// `k̆ = ∏_{i∈A} R_i^{w̆_i}` over the real (not virtual) reserves.
    pub k_breve: f64,
}

impl ActiveWeights {
    pub fn new(pool: &PoolState, sig: &TradeSignature) -> Result<Self> {
        if sig.len() != pool.n_tokens() {
            return Err(ArbError::DimensionMismatch {
                what: "signature",
                got: sig.len(),
                expected: pool.n_tokens(),
            });
        }
        let indices: Vec<usize> = sig.active_indices().collect();
        let total: f64 = indices.iter().map(|&i| pool.weights[i]).sum();
        let values: Vec<f64> = indices.iter().map(|&i| pool.weights[i] / total).collect();
        let log_k: f64 = indices
            .iter()
            .zip(&values)
            .map(|(&i, w)| w * pool.reserves[i].ln())
            .sum();
        Ok(ActiveWeights {
            indices,
            values,
            k_breve: log_k.exp(),
        })
    }
}

/// `ν k = ∏ (ν R_i)^{w_i}`.
pub fn invariant_k(pool: &PoolState) -> f64 {
    log_invariant_k(pool).exp()
}

pub(crate) fn log_invariant_k(pool: &PoolState) -> f64 {
    pool.reserves
        .iter()
        .zip(&pool.weights)
        .map(|(r, w)| w * (pool.amplification * r).ln())
        .sum()
}

/// Log-space slack of the raw acceptance condition:
/// `Σ w_i ln(ν R_i + γ Δ_i − Λ_i) − ln(ν k)`. Non-negative means accepted.
pub fn raw_invariant_slack(pool: &PoolState, phi: &[f64]) -> Result<f64> {
    let gamma = pool.fee_gamma;
    let mut acc = 0.0;
    for (i, (&p, &w)) in phi.iter().zip(&pool.weights).enumerate() {
        let after = pool.virtual_reserve(i) + if p > 0.0 { gamma * p } else { p };
        if after <= 0.0 {
            return Err(ArbError::Domain { token: i, factor: after });
        }
        acc += w * after.ln();
    }
    Ok(acc - log_invariant_k(pool))
}

/// `∏_{i∈A} (1 + γ^{d_i} Φ_i / (ν R_i))^{w̆_i} − 1` for an arbitrary ternary
/// `signs` vector defining the active set and fee indicators.
pub fn reduced_residual(pool: &PoolState, phi: &[f64], signs: &[i8]) -> Result<f64> {
    let n = pool.n_tokens();
    if phi.len() != n {
        return Err(ArbError::DimensionMismatch {
            what: "phi",
            got: phi.len(),
            expected: n,
        });
    }
    if signs.len() != n {
        return Err(ArbError::DimensionMismatch {
            what: "signature",
            got: signs.len(),
            expected: n,
        });
    }
    let gamma = pool.fee_gamma;
    let total: f64 = (0..n).filter(|&i| signs[i] != 0).map(|i| pool.weights[i]).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for i in 0..n {
        if signs[i] == 0 {
            if phi[i] != 0.0 {
                return Err(ArbError::invalid("phi", format!("token {i} is inactive but has a nonzero trade")));
            }
            continue;
        }
        let scaled = if signs[i] == 1 { gamma * phi[i] } else { phi[i] };
        let rel = scaled / pool.virtual_reserve(i);
        if rel <= -1.0 {
            return Err(ArbError::Domain { token: i, factor: 1.0 + rel });
        }
        log_sum += pool.weights[i] / total * rel.ln_1p();
    }
    Ok(log_sum.exp_m1())
}

/// Reduced residual of a solution. The zero trade (no signature) has residual 0.
pub fn reduced_invariant_residual(pool: &PoolState, sol: &TradeSolution) -> Result<f64> {
    match &sol.signature {
        Some(sig) => reduced_residual(pool, &sol.phi, sig.entries()),
        None => reduced_residual(pool, &sol.phi, &signs_of(&sol.phi)),
    }
}

/// `−Σ m_i Φ_i`: value received by the trader minus value paid.
pub fn trade_profit(prices: &MarketPrices, phi: &[f64]) -> f64 {
    -prices
        .as_slice()
        .iter()
        .zip(phi)
        .map(|(m, p)| m * p)
        .sum::<f64>()
}

/// Splits `Φ` into amounts in (`Δ`) and amounts out (`Λ`).
pub fn split_phi(phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let delta = phi.iter().map(|p| p.max(0.0)).collect();
    let lambda = phi.iter().map(|p| (-p).max(0.0)).collect();
    (delta, lambda)
}
