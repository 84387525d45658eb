//! Trade-signature enumeration and the best-trade search over it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::ClosedForm;
use crate::error::{ArbError, Result};
use crate::pool::{MarketPrices, PoolState, TradeSignature, TradeSolution};

/// Largest pool size for which signatures are materialised.
pub const MAX_ENUMERATE: usize = 12;
/// Largest pool size for which signatures are counted.
pub const MAX_COUNT: usize = 30;
/// Relative profit difference below which two candidates tie.
pub const TIE_REL: f64 = 1e-12;

/// All valid signatures for `n` tokens, in canonical order: ternary counting
/// with token 0 as the most significant digit and digits `0,1,2` mapped to
/// `-1,0,+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSet {
    n_tokens: usize,
    signatures: Vec<TradeSignature>,
}

impl SignatureSet {
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn signatures(&self) -> &[TradeSignature] {
        &self.signatures
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }
}

/// `3^n − 2^{n+1} + 1`: ternary vectors with at least one `+1` and one `-1`.
pub fn signature_count(n: usize) -> Result<u64> {
    if !(2..=MAX_COUNT).contains(&n) {
        return Err(ArbError::OutOfRange {
            n,
            min: 2,
            max: MAX_COUNT,
        });
    }
    Ok(3u64.pow(n as u32) - 2u64.pow(n as u32 + 1) + 1)
}

/// Valid signatures as a fraction of all `3^n` ternary vectors.
pub fn signature_fraction(n: usize) -> Result<f64> {
    Ok(signature_count(n)? as f64 / 3f64.powi(n as i32))
}

pub fn enumerate_signatures(n: usize) -> Result<SignatureSet> {
    if !(2..=MAX_ENUMERATE).contains(&n) {
        return Err(ArbError::OutOfRange {
            n,
            min: 2,
            max: MAX_ENUMERATE,
        });
    }
    let total = 3usize.pow(n as u32);
    let mut signatures = Vec::with_capacity(signature_count(n)? as usize);
    let mut entries = vec![0i8; n];
    for code in 0..total {
        let mut c = code;
        for slot in entries.iter_mut().rev() {
            *slot = (c % 3) as i8 - 1;
            c /= 3;
        }
        if entries.contains(&1) && entries.contains(&-1) {
            signatures.push(TradeSignature::new(entries.clone())?);
        }
    }
    Ok(SignatureSet { n_tokens: n, signatures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Best valid trade, or the zero trade with profit 0 in the no-arb region.
    pub best: TradeSolution,
    pub evaluated_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all_solutions: Option<Vec<TradeSolution>>,
}

/// Brute-force signature search with a reusable signature list and thread pool.
pub struct SignatureSearch {
    set: SignatureSet,
    threads: usize,
    workers: Option<rayon::ThreadPool>,
    keep_all: bool,
}

impl SignatureSearch {
    /// `threads == 0` means available parallelism; `1` runs inline.
    pub fn new(n_tokens: usize, threads: usize) -> Result<Self> {
        let set = enumerate_signatures(n_tokens)?;
        let threads = if threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            threads
        };
        let workers = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| ArbError::invalid("threads", e.to_string()))?,
            )
        } else {
            None
        };
        Ok(SignatureSearch {
            set,
            threads,
            workers,
            keep_all: false,
        })
    }

    /// Keep every per-signature solution in the result.
    pub fn with_diagnostics(mut self, keep_all: bool) -> Self {
        self.keep_all = keep_all;
        self
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn signatures(&self) -> &SignatureSet {
        &self.set
    }

    pub fn find_best(&self, pool: &PoolState, prices: &MarketPrices) -> Result<SearchResult> {
        if pool.n_tokens() != self.set.n_tokens {
            return Err(ArbError::DimensionMismatch {
                what: "pool",
                got: pool.n_tokens(),
                expected: self.set.n_tokens,
            });
        }
        let cf = ClosedForm::new(pool, prices)?;
        let sigs = self.set.signatures();
        let keep_all = self.keep_all;
        let eval = |s: &TradeSignature| {
            let sol = cf.solve(s);
            (sol.valid || keep_all).then_some(sol)
        };
        let solutions: Vec<Option<TradeSolution>> = match &self.workers {
            Some(workers) => workers.install(|| sigs.par_iter().map(eval).collect()),
            None => sigs.iter().map(eval).collect(),
        };

        // Sequential reduction over canonical order keeps the winner independent
        // of how the map was scheduled.
        let mut best: Option<&TradeSolution> = None;
        for sol in solutions.iter().flatten().filter(|s| s.valid) {
            if best.map_or(true, |b| beats(sol, b)) {
                best = Some(sol);
            }
        }
        let best = best.cloned().unwrap_or_else(|| TradeSolution::zero(pool.n_tokens()));
        Ok(SearchResult {
            best,
            evaluated_count: sigs.len(),
            all_solutions: keep_all.then(|| solutions.into_iter().flatten().collect()),
        })
    }
}

/// Strictly better: higher profit beyond the tie band, or a tie with fewer
/// active tokens. Equal ties keep the earlier (canonical) candidate.
fn beats(candidate: &TradeSolution, incumbent: &TradeSolution) -> bool {
    let band = TIE_REL * candidate.profit.abs().max(incumbent.profit.abs());
    if candidate.profit > incumbent.profit + band {
        return true;
    }
    if candidate.profit < incumbent.profit - band {
        return false;
    }
    n_active(candidate) < n_active(incumbent)
}

fn n_active(sol: &TradeSolution) -> usize {
    sol.signature.as_ref().map_or(0, |s| s.n_active())
}

/// Best trade over every signature using all available threads.
pub fn find_best_trade(pool: &PoolState, prices: &MarketPrices) -> Result<SearchResult> {
    SignatureSearch::new(pool.n_tokens(), 0)?.find_best(pool, prices)
}

/// Best trade restricted to pure swaps (exactly two active tokens).
pub fn find_best_swap(pool: &PoolState, prices: &MarketPrices) -> Result<TradeSolution> {
    let cf = ClosedForm::new(pool, prices)?;
    let set = enumerate_signatures(pool.n_tokens())?;
    let mut best: Option<TradeSolution> = None;
    for s in set.signatures().iter().filter(|s| s.n_active() == 2) {
        let sol = cf.solve(s);
        if sol.valid && best.as_ref().map_or(true, |b| beats(&sol, b)) {
            best = Some(sol);
        }
    }
    Ok(best.unwrap_or_else(|| TradeSolution::zero(pool.n_tokens())))
}

/// Ratio of zero-fee quoted price to market price per token,
/// `ℓ_i = V w_i / (R_i m_i)` with `V = Σ m_i R_i`.
pub fn quote_ratios(pool: &PoolState, prices: &MarketPrices) -> Result<Vec<f64>> {
    pool.check_prices(prices)?;
    let value = pool.value(prices);
    Ok(pool
        .reserves()
        .iter()
        .zip(pool.weights())
        .zip(prices.as_slice())
        .map(|((r, w), m)| value * w / (r * m))
        .collect())
}

/// Pairwise-swap heuristic for a trade signature. `None` when it does not
/// produce both an inflow and an outflow token.
pub fn heuristic_signature(pool: &PoolState, prices: &MarketPrices) -> Result<Option<TradeSignature>> {
    let ell = quote_ratios(pool, prices)?;
    Ok(signature_from_quote_ratios(&ell, pool.fee_gamma()))
}

/// Applies the heuristic rules to precomputed quote ratios `ℓ`.
///
/// A token is active when some quotient `Γ_ij = ℓ_i / ℓ_j` lies strictly
/// outside `[γ, 1/γ]`. Active tokens go in when `ℓ_i > 1` and out when
/// `ℓ_i < 1`; `ℓ_i` within `1e-12` of one gives no direction and stays at 0.
pub fn signature_from_quote_ratios(ell: &[f64], gamma: f64) -> Option<TradeSignature> {
    let upper = 1.0 / gamma;
    let entries: Vec<i8> = ell
        .iter()
        .map(|li| {
            let active = ell.iter().any(|lj| {
                let q = li / lj;
                q > upper || q < gamma
            });
            if !active || (li - 1.0).abs() <= 1e-12 {
                0
            } else if *li > 1.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    TradeSignature::new(entries).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_published_values() {
        assert_eq!(enumerate_signatures(3).unwrap().len(), 12);
        assert_eq!(enumerate_signatures(4).unwrap().len(), 50);
        assert_eq!(signature_count(3).unwrap(), 12);
        assert_eq!(signature_count(4).unwrap(), 50);
    }

    #[test]
    fn two_tokens_have_two_signatures_in_canonical_order() {
        let set = enumerate_signatures(2).unwrap();
        let got: Vec<&[i8]> = set.signatures().iter().map(|s| s.entries()).collect();
        assert_eq!(got, vec![&[-1, 1][..], &[1, -1][..]]);
    }

    #[test]
    fn canonical_order_is_ternary_counting() {
        let set = enumerate_signatures(3).unwrap();
        let first: Vec<&[i8]> = set.signatures().iter().take(3).map(|s| s.entries()).collect();
        assert_eq!(first, vec![&[-1, -1, 1][..], &[-1, 0, 1][..], &[-1, 1, -1][..]]);
    }

    #[test]
    fn range_limits() {
        assert!(enumerate_signatures(1).is_err());
        assert!(enumerate_signatures(13).is_err());
        assert!(signature_fraction(31).is_err());
        assert!(signature_fraction(30).is_ok());
    }

    #[test]
    fn fraction_values() {
        assert!((signature_fraction(3).unwrap() - 12.0 / 27.0).abs() < 1e-15);
        assert!((signature_fraction(5).unwrap() - 180.0 / 243.0).abs() < 1e-15);
        assert!(signature_fraction(5).unwrap() < 0.8);
        let mut prev = 0.0;
        for n in 2..=30 {
            let f = signature_fraction(n).unwrap();
            assert!(f > prev);
            prev = f;
        }
        assert!(prev > 0.9999);
    }

    #[test]
    fn heuristic_quote_ratio_example() {
        let s = signature_from_quote_ratios(&[1.05, 1.0, 0.94], 0.99).unwrap();
        assert_eq!(s.entries(), &[1, 0, -1]);
    }

    #[test]
    fn heuristic_at_equilibrium_is_none() {
        let pool = PoolState::new(vec![100.0, 200.0, 400.0], vec![0.25, 0.25, 0.5], 0.997).unwrap();
        // m ∝ w / R
        let prices = MarketPrices::new(vec![0.25 / 100.0, 0.25 / 200.0, 0.5 / 400.0]).unwrap();
        assert_eq!(heuristic_signature(&pool, &prices).unwrap(), None);
        for l in quote_ratios(&pool, &prices).unwrap() {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heuristic_inside_fee_band_is_none() {
        // every quotient within [γ, 1/γ]
        assert_eq!(signature_from_quote_ratios(&[1.004, 0.996], 0.99), None);
    }

    #[test]
    fn search_worked_instance() {
        let pool = PoolState::new(vec![100.0, 100.0], vec![0.5, 0.5], 1.0).unwrap();
        let prices = MarketPrices::new(vec![1.1, 1.0]).unwrap();
        let r = find_best_trade(&pool, &prices).unwrap();
        assert_eq!(r.evaluated_count, 2);
        assert_eq!(r.best.signature.unwrap().entries(), &[-1, 1]);
        assert!((r.best.profit - 0.238).abs() < 1e-3);
    }

    #[test]
    fn basket_beats_or_matches_swaps() {
        let w = 1.0 / 3.0;
        let pool = PoolState::new(vec![100.0; 3], vec![w, w, 1.0 - 2.0 * w], 0.99).unwrap();
        let prices = MarketPrices::new(vec![1.2, 1.0, 0.8]).unwrap();
        let best = find_best_trade(&pool, &prices).unwrap().best;
        let swap = find_best_swap(&pool, &prices).unwrap();
        assert!(swap.valid);
        assert!(best.profit >= swap.profit);
    }

    #[test]
    fn diagnostics_keep_every_signature() {
        let pool = PoolState::new(vec![10.0, 20.0, 30.0], vec![0.3, 0.3, 0.4], 0.99).unwrap();
        let prices = MarketPrices::new(vec![2.0, 0.4, 1.0]).unwrap();
        let r = SignatureSearch::new(3, 1)
            .unwrap()
            .with_diagnostics(true)
            .find_best(&pool, &prices)
            .unwrap();
        assert_eq!(r.all_solutions.unwrap().len(), 12);
    }

    #[test]
    fn tie_prefers_fewer_active_tokens() {
        let mk = |s: Vec<i8>, p: f64| TradeSolution {
            phi: vec![0.0; s.len()],
            signature: Some(TradeSignature::new(s).unwrap()),
            profit: p,
            invariant_residual: 0.0,
            valid: true,
        };
        let three = mk(vec![1, -1, -1], 1.0);
        let two = mk(vec![1, 0, -1], 1.0 + 1e-14);
        assert!(beats(&two, &three));
        assert!(!beats(&three, &two));
        assert!(beats(&mk(vec![1, -1, -1], 1.1), &two));
    }
}
