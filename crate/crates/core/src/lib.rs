//! Optimal arbitrage for N-token geometric mean market maker pools.

pub mod baseline;
pub mod bench;
pub mod closed_form;
pub mod error;
pub mod oracle;
pub mod pool;
pub mod signature;
pub mod sim;

pub use closed_form::{optimal_phi, optimal_phi_symmetric, post_trade_price_alignment, ClosedForm};
pub use baseline::{solve_numerical, NumericalSolution, SolverConfig};
pub use error::{ArbError, Result};
pub use oracle::{solve_grid_oracle, GridOracle};
pub use pool::{
    invariant_k, raw_invariant_slack, reduced_invariant_residual, reduced_residual, split_phi, trade_profit,
    ActiveWeights, MarketPrices, PoolState, TradeSignature, TradeSolution,
};
pub use signature::{
    enumerate_signatures, find_best_swap, find_best_trade, heuristic_signature, signature_count,
    signature_fraction, SearchResult, SignatureSearch, SignatureSet,
};
