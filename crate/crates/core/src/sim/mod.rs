//! Simulation protocols: independent synthetic trials and duelling arbitrageurs.

pub mod duel;
pub mod series;
pub mod trials;

use std::io::Write;

use crate::error::{ArbError, Result};

pub use duel::{
    equilibrium_pool, execute, run_duel, run_standalone, simulate, Arbitrageur, DuelConfig, DuelRecord,
    DuelSummary,
};
pub use series::{load_price_series, parse_price_series, synthetic_walk, PriceSeries};
pub use trials::{
    generate_trial, run_trials, summarize_trials, Quantiles, TrialConfig, TrialRecord, TrialSummary,
};

fn csv_err(e: csv::Error) -> ArbError {
    ArbError::Io(e.to_string())
}

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "trial_id",
        "closed_form_profit",
        "baseline_profit",
        "profit_gap",
        "closed_form_time_s",
        "baseline_time_s",
        "closed_form_active",
        "baseline_converged",
        "error",
    ])
    .map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.trial_id.to_string(),
            r.closed_form_profit.to_string(),
            r.baseline_profit.to_string(),
            r.profit_gap.to_string(),
            r.closed_form_time.as_secs_f64().to_string(),
            r.baseline_time.as_secs_f64().to_string(),
            r.closed_form_active.to_string(),
            r.baseline_converged.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| ArbError::Io(e.to_string()))
}

pub fn write_duel_csv<W: Write>(records: &[DuelRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = records.first().map_or(0, |r| r.pool_reserves_after.len());
    let mut header: Vec<String> = [
        "step",
        "timestamp",
        "closed_form_cum_profit",
        "baseline_cum_profit",
        "closed_form_traded",
        "baseline_traded",
        "pool_value",
        "fees_value",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..n).map(|i| format!("reserve_{i}")));
    out.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.step.to_string(),
            r.timestamp.to_string(),
            r.closed_form_profit.to_string(),
            r.baseline_profit.to_string(),
            r.closed_form_traded.to_string(),
            r.baseline_traded.to_string(),
            r.pool_value.to_string(),
            r.fees_value.to_string(),
        ];
        row.extend(r.pool_reserves_after.iter().map(|x| x.to_string()));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| ArbError::Io(e.to_string()))
}
