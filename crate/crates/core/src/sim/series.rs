//! Price series: CSV ingestion and a seeded synthetic random walk.
//!
//! CSV layout: a header `timestamp,<token>,...` followed by one row per time
//! step. Timestamps are integers (unix seconds or step indices) and must be
//! strictly increasing; prices must be positive.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ArbError, Result};
use crate::pool::MarketPrices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub tokens: Vec<String>,
    pub timestamps: Vec<i64>,
    /// One row per timestamp, one column per token.
    pub prices: Vec<Vec<f64>>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn row(&self, t: usize) -> Result<MarketPrices> {
        MarketPrices::new(self.prices[t].clone())
    }

    /// Constant prices for `steps` rows.
    pub fn constant(prices: &[f64], steps: usize) -> Self {
        PriceSeries {
            tokens: default_names(prices.len()),
            timestamps: (0..steps as i64).collect(),
            prices: vec![prices.to_vec(); steps],
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.tokens.iter().cloned());
        out.write_record(&header).map_err(io_err)?;
        for (t, row) in self.timestamps.iter().zip(&self.prices) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|p| p.to_string()));
            out.write_record(&rec).map_err(io_err)?;
        }
        out.flush().map_err(|e| ArbError::Io(e.to_string()))
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("token_{i}")).collect()
}

fn io_err(e: csv::Error) -> ArbError {
    ArbError::Io(e.to_string())
}

pub fn load_price_series(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| ArbError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_price_series(file)
}

/// Parses a price CSV. Line numbers in errors are 1-based file lines.
pub fn parse_price_series<R: Read>(reader: R) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| ArbError::Parse { line: 1, reason: e.to_string() })?
        .clone();
    if header.get(0) != Some("timestamp") {
        return Err(ArbError::Parse {
            line: 1,
            reason: "first column must be `timestamp`".into(),
        });
    }
    let tokens: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if tokens.len() < 2 {
        return Err(ArbError::Parse {
            line: 1,
            reason: format!("need at least 2 token columns, found {}", tokens.len()),
        });
    }

    let mut series = PriceSeries {
        tokens,
        timestamps: Vec::new(),
        prices: Vec::new(),
    };
    for (idx, rec) in rdr.records().enumerate() {
        let fallback = idx + 2;
        let rec = rec.map_err(|e| ArbError::Parse {
            line: e.position().map_or(fallback, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(fallback, |p| p.line() as usize);
        if rec.len() != series.tokens.len() + 1 {
            return Err(ArbError::Parse {
                line,
                reason: format!("expected {} fields, found {}", series.tokens.len() + 1, rec.len()),
            });
        }
        let ts: i64 = rec[0].parse().map_err(|_| ArbError::Parse {
            line,
            reason: format!("timestamp `{}` is not an integer", &rec[0]),
        })?;
        if let Some(prev) = series.timestamps.last() {
            if ts <= *prev {
                return Err(ArbError::Parse {
                    line,
                    reason: format!("timestamp {ts} does not increase (previous {prev})"),
                });
            }
        }
        let mut row = Vec::with_capacity(series.tokens.len());
        for (col, field) in rec.iter().enumerate().skip(1) {
            let p: f64 = field.parse().map_err(|_| ArbError::Parse {
                line,
                reason: format!("price `{field}` for {} is not a number", series.tokens[col - 1]),
            })?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(ArbError::Parse {
                    line,
                    reason: format!("price {p} for {} is not positive", series.tokens[col - 1]),
                });
            }
            row.push(p);
        }
        series.timestamps.push(ts);
        series.prices.push(row);
    }
    if series.is_empty() {
        return Err(ArbError::Parse {
            line: 2,
            reason: "no data rows".into(),
        });
    }
    Ok(series)
}

/// Independent geometric random walks with per-step log volatility `vol`,
/// driftless in expectation.
pub fn synthetic_walk(initial: &[f64], steps: usize, vol: f64, seed: u64) -> Result<PriceSeries> {
    MarketPrices::new(initial.to_vec())?;
    if !(vol >= 0.0 && vol.is_finite()) {
        return Err(ArbError::invalid("volatility", "must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current: Vec<f64> = initial.to_vec();
    let mut prices = Vec::with_capacity(steps);
    for t in 0..steps {
        if t > 0 {
            for p in current.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p *= (vol * z - 0.5 * vol * vol).exp();
            }
        }
        prices.push(current.clone());
    }
    Ok(PriceSeries {
        tokens: default_names(initial.len()),
        timestamps: (0..steps as i64).collect(),
        prices,
    })
}
