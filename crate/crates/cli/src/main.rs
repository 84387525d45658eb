use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use g3m_arb::bench::{run_bench, write_bench_csv, BenchConfig, Method};
use g3m_arb::sim::{
    equilibrium_pool, load_price_series, run_duel, run_standalone, run_trials, summarize_trials, synthetic_walk,
    write_duel_csv, write_trials_csv, Arbitrageur, DuelConfig, DuelSummary, TrialConfig,
};
use g3m_arb::{
    enumerate_signatures, raw_invariant_slack, reduced_residual, signature_count, signature_fraction, solve_numerical,
    split_phi, trade_profit, GridOracle, MarketPrices, PoolState, SignatureSearch, SolverConfig, TradeSignature,
    TradeSolution,
};

const EXIT_TRADE: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_REJECTED: u8 = 2;
const EXIT_NO_ARB: u8 = 3;

#[derive(Parser)]
#[command(name = "g3m-arb", version, about = "Optimal arbitrage for N-token geometric mean market makers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Best trade against a pool at given market prices (exit 0 = trade, 3 = no arbitrage)
    Arb(ArbArgs),
    /// Re-check a trade printed by `arb` against the pool (exit 0 = valid, 2 = rejected)
    Verify(VerifyArgs),
    /// Count or list trade signatures for N tokens
    Enumerate(EnumerateArgs),
    /// Grid-search oracle for pools of at most three tokens
    Oracle(OracleArgs),
    /// Independent random trials comparing closed form and baseline
    Trials(TrialsArgs),
    /// Two arbitrageurs competing on one pool over a price series
    Duel(DuelArgs),
    /// Timing sweep over pool size and thread count
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Closed,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArbArg {
    Closed,
    Baseline,
}

impl From<ArbArg> for Arbitrageur {
    fn from(a: ArbArg) -> Self {
        match a {
            ArbArg::Closed => Arbitrageur::ClosedForm,
            ArbArg::Baseline => Arbitrageur::Baseline,
        }
    }
}

#[derive(Args)]
struct PoolInput {
    /// Pool JSON: {"reserves":[..],"weights":[..],"fee_gamma":x,"amplification":v}
    #[arg(long)]
    pool: PathBuf,
    /// Prices JSON: {"prices":[..]}
    #[arg(long)]
    prices: PathBuf,
}

#[derive(Args, Default)]
struct SolverArgs {
    /// JSON file with baseline solver settings; flags below override it
    #[arg(long)]
    solver_config: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    penalty_weight: Option<f64>,
    #[arg(long)]
    convergence_tol: Option<f64>,
}

impl SolverArgs {
    fn resolve(&self, base: SolverConfig, seed: Option<u64>) -> Result<SolverConfig> {
        let mut cfg = match &self.solver_config {
            Some(path) => read_json(path)?,
            None => base,
        };
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.step_size {
            cfg.step_size = v;
        }
        if let Some(v) = self.penalty_weight {
            cfg.penalty_weight = v;
        }
        if let Some(v) = self.convergence_tol {
            cfg.convergence_tol = v;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ArbArgs {
    #[command(flatten)]
    input: PoolInput,
    #[arg(long, value_enum, default_value = "closed")]
    method: MethodArg,
    /// Worker threads for the signature search; 0 = all cores
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: PoolInput,
    /// JSON produced by `arb` (only the `phi` field is read)
    #[arg(long)]
    trade: PathBuf,
}

#[derive(Args)]
struct EnumerateArgs {
    n: usize,
    /// Print every signature, one per line
    #[arg(long)]
    list: bool,
    /// Also print the fraction of the 3^N sign patterns that are signatures
    #[arg(long)]
    fraction: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: PoolInput,
    #[arg(long, default_value_t = 2001)]
    grid_points: usize,
}

#[derive(Args)]
struct TrialsArgs {
    /// Trial configuration JSON; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_tokens: Option<usize>,
    #[arg(long)]
    n_trials: Option<usize>,
    #[arg(long)]
    shock_scale: Option<f64>,
    #[arg(long)]
    fee_gamma: Option<f64>,
    #[arg(long)]
    weight_jitter: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct DuelArgs {
    /// Price CSV (`timestamp,<token>,...`); a synthetic walk is generated if absent
    #[arg(long)]
    series: Option<PathBuf>,
    /// Starting pool JSON; defaults to an equal-weight pool in equilibrium with the first prices
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    n_tokens: usize,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Per-step log volatility of the synthetic walk
    #[arg(long, default_value_t = 0.01)]
    volatility: f64,
    #[arg(long, default_value_t = 0.997)]
    fee_gamma: f64,
    /// Initial pool value for the default pool
    #[arg(long, default_value_t = 1_000_000.0)]
    value: f64,
    #[arg(long, value_enum, default_value = "baseline")]
    priority: ArbArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threads across the three simulations (duel and both standalone runs)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2)]
    n_min: usize,
    #[arg(long, default_value_t = 7)]
    n_max: usize,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    /// Restrict to one method; both by default
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Highest thread count swept (rows for 1 and this); 0 = all cores
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Deserialize)]
struct PricesFile {
    prices: Vec<f64>,
}

/// Output of `arb` and `oracle`; `phi` is enough to re-verify the trade.
#[derive(Serialize, Deserialize)]
struct TradeReport {
    method: String,
    phi: Vec<f64>,
    delta: Vec<f64>,
    lambda: Vec<f64>,
    signature: Option<TradeSignature>,
    profit: f64,
    invariant_residual: f64,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    signatures_evaluated: Option<usize>,
}

impl TradeReport {
    fn new(method: &str, sol: TradeSolution) -> Self {
        let (delta, lambda) = split_phi(&sol.phi);
        TradeReport {
            method: method.into(),
            delta,
            lambda,
            signature: sol.signature,
            profit: sol.profit,
            invariant_residual: sol.invariant_residual,
            valid: sol.valid,
            phi: sol.phi,
            iterations: None,
            converged: None,
            signatures_evaluated: None,
        }
    }

    fn is_trade(&self) -> bool {
        self.valid && self.profit > 0.0 && self.phi.iter().any(|&p| p != 0.0)
    }
}

#[derive(Deserialize)]
struct TradeInput {
    phi: Vec<f64>,
}

#[derive(Serialize)]
struct Verification {
    profit: f64,
    reduced_residual: Option<f64>,
    raw_invariant_slack: Option<f64>,
    valid: bool,
    reason: Option<String>,
}

#[derive(Serialize)]
struct DuelReport {
    series: String,
    steps: usize,
    duel: DuelSummary,
    closed_form_alone: DuelSummary,
    baseline_alone: DuelSummary,
    baseline: SolverConfig,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_inputs(input: &PoolInput) -> Result<(PoolState, MarketPrices)> {
    let pool: PoolState = read_json(&input.pool)?;
    let file: PricesFile = read_json(&input.prices)?;
    let prices = MarketPrices::new(file.prices).with_context(|| format!("in {}", input.prices.display()))?;
    if prices.len() != pool.n_tokens() {
        bail!(
            "prices: {} entries in {} but the pool has {} tokens",
            prices.len(),
            input.prices.display(),
            pool.n_tokens()
        );
    }
    Ok((pool, prices))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_arb(args: &ArbArgs) -> Result<u8> {
    let (pool, prices) = load_inputs(&args.input)?;
    let report = match args.method {
        MethodArg::Closed => {
            let result = SignatureSearch::new(pool.n_tokens(), args.threads)?.find_best(&pool, &prices)?;
            let mut r = TradeReport::new("closed_form", result.best);
            r.signatures_evaluated = Some(result.evaluated_count);
            r
        }
        MethodArg::Baseline => {
            let cfg = args.solver.resolve(SolverConfig::default(), args.seed)?;
            let out = solve_numerical(&pool, &prices, &cfg)?;
            let mut r = TradeReport::new("baseline", out.solution);
            r.iterations = Some(out.iterations);
            r.converged = Some(out.converged);
            r
        }
    };
    print_json(&report)?;
    Ok(if report.is_trade() { EXIT_TRADE } else { EXIT_NO_ARB })
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let (pool, prices) = load_inputs(&args.input)?;
    let trade: TradeInput = read_json(&args.trade)?;
    if trade.phi.len() != pool.n_tokens() {
        bail!("phi: {} entries but the pool has {} tokens", trade.phi.len(), pool.n_tokens());
    }
    let signs: Vec<i8> = trade.phi.iter().map(|&p| if p > 0.0 { 1 } else if p < 0.0 { -1 } else { 0 }).collect();
    let profit = trade_profit(&prices, &trade.phi);
    let reduced = reduced_residual(&pool, &trade.phi, &signs).ok();
    let slack = raw_invariant_slack(&pool, &trade.phi).ok();
    let positive = pool
        .reserves()
        .iter()
        .zip(&trade.phi)
        .zip(&signs)
        .all(|((r, p), &s)| r + if s == 1 { pool.fee_gamma() } else { 1.0 } * p > 0.0);
    let reason = if !positive || slack.is_none() {
        Some("trade empties a reserve".to_string())
    } else if !reduced.is_some_and(|r| r.abs() <= g3m_arb::pool::RESIDUAL_TOL) {
        Some(format!("reduced residual exceeds {:e}", g3m_arb::pool::RESIDUAL_TOL))
    } else {
        None
    };
    let v = Verification {
        profit,
        reduced_residual: reduced,
        raw_invariant_slack: slack,
        valid: reason.is_none(),
        reason,
    };
    print_json(&v)?;
    Ok(if v.valid { EXIT_TRADE } else { EXIT_REJECTED })
}

fn cmd_enumerate(args: &EnumerateArgs) -> Result<u8> {
    let count = signature_count(args.n)?;
    if args.list {
        for sig in enumerate_signatures(args.n)?.signatures() {
            println!("{sig}");
        }
    } else {
        println!("{count}");
    }
    if args.fraction {
        println!("fraction {}", signature_fraction(args.n)?);
    }
    Ok(EXIT_TRADE)
}

fn cmd_oracle(args: &OracleArgs) -> Result<u8> {
    let (pool, prices) = load_inputs(&args.input)?;
    let sol = GridOracle {
        grid_points: args.grid_points,
        ..GridOracle::default()
    }
    .solve(&pool, &prices)?;
    let report = TradeReport::new("grid_oracle", sol);
    print_json(&report)?;
    Ok(if report.is_trade() { EXIT_TRADE } else { EXIT_NO_ARB })
}

fn cmd_trials(args: &TrialsArgs) -> Result<u8> {
    let mut cfg: TrialConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => TrialConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => {$( if let Some(v) = args.$f { cfg.$f = v; } )*};
    }
    set!(n_tokens, n_trials, shock_scale, fee_gamma, weight_jitter, v0, seed, threads);
    cfg.baseline = args.solver.resolve(cfg.baseline.clone(), None)?;
    cfg.validate()?;
    prepare_dir(&args.out_dir)?;

    let records = run_trials(&cfg)?;
    let summary = summarize_trials(&cfg, &records);
    write_trials_csv(&records, create(&args.out_dir.join("trials.csv"))?)?;
    write_json(&args.out_dir.join("trials_summary.json"), &summary)?;
    write_json(&args.out_dir.join("trials_config.json"), &cfg)?;
    eprintln!(
        "{} trials, mean gap {:.6e}, dominance {:.4}, failed {}",
        summary.n_trials, summary.mean_profit_gap, summary.closed_form_dominance_rate, summary.failed
    );
    Ok(EXIT_TRADE)
}

fn cmd_duel(args: &DuelArgs) -> Result<u8> {
    let (series, source) = match &args.series {
        Some(path) => (load_price_series(path)?, path.display().to_string()),
        None => (
            synthetic_walk(&vec![1.0; args.n_tokens], args.steps, args.volatility, args.seed)?,
            format!("synthetic walk, vol {}, seed {}", args.volatility, args.seed),
        ),
    };
    let pool = match &args.pool {
        Some(path) => read_json::<PoolState>(path)?,
        None => {
            let n = series.n_tokens();
            equilibrium_pool(&series.prices[0], &vec![1.0 / n as f64; n], args.value, args.fee_gamma)?
        }
    };
    if pool.n_tokens() != series.n_tokens() {
        bail!("pool has {} tokens but the series has {}", pool.n_tokens(), series.n_tokens());
    }
    let base = DuelConfig::default();
    let cfg = DuelConfig {
        priority: args.priority.into(),
        baseline: args.solver.resolve(base.baseline, Some(args.seed))?,
    };
    prepare_dir(&args.out_dir)?;

    let workers = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build()?;
    let (duel, (cf_alone, bl_alone)) = workers.install(|| {
        rayon::join(
            || run_duel(&series, &pool, &cfg),
            || {
                rayon::join(
                    || run_standalone(&series, &pool, Arbitrageur::ClosedForm, &cfg),
                    || run_standalone(&series, &pool, Arbitrageur::Baseline, &cfg),
                )
            },
        )
    });
    let (duel, cf_alone, bl_alone) = (duel?, cf_alone?, bl_alone?);
    write_duel_csv(&duel.0, create(&args.out_dir.join("duel.csv"))?)?;
    write_duel_csv(&cf_alone.0, create(&args.out_dir.join("closed_form_alone.csv"))?)?;
    write_duel_csv(&bl_alone.0, create(&args.out_dir.join("baseline_alone.csv"))?)?;
    let report = DuelReport {
        series: source,
        steps: series.len(),
        duel: duel.1,
        closed_form_alone: cf_alone.1,
        baseline_alone: bl_alone.1,
        baseline: cfg.baseline,
    };
    write_json(&args.out_dir.join("duel_summary.json"), &report)?;
    eprintln!(
        "duel: closed form {:.6e}, baseline {:.6e}; alone: closed form {:.6e}, baseline {:.6e}",
        report.duel.final_closed_form_profit,
        report.duel.final_baseline_profit,
        report.closed_form_alone.final_closed_form_profit,
        report.baseline_alone.final_baseline_profit
    );
    Ok(EXIT_TRADE)
}

fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let methods = match args.method {
        Some(MethodArg::Closed) => vec![Method::ClosedForm],
        Some(MethodArg::Baseline) => vec![Method::Baseline],
        None => vec![Method::ClosedForm, Method::Baseline],
    };
    let max = if args.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        args.threads
    };
    let mut threads = vec![1];
    if max > 1 {
        threads.push(max);
    }
    let cfg = BenchConfig {
        n_min: args.n_min,
        n_max: args.n_max,
        instances: args.instances,
        threads,
        methods,
        repeats: args.repeats,
        seed: args.seed,
        baseline: args.solver.resolve(SolverConfig::default(), Some(args.seed))?,
    };
    prepare_dir(&args.out_dir)?;
    let records = run_bench(&cfg)?;
    write_bench_csv(&records, create(&args.out_dir.join("bench.csv"))?)?;
    write_json(&args.out_dir.join("bench_summary.json"), &records)?;
    for r in &records {
        eprintln!(
            "n={} {:<11} threads={} median {:.3e}s p95 {:.3e}s",
            r.n_tokens,
            r.method.to_string(),
            r.threads,
            r.median_time.as_secs_f64(),
            r.p95_time.as_secs_f64()
        );
    }
    Ok(EXIT_TRADE)
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Arb(a) => cmd_arb(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Trials(a) => cmd_trials(a),
        Command::Duel(a) => cmd_duel(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
