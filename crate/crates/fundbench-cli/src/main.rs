//! Command-line entry points: run a live/replay evaluation, compute metrics
//! for a run, emit leaderboard reports over several runs, and validate a
//! fixture directory. Every fatal error class maps to a stable exit code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fundbench_core::config::{AppConfig, ConfigError};
use fundbench_core::ledger::{daily_value_series, LedgerError, LedgerStore};
use fundbench_core::llm::LlmError;
use fundbench_core::market::{read_ohlcv_file, validate_fixtures, ClockMode, MarketError};
use fundbench_core::metrics::{self, MetricsError};
use fundbench_core::report;
use fundbench_core::workflow::{run_period, RunSummary, WorkflowError};

/// Stable exit codes, one per documented failure class.
mod exit_codes {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const UNKNOWN_RUN: u8 = 3;
    pub const LEAKAGE: u8 = 4;
    pub const CORRUPT_LEDGER: u8 = 5;
    pub const MISSING_CREDENTIAL: u8 = 6;
    pub const PROVIDER_UNAVAILABLE: u8 = 7;
    pub const MARKET_DATA: u8 = 8;
    pub const VALIDATION_FAILED: u8 = 9;
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Replay,
    Live,
}

impl From<Mode> for ClockMode {
    fn from(mode: Mode) -> ClockMode {
        match mode {
            Mode::Replay => ClockMode::Replay,
            Mode::Live => ClockMode::Live,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fundbench",
    version,
    about = "Leakage-free live/replay evaluation of LLM-driven fund management"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run an evaluation over the configured period
    Run {
        /// TOML config file
        #[arg(long)]
        config: PathBuf,
        /// Data source mode: replay (fixtures) or live (HTTP providers)
        #[arg(long, value_enum, default_value = "replay")]
        mode: Mode,
        /// Run identifier (overrides run.id from the config)
        #[arg(long)]
        run_id: Option<String>,
        /// Fixtures directory (overrides paths.fixtures; replay mode only)
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Compute and write the metric report for one run
    Metrics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run_id: String,
        /// OHLCV JSONL file for the market benchmark (beta/alpha)
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// Output directory for metrics_<run_id>.{json,csv}
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Emit leaderboard CSV/JSON/HTML and per-run value series
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated run ids to rank
        #[arg(long = "run-ids", value_delimiter = ',')]
        run_ids: Vec<String>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// Omit the generation-timestamp comment for byte-exact output
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Check a fixture directory: sort order, OHLC invariants, manifest
    ValidateFixtures {
        #[arg(long)]
        fixtures: PathBuf,
    },
}

fn market_error_code(e: &MarketError) -> u8 {
    match e {
        MarketError::LeakageViolation { .. } => exit_codes::LEAKAGE,
        MarketError::MissingCredential(_) => exit_codes::MISSING_CREDENTIAL,
        MarketError::ProviderUnavailable { .. } => exit_codes::PROVIDER_UNAVAILABLE,
        MarketError::UnknownProviderKind(_) => exit_codes::CONFIG,
        MarketError::UnknownTicker(_)
        | MarketError::NoPriceAvailable(_)
        | MarketError::Fixture(_)
        | MarketError::ClockMovedBackwards { .. }
        | MarketError::ClockBeyondToday { .. } => exit_codes::MARKET_DATA,
    }
}

fn ledger_error_code(e: &LedgerError) -> u8 {
    match e {
        LedgerError::UnknownRun(_) => exit_codes::UNKNOWN_RUN,
        LedgerError::CorruptLedger { .. } => exit_codes::CORRUPT_LEDGER,
        LedgerError::DuplicateRun(_) => exit_codes::CONFIG,
        LedgerError::EmptyRun(_) | LedgerError::MissingPrice(_) => exit_codes::MARKET_DATA,
        LedgerError::StorageFailure(_) => exit_codes::INTERNAL,
    }
}

fn workflow_error_code(e: &WorkflowError) -> u8 {
    match e {
        WorkflowError::Market(m) => market_error_code(m),
        WorkflowError::Ledger(l) => ledger_error_code(l),
        WorkflowError::InvalidConfig(_) => exit_codes::CONFIG,
        WorkflowError::InfeasibleExecution(_) => exit_codes::INTERNAL,
    }
}

fn config_error_code(e: &ConfigError) -> u8 {
    match e {
        ConfigError::Llm(LlmError::MissingCredential(_)) => exit_codes::MISSING_CREDENTIAL,
        ConfigError::Market(m) => market_error_code(m),
        _ => exit_codes::CONFIG,
    }
}

fn metrics_error_code(_e: &MetricsError) -> u8 {
    exit_codes::MARKET_DATA
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn print_summary(summary: &RunSummary) {
    let pct = |num: u64, den: u64| {
        if den == 0 {
            "n/a".to_string()
        } else {
            format!("{:.1}% valid", num as f64 / den as f64 * 100.0)
        }
    };
    println!("run {} ({})", summary.run_id, summary.model_id);
    println!("  trading days:   {}", summary.days);
    println!(
        "  signals:        {} ({})",
        summary.signal_count,
        pct(summary.valid_signal_count, summary.signal_count)
    );
    println!(
        "  decisions:      {} ({})",
        summary.decision_count,
        pct(summary.valid_decision_count, summary.decision_count)
    );
    match summary.final_value {
        Some(v) => println!("  final value:    {v:.2}"),
        None => println!("  final value:    n/a (no snapshots)"),
    }
    if let Some(cash) = summary.final_cash {
        println!("  final cash:     {cash:.2}");
    }
    println!(
        "  llm usage:      {} prompt + {} completion tokens, cost {:.4}",
        summary.prompt_tokens, summary.completion_tokens, summary.cost_estimate
    );
}

fn load_config(path: &Path) -> Result<AppConfig, ExitCode> {
    AppConfig::load(path).map_err(|e| fail(config_error_code(&e), e))
}

fn init_logging(config: &AppConfig) {
    let mut builder = env_logger::Builder::new();
    builder.parse_filters(&config.log.level);
    if let Ok(env_filter) = std::env::var("RUST_LOG") {
        builder.parse_filters(&env_filter);
    }
    let _ = builder.format_timestamp(None).try_init();
}

fn load_benchmark(path: Option<&Path>) -> Result<Option<metrics::ReturnSeries>, ExitCode> {
    let Some(path) = path else { return Ok(None) };
    let bars = read_ohlcv_file(path).map_err(|e| fail(market_error_code(&e), e))?;
    let series =
        metrics::series_from_bars(&bars).map_err(|e| fail(exit_codes::MARKET_DATA, e))?;
    Ok(Some(series))
}

fn cmd_run(
    config_path: &Path,
    mode: Mode,
    run_id: Option<&str>,
    fixtures: Option<&Path>,
) -> ExitCode {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    init_logging(&config);
    let run_config = match config.run_config(run_id) {
        Ok(rc) => rc,
        Err(e) => return fail(config_error_code(&e), e),
    };
    let gateway = match config.build_market_gateway(mode.into(), fixtures) {
        Ok(g) => g,
        Err(e) => return fail(config_error_code(&e), e),
    };
    let llm = match config.build_llm_gateway() {
        Ok(l) => l,
        Err(e) => return fail(config_error_code(&e), e),
    };
    let store = LedgerStore::new(&config.paths.runs);
    match run_period(&run_config, mode.into(), &gateway, &llm, &store) {
        Ok(summary) => {
            print_summary(&summary);
            ExitCode::from(exit_codes::OK)
        }
        Err(e) => fail(workflow_error_code(&e), e),
    }
}

fn cmd_metrics(
    config_path: &Path,
    run_id: &str,
    benchmark: Option<&Path>,
    out: &Path,
) -> ExitCode {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    init_logging(&config);
    let store = LedgerStore::new(&config.paths.runs);
    let meta = match store.run_meta(run_id) {
        Ok(m) => m,
        Err(e) => return fail(ledger_error_code(&e), e),
    };
    let entries = match store.load_run(run_id) {
        Ok(entries) => entries,
        Err(e) => return fail(ledger_error_code(&e), e),
    };
    let benchmark = match load_benchmark(benchmark) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let report = match metrics::compute_report(
        run_id,
        &meta.model_id,
        &entries,
        benchmark.as_ref(),
        &config.metric_params(),
    ) {
        Ok(r) => r,
        Err(e) => return fail(metrics_error_code(&e), e),
    };
    match report::write_metric_files(&report, out) {
        Ok((json_path, csv_path)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            eprintln!("wrote {} and {}", json_path.display(), csv_path.display());
            ExitCode::from(exit_codes::OK)
        }
        Err(e) => fail(exit_codes::INTERNAL, e),
    }
}

fn cmd_report(
    config_path: &Path,
    run_ids: &[String],
    out: &Path,
    benchmark: Option<&Path>,
    no_timestamp: bool,
) -> ExitCode {
    if run_ids.is_empty() {
        return fail(
            exit_codes::CONFIG,
            "no runs given: pass --run-ids id1,id2,... (at least one)",
        );
    }
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    init_logging(&config);
    let store = LedgerStore::new(&config.paths.runs);
    let benchmark = match load_benchmark(benchmark) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let mut reports = Vec::new();
    let mut series = BTreeMap::new();
    for run_id in run_ids {
        let meta = match store.run_meta(run_id) {
            Ok(m) => m,
            Err(e) => return fail(ledger_error_code(&e), e),
        };
        let entries = match store.load_run(run_id) {
            Ok(entries) => entries,
            Err(e) => return fail(ledger_error_code(&e), e),
        };
        let report = match metrics::compute_report(
            run_id,
            &meta.model_id,
            &entries,
            benchmark.as_ref(),
            &config.metric_params(),
        ) {
            Ok(r) => r,
            Err(e) => return fail(metrics_error_code(&e), e),
        };
        reports.push(report);
        match daily_value_series(run_id, &entries) {
            Ok(points) => {
                series.insert(run_id.clone(), points);
            }
            Err(e) => return fail(ledger_error_code(&e), e),
        }
    }
    match report::write_leaderboard(&reports, &series, out, !no_timestamp) {
        Ok(()) => {
            println!(
                "wrote leaderboard for {} runs to {}",
                reports.len(),
                out.display()
            );
            ExitCode::from(exit_codes::OK)
        }
        Err(e) => fail(exit_codes::INTERNAL, e),
    }
}

fn cmd_validate_fixtures(fixtures: &Path) -> ExitCode {
    let verdicts = match validate_fixtures(fixtures) {
        Ok(v) => v,
        Err(e) => return fail(exit_codes::VALIDATION_FAILED, e),
    };
    let mut failed = 0;
    for v in &verdicts {
        if v.ok {
            println!("OK   {} ({})", v.path, v.detail);
        } else {
            println!("FAIL {}: {}", v.path, v.detail);
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("error: {failed} fixture file(s) failed validation");
        ExitCode::from(exit_codes::VALIDATION_FAILED)
    } else {
        println!("all fixture files passed");
        ExitCode::from(exit_codes::OK)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Commands::Run { config, mode, run_id, fixtures } => {
            cmd_run(&config, mode, run_id.as_deref(), fixtures.as_deref())
        }
        Commands::Metrics { config, run_id, benchmark, out } => {
            cmd_metrics(&config, &run_id, benchmark.as_deref(), &out)
        }
        Commands::Report { config, run_ids, out, benchmark, no_timestamp } => {
            cmd_report(&config, &run_ids, &out, benchmark.as_deref(), no_timestamp)
        }
        Commands::ValidateFixtures { fixtures } => cmd_validate_fixtures(&fixtures),
    }
}
