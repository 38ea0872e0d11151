//! Exercises the binary end to end: subcommands, exit codes, and output
//! files, against generated fixtures in temp directories.

use std::path::PathBuf;
use std::process::{Command, Output};

use fundbench_core::market::write_demo_fixtures;
use tempfile::TempDir;

const EXIT_CONFIG: i32 = 2;
const EXIT_UNKNOWN_RUN: i32 = 3;
const EXIT_CORRUPT_LEDGER: i32 = 5;
const EXIT_MISSING_CREDENTIAL: i32 = 6;
const EXIT_MARKET_DATA: i32 = 8;
const EXIT_VALIDATION: i32 = 9;

struct Workbench {
    dir: TempDir,
    config_path: PathBuf,
}

impl Workbench {
    /// Demo fixtures plus a replay config with absolute paths.
    fn new() -> Self {
        Self::with_universe(r#"["AAPL", "AXP", "BAC", "KO", "CVX"]"#)
    }

    fn with_universe(universe: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let fixtures = dir.path().join("fixtures");
        write_demo_fixtures(&fixtures).unwrap();
        let config_path = dir.path().join("config.toml");
        let config = format!(
            r#"
[run]
id = "demo"
universe = {universe}
initial_cash = "100000"
start_date = "2025-03-17"
end_date = "2025-04-17"
analysts = ["Technical", "CompanyNews", "Policy", "Insider"]

[run.model]
provider_id = "stub"
model_id = "cli-test-model"
retry_backoff_ms = 0

[paths]
fixtures = "{fixtures}"
runs = "{runs}"

[log]
level = "error"
"#,
            fixtures = fixtures.display(),
            runs = dir.path().join("runs").display(),
        );
        std::fs::write(&config_path, config).unwrap();
        Workbench { dir, config_path }
    }

    fn fundbench(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_fundbench"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .expect("binary runs")
    }

    fn config(&self) -> &str {
        self.config_path.to_str().unwrap()
    }

    fn fixtures_dir(&self) -> PathBuf {
        self.dir.path().join("fixtures")
    }

    fn runs_dir(&self) -> PathBuf {
        self.dir.path().join("runs")
    }
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

#[test]
fn run_replay_covers_24_days_and_exits_zero() {
    let bench = Workbench::new();
    let output = bench.fundbench(&["run", "--config", bench.config()]);
    let stdout = stdout_of(&output);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    assert!(stdout.contains("trading days:   24"), "{stdout}");
    assert!(stdout.contains("signals:        480"), "{stdout}");
    assert!(stdout.contains("decisions:      120"), "{stdout}");
    assert!(bench.runs_dir().join("demo.jsonl").exists());
}

#[test]
fn run_with_missing_fixture_ticker_names_it() {
    let bench = Workbench::with_universe(r#"["AAPL", "MSFT"]"#);
    let output = bench.fundbench(&["run", "--config", bench.config()]);
    assert_eq!(output.status.code(), Some(EXIT_MARKET_DATA));
    assert!(stderr_of(&output).contains("MSFT"), "{}", stderr_of(&output));
}

#[test]
fn live_mode_without_provider_or_credential_fails_cleanly() {
    // No [market.providers] entry at all: config error.
    let bench = Workbench::new();
    let output = bench.fundbench(&["run", "--config", bench.config(), "--mode", "live"]);
    assert_eq!(output.status.code(), Some(EXIT_CONFIG));

    // A declared provider whose API key env var is unset: missing credential.
    let config = std::fs::read_to_string(&bench.config_path).unwrap()
        + r#"
[market]
provider = "vendor"

[market.providers.vendor]
api_key_env = "FUNDBENCH_CLI_TEST_UNSET_KEY"
"#;
    std::fs::write(&bench.config_path, config).unwrap();
    let output = bench.fundbench(&["run", "--config", bench.config(), "--mode", "live"]);
    assert_eq!(output.status.code(), Some(EXIT_MISSING_CREDENTIAL));
    assert!(stderr_of(&output).contains("FUNDBENCH_CLI_TEST_UNSET_KEY"));
}

#[test]
fn unknown_config_key_is_a_config_error_with_location() {
    let bench = Workbench::new();
    let config = std::fs::read_to_string(&bench.config_path).unwrap() + "\nmystery = 1\n";
    std::fs::write(&bench.config_path, config).unwrap();
    let output = bench.fundbench(&["run", "--config", bench.config()]);
    assert_eq!(output.status.code(), Some(EXIT_CONFIG));
    assert!(stderr_of(&output).contains("line"), "{}", stderr_of(&output));
}

#[test]
fn metrics_writes_exact_columns_and_handles_unknown_runs() {
    let bench = Workbench::new();
    assert!(bench.fundbench(&["run", "--config", bench.config()]).status.success());

    let benchmark = bench.fixtures_dir().join("SPX/ohlcv.jsonl");
    let out_dir = bench.dir.path().join("reports");
    let output = bench.fundbench(&[
        "metrics",
        "--config",
        bench.config(),
        "--run-id",
        "demo",
        "--benchmark",
        benchmark.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let csv = std::fs::read_to_string(out_dir.join("metrics_demo.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "model,cr_pct,cr_bnh_pct,sr,mdd_pct,wr_pct,beta,alpha,signal_validity,decision_validity"
    );
    assert!(stdout_of(&output).contains("\"model\": \"cli-test-model\""));

    let output = bench.fundbench(&[
        "metrics",
        "--config",
        bench.config(),
        "--run-id",
        "ghost",
    ]);
    assert_eq!(output.status.code(), Some(EXIT_UNKNOWN_RUN));
}

#[test]
fn metrics_of_all_hold_run_leaves_wr_empty() {
    let bench = Workbench::new();
    assert!(bench.fundbench(&["run", "--config", bench.config()]).status.success());
    let out_dir = bench.dir.path().join("reports");
    let output = bench.fundbench(&[
        "metrics",
        "--config",
        bench.config(),
        "--run-id",
        "demo",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let csv = std::fs::read_to_string(out_dir.join("metrics_demo.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    // All-default stub never trades: wr_pct (column 6) is empty.
    assert_eq!(row.split(',').nth(5).unwrap(), "");
}

#[test]
fn report_ranks_two_runs_and_regenerates_identically() {
    let bench = Workbench::new();
    for run_id in ["alpha-run", "beta-run"] {
        let output =
            bench.fundbench(&["run", "--config", bench.config(), "--run-id", run_id]);
        assert!(output.status.success());
    }
    let out_dir = bench.dir.path().join("reports");
    let args = [
        "report",
        "--config",
        bench.config(),
        "--run-ids",
        "alpha-run,beta-run",
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ];
    assert!(bench.fundbench(&args).status.success());
    let csv = std::fs::read_to_string(out_dir.join("leaderboard.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + two rows
    let html = std::fs::read_to_string(out_dir.join("leaderboard.html")).unwrap();
    assert_eq!(html.matches("<tr><td>").count(), 2);
    assert!(out_dir.join("series/alpha-run.csv").exists());
    assert!(out_dir.join("series/beta-run.csv").exists());

    let first = std::fs::read(out_dir.join("leaderboard.html")).unwrap();
    assert!(bench.fundbench(&args).status.success());
    let second = std::fs::read(out_dir.join("leaderboard.html")).unwrap();
    assert_eq!(first, second, "regeneration with --no-timestamp must be byte-identical");

    // Empty run list is a usage error.
    let output = bench.fundbench(&[
        "report",
        "--config",
        bench.config(),
        "--run-ids",
        "",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(EXIT_UNKNOWN_RUN)); // "" is an unknown run id
}

#[test]
fn corrupt_ledger_is_fatal_for_metrics() {
    let bench = Workbench::new();
    assert!(bench.fundbench(&["run", "--config", bench.config()]).status.success());
    let ledger = bench.runs_dir().join("demo.jsonl");
    let text = std::fs::read_to_string(&ledger).unwrap();
    let cut = &text[..text.len() - 25]; // slice through the final line
    std::fs::write(&ledger, cut).unwrap();
    let output = bench.fundbench(&["metrics", "--config", bench.config(), "--run-id", "demo"]);
    assert_eq!(output.status.code(), Some(EXIT_CORRUPT_LEDGER));
}

#[test]
fn validate_fixtures_passes_bundle_and_flags_corruption() {
    let bench = Workbench::new();
    let fixtures = bench.fixtures_dir();
    let output = bench.fundbench(&["validate-fixtures", "--fixtures", fixtures.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stdout_of(&output));
    assert!(stdout_of(&output).contains("all fixture files passed"));

    // Swap two OHLCV lines out of order.
    let ohlcv = fixtures.join("AAPL/ohlcv.jsonl");
    let text = std::fs::read_to_string(&ohlcv).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(0, 1);
    std::fs::write(&ohlcv, lines.join("\n") + "\n").unwrap();
    let output = bench.fundbench(&["validate-fixtures", "--fixtures", fixtures.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(EXIT_VALIDATION));
    assert!(stdout_of(&output).contains("line 2"), "{}", stdout_of(&output));
}

#[test]
fn validate_fixtures_names_ohlc_invariant_violations() {
    let bench = Workbench::new();
    let fixtures = bench.fixtures_dir();
    let ohlcv = fixtures.join("KO/ohlcv.jsonl");
    let text = std::fs::read_to_string(&ohlcv).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // Corrupt the first bar: low above high.
    lines[0] = lines[0].replace("\"low\":\"", "\"low\":\"9999");
    std::fs::write(&ohlcv, lines.join("\n") + "\n").unwrap();
    let output = bench.fundbench(&["validate-fixtures", "--fixtures", fixtures.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(EXIT_VALIDATION));
    let stdout = stdout_of(&output);
    assert!(stdout.contains("low > high") || stdout.contains("outside"), "{stdout}");
}

fn write_ledger_run(bench: &Workbench, run_id: &str) {
    let output = bench.fundbench(&["run", "--config", bench.config(), "--run-id", run_id]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
}

#[test]
fn duplicate_run_resumes_instead_of_failing() {
    // Re-running a finished run id is a no-op resume: same ledger, exit 0.
    let bench = Workbench::new();
    write_ledger_run(&bench, "again");
    let before = std::fs::read(bench.runs_dir().join("again.jsonl")).unwrap();
    write_ledger_run(&bench, "again");
    let after = std::fs::read(bench.runs_dir().join("again.jsonl")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn benchmark_path_must_exist(){
    let bench = Workbench::new();
    write_ledger_run(&bench, "demo");
    let output = bench.fundbench(&[
        "metrics",
        "--config",
        bench.config(),
        "--run-id",
        "demo",
        "--benchmark",
        "no/such/file.jsonl",
    ]);
    assert_eq!(output.status.code(), Some(EXIT_MARKET_DATA));
}

#[test]
fn help_lists_all_subcommands() {
    let bench = Workbench::new();
    let output = bench.fundbench(&["--help"]);
    let stdout = stdout_of(&output);
    for sub in ["run", "metrics", "report", "validate-fixtures"] {
        assert!(stdout.contains(sub), "missing {sub} in: {stdout}");
    }
}
