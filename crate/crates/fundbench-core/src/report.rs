//! Leaderboard and per-run report emission: `leaderboard.csv`,
//! `leaderboard.json`, a static `leaderboard.html` table viewable without
//! scripts, and `series/<run_id>.csv` daily value series for external
//! plotting. Rows are ranked by cumulative return, descending. Output is
//! byte-stable; the HTML generation timestamp can be suppressed for
//! byte-exact comparisons.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rust_decimal::Decimal;

use crate::metrics::MetricReport;

pub const LEADERBOARD_CSV: &str = "leaderboard.csv";
pub const LEADERBOARD_JSON: &str = "leaderboard.json";
pub const LEADERBOARD_HTML: &str = "leaderboard.html";

/// The exact metric column set, shared by the per-run CSV and the leaderboard.
const CSV_COLUMNS: [&str; 10] = [
    "model",
    "cr_pct",
    "cr_bnh_pct",
    "sr",
    "mdd_pct",
    "wr_pct",
    "beta",
    "alpha",
    "signal_validity",
    "decision_validity",
];

fn fmt_opt_f64(v: Option<f64>, decimals: usize) -> String {
    v.map(|v| format!("{v:.decimals$}")).unwrap_or_default()
}

fn fmt_opt_dec(v: Option<Decimal>) -> String {
    v.map(|v| v.round_dp(4).to_string()).unwrap_or_default()
}

fn csv_row(report: &MetricReport) -> Vec<String> {
    vec![
        report.model.clone(),
        report.cr_pct.round_dp(4).to_string(),
        fmt_opt_dec(report.cr_bnh_pct),
        fmt_opt_f64(report.sr, 4),
        format!("{:.4}", report.mdd_pct),
        fmt_opt_f64(report.wr_pct, 2),
        fmt_opt_f64(report.beta, 4),
        fmt_opt_f64(report.alpha, 4),
        fmt_opt_f64(report.signal_validity, 4),
        fmt_opt_f64(report.decision_validity, 4),
    ]
}

/// Ranks reports by cumulative return, descending; ties break by model name
/// so output order is total.
fn ranked(reports: &[MetricReport]) -> Vec<&MetricReport> {
    let mut sorted: Vec<&MetricReport> = reports.iter().collect();
    sorted.sort_by(|a, b| b.cr_pct.cmp(&a.cr_pct).then_with(|| a.model.cmp(&b.model)));
    sorted
}

/// Writes one run's metric report as JSON and a one-row CSV. Returns the two
/// paths written.
pub fn write_metric_files(
    report: &MetricReport,
    out_dir: &Path,
) -> std::io::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join(format!("metrics_{}.json", report.run_id));
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&json_path, json + "\n")?;

    let csv_path = out_dir.join(format!("metrics_{}.csv", report.run_id));
    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(CSV_COLUMNS)?;
    writer.write_record(csv_row(report))?;
    writer.flush()?;
    Ok((json_path, csv_path))
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn leaderboard_html(reports: &[&MetricReport], include_timestamp: bool) -> String {
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str("<title>Fund benchmark leaderboard</title>\n<style>\n");
    html.push_str(
        "body{font-family:sans-serif;margin:2rem}table{border-collapse:collapse}\n\
         th,td{border:1px solid #999;padding:0.35rem 0.7rem;text-align:right}\n\
         th{background:#eee}td:first-child,td:nth-child(2),th:first-child,th:nth-child(2){text-align:left}\n\
         tr:nth-child(even){background:#f7f7f7}\n",
    );
    html.push_str("</style>\n</head>\n<body>\n");
    if include_timestamp {
        html.push_str(&format!(
            "<!-- generated {} -->\n",
            chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ")
        ));
    }
    html.push_str("<h1>Fund benchmark leaderboard</h1>\n");
    html.push_str("<p>Ranked by cumulative return over the evaluation window.</p>\n");
    html.push_str("<table>\n<thead>\n<tr><th>#</th>");
    for column in CSV_COLUMNS {
        html.push_str(&format!("<th>{column}</th>"));
    }
    html.push_str("</tr>\n</thead>\n<tbody>\n");
    for (rank, report) in reports.iter().enumerate() {
        html.push_str(&format!("<tr><td>{}</td>", rank + 1));
        for cell in csv_row(report) {
            let shown = if cell.is_empty() { "-".to_string() } else { html_escape(&cell) };
            html.push_str(&format!("<td>{shown}</td>"));
        }
        html.push_str("</tr>\n");
    }
    html.push_str("</tbody>\n</table>\n</body>\n</html>\n");
    html
}

/// Writes the leaderboard files plus one value-series CSV per run.
pub fn write_leaderboard(
    reports: &[MetricReport],
    series: &BTreeMap<String, Vec<(NaiveDate, Decimal)>>,
    out_dir: &Path,
    include_timestamp: bool,
) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let sorted = ranked(reports);

    let mut writer = csv::Writer::from_path(out_dir.join(LEADERBOARD_CSV))?;
    writer.write_record(CSV_COLUMNS)?;
    for report in &sorted {
        writer.write_record(csv_row(report))?;
    }
    writer.flush()?;

    let json: Vec<&MetricReport> = sorted.clone();
    let json_text = serde_json::to_string_pretty(&json).expect("reports serialize");
    fs::write(out_dir.join(LEADERBOARD_JSON), json_text + "\n")?;

    fs::write(
        out_dir.join(LEADERBOARD_HTML),
        leaderboard_html(&sorted, include_timestamp),
    )?;

    let series_dir = out_dir.join("series");
    fs::create_dir_all(&series_dir)?;
    for (run_id, points) in series {
        let mut file = fs::File::create(series_dir.join(format!("{run_id}.csv")))?;
        writeln!(file, "date,total_value")?;
        for (date, value) in points {
            writeln!(file, "{date},{value}")?;
        }
    }
    Ok(())
}
