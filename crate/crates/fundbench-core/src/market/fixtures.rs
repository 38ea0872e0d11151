//! Replay provider backed by fixture files: one JSON Lines file per
//! (ticker, data kind), records sorted ascending by date, plus a manifest
//! listing tickers and OHLCV date coverage.
//!
//! Layout:
//! ```text
//! fixtures/<TICKER>/ohlcv.jsonl
//! fixtures/<TICKER>/news.jsonl
//! fixtures/<TICKER>/insider.jsonl
//! fixtures/<TICKER>/fundamentals.jsonl
//! fixtures/_policy/news.jsonl
//! fixtures/_macro/indicators.jsonl
//! fixtures/manifest.json
//! ```
//!
//! Serving follows the sorted-prefix rule: the records visible at a clock are
//! the file prefix ending at the last record dated at or before the clock.
//! A sorted file therefore never exposes future records, while an out-of-order
//! future-dated record (corrupt fixture) lands inside the visible prefix and
//! is rejected by the gateway's leakage guard.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::Ticker;

use super::{
    FundamentalsSnapshot, InsiderTransaction, MacroIndicator, MarketError, MarketProvider,
    NewsItem, NewsScope, OHLCVBar, SimulationClock,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const POLICY_DIR: &str = "_policy";
pub const MACRO_DIR: &str = "_macro";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tickers: Vec<Ticker>,
    pub ohlcv_coverage: BTreeMap<Ticker, DateRange>,
}

#[derive(Debug, Default)]
struct TickerData {
    ohlcv: Vec<OHLCVBar>,
    news: Vec<NewsItem>,
    insider: Vec<InsiderTransaction>,
    fundamentals: Vec<FundamentalsSnapshot>,
}

/// In-memory fixture set acting as the deterministic replay provider.
pub struct FixtureStore {
    manifest: Manifest,
    tickers: BTreeMap<Ticker, TickerData>,
    policy_news: Vec<NewsItem>,
    macro_indicators: Vec<MacroIndicator>,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, MarketError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)
        .map_err(|e| MarketError::Fixture(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| {
            MarketError::Fixture(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Index one past the last record dated at or before `cutoff`, assuming the
/// file is sorted ascending. Scans from the end so a sorted file is exact.
fn visible_len<T>(records: &[T], date_of: impl Fn(&T) -> NaiveDate, cutoff: NaiveDate) -> usize {
    records
        .iter()
        .rposition(|r| date_of(r) <= cutoff)
        .map_or(0, |i| i + 1)
}

impl FixtureStore {
    pub fn load(dir: &Path) -> Result<Self, MarketError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest_text = fs::read_to_string(&manifest_path).map_err(|e| {
            MarketError::Fixture(format!("{}: {e}", manifest_path.display()))
        })?;
        let manifest: Manifest = serde_json::from_str(&manifest_text).map_err(|e| {
            MarketError::Fixture(format!("{}: {e}", manifest_path.display()))
        })?;

        let mut tickers = BTreeMap::new();
        for ticker in &manifest.tickers {
            let tdir = dir.join(ticker.as_str());
            let data = TickerData {
                ohlcv: read_jsonl(&tdir.join("ohlcv.jsonl"))?,
                news: read_jsonl(&tdir.join("news.jsonl"))?,
                insider: read_jsonl(&tdir.join("insider.jsonl"))?,
                fundamentals: read_jsonl(&tdir.join("fundamentals.jsonl"))?,
            };
            tickers.insert(ticker.clone(), data);
        }
        let policy_news = read_jsonl(&dir.join(POLICY_DIR).join("news.jsonl"))?;
        let macro_indicators = read_jsonl(&dir.join(MACRO_DIR).join("indicators.jsonl"))?;

        Ok(FixtureStore {
            manifest,
            tickers,
            policy_news,
            macro_indicators,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn data(&self, ticker: &Ticker) -> Option<&TickerData> {
        self.tickers.get(ticker)
    }
}

impl MarketProvider for FixtureStore {
    fn ohlcv(
        &self,
        ticker: &Ticker,
        window: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<OHLCVBar>, MarketError> {
        let data = self
            .data(ticker)
            .ok_or_else(|| MarketError::UnknownTicker(ticker.clone()))?;
        let visible = &data.ohlcv[..visible_len(&data.ohlcv, |b| b.date, clock.current_date())];
        let start = visible.len().saturating_sub(window);
        Ok(visible[start..].to_vec())
    }

    fn company_news(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError> {
        let Some(data) = self.data(ticker) else {
            return Ok(Vec::new()); // absence of news is not an error
        };
        let visible = &data.news[..visible_len(&data.news, |n| n.date, clock.current_date())];
        let start = visible.len().saturating_sub(count);
        Ok(visible[start..].iter().rev().cloned().collect())
    }

    fn policy_news(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError> {
        let visible =
            &self.policy_news[..visible_len(&self.policy_news, |n| n.date, clock.current_date())];
        let start = visible.len().saturating_sub(count);
        Ok(visible[start..].iter().rev().cloned().collect())
    }

    fn insider(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<InsiderTransaction>, MarketError> {
        let Some(data) = self.data(ticker) else {
            return Ok(Vec::new());
        };
        let visible =
            &data.insider[..visible_len(&data.insider, |i| i.date, clock.current_date())];
        let start = visible.len().saturating_sub(count);
        Ok(visible[start..].iter().rev().cloned().collect())
    }

    fn fundamentals(
        &self,
        ticker: &Ticker,
        clock: &SimulationClock,
    ) -> Result<Option<FundamentalsSnapshot>, MarketError> {
        let Some(data) = self.data(ticker) else {
            return Ok(None);
        };
        let visible = &data.fundamentals
            [..visible_len(&data.fundamentals, |f| f.period_end, clock.current_date())];
        // Most recent by period_end within the visible prefix. An out-of-order
        // future-dated snapshot wins the max and is then caught by the
        // gateway's leakage guard.
        Ok(visible.iter().max_by_key(|f| f.period_end).cloned())
    }

    fn macro_indicators(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<MacroIndicator>, MarketError> {
        let visible = &self.macro_indicators
            [..visible_len(&self.macro_indicators, |m| m.date, clock.current_date())];
        let start = visible.len().saturating_sub(count);
        Ok(visible[start..].iter().rev().cloned().collect())
    }
}

/// Writes a fixture directory in the canonical layout. Records are written in
/// the order given; callers own sort order (validate with
/// [`validate_fixtures`]).
pub struct FixtureWriter {
    dir: PathBuf,
    tickers: Vec<Ticker>,
    ohlcv_coverage: BTreeMap<Ticker, DateRange>,
}

impl FixtureWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureWriter {
            dir: dir.into(),
            tickers: Vec::new(),
            ohlcv_coverage: BTreeMap::new(),
        }
    }

    fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> std::io::Result<()> {
        fs::create_dir_all(path.parent().expect("fixture file has a parent"))?;
        let mut f = fs::File::create(path)?;
        for r in records {
            let line = serde_json::to_string(r).expect("fixture record serializes");
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    pub fn ohlcv(&mut self, ticker: &Ticker, bars: &[OHLCVBar]) -> std::io::Result<&mut Self> {
        if !self.tickers.contains(ticker) {
            self.tickers.push(ticker.clone());
        }
        if let (Some(first), Some(last)) = (bars.first(), bars.last()) {
            self.ohlcv_coverage.insert(
                ticker.clone(),
                DateRange { from: first.date, to: last.date },
            );
        }
        Self::write_jsonl(&self.dir.join(ticker.as_str()).join("ohlcv.jsonl"), bars)?;
        Ok(self)
    }

    pub fn news(&mut self, ticker: &Ticker, items: &[NewsItem]) -> std::io::Result<&mut Self> {
        Self::write_jsonl(&self.dir.join(ticker.as_str()).join("news.jsonl"), items)?;
        Ok(self)
    }

    pub fn insider(
        &mut self,
        ticker: &Ticker,
        items: &[InsiderTransaction],
    ) -> std::io::Result<&mut Self> {
        Self::write_jsonl(&self.dir.join(ticker.as_str()).join("insider.jsonl"), items)?;
        Ok(self)
    }

    pub fn fundamentals(
        &mut self,
        ticker: &Ticker,
        snaps: &[FundamentalsSnapshot],
    ) -> std::io::Result<&mut Self> {
        Self::write_jsonl(
            &self.dir.join(ticker.as_str()).join("fundamentals.jsonl"),
            snaps,
        )?;
        Ok(self)
    }

    pub fn policy_news(&mut self, items: &[NewsItem]) -> std::io::Result<&mut Self> {
        Self::write_jsonl(&self.dir.join(POLICY_DIR).join("news.jsonl"), items)?;
        Ok(self)
    }

    pub fn macro_indicators(&mut self, items: &[MacroIndicator]) -> std::io::Result<&mut Self> {
        Self::write_jsonl(&self.dir.join(MACRO_DIR).join("indicators.jsonl"), items)?;
        Ok(self)
    }

    /// Writes the manifest; call last.
    pub fn finish(&self) -> std::io::Result<()> {
        let manifest = Manifest {
            tickers: self.tickers.clone(),
            ohlcv_coverage: self.ohlcv_coverage.clone(),
        };
        fs::create_dir_all(&self.dir)?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(self.dir.join(MANIFEST_FILE), text + "\n")
    }
}

/// Reads one OHLCV JSON Lines file (used for benchmark series); a missing
/// file is an error here, unlike optional per-ticker fixture files.
pub fn read_ohlcv_file(path: &Path) -> Result<Vec<OHLCVBar>, MarketError> {
    if !path.exists() {
        return Err(MarketError::Fixture(format!(
            "{}: file not found",
            path.display()
        )));
    }
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileVerdict {
    pub path: String,
    pub ok: bool,
    pub detail: String,
}

impl FileVerdict {
    fn ok(path: &Path, detail: String) -> Self {
        FileVerdict { path: path.display().to_string(), ok: true, detail }
    }

    fn fail(path: &Path, detail: String) -> Self {
        FileVerdict { path: path.display().to_string(), ok: false, detail }
    }
}

fn check_sorted<T>(
    records: &[T],
    date_of: impl Fn(&T) -> NaiveDate,
    strict: bool,
) -> Result<(), String> {
    for (i, pair) in records.windows(2).enumerate() {
        let (a, b) = (date_of(&pair[0]), date_of(&pair[1]));
        if b < a {
            return Err(format!("line {}: out of order ({} after {})", i + 2, b, a));
        }
        if strict && b == a {
            return Err(format!("line {}: duplicate date {}", i + 2, b));
        }
    }
    Ok(())
}

/// Checks sort order, OHLC invariants, duplicate dates, and manifest coverage.
/// Returns one verdict per file plus manifest-level verdicts.
pub fn validate_fixtures(dir: &Path) -> Result<Vec<FileVerdict>, MarketError> {
    let mut verdicts = Vec::new();
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path)
            .map_err(|e| MarketError::Fixture(format!("{}: {e}", manifest_path.display())))?,
    )
    .map_err(|e| MarketError::Fixture(format!("{}: {e}", manifest_path.display())))?;
    verdicts.push(FileVerdict::ok(
        &manifest_path,
        format!("{} tickers listed", manifest.tickers.len()),
    ));

    for ticker in &manifest.tickers {
        let tdir = dir.join(ticker.as_str());

        let path = tdir.join("ohlcv.jsonl");
        match read_jsonl::<OHLCVBar>(&path) {
            Err(e) => verdicts.push(FileVerdict::fail(&path, e.to_string())),
            Ok(bars) if bars.is_empty() => {
                verdicts.push(FileVerdict::fail(&path, "missing or empty".into()))
            }
            Ok(bars) => {
                let mut problems = Vec::new();
                if let Err(e) = check_sorted(&bars, |b| b.date, true) {
                    problems.push(e);
                }
                for (i, bar) in bars.iter().enumerate() {
                    if let Err(e) = bar.check_invariants() {
                        problems.push(format!("line {}: {e}", i + 1));
                        break;
                    }
                }
                match manifest.ohlcv_coverage.get(ticker) {
                    None => problems.push("no manifest coverage entry".into()),
                    Some(range) => {
                        let actual = DateRange {
                            from: bars.first().expect("non-empty").date,
                            to: bars.last().expect("non-empty").date,
                        };
                        if *range != actual {
                            problems.push(format!(
                                "manifest coverage {}..{} does not match file {}..{}",
                                range.from, range.to, actual.from, actual.to
                            ));
                        }
                    }
                }
                if problems.is_empty() {
                    verdicts.push(FileVerdict::ok(&path, format!("{} bars", bars.len())));
                } else {
                    verdicts.push(FileVerdict::fail(&path, problems.join("; ")));
                }
            }
        }

        let path = tdir.join("news.jsonl");
        push_sorted_verdict::<NewsItem>(&mut verdicts, &path, |n| n.date, false);
        // Company files must not carry policy-scoped items.
        if let Ok(items) = read_jsonl::<NewsItem>(&path) {
            if let Some(i) = items.iter().position(|n| n.scope == NewsScope::Policy) {
                verdicts.push(FileVerdict::fail(
                    &path,
                    format!("line {}: policy-scoped item in company news file", i + 1),
                ));
            }
        }
        let path = tdir.join("insider.jsonl");
        push_sorted_verdict::<InsiderTransaction>(&mut verdicts, &path, |i| i.date, false);
        let path = tdir.join("fundamentals.jsonl");
        push_sorted_verdict::<FundamentalsSnapshot>(&mut verdicts, &path, |f| f.period_end, false);
    }

    let path = dir.join(POLICY_DIR).join("news.jsonl");
    push_sorted_verdict::<NewsItem>(&mut verdicts, &path, |n| n.date, false);
    let path = dir.join(MACRO_DIR).join("indicators.jsonl");
    push_sorted_verdict::<MacroIndicator>(&mut verdicts, &path, |m| m.date, false);

    Ok(verdicts)
}

fn push_sorted_verdict<T: DeserializeOwned>(
    verdicts: &mut Vec<FileVerdict>,
    path: &Path,
    date_of: impl Fn(&T) -> NaiveDate,
    strict: bool,
) {
    if !path.exists() {
        verdicts.push(FileVerdict::ok(path, "absent (allowed)".into()));
        return;
    }
    match read_jsonl::<T>(path) {
        Err(e) => verdicts.push(FileVerdict::fail(path, e.to_string())),
        Ok(records) => match check_sorted(&records, date_of, strict) {
            Ok(()) => verdicts.push(FileVerdict::ok(path, format!("{} records", records.len()))),
            Err(e) => verdicts.push(FileVerdict::fail(path, e)),
        },
    }
}
