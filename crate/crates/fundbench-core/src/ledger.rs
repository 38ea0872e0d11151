//! Append-only persistence for runs: one JSON Lines file per run plus a small
//! registry index. Every line carries a checksum; loading verifies checksums
//! and sequence continuity and fails loudly on corruption. A file truncated at
//! a line boundary loads its surviving prefix; a line truncated mid-write is a
//! [`LedgerError::CorruptLedger`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Decision, Portfolio, Signal, Ticker, TradeRecord};

pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("unknown run {0:?}")]
    UnknownRun(String),
    #[error("run {0:?} already registered")]
    DuplicateRun(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("corrupt ledger at line {line}: {reason}")]
    CorruptLedger { line: usize, reason: String },
    #[error("run {0:?} has no portfolio snapshots")]
    EmptyRun(String),
    #[error("no price for held ticker {0}")]
    MissingPrice(Ticker),
}

impl From<std::io::Error> for LedgerError {
    fn from(e: std::io::Error) -> Self {
        LedgerError::StorageFailure(e.to_string())
    }
}

/// Payload of one ledger line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum LedgerEntryKind {
    Signal(Signal),
    Decision(Decision),
    Trade(TradeRecord),
    Snapshot {
        portfolio: Portfolio,
        total_value: Decimal,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub sequence_no: u64,
    pub run_id: String,
    pub date: NaiveDate,
    #[serde(flatten)]
    pub kind: LedgerEntryKind,
}

#[derive(Serialize, Deserialize)]
struct LedgerLine {
    #[serde(flatten)]
    entry: LedgerEntry,
    checksum: String,
}

fn checksum_of(entry: &LedgerEntry) -> String {
    let body = serde_json::to_string(entry).expect("ledger entry serializes");
    let digest = Sha256::digest(body.as_bytes());
    hex_prefix(&digest, 16)
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut out = String::with_capacity(chars);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
        if out.len() >= chars {
            break;
        }
    }
    out.truncate(chars);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub model_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Registry {
    runs: Vec<RunMeta>,
}

/// Root directory holding `registry.json` and one `<run_id>.jsonl` per run.
pub struct LedgerStore {
    root: PathBuf,
}

impl LedgerStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LedgerStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_path(&self, run_id: &str) -> PathBuf {
        self.root.join(format!("{run_id}.jsonl"))
    }

    fn registry_path(&self) -> PathBuf {
        self.root.join(REGISTRY_FILE)
    }

    fn load_registry(&self) -> Result<Registry, LedgerError> {
        let path = self.registry_path();
        if !path.exists() {
            return Ok(Registry::default());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| LedgerError::StorageFailure(format!("{}: {e}", path.display())))
    }

    fn save_registry(&self, registry: &Registry) -> Result<(), LedgerError> {
        fs::create_dir_all(&self.root)?;
        let text = serde_json::to_string_pretty(registry).expect("registry serializes");
        fs::write(self.registry_path(), text + "\n")?;
        Ok(())
    }

    pub fn list_runs(&self) -> Result<Vec<RunMeta>, LedgerError> {
        Ok(self.load_registry()?.runs)
    }

    pub fn run_meta(&self, run_id: &str) -> Result<RunMeta, LedgerError> {
        self.load_registry()?
            .runs
            .into_iter()
            .find(|r| r.run_id == run_id)
            .ok_or_else(|| LedgerError::UnknownRun(run_id.to_string()))
    }

    pub fn is_registered(&self, run_id: &str) -> Result<bool, LedgerError> {
        Ok(self.load_registry()?.runs.iter().any(|r| r.run_id == run_id))
    }

    pub fn register_run(&self, run_id: &str, model_id: &str) -> Result<(), LedgerError> {
        let mut registry = self.load_registry()?;
        if registry.runs.iter().any(|r| r.run_id == run_id) {
            return Err(LedgerError::DuplicateRun(run_id.to_string()));
        }
        registry.runs.push(RunMeta {
            run_id: run_id.to_string(),
            model_id: model_id.to_string(),
        });
        self.save_registry(&registry)
    }

    /// Registers the run if new; keeps the existing entry otherwise.
    pub fn ensure_run(&self, run_id: &str, model_id: &str) -> Result<(), LedgerError> {
        match self.register_run(run_id, model_id) {
            Err(LedgerError::DuplicateRun(_)) | Ok(()) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// All entries in sequence order. Checksum or parse failures and sequence
    /// gaps are fatal, never skipped.
    pub fn load_run(&self, run_id: &str) -> Result<Vec<LedgerEntry>, LedgerError> {
        if !self.is_registered(run_id)? {
            return Err(LedgerError::UnknownRun(run_id.to_string()));
        }
        let path = self.run_path(run_id);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path)?;
        let mut entries = Vec::new();
        for (i, line) in text.split('\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let parsed: LedgerLine =
                serde_json::from_str(line).map_err(|e| LedgerError::CorruptLedger {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            let expected = checksum_of(&parsed.entry);
            if parsed.checksum != expected {
                return Err(LedgerError::CorruptLedger {
                    line: i + 1,
                    reason: format!("checksum {} != {expected}", parsed.checksum),
                });
            }
            if parsed.entry.sequence_no != entries.len() as u64 + 1 {
                return Err(LedgerError::CorruptLedger {
                    line: i + 1,
                    reason: format!(
                        "sequence {} breaks continuity (expected {})",
                        parsed.entry.sequence_no,
                        entries.len() + 1
                    ),
                });
            }
            if parsed.entry.run_id != run_id {
                return Err(LedgerError::CorruptLedger {
                    line: i + 1,
                    reason: format!("entry belongs to run {:?}", parsed.entry.run_id),
                });
            }
            entries.push(parsed.entry);
        }
        Ok(entries)
    }

    /// Opens the single writer for a run, validating any existing tail so
    /// appends continue the sequence.
    pub fn open_writer(&self, run_id: &str) -> Result<RunWriter, LedgerError> {
        let existing = self.load_run(run_id)?;
        fs::create_dir_all(&self.root)?;
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.run_path(run_id))?;
        Ok(RunWriter {
            file,
            run_id: run_id.to_string(),
            next_seq: existing.len() as u64 + 1,
        })
    }
}

/// Exclusive appender for one run; entries are immutable once written.
pub struct RunWriter {
    file: fs::File,
    run_id: String,
    next_seq: u64,
}

impl RunWriter {
    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_seq
    }

    pub fn append(
        &mut self,
        date: NaiveDate,
        kind: LedgerEntryKind,
    ) -> Result<u64, LedgerError> {
        let entry = LedgerEntry {
            sequence_no: self.next_seq,
            run_id: self.run_id.clone(),
            date,
            kind,
        };
        let checksum = checksum_of(&entry);
        let line = serde_json::to_string(&LedgerLine { entry, checksum })
            .expect("ledger line serializes");
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(seq)
    }
}

/// cash + sum of shares times price over all positions.
pub fn portfolio_value(
    portfolio: &Portfolio,
    prices: &BTreeMap<Ticker, Decimal>,
) -> Result<Decimal, LedgerError> {
    let mut total = portfolio.cash;
    for position in portfolio.positions.values() {
        let price = prices
            .get(&position.ticker)
            .ok_or_else(|| LedgerError::MissingPrice(position.ticker.clone()))?;
        total += Decimal::from(position.shares) * price;
    }
    Ok(total)
}

/// One (date, total_value) point per trading day from the run's snapshots.
/// Duplicate snapshot dates resolve last-write-wins with a warning.
pub fn daily_value_series(
    run_id: &str,
    entries: &[LedgerEntry],
) -> Result<Vec<(NaiveDate, Decimal)>, LedgerError> {
    let mut by_date: BTreeMap<NaiveDate, Decimal> = BTreeMap::new();
    for entry in entries {
        if let LedgerEntryKind::Snapshot { total_value, .. } = &entry.kind {
            if by_date.insert(entry.date, *total_value).is_some() {
                log::warn!(
                    "run {run_id}: duplicate snapshot for {}; keeping the later entry",
                    entry.date
                );
            }
        }
    }
    if by_date.is_empty() {
        return Err(LedgerError::EmptyRun(run_id.to_string()));
    }
    Ok(by_date.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AnalystKind, SignalDirection};
    use rust_decimal_macros::dec;
    use tempfile::TempDir;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn t(s: &str) -> Ticker {
        Ticker::new(s).unwrap()
    }

    fn signal_kind(n: u32) -> LedgerEntryKind {
        LedgerEntryKind::Signal(
            Signal::valid(
                AnalystKind::Technical,
                t("AAPL"),
                d("2025-03-17"),
                SignalDirection::Bullish,
                format!("evidence {n}"),
            )
            .unwrap(),
        )
    }

    fn store() -> (TempDir, LedgerStore) {
        let tmp = TempDir::new().unwrap();
        let store = LedgerStore::new(tmp.path());
        (tmp, store)
    }

    #[test]
    fn sequence_numbers_start_at_one_and_increment() {
        let (_tmp, store) = store();
        store.register_run("r1", "stub-model").unwrap();
        let mut writer = store.open_writer("r1").unwrap();
        assert_eq!(writer.append(d("2025-03-17"), signal_kind(1)).unwrap(), 1);
        assert_eq!(writer.append(d("2025-03-17"), signal_kind(2)).unwrap(), 2);
    }

    #[test]
    fn unknown_run_is_rejected() {
        let (_tmp, store) = store();
        assert!(matches!(
            store.open_writer("ghost"),
            Err(LedgerError::UnknownRun(_))
        ));
        assert!(matches!(
            store.load_run("ghost"),
            Err(LedgerError::UnknownRun(_))
        ));
    }

    #[test]
    fn duplicate_registration_is_rejected_but_ensure_is_idempotent() {
        let (_tmp, store) = store();
        store.register_run("r1", "m").unwrap();
        assert!(matches!(
            store.register_run("r1", "m"),
            Err(LedgerError::DuplicateRun(_))
        ));
        store.ensure_run("r1", "m").unwrap();
        assert_eq!(store.list_runs().unwrap().len(), 1);
    }

    #[test]
    fn load_round_trips_appends_in_order() {
        let (_tmp, store) = store();
        store.register_run("r1", "m").unwrap();
        let mut writer = store.open_writer("r1").unwrap();
        for n in 1..=5 {
            writer.append(d("2025-03-17"), signal_kind(n)).unwrap();
        }
        let entries = store.load_run("r1").unwrap();
        assert_eq!(entries.len(), 5);
        for (i, e) in entries.iter().enumerate() {
            assert_eq!(e.sequence_no, i as u64 + 1);
        }

        // Reopened writers continue the sequence.
        let mut writer = store.open_writer("r1").unwrap();
        assert_eq!(writer.append(d("2025-03-18"), signal_kind(6)).unwrap(), 6);
    }

    #[test]
    fn empty_run_loads_empty() {
        let (_tmp, store) = store();
        store.register_run("r1", "m").unwrap();
        assert!(store.load_run("r1").unwrap().is_empty());
        let _writer = store.open_writer("r1").unwrap();
        assert!(store.load_run("r1").unwrap().is_empty());
    }

    #[test]
    fn mid_line_truncation_is_corrupt_but_line_boundary_is_not() {
        let (_tmp, store) = store();
        store.register_run("r1", "m").unwrap();
        let mut writer = store.open_writer("r1").unwrap();
        for n in 1..=3 {
            writer.append(d("2025-03-17"), signal_kind(n)).unwrap();
        }
        let path = store.run_path("r1");
        let full = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = full.lines().collect();

        // Drop the last line entirely: clean prefix survives.
        fs::write(&path, format!("{}\n{}\n", lines[0], lines[1])).unwrap();
        assert_eq!(store.load_run("r1").unwrap().len(), 2);

        // Cut the last line in half: corrupt.
        let cut = &lines[1][..lines[1].len() / 2];
        fs::write(&path, format!("{}\n{cut}", lines[0])).unwrap();
        let err = store.load_run("r1").unwrap_err();
        assert!(matches!(err, LedgerError::CorruptLedger { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn tampered_line_fails_checksum() {
        let (_tmp, store) = store();
        store.register_run("r1", "m").unwrap();
        let mut writer = store.open_writer("r1").unwrap();
        writer.append(d("2025-03-17"), signal_kind(1)).unwrap();
        let path = store.run_path("r1");
        let tampered = fs::read_to_string(&path)
            .unwrap()
            .replace("evidence 1", "evidence 9");
        fs::write(&path, tampered).unwrap();
        assert!(matches!(
            store.load_run("r1"),
            Err(LedgerError::CorruptLedger { .. })
        ));
    }

    #[test]
    fn sequence_gap_is_corrupt() {
        let (_tmp, store) = store();
        store.register_run("r1", "m").unwrap();
        let mut writer = store.open_writer("r1").unwrap();
        for n in 1..=3 {
            writer.append(d("2025-03-17"), signal_kind(n)).unwrap();
        }
        let path = store.run_path("r1");
        let full = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = full.lines().collect();
        fs::write(&path, format!("{}\n{}\n", lines[0], lines[2])).unwrap();
        let err = store.load_run("r1").unwrap_err();
        assert!(matches!(err, LedgerError::CorruptLedger { line: 2, .. }));
    }

    #[test]
    fn portfolio_value_examples() {
        let mut prices = BTreeMap::new();
        prices.insert(t("CVX"), dec!(156.12));

        let p = Portfolio::new(dec!(100000), d("2025-04-03"));
        assert_eq!(portfolio_value(&p, &prices).unwrap(), dec!(100000));

        let mut p = Portfolio::new(dec!(4252.06), d("2025-04-03"));
        p.positions.insert(
            t("CVX"),
            crate::domain::Position { ticker: t("CVX"), shares: 184, cost_basis: dec!(150) },
        );
        assert_eq!(
            portfolio_value(&p, &prices).unwrap(),
            dec!(4252.06) + Decimal::from(184) * dec!(156.12)
        );

        let empty_prices = BTreeMap::new();
        assert!(matches!(
            portfolio_value(&p, &empty_prices),
            Err(LedgerError::MissingPrice(_))
        ));
    }

    #[test]
    fn value_series_orders_and_deduplicates() {
        let (_tmp, store) = store();
        store.register_run("r1", "m").unwrap();
        let mut writer = store.open_writer("r1").unwrap();
        let snap = |cash: Decimal, date: &str| LedgerEntryKind::Snapshot {
            portfolio: Portfolio::new(cash, d(date)),
            total_value: cash,
        };
        writer.append(d("2025-03-17"), snap(dec!(100000), "2025-03-17")).unwrap();
        writer.append(d("2025-03-18"), snap(dec!(100500), "2025-03-18")).unwrap();
        writer.append(d("2025-03-18"), snap(dec!(100700), "2025-03-18")).unwrap();

        let entries = store.load_run("r1").unwrap();
        let series = daily_value_series("r1", &entries).unwrap();
        assert_eq!(
            series,
            vec![(d("2025-03-17"), dec!(100000)), (d("2025-03-18"), dec!(100700))]
        );

        let err = daily_value_series("r2", &[]).unwrap_err();
        assert!(matches!(err, LedgerError::EmptyRun(_)));
    }
}
