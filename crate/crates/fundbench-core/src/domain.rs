//! Shared domain types and operational schemas exchanged by every subsystem:
//! tickers, signals, decisions, portfolio state, and the per-day fund state
//! container. All types are immutable values; "mutation" constructs new values.
//!
//! Canonical wire format: JSON with snake_case field names, ISO-8601 dates,
//! enumerations as their canonical strings, and money as exact decimal strings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

/// Justification recorded on a signal that could not be produced.
pub const INVALID_SIGNAL_JUSTIFICATION: &str = "No signal provided due to error";
/// Justification recorded on a decision that could not be produced.
pub const INVALID_DECISION_JUSTIFICATION: &str = "Just hold due to error";

/// Default capacity of the per-ticker decision memory.
pub const DEFAULT_DECISION_MEMORY_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("invalid ticker {0:?}: must be 1-6 uppercase letters or dots")]
    InvalidTicker(String),
    #[error("unrecognized signal direction {0:?}")]
    UnrecognizedDirection(String),
    #[error("unrecognized decision action {0:?}")]
    UnrecognizedAction(String),
    #[error("unrecognized analyst kind {0:?}")]
    UnrecognizedAnalyst(String),
    #[error("{0}")]
    InvariantViolation(String),
}

/// Upper-case stock symbol, 1-6 characters, letters and dots only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Ticker(String);

impl Ticker {
    pub fn new(symbol: impl Into<String>) -> Result<Self, DomainError> {
        let symbol = symbol.into();
        let ok = !symbol.is_empty()
            && symbol.len() <= 6
            && symbol.chars().all(|c| c.is_ascii_uppercase() || c == '.');
        if ok {
            Ok(Ticker(symbol))
        } else {
            Err(DomainError::InvalidTicker(symbol))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Ticker {
    type Error = DomainError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Ticker::new(value)
    }
}

impl From<Ticker> for String {
    fn from(t: Ticker) -> String {
        t.0
    }
}

impl FromStr for Ticker {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ticker::new(s)
    }
}

impl fmt::Display for Ticker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Standardized analyst signal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalDirection {
    Bullish,
    Bearish,
    Neutral,
}

impl SignalDirection {
    pub const ALL: [SignalDirection; 3] = [
        SignalDirection::Bullish,
        SignalDirection::Bearish,
        SignalDirection::Neutral,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SignalDirection::Bullish => "Bullish",
            SignalDirection::Bearish => "Bearish",
            SignalDirection::Neutral => "Neutral",
        }
    }
}

impl fmt::Display for SignalDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Trims and case-folds before matching the three canonical strings.
impl FromStr for SignalDirection {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bullish" => Ok(SignalDirection::Bullish),
            "bearish" => Ok(SignalDirection::Bearish),
            "neutral" => Ok(SignalDirection::Neutral),
            _ => Err(DomainError::UnrecognizedDirection(s.to_string())),
        }
    }
}

/// Portfolio-manager decision action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecisionAction {
    Buy,
    Sell,
    Hold,
}

impl DecisionAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecisionAction::Buy => "Buy",
            DecisionAction::Sell => "Sell",
            DecisionAction::Hold => "Hold",
        }
    }
}

impl fmt::Display for DecisionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecisionAction {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" => Ok(DecisionAction::Buy),
            "sell" => Ok(DecisionAction::Sell),
            "hold" => Ok(DecisionAction::Hold),
            _ => Err(DomainError::UnrecognizedAction(s.to_string())),
        }
    }
}

/// The six specialist analyst roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnalystKind {
    Technical,
    Fundamental,
    Insider,
    CompanyNews,
    MacroEconomic,
    Policy,
}

impl AnalystKind {
    pub const ALL: [AnalystKind; 6] = [
        AnalystKind::Technical,
        AnalystKind::Fundamental,
        AnalystKind::Insider,
        AnalystKind::CompanyNews,
        AnalystKind::MacroEconomic,
        AnalystKind::Policy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AnalystKind::Technical => "Technical",
            AnalystKind::Fundamental => "Fundamental",
            AnalystKind::Insider => "Insider",
            AnalystKind::CompanyNews => "CompanyNews",
            AnalystKind::MacroEconomic => "MacroEconomic",
            AnalystKind::Policy => "Policy",
        }
    }

    /// Human-readable role name used in prompts ("company news analyst").
    pub fn role_name(&self) -> &'static str {
        match self {
            AnalystKind::Technical => "technical",
            AnalystKind::Fundamental => "fundamental",
            AnalystKind::Insider => "insider activity",
            AnalystKind::CompanyNews => "company news",
            AnalystKind::MacroEconomic => "macro-economic",
            AnalystKind::Policy => "policy",
        }
    }
}

impl fmt::Display for AnalystKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accepts spacing/underscore/case variants ("company news", "Macro_Economic").
impl FromStr for AnalystKind {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match folded.as_str() {
            "technical" => Ok(AnalystKind::Technical),
            "fundamental" => Ok(AnalystKind::Fundamental),
            "insider" => Ok(AnalystKind::Insider),
            "companynews" => Ok(AnalystKind::CompanyNews),
            "macroeconomic" => Ok(AnalystKind::MacroEconomic),
            "policy" => Ok(AnalystKind::Policy),
            _ => Err(DomainError::UnrecognizedAnalyst(s.to_string())),
        }
    }
}

/// Parses a model-supplied direction string (trim + case-fold).
pub fn parse_direction(text: &str) -> Result<SignalDirection, DomainError> {
    text.parse()
}

/// Parses a model-supplied action string (trim + case-fold).
pub fn parse_action(text: &str) -> Result<DecisionAction, DomainError> {
    text.parse()
}

/// Structured output of one analyst for one ticker and day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signal {
    pub analyst: AnalystKind,
    pub ticker: Ticker,
    pub date: NaiveDate,
    pub direction: SignalDirection,
    pub justification: String,
    pub valid: bool,
}

impl Signal {
    /// A well-formed signal; the justification must be non-empty.
    pub fn valid(
        analyst: AnalystKind,
        ticker: Ticker,
        date: NaiveDate,
        direction: SignalDirection,
        justification: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let justification = justification.into();
        if justification.trim().is_empty() {
            return Err(DomainError::InvariantViolation(
                "valid signal requires a non-empty justification".into(),
            ));
        }
        Ok(Signal {
            analyst,
            ticker,
            date,
            direction,
            justification,
            valid: true,
        })
    }

    /// Fallback recorded when the model response failed; direction Neutral is
    /// a storage sentinel only and is excluded from aggregation.
    pub fn invalid(analyst: AnalystKind, ticker: Ticker, date: NaiveDate) -> Self {
        Signal {
            analyst,
            ticker,
            date,
            direction: SignalDirection::Neutral,
            justification: INVALID_SIGNAL_JUSTIFICATION.to_string(),
            valid: false,
        }
    }
}

/// Executable manager decision for one ticker and day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub ticker: Ticker,
    pub date: NaiveDate,
    pub action: DecisionAction,
    pub shares: u32,
    pub price: Decimal,
    pub justification: String,
    pub valid: bool,
}

impl Decision {
    pub fn valid(
        ticker: Ticker,
        date: NaiveDate,
        action: DecisionAction,
        shares: u32,
        price: Decimal,
        justification: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let justification = justification.into();
        if justification.trim().is_empty() {
            return Err(DomainError::InvariantViolation(
                "valid decision requires a non-empty justification".into(),
            ));
        }
        if price <= Decimal::ZERO {
            return Err(DomainError::InvariantViolation(
                "decision price must be positive".into(),
            ));
        }
        match action {
            DecisionAction::Hold if shares != 0 => Err(DomainError::InvariantViolation(
                "hold decision must carry zero shares".into(),
            )),
            DecisionAction::Buy | DecisionAction::Sell if shares == 0 => {
                Err(DomainError::InvariantViolation(
                    "buy/sell decision must carry at least one share".into(),
                ))
            }
            _ => Ok(Decision {
                ticker,
                date,
                action,
                shares,
                price,
                justification,
                valid: true,
            }),
        }
    }

    /// Fallback recorded when the model response failed: hold with the
    /// engine's price of the day.
    pub fn invalid(ticker: Ticker, date: NaiveDate, price: Decimal) -> Self {
        Decision {
            ticker,
            date,
            action: DecisionAction::Hold,
            shares: 0,
            price,
            justification: INVALID_DECISION_JUSTIFICATION.to_string(),
            valid: false,
        }
    }
}

/// Holding in one ticker; cost basis is the volume-weighted average purchase
/// price and resets to zero when the position closes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub ticker: Ticker,
    pub shares: u32,
    pub cost_basis: Decimal,
}

/// Cash plus positions as of a date. No short selling, cash never negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Portfolio {
    pub cash: Decimal,
    pub positions: BTreeMap<Ticker, Position>,
    pub as_of: NaiveDate,
}

impl Portfolio {
    pub fn new(cash: Decimal, as_of: NaiveDate) -> Self {
        Portfolio {
            cash,
            positions: BTreeMap::new(),
            as_of,
        }
    }

    pub fn shares_held(&self, ticker: &Ticker) -> u32 {
        self.positions.get(ticker).map_or(0, |p| p.shares)
    }
}

/// Persistent record of one executed (or attempted) decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub run_id: String,
    pub date: NaiveDate,
    pub ticker: Ticker,
    pub action: DecisionAction,
    pub requested_shares: u32,
    pub executed_shares: u32,
    pub price: Decimal,
    pub cash_after: Decimal,
    pub shares_after: u32,
    pub justification: String,
}

/// Per-run, per-day message container threaded through the workflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FundState {
    pub run_id: String,
    pub trading_date: NaiveDate,
    pub portfolio: Portfolio,
    pub signals_today: BTreeMap<Ticker, Vec<Signal>>,
    pub decision_memory: BTreeMap<Ticker, Vec<Decision>>,
}

impl FundState {
    pub fn new(run_id: impl Into<String>, date: NaiveDate, initial_cash: Decimal) -> Self {
        FundState {
            run_id: run_id.into(),
            trading_date: date,
            portfolio: Portfolio::new(initial_cash, date),
            signals_today: BTreeMap::new(),
            decision_memory: BTreeMap::new(),
        }
    }

    pub fn memory_for(&self, ticker: &Ticker) -> &[Decision] {
        self.decision_memory
            .get(ticker)
            .map_or(&[], |m| m.as_slice())
    }
}

/// Returns a new bounded list with `d` first and the oldest entry evicted at
/// capacity. The input is not modified.
pub fn push_decision_memory(memory: &[Decision], d: Decision, capacity: usize) -> Vec<Decision> {
    assert!(capacity >= 1, "decision memory capacity must be >= 1");
    let mut out = Vec::with_capacity(capacity.min(memory.len() + 1));
    out.push(d);
    out.extend(memory.iter().take(capacity - 1).cloned());
    out
}
