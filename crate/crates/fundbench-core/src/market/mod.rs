//! Unified, leakage-guarded access to market data from pluggable providers:
//! a deterministic replay provider backed by fixture files and a generic live
//! HTTP provider. Every response is re-checked against the simulation clock;
//! a record dated after the clock is a fatal [`MarketError::LeakageViolation`],
//! never silently dropped.

mod demo;
mod fixtures;
mod http;

pub use demo::{
    demo_stub_script, weekdays_between, write_demo_fixtures, write_demo_stub_script, DEMO_END,
    DEMO_START, DEMO_TICKERS,
};
pub use fixtures::{
    read_ohlcv_file, validate_fixtures, FileVerdict, FixtureStore, FixtureWriter,
};
pub use http::{HttpMarketProvider, HttpProviderConfig, KindEndpoint};

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::domain::Ticker;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarketError {
    #[error("provider unavailable for {kind} after {attempts} attempts: {message}")]
    ProviderUnavailable {
        kind: DataKind,
        attempts: u32,
        message: String,
    },
    #[error("unknown ticker {0}")]
    UnknownTicker(Ticker),
    #[error(
        "leakage violation: {kind} record for {scope} dated {record_date} is after the \
         simulation clock {clock_date}"
    )]
    LeakageViolation {
        kind: DataKind,
        scope: String,
        record_date: NaiveDate,
        clock_date: NaiveDate,
    },
    #[error("no price available for {0}")]
    NoPriceAvailable(Ticker),
    #[error("unknown provider kind {0:?}")]
    UnknownProviderKind(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("clock may only move forward: {current} -> {requested}")]
    ClockMovedBackwards {
        current: NaiveDate,
        requested: NaiveDate,
    },
    #[error("live clock {requested} is after today {today}")]
    ClockBeyondToday {
        requested: NaiveDate,
        today: NaiveDate,
    },
}

/// The six upstream data kinds served by the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DataKind {
    Ohlcv,
    CompanyNews,
    PolicyNews,
    Insider,
    Fundamentals,
    Macro,
}

impl DataKind {
    pub const ALL: [DataKind; 6] = [
        DataKind::Ohlcv,
        DataKind::CompanyNews,
        DataKind::PolicyNews,
        DataKind::Insider,
        DataKind::Fundamentals,
        DataKind::Macro,
    ];
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataKind::Ohlcv => "ohlcv",
            DataKind::CompanyNews => "company news",
            DataKind::PolicyNews => "policy news",
            DataKind::Insider => "insider",
            DataKind::Fundamentals => "fundamentals",
            DataKind::Macro => "macro",
        };
        f.write_str(s)
    }
}

/// One daily bar. Prices are positive; low bounds open/close/high from below.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OHLCVBar {
    pub date: NaiveDate,
    pub open: Decimal,
    pub high: Decimal,
    pub low: Decimal,
    pub close: Decimal,
    pub volume: u64,
}

impl OHLCVBar {
    pub fn close_f64(&self) -> f64 {
        use rust_decimal::prelude::ToPrimitive;
        self.close.to_f64().expect("close fits in f64")
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.low <= Decimal::ZERO {
            return Err(format!("{}: prices must be positive", self.date));
        }
        if self.low > self.high {
            return Err(format!("{}: low > high", self.date));
        }
        if self.open < self.low || self.open > self.high {
            return Err(format!("{}: open outside [low, high]", self.date));
        }
        if self.close < self.low || self.close > self.high {
            return Err(format!("{}: close outside [low, high]", self.date));
        }
        Ok(())
    }
}

/// Company-scoped or policy-scoped news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub date: NaiveDate,
    pub headline: String,
    pub summary: String,
    pub source: String,
    #[serde(flatten)]
    pub scope: NewsScope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope")]
pub enum NewsScope {
    Company { ticker: Ticker },
    Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsiderKind {
    InsiderBuy,
    InsiderSell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsiderTransaction {
    pub date: NaiveDate,
    pub ticker: Ticker,
    pub insider_name: String,
    pub role: String,
    pub kind: InsiderKind,
    pub shares: u32,
    pub price: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalsSnapshot {
    pub ticker: Ticker,
    pub period_end: NaiveDate,
    pub revenue: Decimal,
    pub net_income: Decimal,
    pub gross_margin: f64,
    pub net_margin: f64,
    pub pe_ratio: Option<f64>,
    pub pb_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroIndicator {
    pub name: String,
    pub date: NaiveDate,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockMode {
    Live,
    Replay,
}

/// Forward-only simulation clock. In Live mode it can never pass today's
/// wall-clock date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationClock {
    current_date: NaiveDate,
    mode: ClockMode,
}

impl SimulationClock {
    pub fn replay(start: NaiveDate) -> Self {
        SimulationClock {
            current_date: start,
            mode: ClockMode::Replay,
        }
    }

    pub fn live(start: NaiveDate) -> Result<Self, MarketError> {
        let today = chrono::Utc::now().date_naive();
        if start > today {
            return Err(MarketError::ClockBeyondToday {
                requested: start,
                today,
            });
        }
        Ok(SimulationClock {
            current_date: start,
            mode: ClockMode::Live,
        })
    }

    pub fn new(mode: ClockMode, start: NaiveDate) -> Result<Self, MarketError> {
        match mode {
            ClockMode::Replay => Ok(Self::replay(start)),
            ClockMode::Live => Self::live(start),
        }
    }

    pub fn current_date(&self) -> NaiveDate {
        self.current_date
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn advance_to(&mut self, date: NaiveDate) -> Result<(), MarketError> {
        if date < self.current_date {
            return Err(MarketError::ClockMovedBackwards {
                current: self.current_date,
                requested: date,
            });
        }
        if self.mode == ClockMode::Live {
            let today = chrono::Utc::now().date_naive();
            if date > today {
                return Err(MarketError::ClockBeyondToday {
                    requested: date,
                    today,
                });
            }
        }
        self.current_date = date;
        Ok(())
    }
}

/// A source of market data. Providers serve records visible as of the clock;
/// the gateway independently re-checks for leakage.
pub trait MarketProvider: Send + Sync {
    fn ohlcv(
        &self,
        ticker: &Ticker,
        window: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<OHLCVBar>, MarketError>;

    fn company_news(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError>;

    fn policy_news(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError>;

    fn insider(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<InsiderTransaction>, MarketError>;

    fn fundamentals(
        &self,
        ticker: &Ticker,
        clock: &SimulationClock,
    ) -> Result<Option<FundamentalsSnapshot>, MarketError>;

    fn macro_indicators(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<MacroIndicator>, MarketError>;
}

/// Provider registration profile. `Replay` serves fixtures from a directory;
/// `Http` is a live provider declared entirely in configuration.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // constructed once per process
pub enum ProviderProfile {
    Replay { fixtures_dir: PathBuf },
    Http(HttpProviderConfig),
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum CacheKey {
    Ohlcv(Ticker, usize, NaiveDate),
    CompanyNews(Ticker, usize, NaiveDate),
    PolicyNews(usize, NaiveDate),
    Insider(Ticker, usize, NaiveDate),
    Fundamentals(Ticker, NaiveDate),
    Macro(usize, NaiveDate),
}

enum CacheValue {
    Ohlcv(Vec<OHLCVBar>),
    News(Vec<NewsItem>),
    Insider(Vec<InsiderTransaction>),
    Fundamentals(Option<FundamentalsSnapshot>),
    Macro(Vec<MacroIndicator>),
}

/// Routes fetches to the registered provider, enforces response ordering and
/// window/count limits, applies the leakage guard, and optionally memoizes
/// responses per (query, clock-date).
pub struct MarketGateway {
    provider: Box<dyn MarketProvider>,
    cache: Option<Mutex<HashMap<CacheKey, CacheValue>>>,
}

impl MarketGateway {
    pub fn new(provider: Box<dyn MarketProvider>) -> Self {
        MarketGateway {
            provider,
            cache: Some(Mutex::new(HashMap::new())),
        }
    }

    pub fn without_cache(provider: Box<dyn MarketProvider>) -> Self {
        MarketGateway {
            provider,
            cache: None,
        }
    }

    /// Builds a gateway for a registered provider kind.
    pub fn register_provider(profile: &ProviderProfile) -> Result<Self, MarketError> {
        match profile {
            ProviderProfile::Replay { fixtures_dir } => {
                let store = FixtureStore::load(fixtures_dir)?;
                Ok(MarketGateway::new(Box::new(store)))
            }
            ProviderProfile::Http(cfg) => {
                let provider = HttpMarketProvider::new(cfg.clone())?;
                Ok(MarketGateway::new(Box::new(provider)))
            }
        }
    }

    fn guard<T>(
        &self,
        kind: DataKind,
        scope: &str,
        clock: &SimulationClock,
        records: &[T],
        date_of: impl Fn(&T) -> NaiveDate,
    ) -> Result<(), MarketError> {
        for r in records {
            let record_date = date_of(r);
            if record_date > clock.current_date() {
                return Err(MarketError::LeakageViolation {
                    kind,
                    scope: scope.to_string(),
                    record_date,
                    clock_date: clock.current_date(),
                });
            }
        }
        Ok(())
    }

    fn cached<T: Clone>(
        &self,
        key: CacheKey,
        wrap: impl Fn(T) -> CacheValue,
        unwrap: impl Fn(&CacheValue) -> Option<T>,
        fetch: impl FnOnce() -> Result<T, MarketError>,
    ) -> Result<T, MarketError> {
        if let Some(cache) = &self.cache {
            if let Some(v) = cache.lock().expect("cache lock").get(&key).and_then(&unwrap) {
                return Ok(v);
            }
            let v = fetch()?;
            cache.lock().expect("cache lock").insert(key, wrap(v.clone()));
            Ok(v)
        } else {
            fetch()
        }
    }

    /// Up to `window` bars, strictly ascending by date, all dated at or before
    /// the clock. Fewer bars are returned when history is short.
    pub fn fetch_ohlcv(
        &self,
        ticker: &Ticker,
        window: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<OHLCVBar>, MarketError> {
        assert!(window >= 1, "window must be >= 1");
        let key = CacheKey::Ohlcv(ticker.clone(), window, clock.current_date());
        self.cached(
            key,
            CacheValue::Ohlcv,
            |v| match v {
                CacheValue::Ohlcv(b) => Some(b.clone()),
                _ => None,
            },
            || {
                let mut bars = self.provider.ohlcv(ticker, window, clock)?;
                self.guard(DataKind::Ohlcv, ticker.as_str(), clock, &bars, |b| b.date)?;
                bars.sort_by_key(|b| b.date);
                if bars.len() > window {
                    bars.drain(..bars.len() - window);
                }
                Ok(bars)
            },
        )
    }

    /// Up to `count` most recent company-scoped items, newest first.
    pub fn fetch_company_news(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError> {
        assert!(count >= 1, "count must be >= 1");
        let key = CacheKey::CompanyNews(ticker.clone(), count, clock.current_date());
        self.cached(
            key,
            CacheValue::News,
            |v| match v {
                CacheValue::News(n) => Some(n.clone()),
                _ => None,
            },
            || {
                let mut items = self.provider.company_news(ticker, count, clock)?;
                self.guard(DataKind::CompanyNews, ticker.as_str(), clock, &items, |n| n.date)?;
                items.sort_by_key(|item| std::cmp::Reverse(item.date));
                items.truncate(count);
                Ok(items)
            },
        )
    }

    /// Up to `count` most recent policy-scoped items, newest first.
    pub fn fetch_policy_news(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError> {
        assert!(count >= 1, "count must be >= 1");
        let key = CacheKey::PolicyNews(count, clock.current_date());
        self.cached(
            key,
            CacheValue::News,
            |v| match v {
                CacheValue::News(n) => Some(n.clone()),
                _ => None,
            },
            || {
                let mut items = self.provider.policy_news(count, clock)?;
                self.guard(DataKind::PolicyNews, "policy", clock, &items, |n| n.date)?;
                items.sort_by_key(|item| std::cmp::Reverse(item.date));
                items.truncate(count);
                Ok(items)
            },
        )
    }

    /// Up to `count` most recent insider transactions, newest first.
    pub fn fetch_insider(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<InsiderTransaction>, MarketError> {
        assert!(count >= 1, "count must be >= 1");
        let key = CacheKey::Insider(ticker.clone(), count, clock.current_date());
        self.cached(
            key,
            CacheValue::Insider,
            |v| match v {
                CacheValue::Insider(i) => Some(i.clone()),
                _ => None,
            },
            || {
                let mut items = self.provider.insider(ticker, count, clock)?;
                self.guard(DataKind::Insider, ticker.as_str(), clock, &items, |i| i.date)?;
                items.sort_by_key(|item| std::cmp::Reverse(item.date));
                items.truncate(count);
                Ok(items)
            },
        )
    }

    /// Most recent snapshot with period_end at or before the clock, if any.
    pub fn fetch_fundamentals(
        &self,
        ticker: &Ticker,
        clock: &SimulationClock,
    ) -> Result<Option<FundamentalsSnapshot>, MarketError> {
        let key = CacheKey::Fundamentals(ticker.clone(), clock.current_date());
        self.cached(
            key,
            CacheValue::Fundamentals,
            |v| match v {
                CacheValue::Fundamentals(f) => Some(f.clone()),
                _ => None,
            },
            || {
                let snap = self.provider.fundamentals(ticker, clock)?;
                if let Some(s) = &snap {
                    self.guard(
                        DataKind::Fundamentals,
                        ticker.as_str(),
                        clock,
                        std::slice::from_ref(s),
                        |s| s.period_end,
                    )?;
                }
                Ok(snap)
            },
        )
    }

    /// Up to `count` most recent macro indicator readings, newest first.
    pub fn fetch_macro(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<MacroIndicator>, MarketError> {
        assert!(count >= 1, "count must be >= 1");
        let key = CacheKey::Macro(count, clock.current_date());
        self.cached(
            key,
            CacheValue::Macro,
            |v| match v {
                CacheValue::Macro(m) => Some(m.clone()),
                _ => None,
            },
            || {
                let mut items = self.provider.macro_indicators(count, clock)?;
                self.guard(DataKind::Macro, "macro", clock, &items, |m| m.date)?;
                items.sort_by_key(|item| std::cmp::Reverse(item.date));
                items.truncate(count);
                Ok(items)
            },
        )
    }

    /// Close of the bar dated exactly at the clock, or the most recent prior
    /// close on non-trading days.
    pub fn fetch_price(
        &self,
        ticker: &Ticker,
        clock: &SimulationClock,
    ) -> Result<Decimal, MarketError> {
        let bars = self.fetch_ohlcv(ticker, 1, clock)?;
        bars.last()
            .map(|b| b.close)
            .ok_or_else(|| MarketError::NoPriceAvailable(ticker.clone()))
    }

    /// Whether the clock's current date has a bar for any of the tickers.
    pub fn is_trading_day(
        &self,
        tickers: &[Ticker],
        clock: &SimulationClock,
    ) -> Result<bool, MarketError> {
        for t in tickers {
            let bars = self.fetch_ohlcv(t, 1, clock)?;
            if bars.last().map(|b| b.date) == Some(clock.current_date()) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}
