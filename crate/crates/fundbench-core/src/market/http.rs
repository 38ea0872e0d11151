//! Generic live HTTP market provider declared entirely in configuration: each
//! data kind gets a URL template, a JSON pointer to the records array, and a
//! field mapping, so new vendors need no code changes.
//!
//! The provider passes through whatever the vendor returned; it never drops
//! future-dated records. Leakage detection belongs to the gateway guard.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::Deserialize;
use serde_json::Value;

use crate::domain::Ticker;

use super::{
    DataKind, FundamentalsSnapshot, InsiderKind, InsiderTransaction, MacroIndicator, MarketError,
    MarketProvider, NewsItem, NewsScope, OHLCVBar, SimulationClock,
};

/// Endpoint description for one data kind.
///
/// URL templates may reference `{ticker}`, `{window}`, `{count}`, `{date}`
/// (the clock date) and `{api_key}`. `records_pointer` is a JSON pointer to
/// the array of records ("" for a top-level array). `fields` maps domain field
/// names to the vendor's field names.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KindEndpoint {
    pub url: String,
    #[serde(default)]
    pub records_pointer: String,
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HttpProviderConfig {
    pub api_key_env: String,
    /// Header carrying the credential; omit when the key rides in the URL.
    #[serde(default)]
    pub auth_header: Option<String>,
    /// Credential header value; `{api_key}` is substituted.
    #[serde(default = "default_auth_value")]
    pub auth_value: String,
    #[serde(default)]
    pub ohlcv: Option<KindEndpoint>,
    #[serde(default)]
    pub company_news: Option<KindEndpoint>,
    #[serde(default)]
    pub policy_news: Option<KindEndpoint>,
    #[serde(default)]
    pub insider: Option<KindEndpoint>,
    #[serde(default)]
    pub fundamentals: Option<KindEndpoint>,
    #[serde(default)]
    pub macro_indicators: Option<KindEndpoint>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_auth_value() -> String {
    "{api_key}".to_string()
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    1000
}

fn default_timeout_secs() -> u64 {
    30
}

pub struct HttpMarketProvider {
    config: HttpProviderConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpMarketProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, MarketError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| MarketError::MissingCredential(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| MarketError::Fixture(format!("http client: {e}")))?;
        Ok(HttpMarketProvider {
            config,
            api_key,
            client,
        })
    }

    fn render_url(
        &self,
        template: &str,
        ticker: Option<&Ticker>,
        window: usize,
        count: usize,
        clock: &SimulationClock,
    ) -> String {
        template
            .replace("{ticker}", ticker.map_or("", |t| t.as_str()))
            .replace("{window}", &window.to_string())
            .replace("{count}", &count.to_string())
            .replace("{date}", &clock.current_date().to_string())
            .replace("{api_key}", &self.api_key)
    }

    /// GET with bounded retries and exponential backoff starting at the
    /// configured base delay.
    fn get_json(&self, kind: DataKind, url: &str) -> Result<Value, MarketError> {
        let mut last_error = String::new();
        for attempt in 1..=self.config.max_attempts {
            let mut req = self.client.get(url);
            if let Some(header) = &self.config.auth_header {
                req = req.header(
                    header.as_str(),
                    self.config.auth_value.replace("{api_key}", &self.api_key),
                );
            }
            match req.send().and_then(|r| r.error_for_status()) {
                Ok(resp) => match resp.json::<Value>() {
                    Ok(v) => return Ok(v),
                    Err(e) => last_error = format!("invalid JSON body: {e}"),
                },
                Err(e) => last_error = e.to_string(),
            }
            if attempt < self.config.max_attempts {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
        Err(MarketError::ProviderUnavailable {
            kind,
            attempts: self.config.max_attempts,
            message: last_error,
        })
    }

    fn records<'v>(&self, body: &'v Value, endpoint: &KindEndpoint) -> Vec<&'v Value> {
        let node = if endpoint.records_pointer.is_empty() {
            Some(body)
        } else {
            body.pointer(&endpoint.records_pointer)
        };
        match node {
            Some(Value::Array(items)) => items.iter().collect(),
            Some(other) if !other.is_null() => vec![other],
            _ => Vec::new(),
        }
    }
}

fn field<'v>(record: &'v Value, endpoint: &KindEndpoint, name: &str) -> Option<&'v Value> {
    endpoint.fields.get(name).and_then(|key| record.get(key))
}

fn parse_date(v: &Value) -> Option<NaiveDate> {
    let s = v.as_str()?;
    s.get(..10)?.parse().ok()
}

fn parse_decimal(v: &Value) -> Option<Decimal> {
    match v {
        // Numbers go through their literal representation so vendor decimals
        // survive exactly.
        Value::Number(n) => n.to_string().parse().ok(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn parse_u64(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64().or_else(|| n.as_f64().map(|f| f as u64)),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn bad_record(kind: DataKind, what: &str) -> MarketError {
    MarketError::ProviderUnavailable {
        kind,
        attempts: 1,
        message: format!("malformed provider record: missing or invalid {what}"),
    }
}

impl MarketProvider for HttpMarketProvider {
    fn ohlcv(
        &self,
        ticker: &Ticker,
        window: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<OHLCVBar>, MarketError> {
        let Some(endpoint) = &self.config.ohlcv else {
            return Ok(Vec::new());
        };
        let url = self.render_url(&endpoint.url, Some(ticker), window, 0, clock);
        let body = self.get_json(DataKind::Ohlcv, &url)?;
        let mut bars = Vec::new();
        for r in self.records(&body, endpoint) {
            bars.push(OHLCVBar {
                date: field(r, endpoint, "date")
                    .and_then(parse_date)
                    .ok_or_else(|| bad_record(DataKind::Ohlcv, "date"))?,
                open: field(r, endpoint, "open")
                    .and_then(parse_decimal)
                    .ok_or_else(|| bad_record(DataKind::Ohlcv, "open"))?,
                high: field(r, endpoint, "high")
                    .and_then(parse_decimal)
                    .ok_or_else(|| bad_record(DataKind::Ohlcv, "high"))?,
                low: field(r, endpoint, "low")
                    .and_then(parse_decimal)
                    .ok_or_else(|| bad_record(DataKind::Ohlcv, "low"))?,
                close: field(r, endpoint, "close")
                    .and_then(parse_decimal)
                    .ok_or_else(|| bad_record(DataKind::Ohlcv, "close"))?,
                volume: field(r, endpoint, "volume").and_then(parse_u64).unwrap_or(0),
            });
        }
        Ok(bars)
    }

    fn company_news(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError> {
        let Some(endpoint) = &self.config.company_news else {
            return Ok(Vec::new());
        };
        let url = self.render_url(&endpoint.url, Some(ticker), 0, count, clock);
        let body = self.get_json(DataKind::CompanyNews, &url)?;
        let mut items = Vec::new();
        for r in self.records(&body, endpoint) {
            items.push(NewsItem {
                date: field(r, endpoint, "date")
                    .and_then(parse_date)
                    .ok_or_else(|| bad_record(DataKind::CompanyNews, "date"))?,
                headline: field(r, endpoint, "headline")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                summary: field(r, endpoint, "summary")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                source: field(r, endpoint, "source")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                scope: NewsScope::Company { ticker: ticker.clone() },
            });
        }
        Ok(items)
    }

    fn policy_news(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<NewsItem>, MarketError> {
        let Some(endpoint) = &self.config.policy_news else {
            return Ok(Vec::new());
        };
        let url = self.render_url(&endpoint.url, None, 0, count, clock);
        let body = self.get_json(DataKind::PolicyNews, &url)?;
        let mut items = Vec::new();
        for r in self.records(&body, endpoint) {
            items.push(NewsItem {
                date: field(r, endpoint, "date")
                    .and_then(parse_date)
                    .ok_or_else(|| bad_record(DataKind::PolicyNews, "date"))?,
                headline: field(r, endpoint, "headline")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                summary: field(r, endpoint, "summary")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                source: field(r, endpoint, "source")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                scope: NewsScope::Policy,
            });
        }
        Ok(items)
    }

    fn insider(
        &self,
        ticker: &Ticker,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<InsiderTransaction>, MarketError> {
        let Some(endpoint) = &self.config.insider else {
            return Ok(Vec::new());
        };
        let url = self.render_url(&endpoint.url, Some(ticker), 0, count, clock);
        let body = self.get_json(DataKind::Insider, &url)?;
        let mut items = Vec::new();
        for r in self.records(&body, endpoint) {
            let kind_str = field(r, endpoint, "kind").and_then(|v| v.as_str()).unwrap_or("");
            let kind = if kind_str.eq_ignore_ascii_case("buy")
                || kind_str.eq_ignore_ascii_case("insiderbuy")
            {
                InsiderKind::InsiderBuy
            } else {
                InsiderKind::InsiderSell
            };
            items.push(InsiderTransaction {
                date: field(r, endpoint, "date")
                    .and_then(parse_date)
                    .ok_or_else(|| bad_record(DataKind::Insider, "date"))?,
                ticker: ticker.clone(),
                insider_name: field(r, endpoint, "insider_name")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                role: field(r, endpoint, "role")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                kind,
                shares: field(r, endpoint, "shares")
                    .and_then(parse_u64)
                    .map(|s| s as u32)
                    .ok_or_else(|| bad_record(DataKind::Insider, "shares"))?,
                price: field(r, endpoint, "price")
                    .and_then(parse_decimal)
                    .ok_or_else(|| bad_record(DataKind::Insider, "price"))?,
            });
        }
        Ok(items)
    }

    fn fundamentals(
        &self,
        ticker: &Ticker,
        clock: &SimulationClock,
    ) -> Result<Option<FundamentalsSnapshot>, MarketError> {
        let Some(endpoint) = &self.config.fundamentals else {
            return Ok(None);
        };
        let url = self.render_url(&endpoint.url, Some(ticker), 0, 0, clock);
        let body = self.get_json(DataKind::Fundamentals, &url)?;
        let mut snaps = Vec::new();
        for r in self.records(&body, endpoint) {
            snaps.push(FundamentalsSnapshot {
                ticker: ticker.clone(),
                period_end: field(r, endpoint, "period_end")
                    .and_then(parse_date)
                    .ok_or_else(|| bad_record(DataKind::Fundamentals, "period_end"))?,
                revenue: field(r, endpoint, "revenue").and_then(parse_decimal).unwrap_or_default(),
                net_income: field(r, endpoint, "net_income")
                    .and_then(parse_decimal)
                    .unwrap_or_default(),
                gross_margin: field(r, endpoint, "gross_margin")
                    .and_then(|v| v.as_f64())
                    .unwrap_or(0.0),
                net_margin: field(r, endpoint, "net_margin")
                    .and_then(|v| v.as_f64())
                    .unwrap_or(0.0),
                pe_ratio: field(r, endpoint, "pe_ratio").and_then(|v| v.as_f64()),
                pb_ratio: field(r, endpoint, "pb_ratio").and_then(|v| v.as_f64()),
            });
        }
        Ok(snaps.into_iter().max_by_key(|s| s.period_end))
    }

    fn macro_indicators(
        &self,
        count: usize,
        clock: &SimulationClock,
    ) -> Result<Vec<MacroIndicator>, MarketError> {
        let Some(endpoint) = &self.config.macro_indicators else {
            return Ok(Vec::new());
        };
        let url = self.render_url(&endpoint.url, None, 0, count, clock);
        let body = self.get_json(DataKind::Macro, &url)?;
        let mut items = Vec::new();
        for r in self.records(&body, endpoint) {
            items.push(MacroIndicator {
                name: field(r, endpoint, "name")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
                date: field(r, endpoint, "date")
                    .and_then(parse_date)
                    .ok_or_else(|| bad_record(DataKind::Macro, "date"))?,
                value: field(r, endpoint, "value").and_then(|v| v.as_f64()).unwrap_or(0.0),
                unit: field(r, endpoint, "unit")
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string(),
            });
        }
        Ok(items)
    }
}
